//! The five experiment drivers. Each writes its CSVs through [`Output`] and
//! returns the checks evaluated on the results.

use std::io::Write;

use nuflavor::mitigation::{mitigated_pipeline, mitigated_pipeline_exact, write_mitigation_csv, MitigationReport, ReadoutNoise};
use nuflavor::oracle::{self, full_spectrum_scan};
use nuflavor::par::{self, derive_seed, derive_seed2};
use nuflavor::qite::{run_qite, QiteConfig, QiteTrace};
use nuflavor::qlanczos::{self, assemble_full_spectrum, extreme_start, run_qlanczos_multi, start_states, AssembledSpectrum, QlanczosConfig};
use nuflavor::trotter::{survival_series, trotter_evolve, uniform_grid, write_survival_csv, SurvivalRow, TrotterConfig};
use nuflavor::{PauliString, PauliSum, SamplingPlan, StateVector};

use crate::config::{Block, Config, Mode};
use crate::error::CliError;
use crate::output::{Check, Output};

type Checks = Result<Vec<Check>, CliError>;

/// Ascending eigenvalues of the genuine (non-padding) part of a block.
fn genuine_eigenvalues(block: Block, h: &PauliSum) -> Result<Vec<f64>, CliError> {
    Ok(oracle::eigenvalues(&h.to_dense().submatrix(&block.genuine()))?)
}

fn mean_sigma(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn spectrum(config: &Config, out: &mut Output) -> Checks {
    let s = &config.spectrum;
    let base = config.physics.params(4, 0.0);
    let indexed: Vec<(usize, f64)> = s.mu_values.iter().copied().enumerate().collect();
    let estimates = par::map(&indexed, |&(i, mu)| -> Result<AssembledSpectrum, CliError> {
        let params = nuflavor::NeutrinoParams { mu, ..base.clone() };
        let (two, three) = match config.mode {
            Mode::Exact => (QlanczosConfig::exact(s.delta_two_qubit), QlanczosConfig::exact(s.delta_three_qubit)),
            Mode::Sampled => {
                let plan = config.plan(derive_seed(config.seed, i as u64));
                (QlanczosConfig::sampled(s.delta_two_qubit, plan.clone()), QlanczosConfig::sampled(s.delta_three_qubit, plan))
            }
        };
        log::info!("spectrum: mu = {mu}");
        Ok(assemble_full_spectrum(&params, &two, &three)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    let exact = full_spectrum_scan(&base, &s.mu_values)?;

    if config.mode == Mode::Sampled {
        for i in 0..s.mu_values.len() {
            out.seed(format!("mu_{i}"), derive_seed(config.seed, i as u64));
        }
    }
    out.tolerance("abs_error", s.tolerance);
    out.tolerance("sigmas", s.sigmas);
    out.csv("spectrum_qlanczos.csv", |w| Ok(qlanczos::write_spectrum_csv(&estimates, w)?))?;
    out.csv("spectrum_oracle.csv", |w| Ok(oracle::write_spectrum_csv(&exact, w)?))?;

    let mut checks = Vec::new();
    let mut rows = Vec::new();
    for (est, ex) in estimates.iter().zip(&exact) {
        let mut entries: Vec<_> = est.entries.iter().filter(|e| e.accepted).collect();
        entries.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        let paired = entries.len() == ex.energies.len();
        let mut worst: f64 = 0.0;
        let mut within = true;
        for (idx, e) in entries.iter().enumerate() {
            let reference = if paired {
                ex.energies[idx]
            } else {
                *ex.energies.iter().min_by(|a, b| (*a - e.energy).abs().total_cmp(&(*b - e.energy).abs())).expect("nonempty spectrum")
            };
            let err = (e.energy - reference).abs();
            worst = worst.max(err);
            let allowed = match config.mode {
                Mode::Exact => s.tolerance,
                Mode::Sampled => s.sigmas * e.delta_e + s.tolerance,
            };
            within &= err <= allowed;
            rows.push(format!(
                "{:.6},{},{},{},{:.10},{:.6e},{:.10},{:.6e}",
                est.mu,
                idx,
                e.method.as_str(),
                e.particle_number,
                e.energy,
                e.delta_e,
                reference,
                err
            ));
        }
        let found = format!("{} of {} levels", entries.len(), ex.energies.len());
        if config.mode == Mode::Exact {
            checks.push(Check::new(format!("spectrum complete mu={:.3}", est.mu), paired, found.clone()));
        }
        checks.push(Check::new(format!("spectrum matches oracle mu={:.3}", est.mu), within, format!("{found}, max abs error {worst:.3e}")));
    }
    out.csv("spectrum_compare.csv", |w| {
        writeln!(w, "mu,index,method,particle_number,estimate,delta_e,oracle,abs_error")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    Ok(checks)
}

pub fn qite(config: &Config, out: &mut Output) -> Checks {
    let q = &config.qite;
    let params = config.physics.params(4, q.mu);
    let h = q.block.hamiltonian(&params, q.negate)?;
    let initial = match &q.initial {
        Some(label) => StateVector::basis(label)?,
        None => extreme_start(&h, &q.block.genuine())?,
    };
    let ground = genuine_eigenvalues(q.block, &h)?[0];
    let seeds: Vec<u64> = (0..q.runs as u64).map(|r| derive_seed(config.seed, r)).collect();
    let traces = par::map(&seeds, |&seed| -> Result<QiteTrace, CliError> {
        let base = match config.mode {
            Mode::Exact => QiteConfig::default(),
            Mode::Sampled => QiteConfig::sampled(config.plan(seed), true),
        };
        let qc = QiteConfig { delta_tau: q.delta_tau, max_steps: q.max_steps, epsilon: q.epsilon, ..base };
        Ok(run_qite(&h, &initial, &qc)?)
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    out.tolerance("final_energy", q.tolerance);
    for (r, (trace, &seed)) in traces.iter().zip(&seeds).enumerate() {
        if config.mode == Mode::Sampled {
            out.seed(format!("run_{r}"), seed);
        }
        out.csv(&format!("qite_run{r}.csv"), |w| Ok(trace.write_csv(w)?))?;
    }
    let steps = traces.iter().map(QiteTrace::len).min().unwrap_or(0);
    let summary: Vec<(f64, f64)> = (0..steps)
        .map(|s| mean_sigma(&traces.iter().map(|t| t.records[s].energy).collect::<Vec<_>>()))
        .collect();
    out.csv("qite_summary.csv", |w| {
        writeln!(w, "step,tau,mean_energy,sigma,runs,oracle_ground")?;
        for (s, (m, sd)) in summary.iter().enumerate() {
            writeln!(w, "{},{:.6},{:.10},{:.10},{},{:.10}", s, s as f64 * q.delta_tau, m, sd, traces.len(), ground)?;
        }
        Ok(())
    })?;

    let finals: Vec<f64> = traces.iter().map(QiteTrace::final_energy).collect();
    let (mean, sigma) = mean_sigma(&finals);
    let allowed = match config.mode {
        Mode::Exact => q.tolerance,
        Mode::Sampled => q.tolerance + 3.0 * sigma,
    };
    let err = (mean - ground).abs();
    let converged = traces.iter().filter(|t| t.converged()).count();
    Ok(vec![
        Check::new("qite converged", converged == traces.len(), format!("{converged}/{} runs reached |dE| < {:.1e}", traces.len(), q.epsilon)),
        Check::new(
            "qite final energy",
            err <= allowed,
            format!("mean {mean:.6} +- {sigma:.2e} vs ground {ground:.6}, error {err:.3e}, allowed {allowed:.3e}"),
        ),
    ])
}

pub fn qlanczos(config: &Config, out: &mut Output) -> Checks {
    let q = &config.qlanczos;
    let params = config.physics.params(4, q.mu);
    let h = q.block.hamiltonian(&params, q.negate)?;
    let delta = q.delta.unwrap_or_else(|| q.block.default_delta());
    let mut qc = match config.mode {
        Mode::Exact => QlanczosConfig::exact(delta),
        Mode::Sampled => QlanczosConfig::sampled(delta, config.plan(config.seed)),
    };
    qc.qite.delta_tau = q.delta_tau;
    qc.qite.max_steps = q.max_steps;
    let starts = start_states(&h, &q.block.genuine(), qc.starts)?;
    let result = run_qlanczos_multi(&h, &starts, &qc, q.levels)?;
    let exact = genuine_eigenvalues(q.block, &h)?;
    let sign = if q.negate { -1.0 } else { 1.0 };

    if config.mode == Mode::Sampled {
        for i in 0..starts.len() {
            out.seed(format!("start_{i}"), derive_seed(config.seed, i as u64));
        }
    }
    out.tolerance("abs_error", q.tolerance);
    out.tolerance("sigmas", q.sigmas);
    out.tolerance("delta", delta);
    out.csv("qlanczos_candidates.csv", |w| {
        writeln!(w, "start,ritz_index,indices,energy,delta_e")?;
        for c in result.runs.iter().flat_map(|r| &r.candidates) {
            let idx: Vec<String> = c.indices.iter().map(usize::to_string).collect();
            writeln!(w, "{},{},{},{:.10},{:.6e}", c.start, c.ritz_index, idx.join(";"), c.energy, c.delta_e)?;
        }
        Ok(())
    })?;

    let mut checks = vec![Check::new(
        "qlanczos levels accepted",
        result.accepted.len() == q.levels,
        format!("{} of {} levels", result.accepted.len(), q.levels),
    )];
    let mut worst: f64 = 0.0;
    let mut within = true;
    let mut rows = Vec::new();
    for est in &result.accepted {
        let reference = exact.get(est.level).copied().unwrap_or(f64::NAN);
        let err = (est.energy - reference).abs();
        let allowed = match config.mode {
            Mode::Exact => q.tolerance,
            Mode::Sampled => q.sigmas * est.delta_e + q.tolerance,
        };
        within &= err <= allowed;
        worst = worst.max(err);
        rows.push(format!("{},{:.10},{:.10},{:.6e},{:.10},{:.6e}", est.level, est.energy, sign * est.energy, est.delta_e, reference, err));
    }
    out.csv("qlanczos_levels.csv", |w| {
        writeln!(w, "level,energy,physical_energy,delta_e,oracle,abs_error")?;
        for r in &rows {
            writeln!(w, "{r}")?;
        }
        Ok(())
    })?;
    checks.push(Check::new("qlanczos matches oracle", within, format!("max abs error {worst:.3e}")));
    Ok(checks)
}

/// Mean and spread of the sampled column over replicate series on one grid.
fn combine_replicates(replicates: &[Vec<SurvivalRow>], seed: u64) -> Vec<SurvivalRow> {
    let first = &replicates[0];
    (0..first.len())
        .map(|i| {
            let values: Vec<f64> = replicates.iter().map(|r| r[i].p_sampled.unwrap_or(f64::NAN)).collect();
            let (mean, sigma) = mean_sigma(&values);
            let stderr = if replicates.len() > 1 { sigma } else { first[i].stderr.unwrap_or(0.0) };
            SurvivalRow { p_sampled: Some(mean), stderr: Some(stderr), seed: Some(seed), ..first[i].clone() }
        })
        .collect()
}

pub fn evolve(config: &Config, out: &mut Output) -> Checks {
    let e = &config.evolve;
    let grid = uniform_grid(e.t_max, e.points);
    out.tolerance("trotter_vs_exact", e.tolerance);
    let mut checks = Vec::new();
    for (&n, &runs) in e.n_neutrinos.iter().zip(&e.runs) {
        let params = config.physics.params(n, e.mu);
        let trotter = TrotterConfig { max_delta_t: e.max_delta_t, plan: None };
        let rows = match config.mode {
            Mode::Exact => survival_series(&params, &grid, &trotter)?,
            Mode::Sampled => {
                let seed_n = derive_seed(config.seed, n as u64);
                out.seed(format!("n{n}"), seed_n);
                let mut replicates = Vec::with_capacity(runs);
                for r in 0..runs {
                    let seed = derive_seed(seed_n, r as u64);
                    out.seed(format!("n{n}_run{r}"), seed);
                    let cfg = TrotterConfig { plan: Some(config.plan(seed)), ..trotter.clone() };
                    let rows = survival_series(&params, &grid, &cfg)?;
                    out.csv(&format!("survival_n{n}_run{r}.csv"), |w| Ok(write_survival_csv(&rows, w)?))?;
                    replicates.push(rows);
                }
                combine_replicates(&replicates, seed_n)
            }
        };
        out.csv(&format!("survival_n{n}.csv"), |w| Ok(write_survival_csv(&rows, w)?))?;
        let worst = rows.iter().map(|r| (r.p_trotter - r.p_exact).abs()).fold(0.0, f64::max);
        checks.push(Check::new(format!("trotter within tolerance N={n}"), worst <= e.tolerance, format!("max |P_trotter - P_exact| = {worst:.3e}")));
        if let Some(r0) = rows.first().filter(|r| r.t == 0.0) {
            checks.push(Check::new(format!("survival starts at one N={n}"), (r0.p_trotter - 1.0).abs() < 1e-12, format!("P(0) = {:.12}", r0.p_trotter)));
        }
    }
    Ok(checks)
}

/// `|0..0><0..0| = prod_q (I + Z_q) / 2` as a Pauli sum.
fn all_zero_projector(n: usize) -> Result<PauliSum, CliError> {
    let weight = 1.0 / (1u64 << n) as f64;
    let terms: Vec<(String, f64)> = (0..1usize << n)
        .map(|mask| ((0..n).map(|q| if mask >> q & 1 == 1 { 'Z' } else { 'I' }).collect(), weight))
        .collect();
    let mut sum = PauliSum::zero(n);
    for (label, c) in terms {
        sum.add_term(label.parse::<PauliString>()?, c.into());
    }
    Ok(sum)
}

struct Demo {
    name: &'static str,
    obs: PauliSum,
    psi: StateVector,
    exact: f64,
}

fn mitigation_demos(config: &Config) -> Result<Vec<Demo>, CliError> {
    let m = &config.mitigate;
    let h = m.block.hamiltonian(&config.physics.params(4, m.mu), m.negate)?;
    let (evals, vecs) = oracle::eigh(&h.to_dense())?;
    let ground = StateVector::normalized(vecs.column(0).into_owned())?;

    let sp = config.physics.params(m.survival_n, m.survival_mu);
    let steps = TrotterConfig { max_delta_t: config.evolve.max_delta_t, plan: None }.n_steps(m.survival_t);
    let evolved = trotter_evolve(&sp, &StateVector::basis_index(m.survival_n, 0)?, m.survival_t, steps)?;
    let p0 = evolved.probabilities()[0];
    Ok(vec![
        Demo { name: "block", obs: h, psi: ground, exact: evals[0] },
        Demo { name: "survival", obs: all_zero_projector(m.survival_n)?, psi: evolved, exact: p0 },
    ])
}

pub fn mitigate(config: &Config, out: &mut Output) -> Checks {
    let m = &config.mitigate;
    let readout = ReadoutNoise::symmetric(m.p01, m.p10);
    let fold = config.fold();
    let zne = config.zne();
    let demos = mitigation_demos(config)?;
    let mut checks = Vec::new();
    let mut summary = Vec::new();

    for (d, demo) in demos.iter().enumerate() {
        let report = match config.mode {
            Mode::Exact => mitigated_pipeline_exact(&demo.obs, &demo.psi, &readout, &fold, &zne)?,
            Mode::Sampled => {
                let seed = derive_seed(config.seed, d as u64);
                out.seed(demo.name, seed);
                mitigated_pipeline(&demo.obs, &demo.psi, &readout, &fold, &zne, &SamplingPlan::new(config.shots, seed))?
            }
        };
        out.csv(&format!("mitigation_{}.csv", demo.name), |w| Ok(write_mitigation_csv(&report, w)?))?;
        summary.push((demo.name, demo.exact, report));
    }
    out.csv("mitigation_summary.csv", |w| {
        writeln!(w, "demo,exact,raw,roem_only,roem_plus_zne")?;
        for (name, exact, r) in &summary {
            writeln!(w, "{},{:.10},{:.10},{:.10},{:.10}", name, exact, r.raw, r.roem_only, r.roem_plus_zne)?;
        }
        Ok(())
    })?;

    match config.mode {
        Mode::Exact => {
            for (name, exact, r) in &summary {
                let (raw, zne) = ((r.raw - exact).abs(), (r.roem_plus_zne - exact).abs());
                checks.push(Check::new(format!("mitigation improves {name}"), zne <= raw + 1e-12, format!("raw error {raw:.3e}, mitigated error {zne:.3e}")));
            }
        }
        Mode::Sampled => {
            out.tolerance("improve_fraction", m.improve_fraction);
            let jobs: Vec<(usize, u64)> = (0..demos.len()).flat_map(|d| (0..m.seeds as u64).map(move |i| (d, i))).collect();
            let reports = par::map(&jobs, |&(d, i)| -> Result<(u64, MitigationReport), CliError> {
                let seed = derive_seed2(config.seed, 100 + d as u64, i);
                let demo = &demos[d];
                Ok((seed, mitigated_pipeline(&demo.obs, &demo.psi, &readout, &fold, &zne, &SamplingPlan::new(config.shots, seed))?))
            })
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
            out.csv("mitigation_seeds.csv", |w| {
                writeln!(w, "demo,seed,exact,raw,roem_only,roem_plus_zne")?;
                for (&(d, _), (seed, r)) in jobs.iter().zip(&reports) {
                    let demo = &demos[d];
                    writeln!(w, "{},{},{:.10},{:.10},{:.10},{:.10}", demo.name, seed, demo.exact, r.raw, r.roem_only, r.roem_plus_zne)?;
                }
                Ok(())
            })?;
            for (d, demo) in demos.iter().enumerate() {
                let own: Vec<&MitigationReport> = jobs.iter().zip(&reports).filter(|(j, _)| j.0 == d).map(|(_, (_, r))| r).collect();
                let improved = own.iter().filter(|r| (r.roem_plus_zne - demo.exact).abs() < (r.raw - demo.exact).abs()).count();
                let fraction = improved as f64 / own.len() as f64;
                checks.push(Check::new(
                    format!("mitigation improves {} across seeds", demo.name),
                    fraction >= m.improve_fraction,
                    format!("{improved}/{} seeds improved", own.len()),
                ));
            }
        }
    }
    Ok(checks)
}
