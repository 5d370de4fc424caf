//! Krylov-subspace diagonalization on QITE iterates, using only the scalars
//! a QITE run records: `c_l`, `<H>_r` and `<H^2>_r`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{
    degenerate_eigenvectors, reduced_one_particle_block, reduced_two_particle_block, BlockSign, NeutrinoParams, GENUINE_STATES,
};
use crate::mitigation::{self, ReadoutNoise};
use crate::oracle;
use crate::par;
use crate::pauli::PauliSum;
use crate::qite::{run_qite, sampled_moments, MeasurementMode, QiteConfig, QiteTrace};
use crate::state::{self, SamplingPlan, StateVector};

pub const DEFAULT_COND_THRESHOLD: f64 = 1e-6;
pub const DELTA_TWO_QUBIT: f64 = 0.6;
pub const DELTA_THREE_QUBIT: f64 = 1.3;
pub const DEGENERACY_TOLERANCE: f64 = 1e-6;

/// Overlap and Hamiltonian matrices on Krylov vectors `Phi_l`, plus the
/// second-moment matrix used by the scalar uncertainty route.
#[derive(Clone, Debug, PartialEq)]
pub struct KrylovSpace {
    pub indices: Vec<usize>,
    pub t: DMatrix<f64>,
    pub hm: DMatrix<f64>,
    pub h2: DMatrix<f64>,
}

impl KrylovSpace {
    pub fn dim(&self) -> usize {
        self.indices.len()
    }
}

/// `T_{ll'} = c_l c_l' / c_r^2`, `H_{ll'} = T_{ll'} <H>_r`, `r = (l + l')/2`.
pub fn build_krylov(trace: &QiteTrace, indices: &[usize]) -> Result<KrylovSpace> {
    if indices.is_empty() {
        return Err(Error::InvalidParameter("empty Krylov index set".into()));
    }
    for &l in indices {
        if l % 2 != 0 {
            return Err(Error::InvalidParameter(format!("Krylov index {l} is odd")));
        }
        if l >= trace.len() {
            return Err(Error::InvalidParameter(format!("Krylov index {l} is beyond the trace ({} steps)", trace.len())));
        }
    }
    let k = indices.len();
    let rec = &trace.records;
    let mut t = DMatrix::zeros(k, k);
    let mut hm = DMatrix::zeros(k, k);
    let mut h2 = DMatrix::zeros(k, k);
    for (i, &l) in indices.iter().enumerate() {
        for (j, &m) in indices.iter().enumerate() {
            let r = (l + m) / 2;
            let overlap = (rec[l].log_c + rec[m].log_c - 2.0 * rec[r].log_c).exp();
            t[(i, j)] = overlap;
            hm[(i, j)] = overlap * rec[r].energy;
            h2[(i, j)] = overlap * rec[r].second_moment;
        }
    }
    Ok(KrylovSpace { indices: indices.to_vec(), t, hm, h2 })
}

/// Eigenpairs of `Hm x = E T x` on the span of `T` eigenvectors above
/// `cond_threshold`. Coefficients satisfy `x^T T x = 1`.
pub fn solve_gen_eig(k: &KrylovSpace, cond_threshold: f64) -> Result<Vec<(f64, DVector<f64>)>> {
    let (w, v) = oracle::eigh_real(&k.t);
    let scale = w.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    if w[0] < -1e-8 * scale && w[0].abs() > cond_threshold {
        return Err(Error::Numerical(format!("overlap matrix is indefinite (eigenvalue {:.3e})", w[0])));
    }
    let keep: Vec<usize> = (0..w.len()).filter(|&i| w[i] > cond_threshold).collect();
    if keep.is_empty() {
        return Ok(Vec::new());
    }
    let x = DMatrix::from_fn(k.dim(), keep.len(), |r, c| v[(r, keep[c])] / w[keep[c]].sqrt());
    let reduced = x.transpose() * &k.hm * &x;
    let (e, y) = oracle::eigh_real(&reduced);
    Ok(e.into_iter()
        .enumerate()
        .map(|(i, energy)| (energy, &x * y.column(i)))
        .collect())
}

/// `sum_i x_i |psi_{l_i}>`, each stored iterate phase-aligned so that its
/// overlap with the first iterate is real and positive, then normalized.
pub fn reconstruct_state(trace: &QiteTrace, k: &KrylovSpace, x: &DVector<f64>) -> Result<StateVector> {
    let reference = &trace.records[0].state;
    let mut amps = DVector::from_element(reference.dim(), Complex64::new(0.0, 0.0));
    for (i, &l) in k.indices.iter().enumerate() {
        let s = &trace.records[l].state;
        let ov = reference.inner(s);
        let phase = if ov.norm() > 1e-12 { ov.conj() / ov.norm() } else { Complex64::new(1.0, 0.0) };
        amps += s.amplitudes() * (phase * x[i]);
    }
    StateVector::normalized(amps)
}

/// `||H psi - E psi||`, with `psi` normalized.
pub fn uncertainty(h: &PauliSum, psi: &StateVector, energy: f64) -> f64 {
    let r = psi.apply_sum(h) - psi.amplitudes() * Complex64::new(energy, 0.0);
    r.norm()
}

/// The same quantity from trace scalars: `x^T H2 x - 2E x^T H x + E^2 x^T T x`.
pub fn uncertainty_from_scalars(k: &KrylovSpace, x: &DVector<f64>, energy: f64) -> f64 {
    let norm = x.dot(&(&k.t * x));
    let h1 = x.dot(&(&k.hm * x)) / norm;
    let h2 = x.dot(&(&k.h2 * x)) / norm;
    (h2 - 2.0 * energy * h1 + energy * energy).max(0.0).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertaintyRoute {
    /// From the reconstructed statevector.
    Statevector,
    /// From recorded `<H^2>_r` scalars only.
    Scalars,
    /// Shot-sampled `<H>` and `<H^2>` on the reconstructed state, with the
    /// QITE plan and readout mitigation.
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrylovSweep {
    /// `{0, s}` for every even `s`.
    ZeroAnchored,
    /// Every pair (or window) of even indices.
    AllPairs,
}

/// One Ritz pair from one Krylov space.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenEstimate {
    /// Assigned spectral level after filtering; the Ritz index before.
    pub level: usize,
    /// Ritz index within its space (0 = lowest).
    pub ritz_index: usize,
    /// Which initial state's trace the space was built from.
    pub start: usize,
    pub energy: f64,
    pub coefficients: DVector<f64>,
    pub indices: Vec<usize>,
    pub delta_e: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QlanczosConfig {
    pub qite: QiteConfig,
    pub krylov_dim: usize,
    pub cond_threshold: f64,
    pub delta: f64,
    pub sweep: KrylovSweep,
    pub route: UncertaintyRoute,
    #[serde(default)]
    pub assignment: LevelAssignment,
    #[serde(default)]
    pub starts: StartPolicy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPolicy {
    /// `(|a> + |b>)/sqrt2` over the two genuine basis states of lowest diagonal energy.
    #[default]
    Extreme,
    /// Every genuine basis state and every `(|a> +- |b>)/sqrt2` pair.
    BasisPairs,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelAssignment {
    /// Merge candidates whose `E +- dE` intervals overlap, keep the
    /// minimum-`dE` member of each cluster, number clusters by energy.
    #[default]
    Clustered,
    /// One Krylov space for all levels, the one with the smallest total `dE`.
    MinTotalSpace,
}

impl QlanczosConfig {
    /// Exact-mode defaults: 60 QITE steps at `dtau = 0.1`, 2-dim Krylov spaces.
    pub fn exact(delta: f64) -> Self {
        Self {
            qite: QiteConfig { max_steps: 60, stop_on_convergence: false, ..QiteConfig::default() },
            krylov_dim: 2,
            cond_threshold: DEFAULT_COND_THRESHOLD,
            delta,
            sweep: KrylovSweep::AllPairs,
            route: UncertaintyRoute::Statevector,
            assignment: LevelAssignment::Clustered,
            starts: StartPolicy::BasisPairs,
        }
    }

    /// Shot-sampled QITE with readout mitigation, `{0, s}` sweep.
    pub fn sampled(delta: f64, plan: SamplingPlan) -> Self {
        let mut qite = QiteConfig::sampled(plan, true);
        qite.max_steps = 60;
        qite.stop_on_convergence = false;
        Self { qite, sweep: KrylovSweep::ZeroAnchored, starts: StartPolicy::Extreme, ..Self::exact(delta) }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        if let MeasurementMode::Sampled { plan, .. } = &mut c.qite.mode {
            plan.seed = seed;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.qite.validate()?;
        if self.krylov_dim == 0 {
            return Err(Error::InvalidParameter("Krylov dimension must be at least 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("delta must be positive".into()));
        }
        Ok(())
    }
}

/// Krylov index sets swept over a trace of `len` records.
pub fn krylov_index_sets(len: usize, dim: usize, sweep: KrylovSweep) -> Vec<Vec<usize>> {
    let evens: Vec<usize> = (0..len).step_by(2).collect();
    if dim == 1 {
        return evens.iter().map(|&l| vec![l]).collect();
    }
    match (sweep, dim) {
        (KrylovSweep::ZeroAnchored, 2) => evens.iter().skip(1).map(|&s| vec![0, s]).collect(),
        (KrylovSweep::AllPairs, 2) => {
            let mut out = Vec::new();
            for (i, &a) in evens.iter().enumerate() {
                for &b in &evens[i + 1..] {
                    out.push(vec![a, b]);
                }
            }
            out
        }
        (KrylovSweep::ZeroAnchored, d) => {
            // {0, s, 2s, ..} with even spacing s
            (1..evens.len())
                .filter_map(|s| {
                    let set: Vec<usize> = (0..d).map(|i| 2 * s * i).collect();
                    (set[d - 1] < len).then_some(set)
                })
                .collect()
        }
        (KrylovSweep::AllPairs, d) => (0..evens.len().saturating_sub(d - 1))
            .map(|start| (0..d).map(|i| evens[start + i]).collect())
            .collect(),
    }
}

/// Every Ritz pair of every swept Krylov space, with its uncertainty.
pub fn krylov_candidates(trace: &QiteTrace, h: &PauliSum, config: &QlanczosConfig) -> Result<Vec<EigenEstimate>> {
    let sets = krylov_index_sets(trace.len(), config.krylov_dim, config.sweep);
    let sampling = match (&config.route, &config.qite.mode) {
        (UncertaintyRoute::Sampled, MeasurementMode::Sampled { plan, mitigate_readout }) => {
            let calibration = if *mitigate_readout {
                let noise = plan.readout_noise.clone().unwrap_or_else(ReadoutNoise::noiseless);
                Some(mitigation::calibration_matrix(&noise, h.n_qubits(), &plan.with_seed(par::derive_seed(plan.seed, u64::MAX)))?)
            } else {
                None
            };
            Some((plan.clone(), calibration))
        }
        (UncertaintyRoute::Sampled, MeasurementMode::Exact) => {
            return Err(Error::InvalidParameter("sampled uncertainty needs a sampled QITE mode".into()));
        }
        _ => None,
    };
    let indexed: Vec<(usize, &Vec<usize>)> = sets.iter().enumerate().collect();
    let nested = par::map(&indexed, |&(set_index, set)| -> Result<Vec<EigenEstimate>> {
        let Ok(k) = build_krylov(trace, set) else { return Ok(Vec::new()) };
        let pairs = match solve_gen_eig(&k, config.cond_threshold) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("skipping Krylov space {set:?}: {e}");
                return Ok(Vec::new());
            }
        };
        let mut out = Vec::with_capacity(pairs.len());
        for (level, (energy, x)) in pairs.into_iter().enumerate() {
            let delta_e = match (config.route, &sampling) {
                (UncertaintyRoute::Scalars, _) => uncertainty_from_scalars(&k, &x, energy),
                (_, None) => uncertainty(h, &reconstruct_state(trace, &k, &x)?, energy),
                (_, Some((plan, calibration))) => {
                    let psi = reconstruct_state(trace, &k, &x)?;
                    let seed = par::derive_seed2(plan.seed, u64::MAX - 1, (set_index * config.krylov_dim + level) as u64);
                    let (e1, _, e2) = sampled_moments(&psi, h, &plan.with_seed(seed), calibration.as_ref())?;
                    (e2 - 2.0 * energy * e1 + energy * energy).max(0.0).sqrt()
                }
            };
            out.push(EigenEstimate { level, ritz_index: level, start: 0, energy, coefficients: x, indices: set.clone(), delta_e });
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in nested {
        all.extend(r?);
    }
    Ok(all)
}

/// Drops candidates with `delta_e > delta` and assigns the lowest `levels`
/// spectral levels from the rest.
pub fn filter_spectrum(candidates: &[EigenEstimate], delta: f64, levels: usize, assignment: LevelAssignment) -> Vec<EigenEstimate> {
    let mut passing: Vec<&EigenEstimate> = candidates.iter().filter(|c| c.delta_e <= delta).collect();
    if passing.is_empty() {
        if !candidates.is_empty() {
            log::warn!("no Krylov estimate passed the uncertainty filter (delta = {delta})");
        }
        return Vec::new();
    }
    let mut out: Vec<EigenEstimate> = match assignment {
        LevelAssignment::Clustered => {
            passing.sort_by(|a, b| a.delta_e.total_cmp(&b.delta_e).then(a.energy.total_cmp(&b.energy)));
            let mut reps: Vec<&EigenEstimate> = Vec::new();
            for c in passing {
                let overlaps = reps.iter().any(|r| (r.energy - c.energy).abs() <= r.delta_e + c.delta_e + DEGENERACY_TOLERANCE);
                if !overlaps {
                    reps.push(c);
                }
            }
            reps.sort_by(|a, b| a.energy.total_cmp(&b.energy));
            reps.into_iter().take(levels).cloned().collect()
        }
        LevelAssignment::MinTotalSpace => min_total_space(&passing, levels),
    };
    for (rank, est) in out.iter_mut().enumerate() {
        est.level = rank;
    }
    out
}

fn min_total_space(passing: &[&EigenEstimate], levels: usize) -> Vec<EigenEstimate> {
    let mut best: Option<(f64, Vec<&EigenEstimate>)> = None;
    let mut spaces: Vec<&Vec<usize>> = passing.iter().map(|c| &c.indices).collect();
    spaces.dedup();
    for space in spaces {
        let members: Vec<&EigenEstimate> = passing.iter().copied().filter(|c| &c.indices == space && c.ritz_index < levels).collect();
        if members.len() < levels {
            continue;
        }
        let total: f64 = members.iter().map(|c| c.delta_e).sum();
        if best.as_ref().is_none_or(|(t, _)| total < *t) {
            best = Some((total, members));
        }
    }
    (0..levels)
        .filter_map(|level| {
            if let Some((_, members)) = &best {
                if let Some(c) = members.iter().find(|c| c.ritz_index == level) {
                    return Some((*c).clone());
                }
            }
            passing
                .iter()
                .filter(|c| c.ritz_index == level)
                .min_by(|a, b| a.delta_e.total_cmp(&b.delta_e))
                .map(|c| (*c).clone())
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct QlanczosResult {
    pub trace: QiteTrace,
    pub candidates: Vec<EigenEstimate>,
    pub accepted: Vec<EigenEstimate>,
}

/// QITE followed by the Krylov sweep and the uncertainty filter for the
/// lowest `levels` eigenvalues of `h`.
pub fn run_qlanczos(h: &PauliSum, initial: &StateVector, config: &QlanczosConfig, levels: usize) -> Result<QlanczosResult> {
    config.validate()?;
    let trace = run_qite(h, initial, &config.qite)?;
    let candidates = krylov_candidates(&trace, h, config)?;
    let accepted = filter_spectrum(&candidates, config.delta, levels, config.assignment);
    Ok(QlanczosResult { trace, candidates, accepted })
}

/// Several QITE runs from different initial states, candidates pooled
/// before the uncertainty filter.
#[derive(Clone, Debug)]
pub struct MultiStartResult {
    pub runs: Vec<QlanczosResult>,
    pub accepted: Vec<EigenEstimate>,
}

/// Sampled runs use seed `derive_seed(plan.seed, start index)`.
pub fn run_qlanczos_multi(h: &PauliSum, initials: &[StateVector], config: &QlanczosConfig, levels: usize) -> Result<MultiStartResult> {
    if initials.is_empty() {
        return Err(Error::InvalidParameter("no initial states".into()));
    }
    let indexed: Vec<(usize, &StateVector)> = initials.iter().enumerate().collect();
    let runs = par::map(&indexed, |&(i, psi)| {
        let cfg = match &config.qite.mode {
            MeasurementMode::Sampled { plan, .. } if initials.len() > 1 => config.with_seed(par::derive_seed(plan.seed, i as u64)),
            _ => config.clone(),
        };
        let mut r = run_qlanczos(h, psi, &cfg, levels)?;
        for c in r.candidates.iter_mut().chain(r.accepted.iter_mut()) {
            c.start = i;
        }
        Ok(r)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let pooled: Vec<EigenEstimate> = runs.iter().flat_map(|r| r.candidates.iter().cloned()).collect();
    let accepted = filter_spectrum(&pooled, config.delta, levels, config.assignment);
    Ok(MultiStartResult { runs, accepted })
}

/// Initial states for one signed block under `policy`.
pub fn start_states(h: &PauliSum, genuine: &[usize], policy: StartPolicy) -> Result<Vec<StateVector>> {
    match policy {
        StartPolicy::Extreme => Ok(vec![extreme_start(h, genuine)?]),
        StartPolicy::BasisPairs => {
            let n = h.n_qubits();
            let mut out = Vec::new();
            for &a in genuine {
                out.push(StateVector::basis_index(n, a)?);
            }
            for (i, &a) in genuine.iter().enumerate() {
                for &b in &genuine[i + 1..] {
                    for sign in [1.0, -1.0] {
                        let mut v = vec![0.0; 1 << n];
                        v[a] = 1.0;
                        v[b] = sign;
                        out.push(StateVector::from_real(&v)?);
                    }
                }
            }
            Ok(out)
        }
    }
}

/// Equal superposition of the two genuine basis states with the lowest diagonal energy.
pub fn extreme_start(h: &PauliSum, genuine: &[usize]) -> Result<StateVector> {
    let diag = h.to_dense().diagonal_real();
    let mut order = genuine.to_vec();
    order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]).then(b.cmp(&a)));
    StateVector::superposition(h.n_qubits(), &order[..2.min(order.len())])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumMethod {
    Block,
    Analytic,
}

impl SpectrumMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            SpectrumMethod::Block => "block",
            SpectrumMethod::Analytic => "analytic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub particle_number: usize,
    pub method: SpectrumMethod,
    pub energy: f64,
    pub delta_e: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssembledSpectrum {
    pub mu: f64,
    pub entries: Vec<SpectrumEntry>,
}

impl AssembledSpectrum {
    /// Accepted energies, ascending.
    pub fn energies(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self.entries.iter().filter(|x| x.accepted).map(|x| x.energy).collect();
        e.sort_by(f64::total_cmp);
        e
    }
}

/// Which QLanczos runs make up the spectrum: block, sign of the run, sector.
#[derive(Clone, Copy, Debug)]
struct BlockRun {
    particle_number: usize,
    negate: bool,
}

/// All `2^N` eigenvalues for `N = 4`: analytic one-dimensional sectors,
/// QLanczos on the 2-qubit blocks and their negatives (`k = 1, 3`), QLanczos
/// on the 3-qubit block and its negative (`k = 2` extremes) and the
/// degenerate `2 mu` pair from its analytic eigenvectors.
pub fn assemble_full_spectrum(params: &NeutrinoParams, two_qubit: &QlanczosConfig, three_qubit: &QlanczosConfig) -> Result<AssembledSpectrum> {
    if params.n_neutrinos != 4 {
        return Err(Error::InvalidParameter("spectrum assembly is defined for N = 4".into()));
    }
    params.validate()?;
    let mu = params.mu;
    let n = params.n_neutrinos as f64;
    let sum_w: f64 = (0..params.n_neutrinos).map(|q| params.omega(q)).sum();
    let casimir = mu * n * (n + 2.0) / 4.0;
    let mut entries = vec![
        SpectrumEntry { particle_number: 0, method: SpectrumMethod::Analytic, energy: -0.5 * sum_w + casimir, delta_e: 0.0, accepted: true },
        SpectrumEntry { particle_number: 4, method: SpectrumMethod::Analytic, energy: 0.5 * sum_w + casimir, delta_e: 0.0, accepted: true },
    ];

    let block3 = reduced_two_particle_block(params)?;
    if mu > 0.0 {
        let (v1, v2) = degenerate_eigenvectors(mu)?;
        for v in [v1, v2] {
            let e = state::exact_expectation(&block3, &v)?;
            entries.push(SpectrumEntry {
                particle_number: 2,
                method: SpectrumMethod::Analytic,
                energy: e,
                delta_e: uncertainty(&block3, &v, e),
                accepted: true,
            });
        }
    } else {
        for _ in 0..2 {
            entries.push(SpectrumEntry { particle_number: 2, method: SpectrumMethod::Analytic, energy: 2.0 * mu, delta_e: 0.0, accepted: true });
        }
    }

    let runs = [
        BlockRun { particle_number: 1, negate: false },
        BlockRun { particle_number: 1, negate: true },
        BlockRun { particle_number: 3, negate: false },
        BlockRun { particle_number: 3, negate: true },
        BlockRun { particle_number: 2, negate: false },
        BlockRun { particle_number: 2, negate: true },
    ];
    let results = par::map(&runs, |run| -> Result<Vec<SpectrumEntry>> {
        let (h, genuine, config): (PauliSum, Vec<usize>, &QlanczosConfig) = match run.particle_number {
            1 => (reduced_one_particle_block(params, BlockSign::Minus)?, (0..4).collect(), two_qubit),
            3 => (reduced_one_particle_block(params, BlockSign::Plus)?, (0..4).collect(), two_qubit),
            _ => (block3.clone(), GENUINE_STATES.to_vec(), three_qubit),
        };
        let signed = if run.negate { -&h } else { h };
        let starts = start_states(&signed, &genuine, config.starts)?;
        let stream = (run.particle_number as u64) * 2 + run.negate as u64;
        let seed = match &config.qite.mode {
            MeasurementMode::Sampled { plan, .. } => par::derive_seed(plan.seed, stream),
            MeasurementMode::Exact => 0,
        };
        let result = run_qlanczos_multi(&signed, &starts, &config.with_seed(seed), 2)?;
        let sign = if run.negate { -1.0 } else { 1.0 };
        Ok(result
            .accepted
            .iter()
            .map(|est| SpectrumEntry {
                particle_number: run.particle_number,
                method: SpectrumMethod::Block,
                energy: sign * est.energy,
                delta_e: est.delta_e,
                accepted: true,
            })
            .collect())
    });
    for r in results {
        entries.extend(r?);
    }
    Ok(AssembledSpectrum { mu, entries })
}

/// Groups ascending energies that agree within `tol` into (value, multiplicity).
pub fn merge_degenerate(energies: &[f64], tol: f64) -> Vec<(f64, usize)> {
    let mut sorted = energies.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out: Vec<(f64, usize)> = Vec::new();
    for e in sorted {
        match out.last_mut() {
            Some((v, m)) if (e - *v).abs() <= tol => *m += 1,
            _ => out.push((e, 1)),
        }
    }
    out
}

/// CSV `mu,method,energy,delta_e,accepted`.
pub fn write_spectrum_csv<W: Write>(spectra: &[AssembledSpectrum], mut out: W) -> Result<()> {
    writeln!(out, "mu,method,energy,delta_e,accepted")?;
    for s in spectra {
        let mut entries = s.entries.clone();
        entries.sort_by(|a, b| a.energy.total_cmp(&b.energy));
        for e in entries {
            writeln!(out, "{:.6},{},{:.10},{:.6e},{}", s.mu, e.method.as_str(), e.energy, e.delta_e, e.accepted)?;
        }
    }
    Ok(())
}

/// Default pair of configurations (2-qubit, 3-qubit) for exact mode.
pub fn exact_configs() -> (QlanczosConfig, QlanczosConfig) {
    (QlanczosConfig::exact(DELTA_TWO_QUBIT), QlanczosConfig::exact(DELTA_THREE_QUBIT))
}

/// Default pair of configurations for shot-sampled mode.
pub fn sampled_configs(plan: SamplingPlan) -> (QlanczosConfig, QlanczosConfig) {
    (QlanczosConfig::sampled(DELTA_TWO_QUBIT, plan.clone()), QlanczosConfig::sampled(DELTA_THREE_QUBIT, plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{eigenvalues, full_spectrum_scan};
    use crate::qite::QiteRecord;

    fn block2() -> PauliSum {
        reduced_one_particle_block(&NeutrinoParams::new(4, 0.2), BlockSign::Minus).unwrap()
    }

    fn exact_trace(h: &PauliSum, start: &StateVector, dt: f64, steps: usize) -> QiteTrace {
        let cfg = QiteConfig { delta_tau: dt, max_steps: steps, stop_on_convergence: false, ..QiteConfig::default() };
        run_qite(h, start, &cfg).unwrap()
    }

    fn fake_trace(log_c: &[f64], energies: &[f64]) -> QiteTrace {
        let psi = StateVector::basis("0").unwrap();
        QiteTrace {
            delta_tau: 0.1,
            records: log_c
                .iter()
                .zip(energies)
                .map(|(&l, &e)| QiteRecord { state: psi.clone(), energy: e, energy_stderr: 0.0, second_moment: e * e, log_c: l, coefficients: vec![] })
                .collect(),
            converged_at: None,
        }
    }

    #[test]
    fn krylov_from_scalars() {
        let trace = fake_trace(&[0.0, 0.3, 0.5], &[-1.0, -1.5, -1.7]);
        let k = build_krylov(&trace, &[0]).unwrap();
        assert_eq!((k.t[(0, 0)], k.hm[(0, 0)]), (1.0, -1.0));
        let k = build_krylov(&trace, &[0, 2]).unwrap();
        let t02 = (0.0f64 + 0.5 - 0.6).exp();
        assert!((k.t[(0, 1)] - t02).abs() < 1e-15);
        assert!((k.hm[(0, 1)] - t02 * -1.5).abs() < 1e-15);
        assert_eq!(k.t[(1, 1)], 1.0);
        assert!(build_krylov(&trace, &[0, 1]).is_err());
        assert!(build_krylov(&trace, &[0, 4]).is_err());
    }

    #[test]
    fn pencil_simple_cases() {
        let k = KrylovSpace {
            indices: vec![0, 2],
            t: DMatrix::identity(2, 2),
            hm: DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, -1.0])),
            h2: DMatrix::identity(2, 2),
        };
        let e: Vec<f64> = solve_gen_eig(&k, 1e-6).unwrap().into_iter().map(|p| p.0).collect();
        assert_eq!(e, vec![-1.0, 3.0]);
        let rank1 = KrylovSpace { t: DMatrix::from_element(2, 2, 1.0), hm: DMatrix::from_element(2, 2, 2.0), ..k };
        let pairs = solve_gen_eig(&rank1, 1e-6).unwrap();
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].0 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn krylov_matches_statevector_overlaps() {
        let h = block2();
        let dense = h.to_dense();
        let start = StateVector::from_real(&[0.0, 0.0, 1.0, 1.0]).unwrap();
        let trace = exact_trace(&h, &start, 0.05, 20);
        for l in [2usize, 6, 10, 20] {
            let k = build_krylov(&trace, &[0, l]).unwrap();
            // direct: Phi_l = c_l exp(-l dtau H) psi_0
            let evolved = oracle::hermitian_function(&dense, |x| Complex64::new((-(l as f64) * 0.05 * x).exp(), 0.0)).unwrap();
            let phi_l = evolved.matrix() * start.amplitudes() * Complex64::new(trace.records[l].c(), 0.0);
            let t = start.amplitudes().dotc(&phi_l).re;
            let hm = start.amplitudes().dotc(&(dense.matrix() * &phi_l)).re;
            assert!((k.t[(0, 1)] - t).abs() < 1e-4, "l {l}: {} vs {t}", k.t[(0, 1)]);
            assert!((k.hm[(0, 1)] - hm).abs() < 1e-4, "l {l}: {} vs {hm}", k.hm[(0, 1)]);
        }
    }

    #[test]
    fn overlap_error_shrinks_with_step() {
        let h = block2();
        let dense = h.to_dense();
        let start = StateVector::basis("10").unwrap();
        let err = |dt: f64| {
            let steps = (1.0 / dt).round() as usize;
            let trace = exact_trace(&h, &start, dt, steps);
            let l = steps - steps % 2;
            let k = build_krylov(&trace, &[0, l]).unwrap();
            let evolved = oracle::hermitian_function(&dense, |x| Complex64::new((-(l as f64) * dt * x).exp(), 0.0)).unwrap();
            let phi = evolved.matrix() * start.amplitudes();
            let direct = start.amplitudes().dotc(&phi).re / phi.norm();
            (k.t[(0, 1)] - direct).abs()
        };
        assert!(err(0.05) <= err(0.1) + 1e-12);
    }

    #[test]
    fn reconstruct_and_uncertainty() {
        let h = block2();
        let trace = exact_trace(&h, &StateVector::basis("10").unwrap(), 0.1, 4);
        let k = build_krylov(&trace, &[0, 2]).unwrap();
        let x0 = reconstruct_state(&trace, &k, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!(x0.fidelity(&trace.records[0].state) > 1.0 - 1e-14);
        let x1 = reconstruct_state(&trace, &k, &DVector::from_vec(vec![0.0, 1.0])).unwrap();
        assert!(x1.fidelity(&trace.records[2].state) > 1.0 - 1e-14);
        let generic = reconstruct_state(&trace, &k, &DVector::from_vec(vec![0.3, -0.8])).unwrap();
        assert!((generic.norm() - 1.0).abs() < 1e-14);

        let (vals, vecs) = oracle::eigh(&h.to_dense()).unwrap();
        let v = StateVector::normalized(vecs.column(1).into_owned()).unwrap();
        assert!(uncertainty(&h, &v, vals[1]) < 1e-12);
        assert!((uncertainty(&h, &v, vals[1] + 0.25) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn uncertainty_routes_agree_in_exact_mode() {
        let h = block2();
        let trace = exact_trace(&h, &StateVector::basis("10").unwrap(), 0.1, 20);
        let k = build_krylov(&trace, &[0, 10]).unwrap();
        for (e, x) in solve_gen_eig(&k, DEFAULT_COND_THRESHOLD).unwrap() {
            let sv = uncertainty(&h, &reconstruct_state(&trace, &k, &x).unwrap(), e);
            let sc = uncertainty_from_scalars(&k, &x, e);
            assert!((sv - sc).abs() < 1e-2, "{sv} vs {sc}");
        }
        let cfg = QlanczosConfig { route: UncertaintyRoute::Sampled, ..QlanczosConfig::exact(DELTA_TWO_QUBIT) };
        assert!(krylov_candidates(&trace, &h, &cfg).is_err());
    }

    #[test]
    fn sampled_route_reports_shot_uncertainty() {
        let h = block2();
        let plan = SamplingPlan::new(8192, 3);
        let cfg = QlanczosConfig { route: UncertaintyRoute::Sampled, ..QlanczosConfig::sampled(DELTA_TWO_QUBIT, plan) };
        let start = extreme_start(&h, &[0, 1, 2, 3]).unwrap();
        let r = run_qlanczos(&h, &start, &cfg, 2).unwrap();
        assert!(!r.candidates.is_empty());
        assert!(r.candidates.iter().all(|c| c.delta_e >= 0.0 && c.delta_e.is_finite()));
        let again = run_qlanczos(&h, &start, &cfg, 2).unwrap();
        assert_eq!(r.accepted, again.accepted);
    }

    #[test]
    fn lowest_energy_from_noiseless_two_qubit_run() {
        let h = block2();
        let exact = eigenvalues(&h.to_dense()).unwrap();
        let cfg = QlanczosConfig::exact(DELTA_TWO_QUBIT);
        let start = extreme_start(&h, &[0, 1, 2, 3]).unwrap();
        let result = run_qlanczos(&h, &start, &cfg, 2).unwrap();
        assert_eq!(result.accepted.len(), 2);
        for (est, want) in result.accepted.iter().zip(&exact) {
            assert!((est.energy - want).abs() < 1e-3, "{} vs {want}", est.energy);
            assert!(est.delta_e < 1e-2);
        }
        // Krylov extends the QITE variational space
        let lowest = result.candidates.iter().filter(|c| c.level == 0).map(|c| c.energy).fold(f64::INFINITY, f64::min);
        assert!(lowest <= result.trace.final_energy() + 1e-9);
        for c in &result.candidates {
            assert!(c.energy >= exact[0] - 1e-8 && c.energy <= exact[3] + 1e-8);
        }
    }

    #[test]
    fn negated_block_gives_top_of_spectrum() {
        let h = reduced_two_particle_block(&NeutrinoParams::new(4, 0.2)).unwrap();
        let genuine = eigenvalues(&h.to_dense().submatrix(&GENUINE_STATES)).unwrap();
        let neg = -&h;
        let start = extreme_start(&neg, &GENUINE_STATES).unwrap();
        let result = run_qlanczos(&neg, &start, &QlanczosConfig::exact(DELTA_THREE_QUBIT), 2).unwrap();
        let top: Vec<f64> = result.accepted.iter().map(|e| -e.energy).collect();
        assert!((top[0] - genuine[5]).abs() < 1e-3);
        assert!((top[1] - genuine[4]).abs() < 1e-3);
    }

    #[test]
    fn filter_cases() {
        use LevelAssignment::*;
        assert!(filter_spectrum(&[], 0.6, 2, Clustered).is_empty());
        let c = |level, energy, delta_e, indices: Vec<usize>| EigenEstimate { level, ritz_index: level, start: 0, energy, coefficients: DVector::zeros(2), indices, delta_e };
        let all_bad = vec![c(0, -1.0, 0.9, vec![0, 2])];
        assert!(filter_spectrum(&all_bad, 0.6, 2, Clustered).is_empty());
        let mixed = vec![
            c(0, -1.0, 0.01, vec![0, 2]),
            c(1, 0.5, 0.5, vec![0, 2]),
            c(0, -1.1, 0.1, vec![0, 4]),
            c(1, 0.4, 0.1, vec![0, 4]),
        ];
        let out = filter_spectrum(&mixed, 0.6, 2, MinTotalSpace);
        assert_eq!(out.iter().map(|e| e.energy).collect::<Vec<_>>(), vec![-1.1, 0.4]);
        let out = filter_spectrum(&mixed, 0.6, 2, Clustered);
        assert_eq!(out.iter().map(|e| (e.energy, e.level)).collect::<Vec<_>>(), vec![(-1.0, 0), (0.4, 1)]);

        // a second Ritz value sitting on a higher level does not displace a
        // lower cluster found in another space
        let mislabeled = vec![
            c(0, -3.8, 1e-4, vec![10, 20]),
            c(1, 0.61, 1e-3, vec![10, 20]),
            c(0, -3.8, 1e-3, vec![0, 4]),
            c(1, -0.5, 5e-2, vec![0, 4]),
        ];
        let out = filter_spectrum(&mislabeled, 0.6, 2, Clustered);
        assert_eq!(out.iter().map(|e| e.energy).collect::<Vec<_>>(), vec![-3.8, -0.5]);
        assert_eq!(out[1].ritz_index, 1);
        let out = filter_spectrum(&mislabeled, 0.6, 2, MinTotalSpace);
        assert_eq!(out[1].energy, 0.61);
    }

    #[test]
    fn index_sets() {
        assert_eq!(krylov_index_sets(5, 2, KrylovSweep::ZeroAnchored), vec![vec![0, 2], vec![0, 4]]);
        assert_eq!(krylov_index_sets(5, 2, KrylovSweep::AllPairs), vec![vec![0, 2], vec![0, 4], vec![2, 4]]);
        assert_eq!(krylov_index_sets(7, 3, KrylovSweep::AllPairs), vec![vec![0, 2, 4], vec![2, 4, 6]]);
        assert_eq!(krylov_index_sets(9, 3, KrylovSweep::ZeroAnchored), vec![vec![0, 2, 4], vec![0, 4, 8]]);
    }

    #[test]
    fn degeneracy_merging() {
        assert_eq!(merge_degenerate(&[2.0, -1.0, 2.0 + 1e-9], 1e-6), vec![(-1.0, 1), (2.0, 2)]);
    }

    #[test]
    fn zero_coupling_spectrum() {
        let (two, three) = exact_configs();
        let s = assemble_full_spectrum(&NeutrinoParams::new(4, 0.0), &two, &three).unwrap();
        let oracle = &full_spectrum_scan(&NeutrinoParams::new(4, 0.0), &[0.0]).unwrap()[0].energies;
        let got = s.energies();
        assert_eq!(got.len(), 16);
        for (a, b) in got.iter().zip(oracle) {
            assert!((a - b).abs() < 1e-3, "{got:?}");
        }
    }

    #[test]
    fn spectrum_at_unit_coupling_has_degenerate_pair() {
        let (two, three) = exact_configs();
        let s = assemble_full_spectrum(&NeutrinoParams::new(4, 1.0), &two, &three).unwrap();
        let analytic: Vec<f64> = s.entries.iter().filter(|e| e.method == SpectrumMethod::Analytic && e.particle_number == 2).map(|e| e.energy).collect();
        assert_eq!(analytic.len(), 2);
        assert!(analytic.iter().all(|e| (e - 2.0).abs() < 1e-10));
        let mut buf = Vec::new();
        write_spectrum_csv(&[s], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("mu,method,energy,delta_e,accepted\n"));
        assert_eq!(text.lines().count(), 17);
    }
}
