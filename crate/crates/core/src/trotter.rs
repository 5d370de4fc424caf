//! First-order Trotterized real-time evolution in the flavor basis.

use std::io::Write;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonians::{collective_square, NeutrinoParams};
use crate::oracle;
use crate::par;
use crate::pauli::{DenseOperator, Pauli, PauliString, PauliSum};
use crate::state::{self, SamplingPlan, StateVector};

pub const DEFAULT_MAX_DELTA_T: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrotterConfig {
    /// Largest allowed step; a time `t` uses `ceil(t / max_delta_t)` steps.
    pub max_delta_t: f64,
    #[serde(default)]
    pub plan: Option<SamplingPlan>,
}

impl Default for TrotterConfig {
    fn default() -> Self {
        Self { max_delta_t: DEFAULT_MAX_DELTA_T, plan: None }
    }
}

impl TrotterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_delta_t > 0.0) || !self.max_delta_t.is_finite() {
            return Err(Error::InvalidParameter(format!("delta_t must be positive, got {}", self.max_delta_t)));
        }
        if let Some(p) = &self.plan {
            p.validate()?;
        }
        Ok(())
    }

    pub fn n_steps(&self, t: f64) -> usize {
        (t / self.max_delta_t - 1e-9).ceil().max(0.0) as usize
    }
}

/// `(H_X, H_Y, H_Z)` with every part made of mutually commuting terms.
pub fn split_flavor_hamiltonian(params: &NeutrinoParams) -> Result<(PauliSum, PauliSum, PauliSum)> {
    params.validate()?;
    let n = params.n_neutrinos;
    let (s, c) = ((2.0 * params.theta).sin(), (2.0 * params.theta).cos());
    let quarter = params.mu / 4.0;
    let mut hx = collective_square(n, Pauli::X) * quarter;
    let hy = collective_square(n, Pauli::Y) * quarter;
    let mut hz = collective_square(n, Pauli::Z) * quarter;
    for q in 0..n {
        let w = params.omega(q);
        hx.add_term(PauliString::single(n, q, Pauli::X), Complex64::new(0.5 * s * w, 0.0));
        hz.add_term(PauliString::single(n, q, Pauli::Z), Complex64::new(-0.5 * c * w, 0.0));
    }
    for (name, part) in [("H_X", &hx), ("H_Y", &hy), ("H_Z", &hz)] {
        if !part.terms_commute() {
            return Err(Error::Numerical(format!("{name} contains non-commuting terms")));
        }
    }
    Ok((hx, hy, hz))
}

/// `exp(-i H_X dt) exp(-i H_Y dt) exp(-i H_Z dt)`.
pub fn trotter_step_unitary(params: &NeutrinoParams, delta_t: f64) -> Result<DenseOperator> {
    let (hx, hy, hz) = split_flavor_hamiltonian(params)?;
    let ux = oracle::unitary(&hx.to_dense(), delta_t)?;
    let uy = oracle::unitary(&hy.to_dense(), delta_t)?;
    let uz = oracle::unitary(&hz.to_dense(), delta_t)?;
    Ok(ux.matmul(&uy.matmul(&uz)))
}

fn apply_power(u: &DenseOperator, psi: &StateVector, n: usize) -> Result<StateVector> {
    let mut amps: DVector<Complex64> = psi.amplitudes().clone();
    for _ in 0..n {
        amps = u.matrix() * amps;
    }
    StateVector::normalized(amps)
}

/// `n_steps` Trotter steps of size `t / n_steps`.
pub fn trotter_evolve(params: &NeutrinoParams, initial: &StateVector, t: f64, n_steps: usize) -> Result<StateVector> {
    if initial.n_qubits() != params.n_neutrinos {
        return Err(Error::QubitMismatch(params.n_neutrinos, initial.n_qubits()));
    }
    if t == 0.0 {
        return Ok(initial.clone());
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter("n_steps must be positive for t != 0".into()));
    }
    let u = trotter_step_unitary(params, t / n_steps as f64)?;
    apply_power(&u, initial, n_steps)
}

/// Parses a flavor label: `0`/`e` for electron flavor, `1`/`x` for the other.
pub fn parse_flavor_label(label: &str) -> Result<String> {
    label
        .chars()
        .map(|ch| match ch {
            '0' | 'e' => Ok('0'),
            '1' | 'x' => Ok('1'),
            other => Err(Error::Parse(format!("invalid flavor character '{other}' in '{label}'"))),
        })
        .collect()
}

fn label_index(label: &str, n: usize) -> Result<usize> {
    let bits = parse_flavor_label(label)?;
    if bits.len() != n {
        return Err(Error::QubitMismatch(n, bits.len()));
    }
    usize::from_str_radix(&bits, 2).map_err(|e| Error::Parse(e.to_string()))
}

/// Probability estimate with its shot error (zero in exact mode).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probability {
    pub value: f64,
    pub stderr: f64,
}

/// `|<final|psi(t)>|^2` after Trotter evolution, or the sampled frequency
/// of `final_label` when a plan is given.
pub fn transition_probability(
    params: &NeutrinoParams,
    initial_label: &str,
    final_label: &str,
    t: f64,
    n_steps: usize,
    plan: Option<&SamplingPlan>,
) -> Result<Probability> {
    let n = params.n_neutrinos;
    let initial = StateVector::basis_index(n, label_index(initial_label, n)?)?;
    let target = label_index(final_label, n)?;
    let psi = trotter_evolve(params, &initial, t, n_steps)?;
    match plan {
        None => Ok(Probability { value: psi.probabilities()[target], stderr: 0.0 }),
        Some(plan) => sampled_probability(&psi, target, plan),
    }
}

fn sampled_probability(psi: &StateVector, target: usize, plan: &SamplingPlan) -> Result<Probability> {
    let counts = state::sample_count_vector(psi, plan)?;
    let p = counts[target] as f64 / plan.shots as f64;
    Ok(Probability { value: p, stderr: (p * (1.0 - p) / plan.shots as f64).sqrt() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRow {
    pub t: f64,
    pub n_steps: usize,
    pub p_exact: f64,
    pub p_trotter: f64,
    pub p_sampled: Option<f64>,
    pub stderr: Option<f64>,
    pub shots: u64,
    pub seed: Option<u64>,
}

/// Survival probability of the all-electron-flavor state on a time grid.
/// Sampled rows use seed `derive_seed(plan.seed, row index)`.
pub fn survival_series(params: &NeutrinoParams, t_grid: &[f64], config: &TrotterConfig) -> Result<Vec<SurvivalRow>> {
    config.validate()?;
    let n = params.n_neutrinos;
    let h = crate::hamiltonians::flavor_hamiltonian(params)?.to_dense();
    let initial = StateVector::basis_index(n, 0)?;
    let indexed: Vec<(usize, f64)> = t_grid.iter().copied().enumerate().collect();
    par::map(&indexed, |&(i, t)| {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::InvalidParameter(format!("time must be non-negative, got {t}")));
        }
        let p_exact = oracle::transition_probability_exact(&h, &initial, &initial, t)?;
        let steps = config.n_steps(t);
        let psi = trotter_evolve(params, &initial, t, steps)?;
        let p_trotter = psi.probabilities()[0];
        let (p_sampled, stderr, shots, seed) = match &config.plan {
            None => (None, None, 0, None),
            Some(plan) => {
                let seed = par::derive_seed(plan.seed, i as u64);
                let est = sampled_probability(&psi, 0, &plan.with_seed(seed))?;
                (Some(est.value), Some(est.stderr), plan.shots, Some(seed))
            }
        };
        Ok(SurvivalRow { t, n_steps: steps, p_exact, p_trotter, p_sampled, stderr, shots, seed })
    })
    .into_iter()
    .collect()
}

/// CSV `t,p_exact,p_trotter,p_sampled,stderr,shots,seed`; sampled columns empty in exact mode.
pub fn write_survival_csv<W: Write>(rows: &[SurvivalRow], mut out: W) -> Result<()> {
    writeln!(out, "t,p_exact,p_trotter,p_sampled,stderr,shots,seed")?;
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.10}")).unwrap_or_default();
    for r in rows {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        writeln!(out, "{:.6},{:.10},{:.10},{},{},{},{}", r.t, r.p_exact, r.p_trotter, opt(r.p_sampled), opt(r.stderr), r.shots, seed)?;
    }
    Ok(())
}

/// `ceil`-rule time grid `0, dt, 2 dt, .., t_max`.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![0.0];
    }
    (0..points).map(|i| t_max * i as f64 / (points - 1) as f64).collect()
}
