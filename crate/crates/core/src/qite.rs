//! Quantum imaginary-time evolution: unitary updates `exp(-i dtau A)` fitted
//! to normalized `exp(-dtau H)` steps, with the moment and normalization
//! records QLanczos needs.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mitigation::{self, ReadoutNoise};
use crate::oracle;
use crate::par;
use crate::pauli::{DenseOperator, Pauli, PauliString, PauliSum};
use crate::state::{self, multinomial, SamplingPlan, StateVector};

/// How the right-hand side `b` of the linear system is formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateTarget {
    /// `b_I = 2 r Im<sigma_I H>` with `r = sqrt(c_{s-1}/c_s)`; measurable on hardware.
    FirstOrder,
    /// `b_I = -(2/dtau) Im<psi|sigma_I|phi>` with `phi` the exact normalized
    /// imaginary-time step; needs the statevector, exact mode only.
    ExactStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementMode {
    Exact,
    Sampled {
        plan: SamplingPlan,
        /// Apply readout mitigation with a sampled calibration matrix.
        mitigate_readout: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QiteConfig {
    pub delta_tau: f64,
    pub max_steps: usize,
    pub epsilon: f64,
    pub regularization: f64,
    pub mode: MeasurementMode,
    pub target: UpdateTarget,
    /// Restrict the pool to strings with an odd number of `Y` (real `H`, real state).
    pub reduced_pool: bool,
    /// Stop once `|E_s - E_{s-1}| < epsilon`; otherwise run all `max_steps`.
    pub stop_on_convergence: bool,
}

impl Default for QiteConfig {
    fn default() -> Self {
        Self {
            delta_tau: 0.1,
            max_steps: 60,
            epsilon: 1e-3,
            regularization: 1e-8,
            mode: MeasurementMode::Exact,
            target: UpdateTarget::ExactStep,
            reduced_pool: false,
            stop_on_convergence: true,
        }
    }
}

impl QiteConfig {
    pub fn sampled(plan: SamplingPlan, mitigate_readout: bool) -> Self {
        Self {
            mode: MeasurementMode::Sampled { plan, mitigate_readout },
            target: UpdateTarget::FirstOrder,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tau > 0.0) {
            return Err(Error::InvalidParameter("delta_tau must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if !(self.regularization >= 0.0) {
            return Err(Error::InvalidParameter("regularization must be nonnegative".into()));
        }
        if let MeasurementMode::Sampled { plan, .. } = &self.mode {
            plan.validate()?;
            if self.target == UpdateTarget::ExactStep {
                return Err(Error::InvalidParameter("the exact-step target needs exact measurement".into()));
            }
        }
        Ok(())
    }
}

/// One QITE iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct QiteRecord {
    pub state: StateVector,
    pub energy: f64,
    pub energy_stderr: f64,
    pub second_moment: f64,
    /// `ln c_s`; `c_0 = 1`.
    pub log_c: f64,
    /// Coefficients `a[s]` of the update that produced this state (empty at `s = 0`).
    pub coefficients: Vec<f64>,
}

impl QiteRecord {
    pub fn c(&self) -> f64 {
        self.log_c.exp()
    }

    pub fn variance(&self) -> f64 {
        self.second_moment - self.energy * self.energy
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QiteTrace {
    pub delta_tau: f64,
    pub records: Vec<QiteRecord>,
    pub converged_at: Option<usize>,
}

impl QiteTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    pub fn final_energy(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.energy)
    }

    /// First step whose energy lies within `tol` of `target`.
    pub fn first_step_within(&self, target: f64, tol: f64) -> Option<usize> {
        self.records.iter().position(|r| (r.energy - target).abs() < tol)
    }

    /// Largest single-step energy increase (zero for a non-increasing sequence).
    pub fn max_energy_increase(&self) -> f64 {
        self.records.windows(2).map(|w| w[1].energy - w[0].energy).fold(0.0, f64::max)
    }

    /// CSV `step,tau,energy,second_moment,c_s`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "step,tau,energy,second_moment,c_s")?;
        for (s, r) in self.records.iter().enumerate() {
            writeln!(
                out,
                "{},{:.6},{:.10},{:.10},{:.10e}",
                s,
                s as f64 * self.delta_tau,
                r.energy,
                r.second_moment,
                r.c()
            )?;
        }
        Ok(())
    }
}

/// All non-identity strings, optionally only those with an odd number of `Y`.
pub fn operator_pool(n_qubits: usize, reduced: bool) -> Vec<PauliString> {
    PauliString::all(n_qubits)
        .into_iter()
        .filter(|p| !p.is_identity())
        .filter(|p| !reduced || p.count(Pauli::Y) % 2 == 1)
        .collect()
}

/// Base-4 index of a string (I=0, X=1, Y=2, Z=3, qubit 0 most significant).
pub fn pauli_code(p: &PauliString) -> usize {
    p.axes().iter().fold(0, |acc, &a| acc * 4 + a as usize)
}

/// `S[i][j] = <psi|sigma_i sigma_j|psi>`.
pub fn build_s(psi: &StateVector, pool: &[PauliString]) -> Result<DMatrix<Complex64>> {
    let n = pool.len();
    let mut s = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let (phase, k) = pool[i].multiply(&pool[j])?;
            s[(i, j)] = phase * psi.pauli_expectation(&k);
        }
    }
    Ok(s)
}

/// `b_I = 2 r Im<psi|sigma_I H|psi>`, the real system's right-hand side.
pub fn build_b(psi: &StateVector, pool: &[PauliString], h: &PauliSum, norm_ratio: f64) -> Result<DVector<f64>> {
    if !(norm_ratio > 0.0) || !norm_ratio.is_finite() {
        return Err(Error::InvalidParameter(format!("norm ratio must be positive, got {norm_ratio}")));
    }
    let hpsi = psi.apply_sum(h);
    Ok(DVector::from_iterator(
        pool.len(),
        pool.iter().map(|p| 2.0 * norm_ratio * psi.apply_pauli(p).amplitudes().dotc(&hpsi).im),
    ))
}

/// `b_I = -(2/dtau) Im<psi|sigma_I|phi>` for the exact normalized step `phi`.
pub fn build_b_exact_target(psi: &StateVector, phi: &StateVector, pool: &[PauliString], delta_tau: f64) -> DVector<f64> {
    DVector::from_iterator(
        pool.len(),
        pool.iter().map(|p| -(2.0 / delta_tau) * psi.apply_pauli(p).inner(phi).im),
    )
}

/// `argmin ||M a - b||^2 + reg ||a||^2` for `M = S + S^T` (real symmetric),
/// via the spectral decomposition; zero eigenvalues give the minimum-norm solution.
pub fn solve_update(m: &DMatrix<f64>, b: &DVector<f64>, regularization: f64) -> DVector<f64> {
    let (vals, vecs) = oracle::eigh_real(m);
    let scale = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let mut a = DVector::zeros(b.len());
    for (k, &l) in vals.iter().enumerate() {
        if l.abs() <= 1e-13 * scale.max(1.0) {
            continue;
        }
        let v = vecs.column(k);
        a += v * (l / (l * l + regularization) * v.dot(b));
    }
    a
}

/// `S + S^T`; real because `S` is Hermitian.
pub fn symmetrized(s: &DMatrix<Complex64>) -> DMatrix<f64> {
    DMatrix::from_fn(s.nrows(), s.ncols(), |i, j| (s[(i, j)] + s[(j, i)]).re)
}

/// Expectations of every Pauli string (indexed by [`pauli_code`]) plus their standard errors.
#[derive(Clone, Debug)]
struct PauliTable {
    values: Vec<f64>,
    stderr: Vec<f64>,
}

impl PauliTable {
    #[cfg(test)]
    fn exact(psi: &StateVector) -> Self {
        let strings = PauliString::all(psi.n_qubits());
        let values = strings.iter().map(|p| psi.pauli_expectation(p).re).collect();
        Self { values, stderr: vec![0.0; strings.len()] }
    }

    fn sampled(psi: &StateVector, plan: &SamplingPlan, calibration: Option<&DMatrix<f64>>) -> Result<Self> {
        let strings = PauliString::all(psi.n_qubits());
        let rows = par::map_range(strings.len(), |i| -> Result<(f64, f64)> {
            let p = &strings[i];
            if p.is_identity() {
                return Ok((1.0, 0.0));
            }
            let rotated = psi.rotate_to_basis(&state::measurement_basis(p));
            let mut probs = rotated.probabilities();
            if let Some(noise) = &plan.readout_noise {
                probs = noise.apply_to_distribution(&probs, psi.n_qubits())?;
            }
            let counts = multinomial(&probs, plan.shots, par::derive_seed(plan.seed, i as u64));
            let mut dist = state::counts_to_distribution(&counts);
            if let Some(a) = calibration {
                dist = mitigation::mitigate_readout(&dist, a)?;
            }
            let v = state::parity_expectation(&dist, p.support_mask());
            Ok((v, ((1.0 - v * v).max(0.0) / plan.shots as f64).sqrt()))
        });
        let mut values = Vec::with_capacity(rows.len());
        let mut stderr = Vec::with_capacity(rows.len());
        for r in rows {
            let (v, e) = r?;
            values.push(v);
            stderr.push(e);
        }
        Ok(Self { values, stderr })
    }

    fn get(&self, p: &PauliString) -> f64 {
        self.values[pauli_code(p)]
    }

    /// `<sigma_a sigma_b>` from the table.
    fn product(&self, a: &PauliString, b: &PauliString) -> Complex64 {
        let (phase, k) = a.multiply(b).expect("same register");
        phase * self.get(&k)
    }
}

/// Scalars measured on one iterate.
struct Moments {
    energy: f64,
    energy_stderr: f64,
    second_moment: f64,
}

fn moments_from_table(table: &PauliTable, h: &PauliSum) -> Moments {
    let terms: Vec<(&PauliString, f64)> = h.iter().map(|(p, c)| (p, c.re)).collect();
    let mut energy = 0.0;
    let mut var = 0.0;
    for (p, c) in &terms {
        energy += c * table.get(p);
        var += c * c * table.stderr[pauli_code(p)].powi(2);
    }
    let mut second = 0.0;
    for (p, c) in &terms {
        for (q, d) in &terms {
            second += c * d * table.product(p, q).re;
        }
    }
    Moments { energy, energy_stderr: var.sqrt(), second_moment: second }
}

/// `(<H>, stderr, <H^2>)` from one shot-sampled table of all Pauli strings,
/// optionally readout-mitigated with `calibration`.
pub fn sampled_moments(psi: &StateVector, h: &PauliSum, plan: &SamplingPlan, calibration: Option<&DMatrix<f64>>) -> Result<(f64, f64, f64)> {
    if psi.n_qubits() != h.n_qubits() {
        return Err(Error::QubitMismatch(h.n_qubits(), psi.n_qubits()));
    }
    let m = moments_from_table(&PauliTable::sampled(psi, plan, calibration)?, h);
    Ok((m.energy, m.energy_stderr, m.second_moment))
}

fn exact_moments(psi: &StateVector, h: &PauliSum) -> Result<Moments> {
    let energy = state::exact_expectation(h, psi)?;
    let hv = psi.apply_sum(h);
    Ok(Moments { energy, energy_stderr: 0.0, second_moment: hv.norm_squared() })
}

/// Result of one QITE update.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: StateVector,
    pub energy: f64,
    pub energy_stderr: f64,
    pub second_moment: f64,
    /// `ln <psi|exp(-2 dtau H)|psi>`, so that `ln c_{s+1} = ln c_s - moment / 2`.
    pub log_moment: f64,
    pub coefficients: Vec<f64>,
}

/// Per-run context shared by all steps.
pub struct QiteRunner<'a> {
    h: &'a PauliSum,
    dense: DenseOperator,
    pool: Vec<PauliString>,
    config: &'a QiteConfig,
    calibration: Option<DMatrix<f64>>,
}

impl<'a> QiteRunner<'a> {
    pub fn new(h: &'a PauliSum, config: &'a QiteConfig) -> Result<Self> {
        config.validate()?;
        if !h.is_hermitian(1e-12) {
            return Err(Error::InvalidParameter("QITE needs a Hermitian Hamiltonian".into()));
        }
        let n = h.n_qubits();
        let calibration = match &config.mode {
            MeasurementMode::Sampled { plan, mitigate_readout: true } => {
                let noise = plan.readout_noise.clone().unwrap_or_else(ReadoutNoise::noiseless);
                Some(mitigation::calibration_matrix(&noise, n, &plan.with_seed(par::derive_seed(plan.seed, u64::MAX)))?)
            }
            _ => None,
        };
        Ok(Self {
            h,
            dense: h.to_dense(),
            pool: operator_pool(n, config.reduced_pool),
            config,
            calibration,
        })
    }

    pub fn pool(&self) -> &[PauliString] {
        &self.pool
    }

    /// One update from `psi`; `step` selects the derived sampling seed.
    pub fn step(&self, psi: &StateVector, step: usize) -> Result<StepOutput> {
        if psi.n_qubits() != self.h.n_qubits() {
            return Err(Error::QubitMismatch(psi.n_qubits(), self.h.n_qubits()));
        }
        let dt = self.config.delta_tau;
        let (m, b, moments, log_moment) = match &self.config.mode {
            MeasurementMode::Exact => {
                let moments = exact_moments(psi, self.h)?;
                let (phi, g) = oracle::imaginary_time_step(&self.dense, dt, psi)?;
                let m = symmetrized(&build_s(psi, &self.pool)?);
                let b = match self.config.target {
                    UpdateTarget::ExactStep => build_b_exact_target(psi, &phi, &self.pool, dt),
                    UpdateTarget::FirstOrder => build_b(psi, &self.pool, self.h, g.powf(0.25))?,
                };
                (m, b, moments, g.ln())
            }
            MeasurementMode::Sampled { plan, .. } => {
                let p = plan.with_seed(par::derive_seed(plan.seed, step as u64));
                let table = PauliTable::sampled(psi, &p, self.calibration.as_ref())?;
                let moments = moments_from_table(&table, self.h);
                let var = (moments.second_moment - moments.energy * moments.energy).max(0.0);
                let log_moment = second_order_log_moment(moments.energy, var, dt);
                let ratio = (0.25 * log_moment).exp();
                let n = self.pool.len();
                let mut m = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        m[(i, j)] = 2.0 * table.product(&self.pool[i], &self.pool[j]).re;
                    }
                }
                let b = DVector::from_iterator(
                    n,
                    self.pool.iter().map(|p| {
                        let sh: Complex64 = self.h.iter().map(|(q, c)| c * table.product(p, q)).sum();
                        2.0 * ratio * sh.im
                    }),
                );
                (m, b, moments, log_moment)
            }
        };
        let a = solve_update(&m, &b, self.config.regularization);
        let mut generator = PauliSum::zero(self.h.n_qubits());
        for (p, &x) in self.pool.iter().zip(a.iter()) {
            generator.add_term(p.clone(), Complex64::new(x, 0.0));
        }
        let next = if generator.is_empty() {
            psi.clone()
        } else {
            psi.apply_unitary(&oracle::unitary(&generator.to_dense(), dt)?)?
        };
        Ok(StepOutput {
            state: next,
            energy: moments.energy,
            energy_stderr: moments.energy_stderr,
            second_moment: moments.second_moment,
            log_moment,
            coefficients: a.iter().copied().collect(),
        })
    }

    /// Scalars of the final iterate (no update applied).
    fn measure(&self, psi: &StateVector, step: usize) -> Result<Moments> {
        match &self.config.mode {
            MeasurementMode::Exact => exact_moments(psi, self.h),
            MeasurementMode::Sampled { plan, .. } => {
                let p = plan.with_seed(par::derive_seed(plan.seed, step as u64));
                Ok(moments_from_table(&PauliTable::sampled(psi, &p, self.calibration.as_ref())?, self.h))
            }
        }
    }

    pub fn run(&self, initial: &StateVector) -> Result<QiteTrace> {
        let mut records: Vec<QiteRecord> = Vec::with_capacity(self.config.max_steps + 1);
        let mut psi = initial.clone();
        let mut log_c = 0.0;
        let mut coefficients = Vec::new();
        let mut converged_at = None;
        for s in 0..self.config.max_steps {
            let out = self.step(&psi, s)?;
            records.push(QiteRecord {
                state: psi,
                energy: out.energy,
                energy_stderr: out.energy_stderr,
                second_moment: out.second_moment,
                log_c,
                coefficients,
            });
            if s > 0 && converged_at.is_none() {
                let de = (records[s].energy - records[s - 1].energy).abs();
                if de < self.config.epsilon {
                    converged_at = Some(s);
                    if self.config.stop_on_convergence {
                        return Ok(QiteTrace { delta_tau: self.config.delta_tau, records, converged_at });
                    }
                }
            }
            psi = out.state;
            log_c -= 0.5 * out.log_moment;
            coefficients = out.coefficients;
        }
        let s = self.config.max_steps;
        let m = self.measure(&psi, s)?;
        records.push(QiteRecord {
            state: psi,
            energy: m.energy,
            energy_stderr: m.energy_stderr,
            second_moment: m.second_moment,
            log_c,
            coefficients,
        });
        if converged_at.is_none() && s > 0 {
            let de = (records[s].energy - records[s - 1].energy).abs();
            if de < self.config.epsilon {
                converged_at = Some(s);
            }
        }
        if converged_at.is_none() && self.config.stop_on_convergence {
            log::warn!("QITE did not converge within {} steps", self.config.max_steps);
        }
        Ok(QiteTrace { delta_tau: self.config.delta_tau, records, converged_at })
    }
}

/// `ln <exp(-2 dtau H)>` to second order in `dtau`, expanded about the mean:
/// `-2 dtau E + ln(1 + 2 dtau^2 Var)`.
pub fn second_order_log_moment(energy: f64, variance: f64, delta_tau: f64) -> f64 {
    -2.0 * delta_tau * energy + (1.0 + 2.0 * delta_tau * delta_tau * variance.max(0.0)).ln()
}

/// Single update from `psi` (step index 0 for seeding).
pub fn qite_step(psi: &StateVector, h: &PauliSum, config: &QiteConfig) -> Result<StepOutput> {
    QiteRunner::new(h, config)?.step(psi, 0)
}

/// Iterates until the energy change drops below `epsilon` (or `max_steps`).
pub fn run_qite(h: &PauliSum, initial: &StateVector, config: &QiteConfig) -> Result<QiteTrace> {
    QiteRunner::new(h, config)?.run(initial)
}
