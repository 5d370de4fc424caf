//! Statevectors, exact and shot-sampled expectation values.

use std::collections::BTreeMap;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mitigation::ReadoutNoise;
use crate::oracle;
use crate::par;
use crate::pauli::{DenseOperator, Pauli, PauliString, PauliSum};

pub const NORM_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_SHOTS: u64 = 8192;

/// Normalized complex amplitudes over the computational basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: DVector<Complex64>,
}

impl StateVector {
    /// Basis state from a ket label such as `"010"`.
    pub fn basis(label: &str) -> Result<Self> {
        let n = label.len();
        if n == 0 {
            return Err(Error::InvalidParameter("empty basis label".into()));
        }
        let index = usize::from_str_radix(label, 2)
            .map_err(|_| Error::Parse(format!("basis label `{label}` is not a bitstring")))?;
        Self::basis_index(n, index)
    }

    pub fn basis_index(n_qubits: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_qubits;
        if index >= dim {
            return Err(Error::InvalidParameter(format!("basis index {index} out of range for {n_qubits} qubits")));
        }
        let mut amps = DVector::from_element(dim, Complex64::new(0.0, 0.0));
        amps[index] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Wraps amplitudes that must already be normalized.
    pub fn from_amplitudes(amps: DVector<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_dim(amps.len())?;
        let norm = amps.norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { n_qubits, amps })
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(amps: DVector<Complex64>) -> Result<Self> {
        let n_qubits = qubits_for_dim(amps.len())?;
        let norm = amps.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self { n_qubits, amps: amps / Complex64::new(norm, 0.0) })
    }

    pub fn from_real(values: &[f64]) -> Result<Self> {
        Self::normalized(DVector::from_iterator(values.len(), values.iter().map(|&x| Complex64::new(x, 0.0))))
    }

    /// Equal superposition of the given basis indices.
    pub fn superposition(n_qubits: usize, indices: &[usize]) -> Result<Self> {
        let mut amps = DVector::from_element(1 << n_qubits, Complex64::new(0.0, 0.0));
        for &i in indices {
            if i >= amps.len() {
                return Err(Error::InvalidParameter(format!("basis index {i} out of range")));
            }
            amps[i] += Complex64::new(1.0, 0.0);
        }
        Self::normalized(amps)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> Complex64 {
        self.amps[index]
    }

    pub fn norm(&self) -> f64 {
        self.amps.norm()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    pub fn fidelity(&self, other: &StateVector) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// `U psi`; rejects non-unitary input.
    pub fn apply_unitary(&self, u: &DenseOperator) -> Result<StateVector> {
        if u.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: u.dim() });
        }
        let err = u.unitarity_error();
        if err > NORM_TOLERANCE {
            return Err(Error::InvalidParameter(format!("operator is not unitary (error {err:.3e})")));
        }
        Ok(StateVector { n_qubits: self.n_qubits, amps: u.matrix() * &self.amps })
    }

    /// `exp(-i t h) psi` via the eigendecomposition of `h`.
    pub fn evolve_hermitian(&self, h: &DenseOperator, t: f64) -> Result<StateVector> {
        oracle::exact_evolution(h, t, self)
    }

    /// `sigma psi`.
    pub fn apply_pauli(&self, p: &PauliString) -> StateVector {
        let mut out = DVector::from_element(self.dim(), Complex64::new(0.0, 0.0));
        for (j, a) in self.amps.iter().enumerate() {
            let (phase, k) = p.apply_to_basis(j);
            out[k] += phase * a;
        }
        StateVector { n_qubits: self.n_qubits, amps: out }
    }

    /// `O psi` as a raw (unnormalized) vector.
    pub fn apply_sum(&self, obs: &PauliSum) -> DVector<Complex64> {
        let mut out = DVector::from_element(self.dim(), Complex64::new(0.0, 0.0));
        for (p, c) in obs.iter() {
            for (j, a) in self.amps.iter().enumerate() {
                let (phase, k) = p.apply_to_basis(j);
                out[k] += phase * c * a;
            }
        }
        out
    }

    /// `<psi|sigma|psi>`.
    pub fn pauli_expectation(&self, p: &PauliString) -> Complex64 {
        self.amps
            .iter()
            .enumerate()
            .map(|(j, a)| {
                let (phase, k) = p.apply_to_basis(j);
                self.amps[k].conj() * phase * a
            })
            .sum()
    }

    /// `<psi|O|psi>` including any imaginary residue.
    pub fn expectation_complex(&self, obs: &PauliSum) -> Complex64 {
        obs.iter().map(|(p, c)| c * self.pauli_expectation(p)).sum()
    }

    /// Rotates each qubit so that measuring Z reads out the given Pauli axis.
    pub fn rotate_to_basis(&self, bases: &[Pauli]) -> StateVector {
        let n = self.n_qubits;
        let mut amps = self.amps.clone();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (q, &b) in bases.iter().enumerate() {
            let bit = 1usize << (n - 1 - q);
            // Y: apply S^dagger first, then H
            if b == Pauli::Y {
                for j in 0..amps.len() {
                    if j & bit != 0 {
                        amps[j] *= Complex64::new(0.0, -1.0);
                    }
                }
            }
            if b == Pauli::X || b == Pauli::Y {
                for j in 0..amps.len() {
                    if j & bit == 0 {
                        let (a0, a1) = (amps[j], amps[j | bit]);
                        amps[j] = (a0 + a1) * h;
                        amps[j | bit] = (a0 - a1) * h;
                    }
                }
            }
        }
        StateVector { n_qubits: n, amps }
    }

    /// Bitstring label of a basis index, qubit 0 first.
    pub fn label(n_qubits: usize, index: usize) -> String {
        format!("{index:0n_qubits$b}")
    }
}

fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// `<psi|O|psi>`; the imaginary residue is discarded after a Hermiticity check.
pub fn exact_expectation(obs: &PauliSum, psi: &StateVector) -> Result<f64> {
    if obs.n_qubits() != psi.n_qubits() {
        return Err(Error::QubitMismatch(obs.n_qubits(), psi.n_qubits()));
    }
    let z = psi.expectation_complex(obs);
    if z.im.abs() > 1e-10 * (1.0 + obs.one_norm()) {
        return Err(Error::Numerical(format!("expectation has imaginary part {:.3e}", z.im)));
    }
    Ok(z.re)
}

/// Shot budget, seed and optional readout channel for one measurement setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub shots: u64,
    pub seed: u64,
    pub readout_noise: Option<ReadoutNoise>,
    /// Share one sample set among qubit-wise commuting terms.
    #[serde(default)]
    pub group_commuting: bool,
}

impl SamplingPlan {
    pub fn new(shots: u64, seed: u64) -> Self {
        Self { shots, seed, readout_noise: None, group_commuting: false }
    }

    pub fn with_readout(mut self, noise: ReadoutNoise) -> Self {
        self.readout_noise = Some(noise);
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InvalidParameter("shots must be at least 1".into()));
        }
        if let Some(r) = &self.readout_noise {
            r.validate()?;
        }
        Ok(())
    }
}

impl Default for SamplingPlan {
    fn default() -> Self {
        Self::new(DEFAULT_SHOTS, 0)
    }
}

/// Multinomial draw of `shots` outcomes from `probs` (binomial chain).
pub fn multinomial(probs: &[f64], shots: u64, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u64; probs.len()];
    let mut remaining = shots;
    let mut mass: f64 = probs.iter().map(|p| p.max(0.0)).sum();
    for (i, &p) in probs.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let p = p.max(0.0);
        if i == probs.len() - 1 || mass <= p {
            counts[i] = remaining;
            break;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let draw = Binomial::new(remaining, q).expect("probability clamped to [0, 1]").sample(&mut rng);
        counts[i] = draw;
        remaining -= draw;
        mass -= p;
    }
    counts
}

/// Measured outcome counts indexed by basis state. Readout noise, if any, acts
/// on the outcome distribution and never on the stored amplitudes.
pub fn sample_count_vector(psi: &StateVector, plan: &SamplingPlan) -> Result<Vec<u64>> {
    plan.validate()?;
    let mut probs = psi.probabilities();
    if let Some(noise) = &plan.readout_noise {
        probs = noise.apply_to_distribution(&probs, psi.n_qubits())?;
    }
    Ok(multinomial(&probs, plan.shots, plan.seed))
}

/// Counts keyed by bitstring (qubit 0 first); zero-count outcomes omitted.
pub fn sample_counts(psi: &StateVector, plan: &SamplingPlan) -> Result<BTreeMap<String, u64>> {
    let counts = sample_count_vector(psi, plan)?;
    Ok(counts
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| (StateVector::label(psi.n_qubits(), i), c))
        .collect())
}

/// Expectation of the parity `(-1)^{popcount(i & mask)}` under a distribution.
pub fn parity_expectation(dist: &[f64], mask: usize) -> f64 {
    dist.iter()
        .enumerate()
        .map(|(i, p)| if (i & mask).count_ones().is_multiple_of(2) { *p } else { -*p })
        .sum()
}

pub fn counts_to_distribution(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total.max(1) as f64).collect()
}

/// Measurement basis for a term: its non-identity axes, Z elsewhere.
pub fn measurement_basis(p: &PauliString) -> Vec<Pauli> {
    p.axes().iter().map(|&a| if a == Pauli::I { Pauli::Z } else { a }).collect()
}

/// Greedy qubit-wise commuting groups; each group is (basis, term indices).
pub fn qubit_wise_groups(terms: &[PauliString]) -> Vec<(Vec<Pauli>, Vec<usize>)> {
    let mut groups: Vec<(Vec<Pauli>, Vec<usize>)> = Vec::new();
    for (i, t) in terms.iter().enumerate() {
        let slot = groups.iter_mut().find(|(basis, _)| {
            basis.iter().zip(t.axes()).all(|(&b, &a)| a == Pauli::I || b == Pauli::I || a == b)
        });
        match slot {
            Some((basis, members)) => {
                for (b, &a) in basis.iter_mut().zip(t.axes()) {
                    if *b == Pauli::I {
                        *b = a;
                    }
                }
                members.push(i);
            }
            None => groups.push((t.axes().to_vec(), vec![i])),
        }
    }
    groups
}

/// One measured Pauli term: mean of its +-1 outcomes and the standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TermEstimate {
    pub mean: f64,
    pub stderr: f64,
}

fn estimate_from_counts(counts: &[u64], mask: usize) -> TermEstimate {
    let shots: u64 = counts.iter().sum();
    let mean = parity_expectation(&counts_to_distribution(counts), mask);
    let var = (1.0 - mean * mean).max(0.0);
    TermEstimate { mean, stderr: (var / shots.max(1) as f64).sqrt() }
}

/// Shot-sampled `<O>` and its propagated standard error. Each non-identity
/// term gets the full shot budget and its own derived seed.
pub fn sampled_expectation(obs: &PauliSum, psi: &StateVector, plan: &SamplingPlan) -> Result<(f64, f64)> {
    plan.validate()?;
    if !obs.is_hermitian(1e-12) {
        return Err(Error::InvalidParameter("sampled expectation needs a Hermitian observable".into()));
    }
    let terms: Vec<(PauliString, f64)> = obs.iter().map(|(p, c)| (p.clone(), c.re)).collect();
    let strings: Vec<PauliString> = terms.iter().map(|(p, _)| p.clone()).collect();
    let identity = obs.identity_coefficient();

    let measured: Vec<Option<TermEstimate>> = if plan.group_commuting {
        let active: Vec<usize> = (0..strings.len()).filter(|&i| !strings[i].is_identity()).collect();
        let active_strings: Vec<PauliString> = active.iter().map(|&i| strings[i].clone()).collect();
        let groups = qubit_wise_groups(&active_strings);
        let per_group = par::map_range(groups.len(), |g| -> Result<Vec<(usize, TermEstimate)>> {
            let (basis, members) = &groups[g];
            let basis: Vec<Pauli> = basis.iter().map(|&b| if b == Pauli::I { Pauli::Z } else { b }).collect();
            let rotated = psi.rotate_to_basis(&basis);
            let counts = sample_count_vector(&rotated, &plan.with_seed(par::derive_seed(plan.seed, g as u64)))?;
            Ok(members
                .iter()
                .map(|&m| (active[m], estimate_from_counts(&counts, active_strings[m].support_mask())))
                .collect())
        });
        let mut out = vec![None; strings.len()];
        for group in per_group {
            for (i, est) in group? {
                out[i] = Some(est);
            }
        }
        out
    } else {
        par::map_range(strings.len(), |i| -> Result<Option<TermEstimate>> {
            let p = &strings[i];
            if p.is_identity() {
                return Ok(None);
            }
            let rotated = psi.rotate_to_basis(&measurement_basis(p));
            let counts = sample_count_vector(&rotated, &plan.with_seed(par::derive_seed(plan.seed, i as u64)))?;
            Ok(Some(estimate_from_counts(&counts, p.support_mask())))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?
    };

    let mut value = identity;
    let mut var = 0.0;
    for ((p, c), est) in terms.iter().zip(measured) {
        if p.is_identity() {
            continue;
        }
        let est = est.expect("every non-identity term is measured");
        value += c * est.mean;
        var += c * c * est.stderr * est.stderr;
    }
    Ok((value, var.sqrt()))
}
