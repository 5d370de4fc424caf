//! Synthetic readout and foldable gate noise, readout-error mitigation by
//! constrained inversion, and zero-noise extrapolation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::pauli::{PauliString, PauliSum};
use crate::state::{self, multinomial, SamplingPlan, StateVector};

/// Independent per-qubit bit flips at readout. A single entry applies to every qubit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutNoise {
    /// Probability of reading 1 when the qubit is 0.
    pub p01: Vec<f64>,
    /// Probability of reading 0 when the qubit is 1.
    pub p10: Vec<f64>,
}

impl ReadoutNoise {
    pub fn uniform(n_qubits: usize, p01: f64, p10: f64) -> Self {
        Self { p01: vec![p01; n_qubits], p10: vec![p10; n_qubits] }
    }

    /// Same flip probabilities on every qubit, for any register size.
    pub fn symmetric(p01: f64, p10: f64) -> Self {
        Self { p01: vec![p01], p10: vec![p10] }
    }

    pub fn noiseless() -> Self {
        Self::symmetric(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p01.is_empty() || self.p10.is_empty() {
            return Err(Error::InvalidParameter("readout noise needs at least one probability".into()));
        }
        for &p in self.p01.iter().chain(&self.p10) {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("flip probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }

    fn lookup(v: &[f64], q: usize) -> f64 {
        if v.len() == 1 {
            v[0]
        } else {
            v[q]
        }
    }

    fn check_width(&self, n_qubits: usize) -> Result<()> {
        for v in [&self.p01, &self.p10] {
            if v.len() != 1 && v.len() < n_qubits {
                return Err(Error::QubitMismatch(v.len(), n_qubits));
            }
        }
        Ok(())
    }

    /// `[[1 - p01, p10], [p01, 1 - p10]]`: column = prepared bit, row = read bit.
    pub fn qubit_confusion(&self, q: usize) -> [[f64; 2]; 2] {
        let (a, b) = (Self::lookup(&self.p01, q), Self::lookup(&self.p10, q));
        [[1.0 - a, b], [a, 1.0 - b]]
    }

    /// Pushes an outcome distribution through the channel.
    pub fn apply_to_distribution(&self, probs: &[f64], n_qubits: usize) -> Result<Vec<f64>> {
        self.validate()?;
        self.check_width(n_qubits)?;
        let mut out = probs.to_vec();
        for q in 0..n_qubits {
            let c = self.qubit_confusion(q);
            let bit = 1usize << (n_qubits - 1 - q);
            for j in 0..out.len() {
                if j & bit == 0 {
                    let (p0, p1) = (out[j], out[j | bit]);
                    out[j] = c[0][0] * p0 + c[0][1] * p1;
                    out[j | bit] = c[1][0] * p0 + c[1][1] * p1;
                }
            }
        }
        Ok(out)
    }

    /// Analytic response matrix `A[read][prepared]`.
    pub fn response_matrix(&self, n_qubits: usize) -> Result<DMatrix<f64>> {
        let dim = 1usize << n_qubits;
        let mut a = DMatrix::zeros(dim, dim);
        for j in 0..dim {
            let mut e = vec![0.0; dim];
            e[j] = 1.0;
            for (i, p) in self.apply_to_distribution(&e, n_qubits)?.into_iter().enumerate() {
                a[(i, j)] = p;
            }
        }
        Ok(a)
    }
}

/// Foldable gate noise: a global depolarizing channel whose surviving
/// fraction is `(1 - lambda)^(r * weight)` at fold factor `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldableNoise {
    pub lambda: f64,
    /// Effective number of noisy entangling units in the unfolded circuit.
    pub weight: f64,
}

impl FoldableNoise {
    pub fn new(lambda: f64, weight: f64) -> Self {
        Self { lambda, weight }
    }

    pub fn none() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter(format!("fold strength {} outside [0, 1)", self.lambda)));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::InvalidParameter("noise weight must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn damping(&self, r: f64) -> f64 {
        (1.0 - self.lambda).powf(r * self.weight)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZneConfig {
    pub r_values: Vec<u32>,
    pub degree: usize,
}

impl ZneConfig {
    /// Fold factors 1, 3, 5, 7, 9 and a fit of degree `n_qubits`.
    pub fn for_qubits(n_qubits: usize) -> Self {
        Self { r_values: vec![1, 3, 5, 7, 9], degree: n_qubits }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_values.is_empty() || self.r_values.contains(&0) {
            return Err(Error::InvalidParameter("fold factors must be positive".into()));
        }
        if self.degree >= self.r_values.len() {
            return Err(Error::InvalidParameter(format!(
                "fit degree {} needs more than {} points",
                self.degree,
                self.r_values.len()
            )));
        }
        Ok(())
    }
}

/// Response matrix estimated from `2^n` calibration runs, one per basis state.
pub fn calibration_matrix(noise: &ReadoutNoise, n_qubits: usize, plan: &SamplingPlan) -> Result<DMatrix<f64>> {
    plan.validate()?;
    let dim = 1usize << n_qubits;
    let cal_plan = SamplingPlan { readout_noise: Some(noise.clone()), ..plan.clone() };
    let columns = par::map_range(dim, |j| -> Result<Vec<f64>> {
        let psi = StateVector::basis_index(n_qubits, j)?;
        let counts = state::sample_count_vector(&psi, &cal_plan.with_seed(par::derive_seed(plan.seed, j as u64)))?;
        Ok(state::counts_to_distribution(&counts))
    });
    let mut a = DMatrix::zeros(dim, dim);
    for (j, col) in columns.into_iter().enumerate() {
        for (i, p) in col?.into_iter().enumerate() {
            a[(i, j)] = p;
        }
    }
    Ok(a)
}

/// Lawson-Hanson nonnegative least squares: `argmin ||A x - b||` with `x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let tol = 1e-12 * a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&j| passive[j]).collect();
        let sub = DMatrix::from_fn(a.nrows(), idx.len(), |r, c| a[(r, idx[c])]);
        let z_sub = sub.svd(true, true).solve(b, 1e-14).expect("SVD was computed with U and V");
        let mut z = DVector::zeros(n);
        for (k, &j) in idx.iter().enumerate() {
            z[j] = z_sub[k];
        }
        z
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let candidate = (0..n).filter(|&j| !passive[j] && w[j] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = candidate else { break };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&k| passive[k]).all(|k| z[k] > 0.0) {
                x = z;
                break;
            }
            let alpha = (0..n)
                .filter(|&k| passive[k] && z[k] <= 0.0)
                .map(|k| x[k] / (x[k] - z[k]))
                .fold(f64::INFINITY, f64::min);
            x = &x + (z - &x) * alpha;
            for k in 0..n {
                if passive[k] && x[k].abs() <= tol {
                    passive[k] = false;
                    x[k] = 0.0;
                }
            }
            if !passive.iter().any(|&p| p) {
                break;
            }
        }
    }
    x
}

/// Constrained inversion: nonnegative least squares, then renormalized to sum 1.
pub fn mitigate_readout(raw: &[f64], a: &DMatrix<f64>) -> Result<Vec<f64>> {
    if a.nrows() != raw.len() || a.ncols() != raw.len() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: raw.len() });
    }
    let b = DVector::from_column_slice(raw);
    let smallest = a.clone().svd(false, false).singular_values.min();
    let x = if smallest < 1e-10 {
        log::warn!("calibration matrix is near singular (sigma_min {smallest:.3e}); regularizing");
        let n = raw.len();
        let reg = 1e-6;
        let mut aug = DMatrix::zeros(2 * n, n);
        aug.view_mut((0, 0), (n, n)).copy_from(a);
        aug.view_mut((n, 0), (n, n)).copy_from(&(DMatrix::<f64>::identity(n, n) * reg));
        let mut baug = DVector::zeros(2 * n);
        baug.rows_mut(0, n).copy_from(&b);
        nnls(&aug, &baug)
    } else {
        nnls(a, &b)
    };
    let total: f64 = x.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Numerical("mitigated distribution has zero mass".into()));
    }
    Ok(x.iter().map(|v| v / total).collect())
}

/// Least-squares polynomial through `(r, value)` points evaluated at `r = 0`.
pub fn zne_extrapolate(points: &[(f64, f64)], degree: usize) -> Result<f64> {
    if degree >= points.len() {
        return Err(Error::InvalidParameter(format!(
            "fit degree {degree} needs more than {} points",
            points.len()
        )));
    }
    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.0.abs())).max(1.0);
    let v = DMatrix::from_fn(points.len(), degree + 1, |i, k| (points[i].0 / scale).powi(k as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let coeffs = v
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    Ok(coeffs[0])
}

/// One measured observable at one fold factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPoint {
    pub r: u32,
    pub raw: f64,
    pub roem: f64,
    pub stderr: f64,
}

/// Measures `obs` on `psi` with depolarizing damping `d` applied to the
/// state, readout noise from `plan`, and (when `calibration` is given) the
/// readout-mitigated value alongside the raw one.
pub fn measure_with_damping(
    obs: &PauliSum,
    psi: &StateVector,
    damping: f64,
    plan: &SamplingPlan,
    calibration: Option<&DMatrix<f64>>,
) -> Result<(f64, f64, f64)> {
    plan.validate()?;
    let n = psi.n_qubits();
    let dim = psi.dim();
    let terms: Vec<(PauliString, f64)> = obs.iter().map(|(p, c)| (p.clone(), c.re)).collect();
    let per_term = par::map_range(terms.len(), |i| -> Result<(f64, f64, f64)> {
        let (p, _) = &terms[i];
        if p.is_identity() {
            return Ok((1.0, 1.0, 0.0));
        }
        let rotated = psi.rotate_to_basis(&state::measurement_basis(p));
        let mut probs: Vec<f64> = rotated.probabilities().iter().map(|q| damping * q + (1.0 - damping) / dim as f64).collect();
        if let Some(noise) = &plan.readout_noise {
            probs = noise.apply_to_distribution(&probs, n)?;
        }
        let counts = multinomial(&probs, plan.shots, par::derive_seed(plan.seed, i as u64));
        let dist = state::counts_to_distribution(&counts);
        let mask = p.support_mask();
        let raw = state::parity_expectation(&dist, mask);
        let roem = match calibration {
            Some(a) => state::parity_expectation(&mitigate_readout(&dist, a)?, mask),
            None => raw,
        };
        Ok((raw, roem, ((1.0 - raw * raw).max(0.0) / plan.shots as f64).sqrt()))
    });
    let (mut raw, mut roem, mut var) = (0.0, 0.0, 0.0);
    for ((_, c), r) in terms.iter().zip(per_term) {
        let (a, b, se) = r?;
        raw += c * a;
        roem += c * b;
        var += c * c * se * se;
    }
    Ok((raw, roem, var.sqrt()))
}

/// Model value `identity + (1 - lambda)^(r w) * rest` plus shot noise.
pub fn noisy_expectation(obs: &PauliSum, psi: &StateVector, fold: &FoldableNoise, r: u32, plan: &SamplingPlan) -> Result<f64> {
    fold.validate()?;
    Ok(measure_with_damping(obs, psi, fold.damping(r as f64), plan, None)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub points: Vec<FoldPoint>,
    pub raw: f64,
    pub roem_only: f64,
    pub roem_plus_zne: f64,
    pub fit_degree: usize,
    pub shots: u64,
    pub seed: u64,
}

/// ROEM at every fold factor, then ZNE across the fold factors. `raw` and
/// `roem_only` are the unfolded (`r = 1`) values.
pub fn mitigated_pipeline(
    obs: &PauliSum,
    psi: &StateVector,
    readout: &ReadoutNoise,
    fold: &FoldableNoise,
    zne: &ZneConfig,
    plan: &SamplingPlan,
) -> Result<MitigationReport> {
    fold.validate()?;
    zne.validate()?;
    let n = psi.n_qubits();
    let calibration = calibration_matrix(readout, n, &plan.with_seed(par::derive_seed(plan.seed, u64::MAX)))?;
    let noisy_plan = SamplingPlan { readout_noise: Some(readout.clone()), ..plan.clone() };
    let points = par::map(&zne.r_values, |&r| -> Result<FoldPoint> {
        let p = noisy_plan.with_seed(par::derive_seed(plan.seed, r as u64));
        let (raw, roem, stderr) = measure_with_damping(obs, psi, fold.damping(r as f64), &p, Some(&calibration))?;
        Ok(FoldPoint { r, raw, roem, stderr })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let fit: Vec<(f64, f64)> = points.iter().map(|p| (p.r as f64, p.roem)).collect();
    let zne_value = zne_extrapolate(&fit, zne.degree)?;
    let first = points.iter().min_by_key(|p| p.r).expect("validated nonempty");
    Ok(MitigationReport {
        raw: first.raw,
        roem_only: first.roem,
        roem_plus_zne: zne_value,
        points,
        fit_degree: zne.degree,
        shots: plan.shots,
        seed: plan.seed,
    })
}

/// Infinite-shot counterpart of [`mitigated_pipeline`]: exact outcome
/// distributions, exact response matrix. Reports `shots = 0`, `seed = 0`.
pub fn mitigated_pipeline_exact(
    obs: &PauliSum,
    psi: &StateVector,
    readout: &ReadoutNoise,
    fold: &FoldableNoise,
    zne: &ZneConfig,
) -> Result<MitigationReport> {
    fold.validate()?;
    zne.validate()?;
    readout.validate()?;
    let n = psi.n_qubits();
    let dim = psi.dim();
    let response = readout.response_matrix(n)?;
    let terms: Vec<(PauliString, f64)> = obs.iter().map(|(p, c)| (p.clone(), c.re)).collect();
    let points = par::map(&zne.r_values, |&r| -> Result<FoldPoint> {
        let d = fold.damping(r as f64);
        let (mut raw, mut roem) = (0.0, 0.0);
        for (p, c) in &terms {
            if p.is_identity() {
                raw += c;
                roem += c;
                continue;
            }
            let rotated = psi.rotate_to_basis(&state::measurement_basis(p));
            let probs: Vec<f64> = rotated.probabilities().iter().map(|q| d * q + (1.0 - d) / dim as f64).collect();
            let noisy = readout.apply_to_distribution(&probs, n)?;
            let mask = p.support_mask();
            raw += c * state::parity_expectation(&noisy, mask);
            roem += c * state::parity_expectation(&mitigate_readout(&noisy, &response)?, mask);
        }
        Ok(FoldPoint { r, raw, roem, stderr: 0.0 })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let fit: Vec<(f64, f64)> = points.iter().map(|p| (p.r as f64, p.roem)).collect();
    let zne_value = zne_extrapolate(&fit, zne.degree)?;
    let first = points.iter().min_by_key(|p| p.r).expect("validated nonempty");
    Ok(MitigationReport {
        raw: first.raw,
        roem_only: first.roem,
        roem_plus_zne: zne_value,
        points,
        fit_degree: zne.degree,
        shots: 0,
        seed: 0,
    })
}

/// CSV `r,raw,roem,shots,seed` followed by a `zne_value,fit_degree` summary.
pub fn write_mitigation_csv<W: Write>(report: &MitigationReport, mut out: W) -> Result<()> {
    writeln!(out, "r,raw,roem,shots,seed")?;
    for p in &report.points {
        writeln!(out, "{},{:.10},{:.10},{},{}", p.r, p.raw, p.roem, report.shots, report.seed)?;
    }
    writeln!(out, "zne_value,fit_degree")?;
    writeln!(out, "{:.10},{}", report.roem_plus_zne, report.fit_degree)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{reduced_one_particle_block, BlockSign, NeutrinoParams};
    use crate::state::exact_expectation;
    use proptest::prelude::*;

    #[test]
    fn confusion_of_single_qubit() {
        let a = ReadoutNoise::uniform(1, 0.1, 0.1).response_matrix(1).unwrap();
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.1, 0.9]));
        let cal = calibration_matrix(&ReadoutNoise::noiseless(), 2, &SamplingPlan::new(1000, 1)).unwrap();
        assert_eq!(cal, DMatrix::identity(4, 4));
    }

    #[test]
    fn sampled_calibration_within_binomial_bounds() {
        let noise = ReadoutNoise::uniform(2, 0.02, 0.03);
        let exact = noise.response_matrix(2).unwrap();
        let sampled = calibration_matrix(&noise, 2, &SamplingPlan::new(8192, 4)).unwrap();
        for j in 0..4 {
            assert!((sampled.column(j).sum() - 1.0).abs() < 1e-12);
            for i in 0..4 {
                let p = exact[(i, j)];
                let sigma = (p * (1.0 - p) / 8192.0).sqrt().max(1e-4);
                assert!((sampled[(i, j)] - p).abs() < 4.0 * sigma, "({i},{j})");
            }
        }
    }

    #[test]
    fn nnls_simple_cases() {
        let a = DMatrix::identity(2, 2);
        assert_eq!(nnls(&a, &DVector::from_vec(vec![0.3, -0.2])), DVector::from_vec(vec![0.3, 0.0]));
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 3.0, 2.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn readout_mitigation_identity_and_consistency() {
        let raw = vec![0.5, 0.2, 0.2, 0.1];
        let out = mitigate_readout(&raw, &DMatrix::identity(4, 4)).unwrap();
        assert!(out.iter().zip(&raw).all(|(a, b)| (a - b).abs() < 1e-14));
        let a = ReadoutNoise::uniform(2, 0.02, 0.03).response_matrix(2).unwrap();
        let truth = DVector::from_vec(vec![0.1, 0.6, 0.0, 0.3]);
        let noisy = &a * &truth;
        let rec = mitigate_readout(noisy.as_slice(), &a).unwrap();
        assert!(rec.iter().zip(truth.iter()).all(|(x, y)| (x - y).abs() < 1e-8));
        for j in 0..4 {
            let col: Vec<f64> = a.column(j).iter().copied().collect();
            let m = mitigate_readout(&col, &a).unwrap();
            assert!(m.iter().enumerate().all(|(i, v)| (v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-8));
        }
    }

    #[test]
    fn singular_calibration_is_regularized() {
        let a = DMatrix::from_element(2, 2, 0.5);
        let out = mitigate_readout(&[0.5, 0.5], &a).unwrap();
        assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn readout_mitigation_reduces_total_variation() {
        let noise = ReadoutNoise::uniform(2, 0.02, 0.03);
        let a = noise.response_matrix(2).unwrap();
        let psi = StateVector::from_real(&[0.7, 0.1, 0.5, 0.5]).unwrap();
        let truth = psi.probabilities();
        let plan = SamplingPlan::new(8192, 0).with_readout(noise);
        let better = (0..100)
            .filter(|&seed| {
                let counts = state::sample_count_vector(&psi, &plan.with_seed(seed)).unwrap();
                let raw = state::counts_to_distribution(&counts);
                let m = mitigate_readout(&raw, &a).unwrap();
                let tv = |d: &[f64]| d.iter().zip(&truth).map(|(x, y)| (x - y).abs()).sum::<f64>() / 2.0;
                tv(&m) < tv(&raw)
            })
            .count();
        assert!(better >= 95, "{better}/100");
    }

    #[test]
    fn zne_basics() {
        let rs = [1.0, 3.0, 5.0, 7.0, 9.0];
        let cubic: Vec<(f64, f64)> = rs.iter().map(|&r| (r, 0.7 - 0.1 * r + 0.02 * r * r - 0.001 * r * r * r)).collect();
        assert!((zne_extrapolate(&cubic, 3).unwrap() - 0.7).abs() < 1e-12);
        let flat: Vec<(f64, f64)> = rs.iter().map(|&r| (r, -2.5)).collect();
        assert!((zne_extrapolate(&flat, 2).unwrap() + 2.5).abs() < 1e-13);
        let e = -3.2;
        let damped: Vec<(f64, f64)> = rs.iter().map(|&r| (r, e * 0.98f64.powf(3.0 * r))).collect();
        assert!(((zne_extrapolate(&damped, 3).unwrap() - e) / e).abs() < 0.02);
        assert!(zne_extrapolate(&flat, 5).is_err());
    }

    #[test]
    fn damping_model() {
        let fold = FoldableNoise::new(0.02, 3.0);
        assert!((fold.damping(2.0) - fold.damping(1.0).powi(2)).abs() < 1e-15);
        let obs = PauliSum::from_labels(&[("Z", 1.0)]).unwrap();
        let psi = StateVector::basis("0").unwrap();
        assert_eq!(noisy_expectation(&obs, &psi, &FoldableNoise::none(), 5, &SamplingPlan::new(100, 1)).unwrap(), 1.0);
        let v = noisy_expectation(&obs, &psi, &fold, 3, &SamplingPlan::new(8192, 2)).unwrap();
        let want = fold.damping(3.0);
        let sigma = ((1.0 - want * want) / 8192.0).sqrt();
        assert!((v - want).abs() < 3.0 * sigma);
    }

    #[test]
    fn noiseless_pipeline_stages_agree() {
        let h = reduced_one_particle_block(&NeutrinoParams::new(4, 0.2), BlockSign::Minus).unwrap();
        let psi = StateVector::basis("10").unwrap();
        let report = mitigated_pipeline(&h, &psi, &ReadoutNoise::noiseless(), &FoldableNoise::none(), &ZneConfig::for_qubits(2), &SamplingPlan::new(8192, 3)).unwrap();
        let exact = exact_expectation(&h, &psi).unwrap();
        let se = report.points[0].stderr;
        assert!((report.raw - report.roem_only).abs() < 1e-12);
        assert!((report.raw - exact).abs() < 4.0 * se);
        assert!((report.roem_plus_zne - exact).abs() < 0.05);
        let mut buf = Vec::new();
        write_mitigation_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rs: Vec<&str> = text.lines().skip(1).take(5).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(rs, ["1", "3", "5", "7", "9"]);
        assert!(text.contains("zne_value,fit_degree\n"));
    }

    #[test]
    fn readout_only_noise_is_recovered() {
        let h = reduced_one_particle_block(&NeutrinoParams::new(4, 0.2), BlockSign::Minus).unwrap();
        let psi = StateVector::from_real(&[0.2, 0.3, 0.9, -0.1]).unwrap();
        let exact = exact_expectation(&h, &psi).unwrap();
        let report = mitigated_pipeline(&h, &psi, &ReadoutNoise::symmetric(0.02, 0.03), &FoldableNoise::none(), &ZneConfig::for_qubits(2), &SamplingPlan::new(8192, 8)).unwrap();
        let se = report.points[0].stderr;
        assert!((report.roem_only - exact).abs() < 3.0 * se, "{} vs {exact} ({se})", report.roem_only);
    }

    #[test]
    fn exact_pipeline_without_noise_is_flat() {
        let h = reduced_one_particle_block(&NeutrinoParams::new(4, 0.2), BlockSign::Minus).unwrap();
        let psi = StateVector::from_real(&[0.2, 0.3, 0.9, -0.1]).unwrap();
        let exact = exact_expectation(&h, &psi).unwrap();
        let r = mitigated_pipeline_exact(&h, &psi, &ReadoutNoise::noiseless(), &FoldableNoise::none(), &ZneConfig::for_qubits(2)).unwrap();
        for v in [r.raw, r.roem_only, r.roem_plus_zne] {
            assert!((v - exact).abs() < 1e-9, "{v} vs {exact}");
        }
    }

    #[test]
    fn exact_pipeline_recovers_readout_and_fold() {
        let h = reduced_one_particle_block(&NeutrinoParams::new(4, 0.2), BlockSign::Minus).unwrap();
        let psi = StateVector::from_real(&[0.2, 0.3, 0.9, -0.1]).unwrap();
        let exact = exact_expectation(&h, &psi).unwrap();
        let r = mitigated_pipeline_exact(&h, &psi, &ReadoutNoise::symmetric(0.02, 0.03), &FoldableNoise::new(0.02, 3.0), &ZneConfig::for_qubits(2)).unwrap();
        assert!((r.roem_plus_zne - exact).abs() < 0.01 * (r.raw - exact).abs(), "{r:?} vs {exact}");
    }

    proptest! {
        #[test]
        fn mitigated_output_is_distribution(raw in proptest::collection::vec(0.0f64..1.0, 4), p in 0.0f64..0.2) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-3);
            let a = ReadoutNoise::uniform(2, p, p / 2.0).response_matrix(2).unwrap();
            let out = mitigate_readout(&raw, &a).unwrap();
            prop_assert!(out.iter().all(|&v| v >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn zne_is_linear(vals in proptest::collection::vec(-5.0f64..5.0, 5), c in -3.0f64..3.0, degree in 0usize..5) {
            let pts: Vec<(f64, f64)> = [1.0, 3.0, 5.0, 7.0, 9.0].iter().zip(&vals).map(|(&r, &v)| (r, v)).collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(r, v)| (r, c * v)).collect();
            let a = zne_extrapolate(&pts, degree).unwrap();
            let b = zne_extrapolate(&scaled, degree).unwrap();
            prop_assert!((b - c * a).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
}
