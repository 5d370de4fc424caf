//! Exact diagonalization and exact dynamics; the reference for every other module.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonians::{mass_hamiltonian, NeutrinoParams};
use crate::par;
use crate::pauli::DenseOperator;
use crate::state::StateVector;

pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Eigenvalues ascending with matching orthonormal eigenvector columns.
pub fn eigh(h: &DenseOperator) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    let err = h.hermiticity_error();
    if err > HERMITIAN_TOLERANCE {
        return Err(Error::InvalidParameter(format!("matrix is not Hermitian (error {err:.3e})")));
    }
    let sym = (h.matrix() + h.matrix().adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..h.dim()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(h.dim(), h.dim(), |r, c| eig.eigenvectors[(r, order[c])]);
    Ok((values, vectors))
}

/// Real symmetric variant used by the linear solves.
pub fn eigh_real(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn eigenvalues(h: &DenseOperator) -> Result<Vec<f64>> {
    Ok(eigh(h)?.0)
}

/// `f(h)` for a Hermitian `h` and complex scalar function `f` of the eigenvalues.
pub fn hermitian_function(h: &DenseOperator, f: impl Fn(f64) -> Complex64) -> Result<DenseOperator> {
    let (vals, vecs) = eigh(h)?;
    let diag = DMatrix::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&l| f(l))));
    DenseOperator::from_matrix(&vecs * diag * vecs.adjoint())
}

/// `exp(-i t h)`.
pub fn unitary(h: &DenseOperator, t: f64) -> Result<DenseOperator> {
    hermitian_function(h, |l| Complex64::from_polar(1.0, -l * t))
}

/// `V exp(-i Lambda t) V^dagger psi`.
pub fn exact_evolution(h: &DenseOperator, t: f64, psi: &StateVector) -> Result<StateVector> {
    if h.dim() != psi.dim() {
        return Err(Error::DimensionMismatch { expected: psi.dim(), found: h.dim() });
    }
    let (vals, vecs) = eigh(h)?;
    let mut coeffs = vecs.adjoint() * psi.amplitudes();
    for (c, l) in coeffs.iter_mut().zip(&vals) {
        *c *= Complex64::from_polar(1.0, -l * t);
    }
    StateVector::normalized(&vecs * coeffs)
}

/// Normalized `exp(-tau h) psi` and `<psi|exp(-2 tau h)|psi>`.
pub fn imaginary_time_step(h: &DenseOperator, tau: f64, psi: &StateVector) -> Result<(StateVector, f64)> {
    let (vals, vecs) = eigh(h)?;
    let shift = vals[0];
    let mut coeffs = vecs.adjoint() * psi.amplitudes();
    let mut weight = 0.0;
    for (c, l) in coeffs.iter_mut().zip(&vals) {
        *c *= Complex64::new((-tau * (l - shift)).exp(), 0.0);
        weight += c.norm_sqr();
    }
    let out = StateVector::normalized(&vecs * coeffs)?;
    // undo the shift used for overflow safety
    let moment = weight * (-2.0 * tau * shift).exp();
    Ok((out, moment))
}

/// `|<final| exp(-i h t) |initial>|^2`.
pub fn transition_probability_exact(h: &DenseOperator, initial: &StateVector, target: &StateVector, t: f64) -> Result<f64> {
    let evolved = exact_evolution(h, t, initial)?;
    Ok(target.inner(&evolved).norm_sqr().clamp(0.0, 1.0))
}

/// One row of the mass-Hamiltonian spectrum scan.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumRow {
    pub mu: f64,
    pub energies: Vec<f64>,
}

/// Ascending eigenvalues of the mass Hamiltonian at each `mu`.
pub fn full_spectrum_scan(params: &NeutrinoParams, mu_values: &[f64]) -> Result<Vec<SpectrumRow>> {
    par::map(mu_values, |&mu| {
        let p = NeutrinoParams { mu, ..params.clone() };
        let h = mass_hamiltonian(&p)?.to_dense();
        Ok(SpectrumRow { mu, energies: eigenvalues(&h)? })
    })
    .into_iter()
    .collect()
}

/// CSV with columns `mu, e0, e1, ...`.
pub fn write_spectrum_csv<W: Write>(rows: &[SpectrumRow], mut out: W) -> Result<()> {
    let width = rows.first().map_or(0, |r| r.energies.len());
    let mut header = vec!["mu".to_string()];
    header.extend((0..width).map(|i| format!("e{i}")));
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let mut fields = vec![format!("{:.6}", r.mu)];
        fields.extend(r.energies.iter().map(|e| format!("{e:.10}")));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}
