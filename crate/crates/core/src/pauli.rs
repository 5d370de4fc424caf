//! Pauli-string algebra, dense realization and Pauli-basis decomposition.
//!
//! Basis convention: qubit 0 is the leftmost tensor factor, i.e. the most
//! significant bit of a computational-basis index. The ket `|q0 q1 .. >`
//! therefore has index `q0 * 2^(n-1) + q1 * 2^(n-2) + ..`.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Coefficients below this magnitude are dropped from a [`PauliSum`].
pub const PRUNE_THRESHOLD: f64 = 1e-12;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I_UNIT: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];

    /// Single-qubit product `self * other = phase * result`.
    pub fn product(self, other: Pauli) -> (Complex64, Pauli) {
        use Pauli::*;
        match (self, other) {
            (I, p) | (p, I) => (ONE, p),
            (a, b) if a == b => (ONE, I),
            (X, Y) => (I_UNIT, Z),
            (Y, X) => (-I_UNIT, Z),
            (Y, Z) => (I_UNIT, X),
            (Z, Y) => (-I_UNIT, X),
            (Z, X) => (I_UNIT, Y),
            (X, Z) => (-I_UNIT, Y),
            _ => unreachable!(),
        }
    }

    /// True if the operator flips the computational basis bit.
    pub fn flips(self) -> bool {
        matches!(self, Pauli::X | Pauli::Y)
    }

    /// Phase picked up when acting on basis bit `bit` (before the flip).
    fn phase_on(self, bit: bool) -> Complex64 {
        match (self, bit) {
            (Pauli::I, _) | (Pauli::X, _) => ONE,
            (Pauli::Y, false) => I_UNIT,
            (Pauli::Y, true) => -I_UNIT,
            (Pauli::Z, false) => ONE,
            (Pauli::Z, true) => -ONE,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'I' => Ok(Pauli::I),
            'X' => Ok(Pauli::X),
            'Y' => Ok(Pauli::Y),
            'Z' => Ok(Pauli::Z),
            other => Err(Error::Parse(format!("unknown Pauli axis '{other}'"))),
        }
    }
}

/// Tensor product of single-qubit Paulis, one axis per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PauliString {
    axes: Vec<Pauli>,
}

impl PauliString {
    pub fn new(axes: Vec<Pauli>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParameter("a Pauli string needs at least one qubit".into()));
        }
        Ok(Self { axes })
    }

    pub fn identity(n_qubits: usize) -> Self {
        Self { axes: vec![Pauli::I; n_qubits] }
    }

    /// `axis` on qubit `qubit`, identity elsewhere.
    pub fn single(n_qubits: usize, qubit: usize, axis: Pauli) -> Self {
        let mut axes = vec![Pauli::I; n_qubits];
        axes[qubit] = axis;
        Self { axes }
    }

    /// `axis` on both `a` and `b` (or `axis^2 = I` when `a == b`).
    pub fn pair(n_qubits: usize, a: usize, b: usize, axis: Pauli) -> Self {
        let mut axes = vec![Pauli::I; n_qubits];
        if a != b {
            axes[a] = axis;
            axes[b] = axis;
        }
        Self { axes }
    }

    /// Every string on `n_qubits` qubits in lexicographic I<X<Y<Z order.
    pub fn all(n_qubits: usize) -> Vec<PauliString> {
        (0..4usize.pow(n_qubits as u32))
            .map(|mut code| {
                let mut axes = vec![Pauli::I; n_qubits];
                for q in (0..n_qubits).rev() {
                    axes[q] = Pauli::ALL[code % 4];
                    code /= 4;
                }
                Self { axes }
            })
            .collect()
    }

    pub fn n_qubits(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Pauli] {
        &self.axes
    }

    pub fn is_identity(&self) -> bool {
        self.axes.iter().all(|&p| p == Pauli::I)
    }

    /// Number of non-identity factors.
    pub fn weight(&self) -> usize {
        self.axes.iter().filter(|&&p| p != Pauli::I).count()
    }

    pub fn count(&self, axis: Pauli) -> usize {
        self.axes.iter().filter(|&&p| p == axis).count()
    }

    /// Bit mask (in basis-index convention) of the qubits that get flipped.
    pub fn flip_mask(&self) -> usize {
        let n = self.n_qubits();
        self.axes
            .iter()
            .enumerate()
            .filter(|(_, p)| p.flips())
            .fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
    }

    /// Bit mask of the qubits carrying a non-identity factor.
    pub fn support_mask(&self) -> usize {
        let n = self.n_qubits();
        self.axes
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != Pauli::I)
            .fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
    }

    /// `sigma |index> = phase |target>`.
    pub fn apply_to_basis(&self, index: usize) -> (Complex64, usize) {
        let n = self.n_qubits();
        let mut phase = ONE;
        for (q, &p) in self.axes.iter().enumerate() {
            let bit = (index >> (n - 1 - q)) & 1 == 1;
            phase *= p.phase_on(bit);
        }
        (phase, index ^ self.flip_mask())
    }

    /// `self * other = phase * result`.
    pub fn multiply(&self, other: &PauliString) -> Result<(Complex64, PauliString)> {
        if self.n_qubits() != other.n_qubits() {
            return Err(Error::QubitMismatch(self.n_qubits(), other.n_qubits()));
        }
        let mut phase = ONE;
        let axes = self
            .axes
            .iter()
            .zip(&other.axes)
            .map(|(&a, &b)| {
                let (ph, p) = a.product(b);
                phase *= ph;
                p
            })
            .collect();
        Ok((phase, PauliString { axes }))
    }

    /// Two Pauli strings commute iff they anticommute on an even number of qubits.
    pub fn commutes_with(&self, other: &PauliString) -> bool {
        self.axes
            .iter()
            .zip(&other.axes)
            .filter(|(&a, &b)| a != Pauli::I && b != Pauli::I && a != b)
            .count()
            % 2
            == 0
    }

    pub fn to_matrix(&self) -> DenseOperator {
        let dim = 1usize << self.n_qubits();
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for col in 0..dim {
            let (phase, row) = self.apply_to_basis(col);
            m[(row, col)] = phase;
        }
        DenseOperator::from_matrix(m).expect("square by construction")
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.axes {
            write!(f, "{}", p.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for PauliString {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let axes = s.trim().chars().map(Pauli::from_char).collect::<Result<Vec<_>>>()?;
        PauliString::new(axes)
    }
}

/// Weighted sum of Pauli strings over a fixed number of qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliSum {
    n_qubits: usize,
    terms: BTreeMap<PauliString, Complex64>,
}

impl PauliSum {
    pub fn zero(n_qubits: usize) -> Self {
        Self { n_qubits, terms: BTreeMap::new() }
    }

    pub fn identity(n_qubits: usize, coefficient: f64) -> Self {
        let mut s = Self::zero(n_qubits);
        s.add_term(PauliString::identity(n_qubits), Complex64::new(coefficient, 0.0));
        s
    }

    pub fn from_terms<I>(n_qubits: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (PauliString, Complex64)>,
    {
        let mut s = Self::zero(n_qubits);
        for (p, c) in terms {
            if p.n_qubits() != n_qubits {
                return Err(Error::QubitMismatch(n_qubits, p.n_qubits()));
            }
            s.add_term(p, c);
        }
        Ok(s)
    }

    /// Convenience constructor from `("XZI", 0.5)` style real terms.
    pub fn from_labels(terms: &[(&str, f64)]) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty term list".into()))?;
        let n = first.0.len();
        Self::from_terms(
            n,
            terms
                .iter()
                .map(|(l, c)| Ok((l.parse::<PauliString>()?, Complex64::new(*c, 0.0))))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PauliString, &Complex64)> {
        self.terms.iter()
    }

    pub fn coefficient(&self, p: &PauliString) -> Complex64 {
        self.terms.get(p).copied().unwrap_or(ZERO)
    }

    /// Coefficient by label, zero when absent or unparsable.
    pub fn coefficient_of(&self, label: &str) -> Complex64 {
        label.parse::<PauliString>().map(|p| self.coefficient(&p)).unwrap_or(ZERO)
    }

    /// Real coefficient of the all-identity string.
    pub fn identity_coefficient(&self) -> f64 {
        self.coefficient(&PauliString::identity(self.n_qubits)).re
    }

    /// Adds `c * p`, dropping the term if the result falls below the prune threshold.
    pub fn add_term(&mut self, p: PauliString, c: Complex64) {
        debug_assert_eq!(p.n_qubits(), self.n_qubits);
        let total = self.terms.get(&p).copied().unwrap_or(ZERO) + c;
        if total.norm() < PRUNE_THRESHOLD {
            self.terms.remove(&p);
        } else {
            self.terms.insert(p, total);
        }
    }

    pub fn scaled(&self, c: Complex64) -> Self {
        let mut out = Self::zero(self.n_qubits);
        for (p, v) in &self.terms {
            out.add_term(p.clone(), v * c);
        }
        out
    }

    pub fn scaled_real(&self, c: f64) -> Self {
        self.scaled(Complex64::new(c, 0.0))
    }

    /// Operator product `self * other`.
    pub fn product(&self, other: &PauliSum) -> Result<Self> {
        if self.n_qubits != other.n_qubits {
            return Err(Error::QubitMismatch(self.n_qubits, other.n_qubits));
        }
        let mut out = Self::zero(self.n_qubits);
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                let (phase, p) = a.multiply(b)?;
                out.add_term(p, phase * ca * cb);
            }
        }
        Ok(out)
    }

    pub fn commutator(&self, other: &PauliSum) -> Result<Self> {
        Ok(&self.product(other)? - &other.product(self)?)
    }

    /// `(self - alpha I)^2`; interior eigenvalues nearest `alpha` become the lowest.
    pub fn spectral_fold(&self, alpha: f64) -> Self {
        let shifted = self - &PauliSum::identity(self.n_qubits, alpha);
        shifted.product(&shifted).expect("same qubit count")
    }

    /// Largest imaginary part over all coefficients.
    pub fn max_imaginary(&self) -> f64 {
        self.terms.values().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.max_imaginary() < tol
    }

    /// Sum of absolute coefficients; an upper bound on the operator norm.
    pub fn one_norm(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// True if every pair of terms commutes.
    pub fn terms_commute(&self) -> bool {
        let keys: Vec<_> = self.terms.keys().collect();
        keys.iter()
            .enumerate()
            .all(|(i, a)| keys[i + 1..].iter().all(|b| a.commutes_with(b)))
    }

    /// Dense realization (`reconstruct`).
    pub fn to_dense(&self) -> DenseOperator {
        let dim = 1usize << self.n_qubits;
        let mut m = DMatrix::from_element(dim, dim, ZERO);
        for (p, c) in &self.terms {
            for col in 0..dim {
                let (phase, row) = p.apply_to_basis(col);
                m[(row, col)] += phase * c;
            }
        }
        DenseOperator::from_matrix(m).expect("square by construction")
    }

    /// Pauli coefficients `c_I = Tr[M sigma_I] / 2^n` of a dense operator.
    pub fn decompose(m: &DenseOperator, n_qubits: usize) -> Result<Self> {
        let dim = m.dim();
        if !dim.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(dim));
        }
        if dim != 1 << n_qubits {
            return Err(Error::DimensionMismatch { expected: 1 << n_qubits, found: dim });
        }
        let scale = 1.0 / dim as f64;
        let mut out = Self::zero(n_qubits);
        for p in PauliString::all(n_qubits) {
            // (M sigma)_{jj} = M_{j, k} sigma_{k j} with sigma|j> = phase |k>
            let trace: Complex64 = (0..dim)
                .map(|j| {
                    let (phase, k) = p.apply_to_basis(j);
                    m.matrix()[(j, k)] * phase
                })
                .sum();
            out.add_term(p, trace * scale);
        }
        Ok(out)
    }

    /// Drops imaginary parts; callers use this after checking Hermiticity.
    pub fn real_part(&self) -> Self {
        let mut out = Self::zero(self.n_qubits);
        for (p, c) in &self.terms {
            out.add_term(p.clone(), Complex64::new(c.re, 0.0));
        }
        out
    }
}

impl fmt::Display for PauliSum {
    /// One term per line: `+0.50000 XZI`. Complex coefficients print as `+a+bi`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (p, c) in &self.terms {
            if c.im.abs() < PRUNE_THRESHOLD {
                writeln!(f, "{:+.5} {}", c.re, p)?;
            } else {
                writeln!(f, "{:+.5}{:+.5}i {}", c.re, c.im, p)?;
            }
        }
        Ok(())
    }
}

impl FromStr for PauliSum {
    type Err = Error;

    /// Parses the line format produced by `Display` (real coefficients only).
    fn from_str(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (coef, label) = line
                .split_once(' ')
                .ok_or_else(|| Error::Parse(format!("expected `coefficient label`: {line}")))?;
            let c: f64 = coef
                .parse()
                .map_err(|_| Error::Parse(format!("bad coefficient `{coef}`")))?;
            terms.push((label.trim().parse::<PauliString>()?, Complex64::new(c, 0.0)));
        }
        let n = terms
            .first()
            .map(|(p, _)| p.n_qubits())
            .ok_or_else(|| Error::Parse("no terms".into()))?;
        Self::from_terms(n, terms)
    }
}

impl Add for &PauliSum {
    type Output = PauliSum;

    fn add(self, rhs: &PauliSum) -> PauliSum {
        assert_eq!(self.n_qubits, rhs.n_qubits, "qubit count mismatch");
        let mut out = self.clone();
        for (p, c) in &rhs.terms {
            out.add_term(p.clone(), *c);
        }
        out
    }
}

impl Add for PauliSum {
    type Output = PauliSum;

    fn add(self, rhs: PauliSum) -> PauliSum {
        &self + &rhs
    }
}

impl Sub for &PauliSum {
    type Output = PauliSum;

    fn sub(self, rhs: &PauliSum) -> PauliSum {
        self + &(-rhs)
    }
}

impl Sub for PauliSum {
    type Output = PauliSum;

    fn sub(self, rhs: PauliSum) -> PauliSum {
        &self - &rhs
    }
}

impl Neg for &PauliSum {
    type Output = PauliSum;

    fn neg(self) -> PauliSum {
        self.scaled_real(-1.0)
    }
}

impl Neg for PauliSum {
    type Output = PauliSum;

    fn neg(self) -> PauliSum {
        -&self
    }
}

impl Mul<f64> for &PauliSum {
    type Output = PauliSum;

    fn mul(self, rhs: f64) -> PauliSum {
        self.scaled_real(rhs)
    }
}

impl Mul<f64> for PauliSum {
    type Output = PauliSum;

    fn mul(self, rhs: f64) -> PauliSum {
        self.scaled_real(rhs)
    }
}

/// Explicit complex square matrix; used for blocks and the exact oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    m: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        Ok(Self { m })
    }

    pub fn from_real(rows: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * rows {
            return Err(Error::DimensionMismatch { expected: rows * rows, found: data.len() });
        }
        Self::from_matrix(DMatrix::from_row_iterator(
            rows,
            rows,
            data.iter().map(|&x| Complex64::new(x, 0.0)),
        ))
    }

    pub fn identity(dim: usize) -> Self {
        Self { m: DMatrix::identity(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.m
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.m[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self { m: self.m.adjoint() }
    }

    /// `max |M - M^dagger|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        (&self.m - self.m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() < tol
    }

    /// `max |U^dagger U - I|` over entries.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.m.adjoint() * &self.m;
        (p - DMatrix::<Complex64>::identity(self.dim(), self.dim()))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        (&self.m - &other.m).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn matmul(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { m: &self.m * &other.m }
    }

    pub fn commutator(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { m: &self.m * &other.m - &other.m * &self.m }
    }

    pub fn scale(&self, c: f64) -> DenseOperator {
        DenseOperator { m: &self.m * Complex64::new(c, 0.0) }
    }

    pub fn plus(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { m: &self.m + &other.m }
    }

    pub fn kron(&self, other: &DenseOperator) -> DenseOperator {
        DenseOperator { m: self.m.kronecker(&other.m) }
    }

    /// Restriction to the rows/columns listed in `indices` (in that order).
    pub fn submatrix(&self, indices: &[usize]) -> DenseOperator {
        let k = indices.len();
        DenseOperator { m: DMatrix::from_fn(k, k, |i, j| self.m[(indices[i], indices[j])]) }
    }

    pub fn diagonal_real(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps(s: &str) -> PauliString {
        s.parse().unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn single_x_matrix() {
        let m = ps("X").to_matrix();
        let want = DenseOperator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(m, want);
    }

    #[test]
    fn identity_string_is_identity_matrix() {
        assert_eq!(ps("II").to_matrix(), DenseOperator::identity(4));
    }

    #[test]
    fn z_kron_x_has_signed_blocks() {
        let m = ps("ZX").to_matrix();
        let want = DenseOperator::from_real(
            4,
            &[
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, -1.0, //
                0.0, 0.0, -1.0, 0.0,
            ],
        )
        .unwrap();
        assert_eq!(m, want);
    }

    #[test]
    fn y_matrix_phases() {
        let m = ps("Y").to_matrix();
        assert_eq!(m.get(0, 1), Complex64::new(0.0, -1.0));
        assert_eq!(m.get(1, 0), Complex64::new(0.0, 1.0));
    }

    #[test]
    fn products_of_single_paulis() {
        assert_eq!(ps("X").multiply(&ps("X")).unwrap(), (c(1.0), ps("I")));
        assert_eq!(ps("X").multiply(&ps("Y")).unwrap(), (I_UNIT, ps("Z")));
        assert_eq!(ps("Y").multiply(&ps("X")).unwrap(), (-I_UNIT, ps("Z")));
    }

    #[test]
    fn factorwise_product_matches_dense() {
        let a = ps("XZ");
        let b = ps("YI");
        let (phase, r) = a.multiply(&b).unwrap();
        let dense = a.to_matrix().matmul(&b.to_matrix());
        let via = r.to_matrix().scale(1.0).matrix() * phase;
        assert!((dense.matrix() - via).iter().all(|z| z.norm() < 1e-15));
        assert_eq!(r, ps("ZZ"));
        assert_eq!(phase, I_UNIT);
    }

    #[test]
    fn mismatched_product_errors() {
        assert!(matches!(ps("X").multiply(&ps("XX")), Err(Error::QubitMismatch(1, 2))));
    }

    #[test]
    fn decompose_identity() {
        let s = PauliSum::decompose(&DenseOperator::identity(2), 1).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.coefficient(&ps("I")), c(1.0));
    }

    #[test]
    fn decompose_rejects_non_power_of_two() {
        let m = DenseOperator::identity(3);
        assert!(matches!(PauliSum::decompose(&m, 2), Err(Error::NotPowerOfTwo(3))));
    }

    #[test]
    fn reconstruct_single_z() {
        let s = PauliSum::from_labels(&[("Z", -0.5)]).unwrap();
        let d = s.to_dense();
        assert_eq!(d.diagonal_real(), vec![-0.5, 0.5]);
        assert_eq!(d.get(0, 1), ZERO);
    }

    #[test]
    fn reconstruct_identity_term() {
        assert_eq!(PauliSum::identity(1, 1.0).to_dense(), DenseOperator::identity(2));
    }

    #[test]
    fn cancelling_terms_are_pruned() {
        let mut s = PauliSum::from_labels(&[("XZ", 1.0), ("ZZ", 2.0)]).unwrap();
        s.add_term(ps("XZ"), c(-1.0));
        assert_eq!(s.len(), 1);
        assert_eq!(s.coefficient(&ps("XZ")), ZERO);
    }

    #[test]
    fn spectral_fold_of_z_about_zero_is_identity() {
        let z = PauliSum::from_labels(&[("Z", 1.0)]).unwrap();
        assert_eq!(z.spectral_fold(0.0), PauliSum::identity(1, 1.0));
    }

    #[test]
    fn text_format_round_trips() {
        let s = PauliSum::from_labels(&[("IXYZ", -0.25), ("ZZII", 1.5)]).unwrap();
        let text = s.to_string();
        assert_eq!(text, "-0.25000 IXYZ\n+1.50000 ZZII\n");
        assert_eq!(text.parse::<PauliSum>().unwrap(), s);
    }

    #[test]
    fn orthogonality_of_strings() {
        let all = PauliString::all(2);
        for a in &all {
            for b in &all {
                let tr: Complex64 = a.to_matrix().matmul(&b.to_matrix()).matrix().diagonal().iter().sum();
                let want = if a == b { 4.0 } else { 0.0 };
                assert!((tr - c(want)).norm() < 1e-14, "{a} {b}");
            }
        }
    }

    fn arb_string(n: usize) -> impl Strategy<Value = PauliString> {
        proptest::collection::vec(0usize..4, n)
            .prop_map(|v| PauliString::new(v.into_iter().map(|i| Pauli::ALL[i]).collect()).unwrap())
    }

    fn arb_pair() -> impl Strategy<Value = (PauliString, PauliString)> {
        (1usize..=4).prop_flat_map(|n| (arb_string(n), arb_string(n)))
    }

    proptest! {
        #[test]
        fn product_matches_dense_product((a, b) in arb_pair()) {
            let (phase, r) = a.multiply(&b).unwrap();
            prop_assert!(phase == c(1.0) || phase == c(-1.0) || phase == I_UNIT || phase == -I_UNIT);
            let dense = a.to_matrix().matmul(&b.to_matrix());
            let via = r.to_matrix().matrix() * phase;
            prop_assert!((dense.matrix() - via).iter().all(|z| z.norm() < 1e-14));
            prop_assert_eq!(a.commutes_with(&b), dense.max_abs_diff(&b.to_matrix().matmul(&a.to_matrix())) < 1e-14);
        }

        #[test]
        fn decompose_reconstruct_round_trip(seed in proptest::collection::vec(-1.0f64..1.0, 128)) {
            let m = DMatrix::from_fn(8, 8, |i, j| Complex64::new(seed[i * 8 + j], seed[64 + i * 8 + j]));
            let herm = DenseOperator::from_matrix((&m + m.adjoint()) * Complex64::new(0.5, 0.0)).unwrap();
            let s = PauliSum::decompose(&herm, 3).unwrap();
            prop_assert!(s.is_hermitian(1e-12));
            prop_assert!(s.to_dense().max_abs_diff(&herm) < 1e-10);
            let again = PauliSum::decompose(&s.to_dense(), 3).unwrap();
            for (p, c) in s.iter() {
                prop_assert!((again.coefficient(p) - c).norm() < 1e-10);
            }
        }
    }
}
