//! Mass- and flavor-basis Hamiltonians, particle-number sectors and the
//! reduced 2- and 3-qubit block Hamiltonians.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle;
use crate::pauli::{DenseOperator, Pauli, PauliString, PauliSum};
use crate::state::StateVector;

/// Physical value of the frequency unit in MeV; documentation only.
pub const OMEGA0_MEV: f64 = 1.055e-16;

pub const DEFAULT_SIN2_2THETA: f64 = 0.1;

/// Mixing angle with the given `sin^2(2 theta)`.
pub fn theta_from_sin2_2theta(s: f64) -> f64 {
    0.5 * s.sqrt().asin()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeutrinoParams {
    pub n_neutrinos: usize,
    pub omega0: f64,
    pub mu: f64,
    pub theta: f64,
}

impl NeutrinoParams {
    pub fn new(n_neutrinos: usize, mu: f64) -> Self {
        Self {
            n_neutrinos,
            omega0: 1.0,
            mu,
            theta: theta_from_sin2_2theta(DEFAULT_SIN2_2THETA),
        }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_omega0(mut self, omega0: f64) -> Self {
        self.omega0 = omega0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_neutrinos == 0 {
            return Err(Error::InvalidParameter("need at least one neutrino".into()));
        }
        if !(self.omega0 > 0.0) || !self.omega0.is_finite() {
            return Err(Error::InvalidParameter(format!("omega0 must be positive, got {}", self.omega0)));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be nonnegative, got {}", self.mu)));
        }
        if !self.theta.is_finite() {
            return Err(Error::InvalidParameter("theta must be finite".into()));
        }
        Ok(())
    }

    /// `omega_p = p * omega0` for `p = 1..=N`; qubit `q` carries `p = q + 1`.
    pub fn omega(&self, qubit: usize) -> f64 {
        (qubit + 1) as f64 * self.omega0
    }

    pub fn sin2_2theta(&self) -> f64 {
        (2.0 * self.theta).sin().powi(2)
    }
}

/// `mu(r) = prefactor * (1 - sqrt(1 - R^2/r^2))^2`.
pub fn coupling_mu(r: f64, r_nu: f64, prefactor: f64) -> Result<f64> {
    if !(r_nu > 0.0) {
        return Err(Error::InvalidParameter("sphere radius must be positive".into()));
    }
    if r < r_nu {
        return Err(Error::InvalidParameter(format!("r = {r} lies inside the neutrino sphere (R = {r_nu})")));
    }
    let ratio = r_nu / r;
    Ok(prefactor * (1.0 - (1.0 - ratio * ratio).sqrt()).powi(2))
}

fn real(c: f64) -> Complex64 {
    Complex64::new(c, 0.0)
}

/// `(sum_p sigma^axis_p)^2 = N I + 2 sum_{p<q} sigma_p sigma_q`.
pub fn collective_square(n: usize, axis: Pauli) -> PauliSum {
    let mut s = PauliSum::identity(n, n as f64);
    for p in 0..n {
        for q in p + 1..n {
            s.add_term(PauliString::pair(n, p, q, axis), real(2.0));
        }
    }
    s
}

/// `(mu/4)(X^2 + Y^2 + Z^2)` with collective Pauli vectors.
pub fn coupling_term(n: usize, mu: f64) -> PauliSum {
    let mut s = PauliSum::zero(n);
    for axis in [Pauli::X, Pauli::Y, Pauli::Z] {
        s = &s + &collective_square(n, axis).scaled_real(mu / 4.0);
    }
    s
}

/// `H = -1/2 sum_p omega_p Z_p + (mu/4)(X^2 + Y^2 + Z^2)`.
pub fn mass_hamiltonian(params: &NeutrinoParams) -> Result<PauliSum> {
    params.validate()?;
    let n = params.n_neutrinos;
    let mut h = coupling_term(n, params.mu);
    for q in 0..n {
        h.add_term(PauliString::single(n, q, Pauli::Z), real(-0.5 * params.omega(q)));
    }
    Ok(h)
}

/// `H = -1/2 sum_p omega_p (cos2t Z_p - sin2t X_p) + (mu/4)(X^2 + Y^2 + Z^2)`.
pub fn flavor_hamiltonian(params: &NeutrinoParams) -> Result<PauliSum> {
    params.validate()?;
    let n = params.n_neutrinos;
    let (s2, c2) = (2.0 * params.theta).sin_cos();
    let mut h = coupling_term(n, params.mu);
    for q in 0..n {
        let w = params.omega(q);
        h.add_term(PauliString::single(n, q, Pauli::Z), real(-0.5 * w * c2));
        h.add_term(PauliString::single(n, q, Pauli::X), real(0.5 * w * s2));
    }
    Ok(h)
}

/// Particle-number operator `sum_p (I - Z_p)/2`.
pub fn number_operator(n: usize) -> PauliSum {
    let mut s = PauliSum::identity(n, n as f64 / 2.0);
    for q in 0..n {
        s.add_term(PauliString::single(n, q, Pauli::Z), real(-0.5));
    }
    s
}

/// Fixed-Hamming-weight subspace with basis labels in ascending order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSector {
    pub n_qubits: usize,
    pub particle_number: usize,
    pub basis_states: Vec<usize>,
}

impl BlockSector {
    pub fn new(n_qubits: usize, k: usize) -> Self {
        let basis_states = (0..1usize << n_qubits).filter(|i| i.count_ones() as usize == k).collect();
        Self { n_qubits, particle_number: k, basis_states }
    }

    pub fn dim(&self) -> usize {
        self.basis_states.len()
    }
}

pub fn block_sectors(n: usize) -> Vec<BlockSector> {
    (0..=n).map(|k| BlockSector::new(n, k)).collect()
}

/// Restricts `h` to `sector`; fails if `h` couples the sector to any other.
pub fn project_block(h: &DenseOperator, sector: &BlockSector) -> Result<DenseOperator> {
    let dim = 1usize << sector.n_qubits;
    if h.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: h.dim() });
    }
    let k = sector.particle_number;
    for &i in &sector.basis_states {
        for j in 0..dim {
            let kj = j.count_ones() as usize;
            if kj == k {
                continue;
            }
            let magnitude = h.get(i, j).norm().max(h.get(j, i).norm());
            if magnitude > 1e-9 {
                return Err(Error::CrossSector { from: k, to: kj, magnitude });
            }
        }
    }
    Ok(h.submatrix(&sector.basis_states))
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// `ceil(log2 C(N, k))`.
pub fn qubits_for_block(n: usize, k: usize) -> usize {
    let d = binomial(n, k);
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as usize
    }
}

/// Which of the two one-particle-like blocks: `Minus` is k = 1, `Plus` is k = N - 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockSign {
    Minus,
    Plus,
}

impl BlockSign {
    pub fn value(self) -> f64 {
        match self {
            BlockSign::Minus => -1.0,
            BlockSign::Plus => 1.0,
        }
    }
}

fn require_four(params: &NeutrinoParams) -> Result<()> {
    params.validate()?;
    if params.n_neutrinos != 4 {
        return Err(Error::InvalidParameter(format!(
            "reduced blocks are defined for N = 4, got N = {}",
            params.n_neutrinos
        )));
    }
    Ok(())
}

/// 2-qubit block `((6mu +- 5w)/2) I + mu(X0 + X1 + X0X1) + w(Z0 + Z1/2)`.
pub fn reduced_one_particle_block(params: &NeutrinoParams, sign: BlockSign) -> Result<PauliSum> {
    require_four(params)?;
    let (mu, w) = (params.mu, params.omega0);
    PauliSum::from_labels(&[
        ("II", (6.0 * mu + sign.value() * 5.0 * w) / 2.0),
        ("XI", mu),
        ("IX", mu),
        ("XX", mu),
        ("ZI", w),
        ("IZ", w / 2.0),
    ])
}

/// Basis states of the padded 3-qubit block that do not belong to the sector.
pub const PADDING_STATES: [usize; 2] = [0b110, 0b111];

/// Genuine (non-padding) basis states of the 3-qubit block.
pub const GENUINE_STATES: [usize; 6] = [0, 1, 2, 3, 4, 5];

/// 3-qubit block for the two-particle sector with the default padding `omega0`.
pub fn reduced_two_particle_block(params: &NeutrinoParams) -> Result<PauliSum> {
    reduced_two_particle_block_padded(params, params.omega0)
}

/// 3-qubit block whose six genuine basis states carry the k = 2 sector (in
/// ascending label order) and whose `|110>`, `|111>` carry `padding`.
pub fn reduced_two_particle_block_padded(params: &NeutrinoParams, padding: f64) -> Result<PauliSum> {
    require_four(params)?;
    let (mu, w) = (params.mu, params.omega0);
    let hopping = [
        "XXX", "ZXX", "YYX", "XXI", "XZI", "ZXI", "YYI", "IXX", "IZX", "XII", "IXI", "IIX",
    ];
    let mut h = PauliSum::identity(3, (w + 6.0 * mu) / 4.0);
    for label in hopping {
        h.add_term(label.parse()?, real(mu / 2.0));
    }
    let diagonal = [
        ("ZZI", (2.0 * w - mu) / 2.0),
        ("IZZ", w / 4.0),
        ("ZII", (mu + w) / 2.0),
        ("IZI", (2.0 * mu - w) / 4.0),
        ("IIZ", w / 4.0),
    ];
    for (label, c) in diagonal {
        h.add_term(label.parse()?, real(c));
    }
    // shift |11x> from omega0 to the requested padding: (I - Z0)(I - Z1)/4
    let shift = padding - w;
    if shift != 0.0 {
        for (label, c) in [("III", 1.0), ("ZII", -1.0), ("IZI", -1.0), ("ZZI", 1.0)] {
            h.add_term(label.parse()?, real(shift * c / 4.0));
        }
    }
    check_padding(&h, padding)?;
    Ok(h)
}

/// Rejects padding at or beyond the genuine spectrum's edges, where it would
/// become the ground (or top) state that QITE converges to.
fn check_padding(h: &PauliSum, padding: f64) -> Result<()> {
    let genuine = h.to_dense().submatrix(&GENUINE_STATES);
    let (evals, _) = oracle::eigh(&genuine)?;
    let (low, high) = (evals[0], evals[evals.len() - 1]);
    if padding <= low || padding >= high {
        return Err(Error::PaddingExtreme { padding, low, high });
    }
    Ok(())
}

/// Two independent eigenvectors of the 3-qubit block with eigenvalue `2 mu`:
/// `(|010> - |011>)/sqrt2` and `N[(2/mu)|010> - |000> - 2|001> + |101> + 2|100>]`.
pub fn degenerate_eigenvectors(mu: f64) -> Result<(StateVector, StateVector)> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "degenerate eigenvectors need mu > 0, got {mu}"
        )));
    }
    let mut v1 = [0.0; 8];
    v1[0b010] = 1.0;
    v1[0b011] = -1.0;
    let mut v2 = [0.0; 8];
    v2[0b010] = 2.0 / mu;
    v2[0b000] = -1.0;
    v2[0b001] = -2.0;
    v2[0b101] = 1.0;
    v2[0b100] = 2.0;
    Ok((StateVector::from_real(&v1)?, StateVector::from_real(&v2)?))
}

/// Squared norm of the unnormalized second vector, `10 + 4/mu^2`.
pub fn degenerate_norm_inverse_squared(mu: f64) -> f64 {
    10.0 + 4.0 / (mu * mu)
}

/// `(h - alpha I)^2` on a dense operator.
pub fn spectral_fold_dense(h: &DenseOperator, alpha: f64) -> DenseOperator {
    let shifted = h.plus(&DenseOperator::identity(h.dim()).scale(-alpha));
    shifted.matmul(&shifted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::eigh;
    use crate::state::exact_expectation;
    use approx::assert_abs_diff_eq;

    fn evals(h: &DenseOperator) -> Vec<f64> {
        eigh(h).unwrap().0
    }

    fn assert_spectra_eq(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn coupling_profile() {
        assert_eq!(coupling_mu(1.0, 1.0, 3.0).unwrap(), 3.0);
        let want = 2.0 * (1.0 - 3f64.sqrt() / 2.0).powi(2);
        assert_abs_diff_eq!(coupling_mu(2.0, 1.0, 2.0).unwrap(), want, epsilon = 1e-15);
        assert!(coupling_mu(1e8, 1.0, 1.0).unwrap() < 1e-30);
        assert!(coupling_mu(0.5, 1.0, 1.0).is_err());
        let rs: Vec<f64> = (0..20).map(|i| 1.0 + 0.3 * i as f64).collect();
        assert!(rs.windows(2).all(|w| coupling_mu(w[1], 1.0, 1.0).unwrap() < coupling_mu(w[0], 1.0, 1.0).unwrap()));
    }

    #[test]
    fn single_neutrino_mass_hamiltonian() {
        let h = mass_hamiltonian(&NeutrinoParams::new(1, 0.4)).unwrap();
        assert_eq!(h.len(), 2);
        assert_abs_diff_eq!(h.identity_coefficient(), 0.3, epsilon = 1e-15);
        assert_eq!(h.coefficient_of("Z"), real(-0.5));
        assert_spectra_eq(&evals(&h.to_dense()), &[0.3 - 0.5, 0.3 + 0.5], 1e-12);
    }

    #[test]
    fn all_zero_state_energies() {
        let psi = StateVector::basis("0000").unwrap();
        let h0 = mass_hamiltonian(&NeutrinoParams::new(4, 0.0)).unwrap();
        assert_abs_diff_eq!(exact_expectation(&h0, &psi).unwrap(), -5.0, epsilon = 1e-12);
        let h = mass_hamiltonian(&NeutrinoParams::new(4, 0.7)).unwrap();
        let hv = psi.apply_sum(&h);
        let want = -5.0 + 6.0 * 0.7;
        assert!((hv[0] - real(want)).norm() < 1e-12);
        assert!(hv.iter().skip(1).all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn flavor_reduces_to_mass_at_zero_angle() {
        let p = NeutrinoParams::new(3, 0.6).with_theta(0.0);
        assert_eq!(flavor_hamiltonian(&p).unwrap(), mass_hamiltonian(&p).unwrap());
        let single = NeutrinoParams::new(1, 0.0).with_theta(0.3);
        let h = flavor_hamiltonian(&single).unwrap();
        assert_spectra_eq(&evals(&h.to_dense()), &[-0.5, 0.5], 1e-12);
    }

    #[test]
    fn default_mixing() {
        assert_abs_diff_eq!(NeutrinoParams::new(3, 1.0).sin2_2theta(), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn number_operator_values() {
        let n = number_operator(4);
        assert_eq!(exact_expectation(&n, &StateVector::basis("0000").unwrap()).unwrap(), 0.0);
        let psi = StateVector::basis("1010").unwrap();
        let nv = psi.apply_sum(&n);
        assert!((nv[0b1010] - real(2.0)).norm() < 1e-15);
        for n_nu in 2..=4 {
            let h = mass_hamiltonian(&NeutrinoParams::new(n_nu, 0.8)).unwrap().to_dense();
            assert!(h.commutator(&number_operator(n_nu).to_dense()).max_abs() < 1e-12);
        }
    }

    #[test]
    fn sector_dims() {
        let dims = |n| block_sectors(n).iter().map(BlockSector::dim).collect::<Vec<_>>();
        assert_eq!(dims(4), vec![1, 4, 6, 4, 1]);
        assert_eq!(dims(2), vec![1, 2, 1]);
        assert_eq!(dims(3), vec![1, 3, 3, 1]);
        assert_eq!(BlockSector::new(4, 2).basis_states, vec![3, 5, 6, 9, 10, 12]);
    }

    #[test]
    fn qubit_counts() {
        assert_eq!(qubits_for_block(4, 2), 3);
        assert_eq!(qubits_for_block(4, 1), 2);
        assert_eq!(qubits_for_block(4, 0), 0);
        assert_eq!(qubits_for_block(6, 3), 5);
    }

    #[test]
    fn one_dimensional_sectors() {
        let mu = 0.35;
        let h = mass_hamiltonian(&NeutrinoParams::new(4, mu)).unwrap().to_dense();
        let b0 = project_block(&h, &BlockSector::new(4, 0)).unwrap();
        let b4 = project_block(&h, &BlockSector::new(4, 4)).unwrap();
        assert_abs_diff_eq!(b0.get(0, 0).re, -5.0 + 6.0 * mu, epsilon = 1e-12);
        assert_abs_diff_eq!(b4.get(0, 0).re, 5.0 + 6.0 * mu, epsilon = 1e-12);
    }

    #[test]
    fn projection_rejects_non_commuting_input() {
        let h = flavor_hamiltonian(&NeutrinoParams::new(2, 0.5)).unwrap().to_dense();
        assert!(matches!(project_block(&h, &BlockSector::new(2, 1)), Err(Error::CrossSector { .. })));
    }

    #[test]
    fn two_particle_block_embeds_sector() {
        for &mu in &[0.0, 0.2, 0.5, 1.0] {
            for &w in &[1.0, 1.3] {
                let p = NeutrinoParams::new(4, mu).with_omega0(w);
                let sector = project_block(&mass_hamiltonian(&p).unwrap().to_dense(), &BlockSector::new(4, 2)).unwrap();
                let block = reduced_two_particle_block(&p).unwrap().to_dense();
                assert!(block.submatrix(&GENUINE_STATES).max_abs_diff(&sector) < 1e-12, "mu {mu} w {w}");
                assert_abs_diff_eq!(block.get(6, 6).re, w, epsilon = 1e-12);
                assert_abs_diff_eq!(block.get(7, 7).re, w, epsilon = 1e-12);
                for &g in &GENUINE_STATES {
                    assert!(block.get(g, 6).norm() < 1e-12 && block.get(g, 7).norm() < 1e-12);
                }
                assert!(block.get(6, 7).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn two_particle_block_spectra() {
        let oracle_mu02 = [-1.674300, -0.666078, 0.4, 0.4, 1.427154, 2.513224];
        let block = reduced_two_particle_block(&NeutrinoParams::new(4, 0.2)).unwrap().to_dense();
        assert_spectra_eq(&evals(&block.submatrix(&GENUINE_STATES)), &oracle_mu02, 1e-6);
        let block1 = reduced_two_particle_block(&NeutrinoParams::new(4, 1.0)).unwrap().to_dense();
        let e = evals(&block1);
        assert!(e.iter().filter(|x| (*x - 2.0).abs() < 1e-10).count() >= 2);
    }

    #[test]
    fn padding_is_configurable_and_guarded() {
        let p = NeutrinoParams::new(4, 0.2);
        let b = reduced_two_particle_block_padded(&p, 0.5).unwrap().to_dense();
        assert_abs_diff_eq!(b.get(6, 6).re, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(b.get(7, 7).re, 0.5, epsilon = 1e-12);
        assert!(matches!(reduced_two_particle_block_padded(&p, -3.0), Err(Error::PaddingExtreme { .. })));
        assert!(matches!(reduced_two_particle_block_padded(&p, 2.6), Err(Error::PaddingExtreme { .. })));
    }

    #[test]
    fn one_particle_blocks_match_sectors() {
        for &mu in &[0.0, 0.2, 0.5, 1.0] {
            let p = NeutrinoParams::new(4, mu);
            let h = mass_hamiltonian(&p).unwrap().to_dense();
            for (k, sign) in [(1, BlockSign::Minus), (3, BlockSign::Plus)] {
                let sector = project_block(&h, &BlockSector::new(4, k)).unwrap();
                let block = reduced_one_particle_block(&p, sign).unwrap().to_dense();
                assert_spectra_eq(&evals(&block), &evals(&sector), 1e-10);
            }
            let minus = evals(&reduced_one_particle_block(&p, BlockSign::Minus).unwrap().to_dense());
            let plus = evals(&reduced_one_particle_block(&p, BlockSign::Plus).unwrap().to_dense());
            let shifted: Vec<f64> = minus.iter().map(|x| x + 5.0).collect();
            assert_spectra_eq(&plus, &shifted, 1e-12);
        }
        let zero = reduced_one_particle_block(&NeutrinoParams::new(4, 0.0), BlockSign::Minus).unwrap();
        assert_spectra_eq(&evals(&zero.to_dense()), &[-4.0, -3.0, -2.0, -1.0], 1e-12);
        let ground = evals(&reduced_one_particle_block(&NeutrinoParams::new(4, 0.2), BlockSign::Minus).unwrap().to_dense())[0];
        assert_abs_diff_eq!(ground, -3.458221, epsilon = 1e-6);
    }

    #[test]
    fn one_particle_block_decomposition() {
        let p = NeutrinoParams::new(4, 0.2);
        let sector = project_block(&mass_hamiltonian(&p).unwrap().to_dense(), &BlockSector::new(4, 1)).unwrap();
        let s = PauliSum::decompose(&sector, 2).unwrap();
        for (label, want) in [("II", -1.9), ("XI", 0.2), ("IX", 0.2), ("XX", 0.2), ("ZI", 1.0), ("IZ", 0.5)] {
            assert_abs_diff_eq!(s.coefficient_of(label).re, want, epsilon = 1e-12);
        }
        assert_eq!(s.len(), 6);
        assert_eq!(s, reduced_one_particle_block(&p, BlockSign::Minus).unwrap().real_part());
    }

    #[test]
    fn degenerate_pair() {
        let (v1, _) = degenerate_eigenvectors(1.0).unwrap();
        assert_abs_diff_eq!(v1.norm(), 1.0, epsilon = 1e-15);
        assert_eq!(degenerate_norm_inverse_squared(1.0), 14.0);
        for &mu in &[0.2, 0.5, 1.0] {
            let h = reduced_two_particle_block(&NeutrinoParams::new(4, mu)).unwrap();
            let (v1, v2) = degenerate_eigenvectors(mu).unwrap();
            for v in [&v1, &v2] {
                let r = v.apply_sum(&h) - v.amplitudes() * real(2.0 * mu);
                assert!(r.norm() < 1e-10, "mu {mu}: residual {}", r.norm());
            }
            assert!(v1.fidelity(&v2) < 1.0 - 1e-3);
        }
        assert!(degenerate_eigenvectors(0.0).is_err());
    }

    #[test]
    fn fold_maps_eigenvalues() {
        let h = reduced_one_particle_block(&NeutrinoParams::new(4, 0.5), BlockSign::Minus).unwrap();
        let alpha = -1.5;
        let before = evals(&h.to_dense());
        let mut want: Vec<f64> = before.iter().map(|l| (l - alpha).powi(2)).collect();
        want.sort_by(f64::total_cmp);
        assert_spectra_eq(&evals(&h.spectral_fold(alpha).to_dense()), &want, 1e-10);
        assert_spectra_eq(&evals(&spectral_fold_dense(&h.to_dense(), alpha)), &want, 1e-10);
    }

    proptest::proptest! {
        #[test]
        fn hamiltonians_hermitian_conserving_isospectral(n in 2usize..=5, mu in 0.0f64..2.0, omega0 in 0.1f64..2.0, s in 0.0f64..1.0) {
            let p = NeutrinoParams::new(n, mu).with_omega0(omega0).with_theta(theta_from_sin2_2theta(s));
            let mass = mass_hamiltonian(&p).unwrap();
            let flavor = flavor_hamiltonian(&p).unwrap();
            proptest::prop_assert!(mass.is_hermitian(1e-12) && flavor.is_hermitian(1e-12));
            let dense = mass.to_dense();
            proptest::prop_assert!(dense.commutator(&number_operator(n).to_dense()).max_abs() < 1e-10);
            let (a, b) = (evals(&dense), evals(&flavor.to_dense()));
            for (x, y) in a.iter().zip(&b) {
                proptest::prop_assert!((x - y).abs() < 1e-9, "{x} vs {y}");
            }
        }
    }
}
