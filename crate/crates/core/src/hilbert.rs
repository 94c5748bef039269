//! Finite-dimensional states, observables and unitary evolution.
//!
//! Time is dimensionless throughout (`u = t / tau`) and Hamiltonians are given
//! in units of `hbar / tau`, so `U(du) = exp(-i H du)`.

use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Tolerance on the state norm before a renormalization is applied.
pub const NORM_DRIFT_TOLERANCE: f64 = 1e-9;
/// Tolerance for Hermiticity and unitarity checks.
pub const MATRIX_TOLERANCE: f64 = 1e-10;

/// Conversion between physical and dimensionless units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalScales {
    /// Compton time in seconds.
    pub tau: f64,
    /// Reduced Planck constant in the caller's action units.
    pub hbar: f64,
}

impl PhysicalScales {
    pub fn new(tau: f64, hbar: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) || !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scales must be positive and finite (tau = {tau}, hbar = {hbar})"
            )));
        }
        Ok(Self { tau, hbar })
    }

    /// Scales for a particle of mass `mass`, with `tau = h / (m c^2)`.
    pub fn for_mass(mass: f64, hbar: f64, c: f64) -> Result<Self> {
        let h = 2.0 * std::f64::consts::PI * hbar;
        Self::new(h / (mass * c * c), hbar)
    }

    pub fn to_dimensionless_time(&self, t: f64) -> f64 {
        t / self.tau
    }

    pub fn to_seconds(&self, u: f64) -> f64 {
        u * self.tau
    }

    pub fn to_dimensionless_energy(&self, energy: f64) -> f64 {
        energy * self.tau / self.hbar
    }
}

/// A normalized state vector in the computational basis.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: DVector<C64>,
    /// Factor that was applied to reach unit norm (1 when none was needed).
    normalization: f64,
}

impl QuantumState {
    /// Normalizes `amplitudes` and records the applied factor.
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::ZeroState);
        }
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroState);
        }
        if (norm - 1.0).abs() == 0.0 {
            return Ok(Self { amplitudes, normalization: 1.0 });
        }
        let factor = 1.0 / norm;
        Ok(Self { amplitudes: amplitudes * C64::new(factor, 0.0), normalization: factor })
    }

    /// Wraps an already normalized vector without rescaling it, so basis
    /// columns are kept bit-for-bit.
    pub fn from_unit(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if amplitudes.is_empty() || (norm - 1.0).abs() > MATRIX_TOLERANCE {
            return Err(Error::InvalidArgument(format!("vector norm {norm} is not 1")));
        }
        Ok(Self { amplitudes, normalization: 1.0 })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amplitudes))
    }

    /// The `index`-th computational basis vector of dimension `dim`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::LabelOutOfRange { label: index, labels: dim });
        }
        let mut v = DVector::zeros(dim);
        v[index] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// True when the last construction or evolution step rescaled the vector
    /// because its norm drifted beyond [`NORM_DRIFT_TOLERANCE`].
    pub fn was_renormalized(&self) -> bool {
        self.normalization != 1.0
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn inner(&self, other: &QuantumState) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }
}

/// Time-independent Hermitian Hamiltonian with a cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    matrix: DMatrix<C64>,
    energies: DVector<f64>,
    eigenvectors: DMatrix<C64>,
}

impl Hamiltonian {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        let deviation = hermitian_deviation(&matrix);
        if deviation > MATRIX_TOLERANCE {
            return Err(Error::NotHermitian(deviation));
        }
        let eig = SymmetricEigen::new(matrix.clone());
        Ok(Self { matrix, energies: eig.eigenvalues, eigenvectors: eig.eigenvectors })
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(DMatrix::zeros(dim, dim)).expect("zero matrix is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn energies(&self) -> &DVector<f64> {
        &self.energies
    }

    /// `exp(-i H du)` as a dense matrix.
    pub fn propagator(&self, du: f64) -> DMatrix<C64> {
        let phases = DVector::from_iterator(
            self.energies.len(),
            self.energies.iter().map(|&e| C64::from_polar(1.0, -e * du)),
        );
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |r, c| self.eigenvectors[(r, c)] * phases[c]);
        scaled * self.eigenvectors.adjoint()
    }
}

/// Applies `exp(-i H du)` to `state`, renormalizing if the norm drifts.
pub fn evolve(state: &QuantumState, hamiltonian: &Hamiltonian, du: f64) -> Result<QuantumState> {
    if du < 0.0 || !du.is_finite() {
        return Err(Error::NegativeTimeStep(du));
    }
    check_dim(hamiltonian.dim(), state.dim())?;
    if du == 0.0 {
        return Ok(QuantumState { amplitudes: state.amplitudes.clone(), normalization: 1.0 });
    }
    // V diag(e^{-iE du}) V^dagger psi, without forming the full propagator.
    let v = &hamiltonian.eigenvectors;
    let mut coeffs = v.ad_mul(&state.amplitudes);
    for (c, &e) in coeffs.iter_mut().zip(hamiltonian.energies.iter()) {
        *c *= C64::from_polar(1.0, -e * du);
    }
    let amplitudes = v * coeffs;
    let norm = amplitudes.norm();
    if (norm - 1.0).abs() > NORM_DRIFT_TOLERANCE {
        let factor = 1.0 / norm;
        return Ok(QuantumState { amplitudes: amplitudes * C64::new(factor, 0.0), normalization: factor });
    }
    Ok(QuantumState { amplitudes, normalization: 1.0 })
}

/// Multi-index eigen-label, e.g. `(n, l, m)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Label(pub Vec<i64>);

impl Label {
    pub fn single(index: i64) -> Self {
        Label(vec![index])
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, x) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts = s
            .split(':')
            .map(|p| p.trim().parse::<i64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad label `{s}`: {e}")))?;
        Ok(Label(parts))
    }
}

/// A complete set of commuting observables: an orthonormal eigenbasis whose
/// columns carry a multi-index label and one eigenvalue per member observable.
#[derive(Debug, Clone)]
pub struct Csco {
    id: String,
    basis: DMatrix<C64>,
    labels: Vec<Label>,
    eigenvalues: Vec<Vec<f64>>,
}

impl Csco {
    pub fn new(
        id: impl Into<String>,
        basis: DMatrix<C64>,
        labels: Vec<Label>,
        eigenvalues: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        let d = basis.nrows();
        if d == 0 || !basis.is_square() {
            return Err(Error::InvalidCsco(format!("{id}: basis must be a non-empty square matrix")));
        }
        if labels.len() != d || eigenvalues.len() != d {
            return Err(Error::InvalidCsco(format!(
                "{id}: {d} basis vectors but {} labels and {} eigenvalue tuples",
                labels.len(),
                eigenvalues.len()
            )));
        }
        let members = eigenvalues[0].len();
        if members == 0 || eigenvalues.iter().any(|e| e.len() != members) {
            return Err(Error::InvalidCsco(format!("{id}: eigenvalue tuples must share a non-zero length")));
        }
        if eigenvalues.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidCsco(format!("{id}: non-finite eigenvalue")));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidCsco(format!("{id}: duplicate labels")));
        }
        let gram = basis.adjoint() * &basis;
        let deviation = max_abs(&(gram - DMatrix::<C64>::identity(d, d)));
        if deviation > MATRIX_TOLERANCE {
            return Err(Error::NotUnitary(deviation));
        }
        Ok(Self { id, basis, labels, eigenvalues })
    }

    /// CSCO diagonal in the computational basis with labels `0..d`.
    pub fn computational(id: impl Into<String>, eigenvalues: Vec<Vec<f64>>) -> Result<Self> {
        let d = eigenvalues.len();
        let labels = (0..d as i64).map(Label::single).collect();
        Self::new(id, DMatrix::identity(d, d), labels, eigenvalues)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Number of member observables in each eigenvalue tuple.
    pub fn members(&self) -> usize {
        self.eigenvalues[0].len()
    }

    pub fn basis(&self) -> &DMatrix<C64> {
        &self.basis
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Result<&Label> {
        self.labels.get(index).ok_or(Error::LabelOutOfRange { label: index, labels: self.dim() })
    }

    pub fn index_of(&self, label: &Label) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn eigenvalues(&self) -> &[Vec<f64>] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, index: usize, member: usize) -> Result<f64> {
        self.check_member(member)?;
        let tuple = self
            .eigenvalues
            .get(index)
            .ok_or(Error::LabelOutOfRange { label: index, labels: self.dim() })?;
        Ok(tuple[member])
    }

    /// Column `index` of the basis, `|O_index>`.
    pub fn vector(&self, index: usize) -> Result<DVector<C64>> {
        if index >= self.dim() {
            return Err(Error::LabelOutOfRange { label: index, labels: self.dim() });
        }
        Ok(self.basis.column(index).into_owned())
    }

    pub fn check_member(&self, member: usize) -> Result<()> {
        if member >= self.members() {
            return Err(Error::MemberOutOfRange { member, members: self.members() });
        }
        Ok(())
    }

    /// The member observable as a matrix, `sum_k a_k |O_k><O_k|`.
    pub fn observable(&self, member: usize) -> Result<DMatrix<C64>> {
        self.check_member(member)?;
        let d = self.dim();
        let scaled =
            DMatrix::from_fn(d, d, |r, c| self.basis[(r, c)] * self.eigenvalues[c][member]);
        Ok(scaled * self.basis.adjoint())
    }

    /// Largest commutator norm between `hamiltonian` and the label projectors.
    ///
    /// Zero means every Born probability of this CSCO is conserved, even when
    /// member eigenvalues are degenerate.
    pub fn projector_commutator_norm(&self, hamiltonian: &Hamiltonian) -> Result<f64> {
        check_dim(self.dim(), hamiltonian.dim())?;
        // In the CSCO basis H must be diagonal.
        let h = self.basis.adjoint() * hamiltonian.matrix() * &self.basis;
        let mut worst = 0.0f64;
        for r in 0..h.nrows() {
            for c in 0..h.ncols() {
                if r != c {
                    worst = worst.max(h[(r, c)].norm());
                }
            }
        }
        Ok(worst)
    }

    pub fn is_conserved_by(&self, hamiltonian: &Hamiltonian) -> bool {
        self.projector_commutator_norm(hamiltonian).map(|n| n <= MATRIX_TOLERANCE).unwrap_or(false)
    }
}

/// `p_k = |<O_k|psi>|^2` for every label of `csco`.
pub fn born_probabilities(state: &QuantumState, csco: &Csco) -> Result<Vec<f64>> {
    check_dim(csco.dim(), state.dim())?;
    let overlaps = csco.basis.ad_mul(state.amplitudes());
    Ok(overlaps.iter().map(|c| c.norm_sqr()).collect())
}

/// `sum_k p_k a_k` for the selected member observable.
pub fn expectation(state: &QuantumState, csco: &Csco, member: usize) -> Result<f64> {
    csco.check_member(member)?;
    let p = born_probabilities(state, csco)?;
    Ok(p.iter().zip(&csco.eigenvalues).map(|(p, e)| p * e[member]).sum())
}

/// Max-entry norm of `[A, B]` for member observables of two CSCOs.
pub fn commutator_norm(a: &Csco, b: &Csco, member_a: usize, member_b: usize) -> Result<f64> {
    check_dim(a.dim(), b.dim())?;
    let oa = a.observable(member_a)?;
    let ob = b.observable(member_b)?;
    Ok(max_abs(&(&oa * &ob - &ob * &oa)))
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermitian_deviation(m: &DMatrix<C64>) -> f64 {
    max_abs(&(m - m.adjoint()))
}
