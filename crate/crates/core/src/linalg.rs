//! Dense state and operator algebra on a truncated Fock basis.
//!
//! Units have ħ = 1 and the quadratures follow q = (a + a†)/√2,
//! p = (a − a†)/(i√2), so the vacuum has Δq² = Δp² = 1/2.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{QsdError, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used to decide whether an operator carries the hermitian hint.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Number of highest basis levels watched by the truncation-leak monitor.
pub const LEAK_LEVELS: usize = 5;

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(QsdError::InvalidDimension {
            dim,
            reason: "basis must contain at least two levels".into(),
        });
    }
    Ok(())
}

fn check_same(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(QsdError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Normalized pure state over the truncated Fock basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amp: DVector<C64>,
}

impl StateVector {
    /// Builds a state from raw amplitudes, normalizing them.
    pub fn new(amp: DVector<C64>) -> Result<Self> {
        check_dim(amp.len())?;
        let norm = amp.norm();
        if !norm.is_finite() || norm == 0.0 {
            return Err(QsdError::InvalidParameter(
                "state amplitudes must have a finite, nonzero norm".into(),
            ));
        }
        Ok(Self {
            amp: amp / C64::from(norm),
        })
    }

    pub fn from_amplitudes(amp: &[C64]) -> Result<Self> {
        Self::new(DVector::from_column_slice(amp))
    }

    /// Wraps amplitudes that are already unit-norm.
    pub(crate) fn from_normalized(amp: DVector<C64>) -> Self {
        Self { amp }
    }

    /// Number state |k⟩.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        check_dim(dim)?;
        if k >= dim {
            return Err(QsdError::IndexOutOfRange { index: k, dim });
        }
        let mut amp = DVector::from_element(dim, ZERO);
        amp[k] = ONE;
        Ok(Self { amp })
    }

    /// Equal-weight superposition of the listed number states.
    pub fn superposition(dim: usize, levels: &[usize]) -> Result<Self> {
        check_dim(dim)?;
        if levels.is_empty() {
            return Err(QsdError::InvalidParameter(
                "superposition needs at least one level".into(),
            ));
        }
        let mut amp = DVector::from_element(dim, ZERO);
        for &k in levels {
            if k >= dim {
                return Err(QsdError::IndexOutOfRange { index: k, dim });
            }
            amp[k] += ONE;
        }
        Self::new(amp)
    }

    /// Coherent state |α⟩ cut off at `dim` levels and renormalized.
    pub fn coherent(dim: usize, alpha: C64) -> Result<Self> {
        check_dim(dim)?;
        let mut amp = DVector::from_element(dim, ZERO);
        // Recurrence c_n = c_{n-1} α/√n avoids overflowing αⁿ and n!.
        let mut c = C64::from((-0.5 * alpha.norm_sqr()).exp());
        amp[0] = c;
        for n in 1..dim {
            c *= alpha / (n as f64).sqrt();
            amp[n] = c;
        }
        Self::new(amp)
    }

    pub fn dim(&self) -> usize {
        self.amp.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amp
    }

    pub fn norm(&self) -> f64 {
        self.amp.norm()
    }

    /// Inner product ⟨self|other⟩.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        check_same(self.dim(), other.dim())?;
        Ok(self.amp.dotc(&other.amp))
    }

    /// Probability held by the highest `min(5, dim/2)` basis levels.
    pub fn top_level_leak(&self) -> f64 {
        top_level_leak(&self.amp)
    }
}

fn leak_window(dim: usize) -> usize {
    LEAK_LEVELS.min(dim / 2).max(1)
}

pub(crate) fn top_level_leak(amp: &DVector<C64>) -> f64 {
    let dim = amp.len();
    amp.iter()
        .skip(dim - leak_window(dim))
        .map(|c| c.norm_sqr())
        .sum()
}

/// Dense square operator with a cached hermiticity flag.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    entries: DMatrix<C64>,
    hermitian_hint: bool,
}

impl OperatorMatrix {
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(QsdError::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        check_dim(entries.nrows())?;
        Ok(Self::from_square(entries))
    }

    fn from_square(entries: DMatrix<C64>) -> Self {
        let hermitian_hint = hermiticity_defect(&entries) <= HERMITIAN_TOL;
        Self {
            entries,
            hermitian_hint,
        }
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::from_square(DMatrix::from_element(dim, dim, ZERO)))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::from_square(DMatrix::identity(dim, dim)))
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        check_dim(values.len())?;
        let d = DVector::from_iterator(values.len(), values.iter().map(|&v| C64::from(v)));
        Ok(Self::from_square(DMatrix::from_diagonal(&d)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian_hint
    }

    pub fn adjoint(&self) -> Self {
        Self::from_square(self.entries.adjoint())
    }

    pub fn scale(&self, factor: C64) -> Self {
        Self::from_square(&self.entries * factor)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same(self.dim(), other.dim())?;
        Ok(Self::from_square(&self.entries + &other.entries))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_same(self.dim(), other.dim())?;
        Ok(Self::from_square(&self.entries - &other.entries))
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        check_same(self.dim(), other.dim())?;
        Ok(Self::from_square(&self.entries * &other.entries))
    }

    /// Commutator `[self, other]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(Self::from_square(
            self.compose(other)?.entries - other.compose(self)?.entries,
        ))
    }

    /// Largest entrywise deviation from hermiticity.
    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.entries)
    }

    /// Largest absolute row sum; a cheap upper bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim())
            .map(|r| self.entries.row(r).iter().map(|c| c.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

pub(crate) fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Annihilation operator `a` with `a[m][m+1] = √(m+1)`.
pub fn fock_annihilation(dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    let mut m = DMatrix::from_element(dim, dim, ZERO);
    for k in 0..dim - 1 {
        m[(k, k + 1)] = C64::from(((k + 1) as f64).sqrt());
    }
    Ok(OperatorMatrix::from_square(m))
}

pub fn fock_creation(dim: usize) -> Result<OperatorMatrix> {
    Ok(fock_annihilation(dim)?.adjoint())
}

/// Number operator `a†a`, built exactly as a diagonal.
pub fn fock_number(dim: usize) -> Result<OperatorMatrix> {
    check_dim(dim)?;
    let levels: Vec<f64> = (0..dim).map(|k| k as f64).collect();
    OperatorMatrix::diagonal(&levels)
}

/// Position quadrature `(a + a†)/√2`.
pub fn position(dim: usize) -> Result<OperatorMatrix> {
    let a = fock_annihilation(dim)?;
    let sum = a.matrix() + a.matrix().adjoint();
    Ok(OperatorMatrix::from_square(
        sum * C64::from(std::f64::consts::FRAC_1_SQRT_2),
    ))
}

/// Momentum quadrature `(a − a†)/(i√2)`.
pub fn momentum(dim: usize) -> Result<OperatorMatrix> {
    let a = fock_annihilation(dim)?;
    let diff = a.matrix() - a.matrix().adjoint();
    let factor = C64::new(0.0, -std::f64::consts::FRAC_1_SQRT_2);
    Ok(OperatorMatrix::from_square(diff * factor))
}

/// Matrix-vector product `op · ψ` (unnormalized).
pub fn apply(op: &OperatorMatrix, psi: &StateVector) -> Result<DVector<C64>> {
    check_same(op.dim(), psi.dim())?;
    Ok(op.matrix() * psi.amplitudes())
}

/// ⟨ψ|op|ψ⟩.
pub fn expectation(op: &OperatorMatrix, psi: &StateVector) -> Result<C64> {
    let v = apply(op, psi)?;
    let value = psi.amplitudes().dotc(&v);
    if op.is_hermitian() {
        return Ok(C64::from(value.re));
    }
    Ok(value)
}

/// ⟨op²⟩ − ⟨op⟩² for a hermitian operator, evaluated as ‖(op − ⟨op⟩)ψ‖².
pub fn variance(op: &OperatorMatrix, psi: &StateVector) -> Result<f64> {
    if !op.is_hermitian() {
        return Err(QsdError::NotHermitian(
            "variance is only defined for hermitian observables".into(),
        ));
    }
    let v = apply(op, psi)?;
    let mean = psi.amplitudes().dotc(&v).re;
    let centered = v - psi.amplitudes() * C64::from(mean);
    Ok(centered.norm_squared())
}

/// |⟨k|ψ⟩|², the Born weight of basis state k.
pub fn projector_fidelity(psi: &StateVector, k: usize) -> Result<f64> {
    if k >= psi.dim() {
        return Err(QsdError::IndexOutOfRange {
            index: k,
            dim: psi.dim(),
        });
    }
    Ok(psi.amplitudes()[k].norm_sqr())
}

/// Hermitian trace-one matrix describing an ensemble.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
}

/// Tolerances a [`DensityMatrix`] must satisfy.
#[derive(Clone, Copy, Debug)]
pub struct DensityTolerance {
    pub hermiticity: f64,
    pub trace: f64,
    pub min_eigenvalue: f64,
}

impl Default for DensityTolerance {
    fn default() -> Self {
        Self {
            hermiticity: 1e-10,
            trace: 1e-8,
            min_eigenvalue: 1e-8,
        }
    }
}

impl DensityMatrix {
    /// Validates the matrix against the default tolerances.
    pub fn new(entries: DMatrix<C64>) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(entries)?;
        if let Some(problem) = rho.violation(DensityTolerance::default()) {
            return Err(QsdError::InvalidParameter(problem));
        }
        Ok(rho)
    }

    pub fn from_matrix_unchecked(entries: DMatrix<C64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(QsdError::DimensionMismatch {
                expected: entries.nrows(),
                found: entries.ncols(),
            });
        }
        check_dim(entries.nrows())?;
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        // tr(ρ²) = Σ |ρ_ij|² for hermitian ρ.
        self.entries.iter().map(|c| c.norm_sqr()).sum()
    }

    /// tr(ρ · op).
    pub fn expectation(&self, op: &OperatorMatrix) -> Result<C64> {
        check_same(self.dim(), op.dim())?;
        let n = self.dim();
        let mut acc = ZERO;
        for r in 0..n {
            for c in 0..n {
                acc += self.entries[(r, c)] * op.matrix()[(c, r)];
            }
        }
        Ok(acc)
    }

    /// Population of the same top levels that [`StateVector::top_level_leak`] uses.
    pub fn top_level_leak(&self) -> f64 {
        let dim = self.dim();
        (dim - leak_window(dim)..dim)
            .map(|k| self.entries[(k, k)].re)
            .sum()
    }

    /// Eigenvalues of the hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.entries)
    }

    /// Describes the first invariant violated under `tol`, if any.
    pub fn violation(&self, tol: DensityTolerance) -> Option<String> {
        let defect = hermiticity_defect(&self.entries);
        if !(defect <= tol.hermiticity) {
            return Some(format!("hermiticity defect {defect:.3e}"));
        }
        let tr = self.trace();
        if !((tr - ONE).norm() <= tol.trace) {
            return Some(format!("trace {tr} deviates from 1"));
        }
        let min = self.eigenvalues().first().copied().unwrap_or(0.0);
        if !(min >= -tol.min_eigenvalue) {
            return Some(format!("negative eigenvalue {min:.3e}"));
        }
        None
    }
}

/// |ψ⟩⟨ψ|.
pub fn pure_density(psi: &StateVector) -> DensityMatrix {
    let a = psi.amplitudes();
    DensityMatrix {
        entries: a * a.adjoint(),
    }
}

/// Eigenvalues of the hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * C64::from(0.5);
    let mut values: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

/// Eigen-decomposition `m = V diag(λ) V†` of a hermitian matrix, λ ascending.
pub fn hermitian_eigen(m: &DMatrix<C64>) -> (DMatrix<C64>, Vec<f64>) {
    let sym = (m + m.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let n = order.len();
    let mut vectors = DMatrix::from_element(n, n, ZERO);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    (vectors, values)
}

/// Unitary `exp(−i·h·t)` of a hermitian matrix given its eigen-decomposition.
pub(crate) fn unitary_from_eigen(vectors: &DMatrix<C64>, values: &[f64], t: f64) -> DMatrix<C64> {
    let mut scaled = vectors.clone();
    for (j, &lambda) in values.iter().enumerate() {
        let phase = C64::from_polar(1.0, -lambda * t);
        for v in scaled.column_mut(j).iter_mut() {
            *v *= phase;
        }
    }
    scaled * vectors.adjoint()
}

/// Diagonalization of the position quadrature.
#[derive(Clone, Debug)]
pub struct PositionBasis {
    /// Columns are position eigenvectors in the Fock basis.
    pub transform: DMatrix<C64>,
    /// Position eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
}

pub fn position_eigenbasis(dim: usize) -> Result<PositionBasis> {
    let q = position(dim)?;
    let (transform, eigenvalues) = hermitian_eigen(q.matrix());
    Ok(PositionBasis {
        transform,
        eigenvalues,
    })
}
