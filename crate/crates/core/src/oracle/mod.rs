//! Dense reference kernels and numeric checks of auxiliary lemmas.
//!
//! Matrices live in the Z-product basis with site 0 as the most significant
//! bit, the same convention as [`crate::pauli::dense_index`].

mod lemmas;

pub use lemmas::{resolvent_identity_check, resolvent_residual, ResolventReport, spectral_lemma_check, spectral_lemma_ratio, SPECTRAL_LEMMA_CONSTANT};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::pauli::C64;
use crate::{Error, Result};

/// Default cap on dense Hilbert-space dimensions (baths included).
pub const DEFAULT_DENSE_BUDGET: usize = 1 << 13;

/// Relative hermiticity tolerance accepted by the eigen-solvers.
const HERMITIAN_TOL: f64 = 1e-10;

pub fn check_budget(dim: usize, budget: usize) -> Result<()> {
    if dim > budget {
        Err(Error::BudgetExceeded { dim, budget })
    } else {
        Ok(())
    }
}

/// A dense square operator, optionally certified hermitian.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<C64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Shape { expected: matrix.nrows(), rows: matrix.nrows(), cols: matrix.ncols() });
        }
        Ok(DenseOperator { matrix, hermitian: false })
    }

    /// Construct and verify hermiticity.
    pub fn hermitian(matrix: DMatrix<C64>) -> Result<Self> {
        let mut op = DenseOperator::new(matrix)?;
        let defect = relative_hermitian_defect(&op.matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::NonHermitian(defect));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }
}

pub fn identity(n: usize) -> DMatrix<C64> {
    DMatrix::identity(n, n)
}

pub fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn hermitian_defect(m: &DMatrix<C64>) -> f64 {
    let n = m.nrows();
    let mut d: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            d = d.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    d
}

fn relative_hermitian_defect(m: &DMatrix<C64>) -> f64 {
    hermitian_defect(m) / max_abs(m).max(1.0)
}

pub fn is_real(m: &DMatrix<C64>) -> bool {
    m.iter().all(|v| v.im == 0.0)
}

pub fn real_part(m: &DMatrix<C64>) -> DMatrix<f64> {
    m.map(|v| v.re)
}

pub fn imag_part(m: &DMatrix<C64>) -> DMatrix<f64> {
    m.map(|v| v.im)
}

pub fn from_real(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn from_parts(re: &DMatrix<f64>, im: Option<&DMatrix<f64>>) -> DMatrix<C64> {
    match im {
        None => from_real(re),
        Some(im) => re.zip_map(im, C64::new),
    }
}

fn split(m: &DMatrix<C64>) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
    let re = real_part(m);
    if is_real(m) {
        (re, None)
    } else {
        (re, Some(imag_part(m)))
    }
}

/// Complex matrix product through real products, skipping vanishing imaginary parts.
pub fn matmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = split(a);
    let (br, bi) = split(b);
    match (ai, bi) {
        (None, None) => from_real(&(ar * br)),
        (Some(ai), None) => from_parts(&(&ar * &br), Some(&(ai * br))),
        (None, Some(bi)) => from_parts(&(&ar * &br), Some(&(ar * bi))),
        (Some(ai), Some(bi)) => {
            let re = &ar * &br - &ai * &bi;
            let im = ar * bi + ai * br;
            from_parts(&re, Some(&im))
        }
    }
}

/// `a b a†`.
pub fn conjugate(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    matmul(&matmul(a, b), &a.adjoint())
}

/// `[a, b] = ab − ba`.
pub fn commutator(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    matmul(a, b) - matmul(b, a)
}

pub fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

pub fn trace(m: &DMatrix<C64>) -> C64 {
    m.diagonal().sum()
}

/// Eigenpairs of a hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<C64>,
}

impl Eigen {
    /// `V f(Λ) V†` for a real function of the eigenvalues.
    pub fn apply_fn(&self, f: impl Fn(f64) -> C64) -> DMatrix<C64> {
        let mut scaled = self.vectors.clone();
        for (j, &l) in self.values.iter().enumerate() {
            let c = f(l);
            for v in scaled.column_mut(j).iter_mut() {
                *v *= c;
            }
        }
        matmul(&scaled, &self.vectors.adjoint())
    }

    /// `V† M V`.
    pub fn to_eigenbasis(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        matmul(&matmul(&self.vectors.adjoint(), m), &self.vectors)
    }
}

fn sorted_pairs(values: Vec<f64>, vectors: DMatrix<C64>) -> Eigen {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let sorted_values = order.iter().map(|&i| values[i]).collect();
    let mut sorted_vectors = DMatrix::zeros(vectors.nrows(), vectors.ncols());
    for (dst, &src) in order.iter().enumerate() {
        sorted_vectors.set_column(dst, &vectors.column(src));
    }
    Eigen { values: sorted_values, vectors: sorted_vectors }
}

fn check_hermitian_input(m: &DMatrix<C64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Shape { expected: m.nrows(), rows: m.nrows(), cols: m.ncols() });
    }
    let defect = relative_hermitian_defect(m);
    if defect > HERMITIAN_TOL {
        return Err(Error::NonHermitian(defect));
    }
    Ok(())
}

/// Full eigendecomposition of a hermitian matrix.
///
/// Real symmetric input takes a faster real path.
pub fn eigh(m: &DMatrix<C64>) -> Result<Eigen> {
    check_hermitian_input(m)?;
    if is_real(m) {
        let r = real_part(m);
        let sym = (&r + r.transpose()) * 0.5;
        let e = SymmetricEigen::new(sym);
        return Ok(sorted_pairs(e.eigenvalues.iter().copied().collect(), from_real(&e.eigenvectors)));
    }
    let sym = (m + m.adjoint()) * C64::new(0.5, 0.0);
    let e = SymmetricEigen::new(sym);
    Ok(sorted_pairs(e.eigenvalues.iter().copied().collect(), e.eigenvectors))
}

/// Ascending eigenvalues of a hermitian matrix.
pub fn dense_spectrum(m: &DMatrix<C64>) -> Result<Vec<f64>> {
    check_hermitian_input(m)?;
    let mut values: Vec<f64> = if is_real(m) {
        let r = real_part(m);
        ((&r + r.transpose()) * 0.5).symmetric_eigenvalues().iter().copied().collect()
    } else {
        ((m + m.adjoint()) * C64::new(0.5, 0.0)).symmetric_eigenvalues().iter().copied().collect()
    };
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// Largest entrywise gap between two sorted spectra of equal length.
pub fn spectrum_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spectra of different size");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.is_square() && relative_hermitian_defect(m) <= 1e-14 {
        let s = dense_spectrum(m).expect("hermitian input");
        return s.first().unwrap().abs().max(s.last().unwrap().abs());
    }
    let g = matmul(&m.adjoint(), m);
    let s = dense_spectrum(&g).expect("gram matrix is hermitian");
    s.last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// `e^A` for a skew-hermitian `A`; the result is unitary.
pub fn expm_skew(a: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    if !a.is_square() {
        return Err(Error::Shape { expected: a.nrows(), rows: a.nrows(), cols: a.ncols() });
    }
    let scale = max_abs(a).max(1.0);
    let defect = (a + a.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max) / scale;
    if defect > HERMITIAN_TOL {
        return Err(Error::NonHermitian(defect));
    }
    if is_real(a) {
        let r = real_part(a);
        let skew = (&r - r.transpose()) * 0.5;
        return Ok(from_real(&skew.exp()));
    }
    // A = −iH with H = iA hermitian
    let h = a * C64::new(0.0, 1.0);
    let e = eigh(&h)?;
    Ok(e.apply_fn(|l| C64::new(0.0, -l).exp()))
}

/// Deviation of `U†U` from the identity (max entry).
pub fn unitarity_defect(u: &DMatrix<C64>) -> f64 {
    let p = matmul(&u.adjoint(), u);
    max_abs_diff(&p, &identity(u.nrows()))
}
