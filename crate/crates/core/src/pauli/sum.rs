use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::monomial::MonomialJson;
use super::{check_chain, config_of_index, dense_index, DiagFn, Interval, XMonomial, C64, DEFAULT_DROP_TOL};
use crate::{Error, Result};

/// Symmetry class tracked through the algebra.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parity {
    Hermitian,
    SkewHermitian,
    None,
}

impl Parity {
    /// Parity of `[A, B]` given the parities of `A` and `B`.
    pub fn of_commutator(a: Parity, b: Parity) -> Parity {
        use Parity::*;
        match (a, b) {
            (Hermitian, Hermitian) | (SkewHermitian, SkewHermitian) => SkewHermitian,
            (Hermitian, SkewHermitian) | (SkewHermitian, Hermitian) => Hermitian,
            _ => None,
        }
    }

    fn of_sum(a: Parity, b: Parity) -> Parity {
        if a == b {
            a
        } else {
            Parity::None
        }
    }

    fn times_i(self) -> Parity {
        match self {
            Parity::Hermitian => Parity::SkewHermitian,
            Parity::SkewHermitian => Parity::Hermitian,
            Parity::None => Parity::None,
        }
    }
}

/// Result of [`OperatorSum::operator_norm`]: exact (dense) or the triangle-inequality bound.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormValue {
    pub value: f64,
    pub exact: bool,
}

/// A sum of X-monomials in normal form: one term per active set, no vanishing terms.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSum {
    chain_len: usize,
    terms: BTreeMap<u64, XMonomial>,
    parity: Parity,
}

impl OperatorSum {
    pub fn zero(chain_len: usize, parity: Parity) -> Self {
        OperatorSum { chain_len, terms: BTreeMap::new(), parity }
    }

    pub fn from_monomials(chain_len: usize, parity: Parity, terms: impl IntoIterator<Item = XMonomial>) -> Result<Self> {
        let mut s = OperatorSum::zero(chain_len, parity);
        for m in terms {
            s.add_monomial(m)?;
        }
        s.normalize(DEFAULT_DROP_TOL);
        Ok(s)
    }

    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn set_parity(&mut self, parity: Parity) {
        self.parity = parity;
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &XMonomial> {
        self.terms.values()
    }

    pub fn term(&self, active: u64) -> Option<&XMonomial> {
        self.terms.get(&active)
    }

    pub fn into_terms(self) -> impl Iterator<Item = XMonomial> {
        self.terms.into_values()
    }

    fn check_chain_of(&self, other_len: usize) -> Result<()> {
        if self.chain_len != other_len {
            Err(Error::ChainLengthMismatch(self.chain_len, other_len))
        } else {
            Ok(())
        }
    }

    /// Add a monomial, merging with an existing term of the same active set.
    pub fn add_monomial(&mut self, m: XMonomial) -> Result<()> {
        self.check_chain_of(m.chain_len())?;
        match self.terms.get_mut(&m.active()) {
            Some(t) => t.add_assign(&m),
            None => {
                self.terms.insert(m.active(), m);
            }
        }
        Ok(())
    }

    /// Drop terms below `tol` and shrink supports to what each term depends on.
    pub fn normalize(&mut self, tol: f64) {
        self.terms.retain(|_, m| m.norm() > tol);
        for m in self.terms.values_mut() {
            *m = m.refit(tol);
        }
    }

    pub fn normalized(mut self, tol: f64) -> Self {
        self.normalize(tol);
        self
    }

    pub fn add(&self, other: &OperatorSum) -> Result<OperatorSum> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &OperatorSum) -> Result<()> {
        self.check_chain_of(other.chain_len)?;
        for m in other.terms.values() {
            self.add_monomial(m.clone())?;
        }
        self.parity = Parity::of_sum(self.parity, other.parity);
        self.normalize(DEFAULT_DROP_TOL);
        Ok(())
    }

    /// `self + c · other` without renormalizing.
    pub fn add_scaled_assign(&mut self, other: &OperatorSum, c: f64) -> Result<()> {
        self.check_chain_of(other.chain_len)?;
        for m in other.terms.values() {
            self.add_monomial(m.scale(C64::new(c, 0.0)))?;
        }
        if !other.is_empty() {
            self.parity = Parity::of_sum(self.parity, other.parity);
        }
        Ok(())
    }

    pub fn sub(&self, other: &OperatorSum) -> Result<OperatorSum> {
        self.add(&other.scale_real(-1.0))
    }

    pub fn scale_real(&self, c: f64) -> OperatorSum {
        self.map_terms(|m| m.scale(C64::new(c, 0.0)), self.parity)
    }

    /// Multiply by `i`, swapping hermitian and skew-hermitian parity.
    pub fn times_i(&self) -> OperatorSum {
        self.map_terms(|m| m.scale(C64::new(0.0, 1.0)), self.parity.times_i())
    }

    fn map_terms(&self, f: impl Fn(&XMonomial) -> XMonomial, parity: Parity) -> OperatorSum {
        let terms = self.terms.iter().map(|(&k, m)| (k, f(m))).collect();
        OperatorSum { chain_len: self.chain_len, terms, parity }
    }

    pub fn filter(&self, keep: impl Fn(&XMonomial) -> bool) -> OperatorSum {
        let terms = self.terms.iter().filter(|(_, m)| keep(m)).map(|(&k, m)| (k, m.clone())).collect();
        OperatorSum { chain_len: self.chain_len, terms, parity: self.parity }
    }

    pub fn diagonal_part(&self) -> OperatorSum {
        self.filter(|m| m.is_diagonal())
    }

    pub fn off_diagonal_part(&self) -> OperatorSum {
        self.filter(|m| !m.is_diagonal())
    }

    pub fn is_diagonal(&self) -> bool {
        self.terms.keys().all(|&k| k == 0)
    }

    /// The diagonal function of a diagonal operator.
    pub fn diagonal_function(&self) -> Result<DiagFn> {
        if let Some(&k) = self.terms.keys().find(|&&k| k != 0) {
            return Err(Error::NonDiagonal(k));
        }
        Ok(self.terms.get(&0).map_or_else(DiagFn::zero, |m| m.diag().clone()))
    }

    /// `Σ ‖term‖`, an upper bound on the operator norm.
    pub fn norm_bound(&self) -> f64 {
        self.terms.values().map(|m| m.norm()).sum()
    }

    /// Operator norm: exact for a single term or when `L ≤ dense_cutoff`, otherwise the bound.
    pub fn operator_norm(&self, dense_cutoff: usize) -> NormValue {
        match self.terms.len() {
            0 => NormValue { value: 0.0, exact: true },
            1 => NormValue { value: self.terms.values().next().unwrap().norm(), exact: true },
            _ if self.chain_len <= dense_cutoff => {
                NormValue { value: crate::oracle::spectral_norm(&self.to_dense()), exact: true }
            }
            _ => NormValue { value: self.norm_bound(), exact: false },
        }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.terms.values().map(|m| m.hermiticity_defect()).fold(0.0, f64::max)
    }

    pub fn skew_hermiticity_defect(&self) -> f64 {
        self.terms.values().map(|m| m.skew_hermiticity_defect()).fold(0.0, f64::max)
    }

    /// `[a, b]` in normal form.
    pub fn commutator(a: &OperatorSum, b: &OperatorSum) -> Result<OperatorSum> {
        Self::commutator_pruned(a, b, 0.0)
    }

    /// `[a, b]`, skipping monomial pairs with `2‖a_i‖‖b_j‖ ≤ prune`.
    pub fn commutator_pruned(a: &OperatorSum, b: &OperatorSum, prune: f64) -> Result<OperatorSum> {
        a.check_chain_of(b.chain_len)?;
        let mut out = OperatorSum::zero(a.chain_len, Parity::of_commutator(a.parity, b.parity));
        let b_norms: Vec<(f64, &XMonomial)> = b.terms.values().map(|m| (m.norm(), m)).collect();
        for ma in a.terms.values() {
            let na = ma.norm();
            for &(nb, mb) in &b_norms {
                if 2.0 * na * nb <= prune || ma.commutes_trivially(mb) {
                    continue;
                }
                if let Some(c) = ma.commutator(mb)? {
                    out.add_monomial(c)?;
                }
            }
        }
        out.normalize(DEFAULT_DROP_TOL);
        Ok(out)
    }

    /// `∂_S f = X_S f X_S − f` for a diagonal `f`.
    pub fn spin_flip_derivative(active: u64, f: &OperatorSum) -> Result<OperatorSum> {
        let d = f.diagonal_function()?;
        let derived = d.flipped(active).zip_with(&d, |a, b| a - b);
        let m = XMonomial::new(f.chain_len, 0, derived)?;
        OperatorSum::from_monomials(f.chain_len, f.parity, [m])
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = 1usize << self.chain_len;
        let mut m = DMatrix::zeros(n, n);
        for t in self.terms.values() {
            t.add_to_dense(&mut m);
        }
        m
    }

    /// Decompose a dense operator acting on `interval` into `Σ_S X_S f_S(Z)`.
    ///
    /// `m` is `2^|I| × 2^|I|` in lexicographic order of the interval sites. When
    /// `parity` is hermitian the input must be hermitian to `1e-12`.
    pub fn decompose_dense(chain_len: usize, interval: Interval, m: &DMatrix<C64>, parity: Parity) -> Result<OperatorSum> {
        check_chain(chain_len)?;
        let k = interval.len();
        let n = 1usize << k;
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Shape { expected: n, rows: m.nrows(), cols: m.ncols() });
        }
        if interval.hi >= chain_len {
            return Err(Error::InvalidParameter(format!("interval {interval:?} outside chain")));
        }
        if parity == Parity::Hermitian {
            let defect = (m - m.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max);
            if defect > 1e-12 {
                return Err(Error::NonHermitian(defect));
            }
        }
        let mut out = OperatorSum::zero(chain_len, parity);
        for m in local_components(chain_len, interval, m)? {
            out.add_monomial(m)?;
        }
        out.normalize(DEFAULT_DROP_TOL);
        Ok(out)
    }

    /// Decompose a full `2^L × 2^L` dense matrix.
    pub fn from_dense(chain_len: usize, m: &DMatrix<C64>, parity: Parity) -> Result<OperatorSum> {
        check_chain(chain_len)?;
        Self::decompose_dense(chain_len, Interval::new(0, chain_len - 1), m, parity)
    }

    /// Diagonal entries `f(σ)` of the diagonal part, in dense-basis order.
    pub fn diagonal_entries(&self) -> Vec<C64> {
        let d = self.terms.get(&0);
        (0..1usize << self.chain_len)
            .map(|i| d.map_or(C64::new(0.0, 0.0), |m| m.matrix_element(config_of_index(i, self.chain_len))))
            .collect()
    }

    pub fn to_json(&self) -> SumJson {
        SumJson { chain_len: self.chain_len, parity: self.parity, terms: self.terms.values().map(|m| m.to_json()).collect() }
    }

    pub fn from_json(j: &SumJson) -> Result<OperatorSum> {
        let terms = j.terms.iter().map(|t| XMonomial::from_json(j.chain_len, t)).collect::<Result<Vec<_>>>()?;
        OperatorSum::from_monomials(j.chain_len, j.parity, terms)
    }
}

/// The components `X_S f_S` of a dense operator on `interval`, one per active
/// subset `S ⊆ interval` with a non-vanishing `f_S`, each tabulated over the whole interval.
pub fn local_components(chain_len: usize, interval: Interval, m: &DMatrix<C64>) -> Result<Vec<XMonomial>> {
    let k = interval.len();
    let n = 1usize << k;
    let mut out = Vec::new();
    for s_local in 0..n as u64 {
        let active = s_local << interval.lo;
        let diag = DiagFn::from_fn(interval, |bits| {
            let col = dense_index(bits >> interval.lo, k);
            let row = dense_index((bits ^ active) >> interval.lo, k);
            m[(row, col)]
        });
        if diag.max_abs() > 0.0 {
            out.push(XMonomial::new(chain_len, active, diag)?);
        }
    }
    Ok(out)
}

/// JSON debugging dump of an [`OperatorSum`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SumJson {
    pub chain_len: usize,
    pub parity: Parity,
    pub terms: Vec<MonomialJson>,
}
