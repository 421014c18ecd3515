use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_chain, config_of_index, dense_index, spin, DiagFn, Interval, C64};
use crate::{Error, Result};

/// An operator `X_S f(Z)`: flips the sites of `S` after multiplying by `f(σ)`.
///
/// The matrix element `⟨σ ⊕ S| A |σ⟩` equals `f(σ)`. The support of `f` is kept
/// large enough to contain every active site.
#[derive(Clone, Debug, PartialEq)]
pub struct XMonomial {
    chain_len: usize,
    active: u64,
    diag: DiagFn,
}

impl XMonomial {
    pub fn new(chain_len: usize, active: u64, diag: DiagFn) -> Result<Self> {
        check_chain(chain_len)?;
        let chain_mask = super::range_mask(0, chain_len - 1);
        let support = Interval::hull_opt(diag.support(), Interval::hull_of_mask(active));
        if active & !chain_mask != 0 || support.is_some_and(|s| s.hi >= chain_len) {
            return Err(Error::InvalidParameter(format!("operator reaches beyond chain of length {chain_len}")));
        }
        let diag = diag.extended_opt(support);
        Ok(XMonomial { chain_len, active, diag })
    }

    pub fn identity(chain_len: usize) -> Self {
        XMonomial { chain_len, active: 0, diag: DiagFn::one() }
    }

    pub fn x(chain_len: usize, site: usize) -> Self {
        XMonomial::new(chain_len, 1 << site, DiagFn::one()).expect("site outside chain")
    }

    pub fn z(chain_len: usize, site: usize) -> Self {
        let f = DiagFn::from_real_fn(Interval::point(site), |b| spin(b, site));
        XMonomial::new(chain_len, 0, f).expect("site outside chain")
    }

    /// Product of `Z_x` over the sites of `mask`.
    pub fn z_string(chain_len: usize, mask: u64) -> Self {
        match Interval::hull_of_mask(mask) {
            None => Self::identity(chain_len),
            Some(s) => {
                let f = DiagFn::from_real_fn(s, |b| if (!b & mask).count_ones() % 2 == 0 { 1.0 } else { -1.0 });
                XMonomial::new(chain_len, 0, f).expect("site outside chain")
            }
        }
    }

    pub fn chain_len(&self) -> usize {
        self.chain_len
    }

    pub fn active(&self) -> u64 {
        self.active
    }

    pub fn diag(&self) -> &DiagFn {
        &self.diag
    }

    pub fn is_diagonal(&self) -> bool {
        self.active == 0
    }

    pub fn support(&self) -> Option<Interval> {
        self.diag.support()
    }

    pub fn support_mask(&self) -> u64 {
        self.support().map_or(0, |s| s.mask())
    }

    pub fn support_len(&self) -> usize {
        self.support().map_or(0, |s| s.len())
    }

    /// `⟨A|σ⟩ = ⟨σ ⊕ S|A|σ⟩`.
    pub fn matrix_element(&self, sigma: u64) -> C64 {
        self.diag.eval(sigma)
    }

    /// Exact operator norm: `max_σ |f(σ)|`.
    pub fn norm(&self) -> f64 {
        self.diag.max_abs()
    }

    pub fn scale(&self, c: C64) -> XMonomial {
        XMonomial { chain_len: self.chain_len, active: self.active, diag: self.diag.map(|v| v * c) }
    }

    pub fn with_diag(&self, diag: DiagFn) -> XMonomial {
        XMonomial::new(self.chain_len, self.active, diag).expect("diag support beyond chain")
    }

    /// `A† = X_S g(Z)` with `g(σ) = f(σ ⊕ S)^*`.
    pub fn adjoint(&self) -> XMonomial {
        let diag = self.diag.flipped(self.active).map(|v| v.conj());
        XMonomial { chain_len: self.chain_len, active: self.active, diag }
    }

    /// Largest violation of `f(σ)^* = f(σ ⊕ S)`.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.diag.zip_with(&adj.diag, |a, b| a - b).max_abs()
    }

    pub fn skew_hermiticity_defect(&self) -> f64 {
        let adj = self.adjoint();
        self.diag.zip_with(&adj.diag, |a, b| a + b).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn is_skew_hermitian(&self, tol: f64) -> bool {
        self.skew_hermiticity_defect() <= tol
    }

    fn check_same_chain(&self, other: &XMonomial) -> Result<()> {
        if self.chain_len != other.chain_len {
            Err(Error::ChainLengthMismatch(self.chain_len, other.chain_len))
        } else {
            Ok(())
        }
    }

    /// `X_a f_a X_b f_b = X_{a⊕b} h` with `h(σ) = f_a(σ ⊕ S_b) f_b(σ)`.
    pub fn multiply(&self, other: &XMonomial) -> Result<XMonomial> {
        self.check_same_chain(other)?;
        let shifted = self.diag.flipped(other.active);
        let diag = shifted.zip_with(&other.diag, |a, b| a * b);
        Ok(XMonomial { chain_len: self.chain_len, active: self.active ^ other.active, diag })
    }

    /// True when the two monomials trivially commute: neither flips a site the other reads.
    pub fn commutes_trivially(&self, other: &XMonomial) -> bool {
        self.active & other.support_mask() == 0 && other.active & self.support_mask() == 0
    }

    /// `[A, B] = AB − BA`, or `None` when the supports make it vanish identically.
    pub fn commutator(&self, other: &XMonomial) -> Result<Option<XMonomial>> {
        self.check_same_chain(other)?;
        if self.commutes_trivially(other) {
            return Ok(None);
        }
        let (sa, sb) = (self.active, other.active);
        let diag = match Interval::hull_opt(self.support(), other.support()) {
            None => return Ok(None),
            Some(h) => DiagFn::from_fn(h, |b| {
                self.diag.eval(b ^ sb) * other.diag.eval(b) - other.diag.eval(b ^ sa) * self.diag.eval(b)
            }),
        };
        Ok(Some(XMonomial { chain_len: self.chain_len, active: sa ^ sb, diag }))
    }

    /// Shrink the support to the sites `f` depends on (plus the active sites).
    pub fn refit(&self, tol: f64) -> XMonomial {
        XMonomial { chain_len: self.chain_len, active: self.active, diag: self.diag.refit(self.active, tol) }
    }

    pub(crate) fn add_assign(&mut self, other: &XMonomial) {
        debug_assert_eq!(self.active, other.active);
        self.diag = self.diag.zip_with(&other.diag, |a, b| a + b);
    }

    /// Dense `2^L × 2^L` matrix in the Z-product basis.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let n = 1usize << self.chain_len;
        let mut m = DMatrix::zeros(n, n);
        self.add_to_dense(&mut m);
        m
    }

    pub(crate) fn add_to_dense(&self, m: &mut DMatrix<C64>) {
        let l = self.chain_len;
        for col in 0..1usize << l {
            let sigma = config_of_index(col, l);
            let v = self.diag.eval(sigma);
            if v != C64::new(0.0, 0.0) {
                m[(dense_index(sigma ^ self.active, l), col)] += v;
            }
        }
    }

    pub fn to_json(&self) -> MonomialJson {
        MonomialJson {
            active: self.active,
            support: self.support(),
            diag: self.diag.lexicographic_table().iter().map(|c| [c.re, c.im]).collect(),
        }
    }

    pub fn from_json(chain_len: usize, j: &MonomialJson) -> Result<XMonomial> {
        let lex: Vec<C64> = j.diag.iter().map(|p| C64::new(p[0], p[1])).collect();
        let diag = DiagFn::from_lexicographic_table(j.support, &lex)
            .ok_or_else(|| Error::InvalidParameter("diag table length does not match support".into()))?;
        XMonomial::new(chain_len, j.active, diag)
    }
}

/// Debug dump of one monomial: active mask, support `[min, max]` and the
/// diagonal table as `[re, im]` pairs in lexicographic σ order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonomialJson {
    pub active: u64,
    pub support: Option<Interval>,
    pub diag: Vec<[f64; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re(m: &XMonomial, sigma: u64) -> f64 {
        m.matrix_element(sigma).re
    }

    #[test]
    fn x_squared_is_identity() {
        let x = XMonomial::x(3, 0);
        let p = x.multiply(&x).unwrap();
        assert_eq!(p.active(), 0);
        for s in 0..8 {
            assert_eq!(p.matrix_element(s), C64::new(1.0, 0.0));
        }
    }

    #[test]
    fn z_times_x_anticommutes() {
        let (z, x) = (XMonomial::z(1, 0), XMonomial::x(1, 0));
        let zx = z.multiply(&x).unwrap();
        assert_eq!(zx.active(), 1);
        // Z X = X (−Z)
        assert_eq!(re(&zx, 1), -1.0);
        assert_eq!(re(&zx, 0), 1.0);
    }

    #[test]
    fn commutator_of_z_and_x() {
        let (z, x) = (XMonomial::z(2, 0), XMonomial::x(2, 0));
        let c = z.commutator(&x).unwrap().unwrap();
        assert_eq!(c.active(), 1);
        assert_eq!(re(&c, 1), -2.0);
        assert_eq!(re(&c, 0), 2.0);
        assert!(XMonomial::z(2, 0).commutator(&XMonomial::x(2, 1)).unwrap().is_none());
    }

    #[test]
    fn mismatched_chains_are_rejected() {
        let err = XMonomial::x(2, 0).multiply(&XMonomial::x(3, 0)).unwrap_err();
        assert_eq!(err, Error::ChainLengthMismatch(2, 3));
    }

    #[test]
    fn norm_is_max_of_table() {
        let m = XMonomial::new(2, 1, DiagFn::from_real_fn(Interval::new(0, 1), |b| spin(b, 0))).unwrap();
        assert_eq!(m.norm(), 1.0);
    }

    #[test]
    fn hermiticity_follows_conjugation_rule() {
        // X_1 Z_1 is anti-hermitian, i X_1 Z_1 (= Y up to sign) hermitian
        let xz = XMonomial::x(1, 0).multiply(&XMonomial::z(1, 0)).unwrap();
        assert!(xz.is_skew_hermitian(0.0));
        assert!(xz.scale(C64::new(0.0, 1.0)).is_hermitian(0.0));
        assert!(XMonomial::x(1, 0).is_hermitian(0.0));
    }

    #[test]
    fn json_round_trip() {
        let m = XMonomial::new(4, 0b0110, DiagFn::from_real_fn(Interval::new(0, 2), |b| b as f64)).unwrap();
        let j = m.to_json();
        assert_eq!(j.support, Some(Interval::new(0, 2)));
        let back = XMonomial::from_json(4, &j).unwrap();
        assert_eq!(back, m);
        let text = serde_json::to_string(&j).unwrap();
        assert!(text.contains("\"support\":[0,2]"));
    }
}
