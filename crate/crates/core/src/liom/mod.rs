//! Diagonalizing unitary, local integrals of motion and locality diagnostics.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::oracle::{self, DEFAULT_DENSE_BUDGET};
use crate::flow::FlowState;
use crate::pauli::{DiagFn, Interval, OperatorSum, C64};
use crate::stats;
use crate::{Error, Result};

/// `U = e^{−A^(1)} e^{−A^(2)} ⋯ e^{−A^(K)}`, so that `U† H^(0) U = H^(K)`.
#[derive(Clone, Debug)]
pub struct UnitaryProduct {
    pub chain_len: usize,
    pub factors: Vec<OperatorSum>,
    pub dense: DMatrix<C64>,
}

impl UnitaryProduct {
    /// `U† M U`.
    pub fn pull_back(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        oracle::matmul(&oracle::matmul(&self.dense.adjoint(), m), &self.dense)
    }

    /// `U M U†`.
    pub fn push_forward(&self, m: &DMatrix<C64>) -> DMatrix<C64> {
        oracle::conjugate(&self.dense, m)
    }

    pub fn unitarity_defect(&self) -> f64 {
        oracle::unitarity_defect(&self.dense)
    }
}

/// Multiply the dense exponentials of the flow generators.
pub fn build_unitary(chain_len: usize, generators: &[OperatorSum]) -> Result<UnitaryProduct> {
    let dim = 1usize << chain_len;
    oracle::check_budget(dim, DEFAULT_DENSE_BUDGET)?;
    let mut u = oracle::identity(dim);
    for a in generators {
        if a.chain_len() != chain_len {
            return Err(Error::ChainLengthMismatch(chain_len, a.chain_len()));
        }
        if a.is_empty() {
            continue;
        }
        let e = oracle::expm_skew(&(-a.to_dense()))?;
        u = oracle::matmul(&u, &e);
    }
    Ok(UnitaryProduct { chain_len, factors: generators.to_vec(), dense: u })
}

pub fn unitary_of_flow(state: &FlowState) -> Result<UnitaryProduct> {
    build_unitary(state.chain_len(), &state.generators)
}

/// Dense `Z_x`.
pub fn z_dense(chain_len: usize, x: usize) -> DMatrix<C64> {
    let dim = 1usize << chain_len;
    DMatrix::from_fn(dim, dim, |i, j| {
        if i != j {
            C64::new(0.0, 0.0)
        } else if (i >> (chain_len - 1 - x)) & 1 == 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(-1.0, 0.0)
        }
    })
}

/// Per-site LIOM diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct LiomReport {
    /// `‖[H, U Z_x U†]‖` per site.
    pub residuals: Vec<f64>,
    /// `max_{x<y} ‖[𝒵_x, 𝒵_y]‖`.
    pub max_pair_commutator: f64,
    /// `max_x ‖𝒵_x² − 1‖` (entrywise).
    pub max_involution_defect: f64,
}

impl LiomReport {
    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Norm of a commutator of two hermitian matrices, through the hermitian `i[a, b]`.
fn hermitian_commutator_norm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let c = oracle::commutator(a, b) * C64::new(0.0, 1.0);
    let h = (&c + c.adjoint()) * C64::new(0.5, 0.0);
    oracle::spectral_norm(&h)
}

/// Check that `𝒵_x = U Z_x U†` commute with `H` and with each other.
pub fn liom_check(u: &DMatrix<C64>, h: &DMatrix<C64>, chain_len: usize) -> Result<LiomReport> {
    let dim = 1usize << chain_len;
    if u.nrows() != dim || h.nrows() != dim {
        return Err(Error::Shape { expected: dim, rows: u.nrows().max(h.nrows()), cols: u.ncols().max(h.ncols()) });
    }
    let lioms: Vec<DMatrix<C64>> = (0..chain_len).map(|x| oracle::conjugate(u, &z_dense(chain_len, x))).collect();
    let residuals = lioms.iter().map(|z| hermitian_commutator_norm(h, z)).collect();
    let mut max_pair: f64 = 0.0;
    for x in 0..chain_len {
        for y in x + 1..chain_len {
            max_pair = max_pair.max(hermitian_commutator_norm(&lioms[x], &lioms[y]));
        }
    }
    let id = oracle::identity(dim);
    let max_involution_defect = lioms.iter().map(|z| oracle::max_abs_diff(&oracle::matmul(z, z), &id)).fold(0.0, f64::max);
    Ok(LiomReport { residuals, max_pair_commutator: max_pair, max_involution_defect })
}

/// `max_σ |Tr P_σ − 1|` over the joint eigenprojections `P_σ = Π_x (1 + σ_x 𝒵_x)/2`.
///
/// A complete commuting set of involutions has every joint projection of rank one.
pub fn completeness_defect(u: &DMatrix<C64>, chain_len: usize) -> f64 {
    let dim = 1usize << chain_len;
    let half = C64::new(0.5, 0.0);
    let id = oracle::identity(dim);
    let mut level = vec![id.clone()];
    for x in 0..chain_len {
        let z = oracle::conjugate(u, &z_dense(chain_len, x));
        let up = (&id + &z) * half;
        let down = (&id - &z) * half;
        level = level.iter().flat_map(|p| [oracle::matmul(p, &up), oracle::matmul(p, &down)]).collect();
    }
    level.iter().map(|p| (oracle::trace(p) - C64::new(1.0, 0.0)).norm()).fold(0.0, f64::max)
}

/// Eigenvector matrix with columns assigned to Z-basis configurations by maximal overlap.
#[derive(Clone, Debug)]
pub struct OracleUnitary {
    pub u: DMatrix<C64>,
    pub eigenvalues: Vec<f64>,
    /// Every eigenvector went to its own best configuration with overlap above 1/2.
    pub well_defined: bool,
    pub min_overlap: f64,
}

pub fn oracle_unitary(h: &DMatrix<C64>) -> Result<OracleUnitary> {
    let e = oracle::eigh(h)?;
    let dim = h.nrows();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(dim * dim);
    for j in 0..dim {
        for i in 0..dim {
            pairs.push((e.vectors[(i, j)].norm_sqr(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut row_used = vec![false; dim];
    let mut col_of_row = vec![usize::MAX; dim];
    let mut assigned = vec![false; dim];
    let mut overlap = vec![0.0; dim];
    for (w, i, j) in pairs {
        if !row_used[i] && !assigned[j] {
            row_used[i] = true;
            assigned[j] = true;
            col_of_row[i] = j;
            overlap[j] = w;
        }
    }
    let mut u = DMatrix::zeros(dim, dim);
    let mut eigenvalues = vec![0.0; dim];
    for i in 0..dim {
        let j = col_of_row[i];
        u.set_column(i, &e.vectors.column(j));
        eigenvalues[i] = e.values[j];
    }
    let min_overlap = overlap.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(OracleUnitary { u, eigenvalues, well_defined: min_overlap > 0.5, min_overlap })
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// `U O U†`.
    Conjugate,
    /// `U† O U`.
    InverseConjugate,
}

/// Tails `(O)_n` of a rotated local operator.
#[derive(Clone, Debug, Serialize)]
pub struct LocalityProfile {
    pub operator: String,
    pub support: Interval,
    pub direction: Direction,
    pub tails: Vec<f64>,
    /// `(prefactor, rate)` of `‖(O)_n‖ ≈ prefactor · e^{−rate·n}`.
    pub fit: Option<(f64, f64)>,
    /// `‖Σ_n (O)_n − O_rot‖` (max entry).
    pub reconstruction_error: f64,
}

/// Tail entries below this are treated as floating-point noise in fits.
pub const FIT_FLOOR: f64 = 1e-13;

/// `Tr_{K^c}(M)/2^{|K^c|} ⊗ 1`, with `K` an interval of sites.
pub fn partial_trace_average(m: &DMatrix<C64>, chain_len: usize, keep: Interval) -> DMatrix<C64> {
    let dim = 1usize << chain_len;
    let keep_bits = keep.sites().fold(0usize, |acc, x| acc | 1 << (chain_len - 1 - x));
    let comp_bits = (dim - 1) & !keep_bits;
    let comp: Vec<usize> = submasks(comp_bits);
    let kept: Vec<usize> = submasks(keep_bits);
    let weight = 1.0 / comp.len() as f64;
    let mut out = DMatrix::zeros(dim, dim);
    for &ik in &kept {
        for &jk in &kept {
            let avg: C64 = comp.iter().map(|&c| m[(ik | c, jk | c)]).sum::<C64>() * weight;
            if avg == C64::new(0.0, 0.0) {
                continue;
            }
            for &c in &comp {
                out[(ik | c, jk | c)] = avg;
            }
        }
    }
    out
}

fn submasks(mask: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(1 << mask.count_ones());
    let mut s = mask;
    loop {
        out.push(s);
        if s == 0 {
            break;
        }
        s = (s - 1) & mask;
    }
    out.reverse();
    out
}

/// Split the rotated operator into tails supported on `X_n = {x : dist(x, X) ≤ n}`.
pub fn tails(o_rot: &DMatrix<C64>, chain_len: usize, support: Interval) -> Vec<DMatrix<C64>> {
    let n_max = support.lo.max(chain_len - 1 - support.hi);
    let mut out = Vec::with_capacity(n_max + 1);
    let mut prev: Option<DMatrix<C64>> = None;
    for n in 0..=n_max {
        let p = partial_trace_average(o_rot, chain_len, support.grown(n, chain_len));
        out.push(match &prev {
            None => p.clone(),
            Some(q) => &p - q,
        });
        prev = Some(p);
    }
    out
}

/// Tail norms of `U O U†` (or `U† O U`) for `O` supported on `support`.
pub fn locality_profile(
    u: &DMatrix<C64>,
    o: &DMatrix<C64>,
    chain_len: usize,
    support: Interval,
    direction: Direction,
    name: &str,
) -> Result<LocalityProfile> {
    let dim = 1usize << chain_len;
    if o.nrows() != dim || u.nrows() != dim {
        return Err(Error::Shape { expected: dim, rows: o.nrows(), cols: o.ncols() });
    }
    let rotated = match direction {
        Direction::Conjugate => oracle::conjugate(u, o),
        Direction::InverseConjugate => oracle::conjugate(&u.adjoint(), o),
    };
    let parts = tails(&rotated, chain_len, support);
    let mut sum = DMatrix::zeros(dim, dim);
    for p in &parts {
        sum += p;
    }
    let norms: Vec<f64> = parts.iter().map(oracle::spectral_norm).collect();
    let xs: Vec<f64> = (0..norms.len()).map(|n| n as f64).collect();
    let fit = stats::fit_exponential_decay(&xs, &norms, FIT_FLOOR);
    Ok(LocalityProfile {
        operator: name.to_string(),
        support,
        direction,
        tails: norms,
        fit,
        reconstruction_error: oracle::max_abs_diff(&sum, &rotated),
    })
}

/// `D = Σ_S D_S Π_{x∈S} Z_x` for a diagonal operator.
#[derive(Clone, Debug, Serialize)]
pub struct DiagonalExpansion {
    pub chain_len: usize,
    /// Nonzero coefficients keyed by the site mask of `S`.
    pub couplings: BTreeMap<u64, f64>,
}

/// `d_S = max S − min S`; zero for the empty set and single sites.
pub fn diameter(mask: u64) -> usize {
    Interval::hull_of_mask(mask).map_or(0, |i| i.len() - 1)
}

impl DiagonalExpansion {
    pub fn coupling(&self, mask: u64) -> f64 {
        self.couplings.get(&mask).copied().unwrap_or(0.0)
    }

    /// `max_{|S|≥1, d_S = d} |D_S|` for every diameter that occurs.
    pub fn max_by_diameter(&self) -> Vec<(usize, f64)> {
        let mut out: BTreeMap<usize, f64> = BTreeMap::new();
        for (&s, &d) in &self.couplings {
            if s != 0 {
                let e = out.entry(diameter(s)).or_insert(0.0);
                *e = e.max(d.abs());
            }
        }
        out.into_iter().collect()
    }

    /// `Σ_S D_S Π σ_x` tabulated over the chain.
    pub fn reassemble(&self) -> DiagFn {
        let whole = Interval::new(0, self.chain_len - 1);
        DiagFn::from_real_fn(whole, |b| {
            self.couplings.iter().map(|(&s, &d)| if (!b & s).count_ones() % 2 == 0 { d } else { -d }).sum()
        })
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.couplings.values().map(|d| d * d).sum()
    }
}

/// In-place Walsh–Hadamard transform `t[S] ← Σ_b (−1)^{|b∧S|} t[b]`.
fn walsh_hadamard(t: &mut [f64]) {
    let n = t.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let (a, b) = (t[j], t[j + h]);
                t[j] = a + b;
                t[j + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// `D_S = 2^{−L} Σ_σ E(σ) Π_{x∈S} σ_x`.
pub fn extract_diagonal_couplings(e: &OperatorSum) -> Result<DiagonalExpansion> {
    let f = e.diagonal_function()?;
    let chain_len = e.chain_len();
    let mut couplings = BTreeMap::new();
    match f.support() {
        None => {
            let c = f.table()[0].re;
            if c != 0.0 {
                couplings.insert(0, c);
            }
        }
        Some(s) => {
            let mut t: Vec<f64> = f.table().iter().map(|v| v.re).collect();
            walsh_hadamard(&mut t);
            let norm = 1.0 / t.len() as f64;
            for (local, &v) in t.iter().enumerate() {
                // bit value 1 is σ = +1, so each site of S contributes a sign flip
                let sign = if local.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                let d = sign * v * norm;
                if d != 0.0 {
                    couplings.insert((local as u64) << s.lo, d);
                }
            }
        }
    }
    Ok(DiagonalExpansion { chain_len, couplings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::{Parity, XMonomial};

    fn diag_sum(l: usize, terms: Vec<XMonomial>) -> OperatorSum {
        OperatorSum::from_monomials(l, Parity::Hermitian, terms).unwrap()
    }

    #[test]
    fn zero_generators_give_identity() {
        let u = build_unitary(3, &[]).unwrap();
        assert_eq!(u.dense, oracle::identity(8));
    }

    #[test]
    fn identity_with_diagonal_h_has_zero_residuals() {
        let h = diag_sum(3, vec![XMonomial::z(3, 0), XMonomial::z_string(3, 0b110)]).to_dense();
        let r = liom_check(&oracle::identity(8), &h, 3).unwrap();
        assert_eq!(r.max_residual(), 0.0);
        assert_eq!(r.max_pair_commutator, 0.0);
    }

    #[test]
    fn single_field_coupling() {
        let e = diag_sum(3, vec![XMonomial::z(3, 1).scale(C64::new(0.3, 0.0))]);
        let d = extract_diagonal_couplings(&e).unwrap();
        assert_eq!(d.couplings.len(), 1);
        assert!((d.coupling(0b010) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn pair_coupling_has_diameter_two() {
        let e = diag_sum(4, vec![XMonomial::z_string(4, 0b1010)]);
        let d = extract_diagonal_couplings(&e).unwrap();
        assert!((d.coupling(0b1010) - 1.0).abs() < 1e-15);
        assert_eq!(d.max_by_diameter(), vec![(2, 1.0)]);
    }

    #[test]
    fn partial_trace_of_product_operator() {
        // Z_0 ⊗ X_1 on two sites: tracing site 1 gives 0, tracing site 0 gives 0
        let l = 2;
        let m = XMonomial::new(l, 0b10, XMonomial::z(l, 0).diag().clone()).unwrap().to_dense();
        assert_eq!(oracle::max_abs(&partial_trace_average(&m, l, Interval::point(0))), 0.0);
        let z = XMonomial::z(l, 0).to_dense();
        assert!(oracle::max_abs_diff(&partial_trace_average(&z, l, Interval::point(0)), &z) < 1e-15);
        assert!(oracle::max_abs(&partial_trace_average(&z, l, Interval::point(1))) < 1e-15);
    }

    #[test]
    fn disjoint_unitary_leaves_no_tails() {
        let l = 4;
        let a = OperatorSum::from_monomials(l, Parity::SkewHermitian, [XMonomial::new(l, 0b1000, DiagFn::constant(C64::new(0.0, 0.4))).unwrap()]).unwrap();
        let u = build_unitary(l, &[a]).unwrap();
        let p = locality_profile(&u.dense, &z_dense(l, 0), l, Interval::point(0), Direction::Conjugate, "Z0").unwrap();
        assert!(p.tails[0] > 0.99);
        assert!(p.tails[1..].iter().all(|&t| t < 1e-15), "{:?}", p.tails);
        assert!(p.reconstruction_error < 1e-15);
    }

    #[test]
    fn flow_unitary_maps_to_final_hamiltonian() {
        use crate::diagrams::ScaleLadder;
        use crate::flow::{run_flow, FlowParams};
        use crate::model::{self, Ensemble, ModelParams};
        let mp = ModelParams::new(6, 0.05, Ensemble::Random, 3);
        let s = model::sample_disorder(&mp, 0);
        let mut p = FlowParams::new(0.05, ScaleLadder::new(9, 10).unwrap());
        p.k_max = 8;
        let run = run_flow(&mp, &s, &p).unwrap();
        let u = unitary_of_flow(&run.state).unwrap();
        assert!(u.unitarity_defect() < 1e-10);
        let h0 = model::dense_hamiltonian(&mp, &s);
        let hk = run.state.hamiltonian().unwrap().to_dense();
        assert!(oracle::max_abs_diff(&u.pull_back(&h0), &hk) < 1e-10);
        let v = run.state.v.operator_norm(10).value;
        let r = liom_check(&u.dense, &h0, 6).unwrap();
        assert!(r.max_residual() <= 2.0 * v + 1e-10, "{} vs {v}", r.max_residual());
        assert!(r.max_pair_commutator < 1e-10);
        assert!(r.max_involution_defect < 1e-10);
        let e = extract_diagonal_couplings(&run.state.e).unwrap();
        let back = e.reassemble();
        let orig = run.state.e.diagonal_function().unwrap().extended_opt(back.support());
        let gap = back.zip_with(&orig, |a, b| a - b).max_abs();
        assert!(gap < 1e-12, "{gap}");
        let mean_sq = orig.table().iter().map(|v| v.norm_sqr()).sum::<f64>() / orig.table().len() as f64;
        assert!((e.sum_of_squares() - mean_sq).abs() < 1e-12 * mean_sq.max(1.0));
    }

    #[test]
    fn tails_stay_inside_grown_intervals() {
        let l = 5;
        let mp = crate::model::ModelParams::new(l, 0.2, crate::model::Ensemble::Random, 1);
        let s = crate::model::sample_disorder(&mp, 0);
        let o = oracle_unitary(&crate::model::dense_hamiltonian(&mp, &s)).unwrap();
        let x = Interval::point(2);
        let rotated = oracle::conjugate(&o.u, &z_dense(l, 2));
        let parts = tails(&rotated, l, x);
        for (n, t) in parts.iter().enumerate() {
            let p = partial_trace_average(t, l, x.grown(n, l));
            assert!(oracle::max_abs_diff(&p, t) < 1e-13);
        }
        assert!(oracle::spectral_norm(&parts[0]) <= 1.0 + 1e-12);
        assert!(completeness_defect(&o.u, l) < 1e-10);
    }

    #[test]
    fn oracle_unitary_diagonalizes() {
        let l = 3;
        let h = diag_sum(
            l,
            vec![
                XMonomial::z(l, 0).scale(C64::new(0.9, 0.0)),
                XMonomial::z(l, 1).scale(C64::new(0.4, 0.0)),
                XMonomial::z(l, 2).scale(C64::new(0.7, 0.0)),
                XMonomial::x(l, 1).scale(C64::new(0.05, 0.0)),
            ],
        )
        .to_dense();
        let o = oracle_unitary(&h).unwrap();
        assert!(o.well_defined);
        let r = liom_check(&o.u, &h, l).unwrap();
        assert!(r.max_residual() < 1e-12);
        let d = oracle::matmul(&oracle::matmul(&o.u.adjoint(), &h), &o.u);
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert!(d[(i, j)].norm() < 1e-12);
                }
            }
        }
    }
}
