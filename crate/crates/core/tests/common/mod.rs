//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use mblflow_core::pauli::{DiagFn, C64};
use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Bare scale-0 diagram or triad, reduced to what adjacency and counting need.
#[derive(Clone, Copy, Debug)]
pub struct Piece {
    pub lo: usize,
    pub hi: usize,
    pub active: u64,
    pub bare: u32,
}

fn span(lo: usize, hi: usize, chain_len: usize) -> u64 {
    let lo = lo.saturating_sub(1);
    let hi = (hi + 1).min(chain_len - 1);
    (lo..=hi).fold(0, |m, x| m | 1 << x)
}

fn adjacent(a: &Piece, b: &Piece, chain_len: usize) -> bool {
    a.active & span(b.lo, b.hi, chain_len) != 0 || b.active & span(a.lo, a.hi, chain_len) != 0
}

/// Factorial-weighted counts `N(x, k, w)` for `k ∈ {0, 1}` by explicit enumeration of every
/// ordered tuple `(t_0, t_1, …, t_n)`. Requires `1 + β < 2` so that the first rotated scale
/// holds exactly the single-site terms. The diagonal pool only collects earlier scales, so
/// it is empty here and every triad is a bare central diagram.
pub fn brute_force_census(chain_len: usize, w_max: u32) -> BTreeMap<(usize, usize, u32), BigRational> {
    let mut scale0 = Vec::new();
    for lo in 0..chain_len {
        for hi in lo..chain_len {
            let len = hi - lo + 1;
            for s in 0..1u64 << len {
                scale0.push(Piece { lo, hi, active: s << lo, bare: len as u32 });
            }
        }
    }
    let pool: Vec<Piece> = Vec::new();
    let centers: Vec<Piece> = scale0.iter().copied().filter(|p| p.active != 0 && p.lo == p.hi).collect();
    let triads = build_triads(&centers, &pool, chain_len);

    // counts[(x, w, n)] of ordered tuples with n triads
    let mut counts: BTreeMap<(usize, u32, usize), u64> = BTreeMap::new();
    let mut out: BTreeMap<(usize, usize, u32), BigRational> = BTreeMap::new();
    for head in &scale0 {
        if head.bare > w_max {
            continue;
        }
        *out.entry((0, head.lo, head.bare)).or_insert_with(BigRational::zero) += BigRational::one();
        if head.lo != head.hi {
            // taken over unchanged
            *counts.entry((head.lo, head.bare, 0)).or_insert(0) += 1;
        }
        let mut stack = vec![*head];
        extend(&mut stack, &triads, chain_len, w_max, head.bare, &mut counts);
    }
    for ((x, w, n), c) in counts {
        let f: BigInt = (1..=n as u64).fold(BigInt::one(), |a, i| a * i);
        *out.entry((1, x, w)).or_insert_with(BigRational::zero) += BigRational::new(BigInt::from(c), f);
    }
    out
}

fn extend(stack: &mut Vec<Piece>, triads: &[Piece], chain_len: usize, w_max: u32, bare: u32, counts: &mut BTreeMap<(usize, u32, usize), u64>) {
    for t in triads {
        if bare + t.bare > w_max || !stack.iter().any(|p| adjacent(p, t, chain_len)) {
            continue;
        }
        stack.push(*t);
        let lo = stack.iter().map(|p| p.lo).min().unwrap();
        *counts.entry((lo, bare + t.bare, stack.len() - 1)).or_insert(0) += 1;
        extend(stack, triads, chain_len, w_max, bare + t.bare, counts);
        stack.pop();
    }
}

/// Triads `(g, g', g'')` with gap diagrams from `pool`, or empty slots.
pub fn build_triads(centers: &[Piece], pool: &[Piece], chain_len: usize) -> Vec<Piece> {
    let mut triads = Vec::new();
    for g in centers {
        let touches = |p: &Piece| g.active & span(p.lo, p.hi, chain_len) != 0;
        let mut lefts = vec![None];
        lefts.extend(pool.iter().filter(|p| touches(p) && p.lo < g.lo).map(Some));
        for l in lefts {
            let min_left = l.map_or(g.lo, |p| p.lo);
            let mut rights = vec![None];
            rights.extend(pool.iter().filter(|p| touches(p) && p.lo >= min_left && p.hi > g.hi).map(Some));
            for r in rights {
                let mut t = *g;
                for p in l.iter().chain(r.iter()) {
                    t.lo = t.lo.min(p.lo);
                    t.hi = t.hi.max(p.hi);
                    t.bare += p.bare;
                }
                triads.push(t);
            }
        }
    }
    triads
}

/// Configuration word of a dense basis index: site 0 is the most significant bit.
pub fn bits_of(index: usize, chain_len: usize) -> u64 {
    (0..chain_len).filter(|&x| (index >> (chain_len - 1 - x)) & 1 == 1).fold(0, |b, x| b | 1 << x)
}

/// `X_S f(Z)` assembled from Kronecker products, without the monomial code.
pub fn reference_dense(chain_len: usize, active: u64, f: &DiagFn) -> DMatrix<C64> {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let x = DMatrix::from_row_slice(2, 2, &[zero, one, one, zero]);
    let id = DMatrix::<C64>::identity(2, 2);
    let mut flip = DMatrix::<C64>::identity(1, 1);
    for site in 0..chain_len {
        flip = flip.kronecker(if active >> site & 1 == 1 { &x } else { &id });
    }
    let n = 1 << chain_len;
    let diag = DMatrix::from_fn(n, n, |i, j| if i == j { f.eval(bits_of(i, chain_len)) } else { zero });
    flip * diag
}
