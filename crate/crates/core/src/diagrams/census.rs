use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use super::{factorial, order_from_int, Order, ScaleLadder, MAX_SCALE};
use crate::pauli::Interval;
use crate::{Error, Result};

/// Attributes that the composition rules depend on; weights carry `Σ 1/g!`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct ClassKey {
    order: Order,
    bare: u32,
    domain: Interval,
    active: u64,
}

/// Partial tuple `(t_0, t_1, …, t_n)` up to reordering-invariant data.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct CensusState {
    pub hull: Interval,
    pub union_active: u64,
    pub xor_active: u64,
    pub order: Order,
    pub bare: u32,
    pub n: usize,
}

/// One census entry `N(x, k, w) = Σ_{‖g‖ = w, min I(g) = x} 1/g!`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensusRow {
    pub x: usize,
    pub k: usize,
    pub w: u32,
    #[serde(serialize_with = "ser_ratio")]
    pub n: BigRational,
}

fn ser_ratio<S: serde::Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl CensusRow {
    pub fn value(&self) -> f64 {
        self.n.to_f64().unwrap_or(f64::NAN)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Census {
    pub chain_len: usize,
    pub k_max: usize,
    pub w_max: u32,
    pub rows: Vec<CensusRow>,
    /// Smallest `C` with `N ≤ C^w` on every row.
    pub fitted_c: f64,
}

impl Census {
    pub fn get(&self, x: usize, k: usize, w: u32) -> Option<&BigRational> {
        self.rows.iter().find(|r| r.x == x && r.k == k && r.w == w).map(|r| &r.n)
    }
}

type Weighted = BTreeMap<ClassKey, BigRational>;

fn add_weight<K: Ord>(map: &mut BTreeMap<K, BigRational>, key: K, w: BigRational) {
    let e = map.entry(key).or_insert_with(BigRational::zero);
    *e += w;
}

fn extended(iv: Interval, chain_len: usize) -> u64 {
    iv.extended(chain_len).mask()
}

/// Factorial-weighted census of all diagrams with bare order `≤ w_max` up to scale `k_max`.
///
/// `max_states` bounds the number of partial tuples held at once.
pub fn census(chain_len: usize, k_max: usize, w_max: u32, ladder: &ScaleLadder, max_states: usize) -> Result<Census> {
    crate::pauli::check_chain(chain_len)?;
    if k_max >= MAX_SCALE {
        return Err(Error::InvalidParameter(format!("k_max = {k_max} beyond supported {}", MAX_SCALE - 1)));
    }
    let mut classes: Weighted = BTreeMap::new();
    for len in 1..=(w_max as usize).min(chain_len) {
        for lo in 0..=chain_len - len {
            let iv = Interval::new(lo, lo + len - 1);
            for s in 0..1u64 << len {
                let key = ClassKey { order: order_from_int(len), bare: len as u32, domain: iv, active: s << lo };
                add_weight(&mut classes, key, BigRational::one());
            }
        }
    }
    let mut rows = Vec::new();
    record(&classes, 0, chain_len, w_max, &mut rows);
    let mut pool: Vec<(ClassKey, BigRational)> = Vec::new();
    for k in 0..k_max {
        let next_len = ladder.length(k + 1);
        let triads = triad_classes(&classes, &pool, ladder, k, chain_len, w_max)?;
        let mut next: Weighted = BTreeMap::new();
        for (key, w) in &classes {
            if key.order >= next_len {
                add_weight(&mut next, key.clone(), w.clone());
            }
        }
        compose(&classes, &triads, chain_len, w_max, max_states, &mut next)?;
        for (key, w) in &classes {
            if key.active == 0 && key.order < next_len {
                pool.push((key.clone(), w.clone()));
            }
        }
        classes = next;
        record(&classes, k + 1, chain_len, w_max, &mut rows);
    }
    let fitted_c = rows
        .iter()
        .filter(|r| r.n > BigRational::zero())
        .map(|r| r.value().powf(1.0 / r.w as f64))
        .fold(0.0, f64::max);
    Ok(Census { chain_len, k_max, w_max, rows, fitted_c })
}

fn record(classes: &Weighted, k: usize, chain_len: usize, w_max: u32, rows: &mut Vec<CensusRow>) {
    let mut table: BTreeMap<(usize, u32), BigRational> = BTreeMap::new();
    for (key, w) in classes {
        add_weight(&mut table, (key.domain.lo, key.bare), w.clone());
    }
    for x in 0..chain_len {
        for w in 1..=w_max {
            let n = table.remove(&(x, w)).unwrap_or_else(BigRational::zero);
            rows.push(CensusRow { x, k, w, n });
        }
    }
}

/// Triad classes at scale `k`, merged by (order, bare order, domain, active set).
fn triad_classes(
    classes: &Weighted,
    pool: &[(ClassKey, BigRational)],
    ladder: &ScaleLadder,
    k: usize,
    chain_len: usize,
    w_max: u32,
) -> Result<Weighted> {
    let next_len = ladder.length(k + 1);
    let beta = ladder.beta();
    let mut out: Weighted = BTreeMap::new();
    for (g, wg) in classes {
        if g.active == 0 || g.order >= next_len {
            continue;
        }
        let len = order_from_int(g.domain.len());
        let central = if beta * g.order >= len { len.max(beta * ladder.length(k)) } else { g.order };
        let touches = |p: &ClassKey| g.active & extended(p.domain, chain_len) != 0;
        let lefts = std::iter::once(None).chain(pool.iter().filter(|(p, _)| touches(p) && p.domain.lo < g.domain.lo).map(Some));
        for l in lefts {
            let min_left = l.map_or(g.domain.lo, |(p, _)| p.domain.lo);
            let rights = std::iter::once(None)
                .chain(pool.iter().filter(|(p, _)| touches(p) && p.domain.lo >= min_left && p.domain.hi > g.domain.hi).map(Some));
            for r in rights {
                let mut order = central;
                let mut bare = g.bare;
                let mut domain = g.domain;
                let mut weight = wg.clone();
                for (p, wp) in l.iter().chain(r.iter()).copied() {
                    order += p.order;
                    bare += p.bare;
                    domain = domain.hull(&p.domain);
                    weight *= wp;
                }
                if bare <= w_max {
                    add_weight(&mut out, ClassKey { order, bare, domain, active: g.active }, weight);
                }
            }
        }
    }
    Ok(out)
}

/// Weighted composites `(t_0, t_1, …, t_n)`, `n ≥ 1`, accumulated into `out`.
fn compose(classes: &Weighted, triads: &Weighted, chain_len: usize, w_max: u32, max_states: usize, out: &mut Weighted) -> Result<()> {
    if triads.is_empty() {
        return Ok(());
    }
    let min_triad_bare = triads.keys().map(|t| t.bare).min().unwrap();
    let mut level: BTreeMap<CensusState, BigRational> = BTreeMap::new();
    for (g, w) in classes {
        if g.bare + min_triad_bare <= w_max {
            let s = CensusState { hull: g.domain, union_active: g.active, xor_active: g.active, order: g.order, bare: g.bare, n: 0 };
            add_weight(&mut level, s, w.clone());
        }
    }
    while !level.is_empty() {
        let mut next: BTreeMap<CensusState, BigRational> = BTreeMap::new();
        for (s, ws) in &level {
            let hull_ext = extended(s.hull, chain_len);
            for (t, wt) in triads {
                if s.bare + t.bare > w_max {
                    continue;
                }
                if s.union_active & extended(t.domain, chain_len) == 0 && t.active & hull_ext == 0 {
                    continue;
                }
                let ns = CensusState {
                    hull: s.hull.hull(&t.domain),
                    union_active: s.union_active | t.active,
                    xor_active: s.xor_active ^ t.active,
                    order: s.order + t.order,
                    bare: s.bare + t.bare,
                    n: s.n + 1,
                };
                add_weight(&mut next, ns, ws * wt);
            }
        }
        if next.len() > max_states {
            return Err(Error::BudgetExceeded { dim: next.len(), budget: max_states });
        }
        for (s, w) in &next {
            let inv_fact = BigRational::new(BigInt::one(), BigInt::from(factorial(s.n)));
            let key = ClassKey { order: s.order, bare: s.bare, domain: s.hull, active: s.xor_active };
            add_weight(out, key, w * inv_fact);
        }
        level = next.into_iter().filter(|(s, _)| s.bare + min_triad_bare <= w_max).collect();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> ScaleLadder {
        ScaleLadder::new(9, 10).unwrap()
    }

    #[test]
    fn scale_zero_counts_are_powers_of_two() {
        let c = census(8, 0, 6, &ladder(), 1 << 20).unwrap();
        for w in 1..=6u32 {
            for x in 0..8usize {
                let expected = if x + w as usize <= 8 { BigRational::from_integer(BigInt::from(1u64 << w)) } else { BigRational::zero() };
                assert_eq!(c.get(x, 0, w).unwrap(), &expected, "x={x} w={w}");
            }
        }
        assert!((c.fitted_c - 2.0).abs() < 1e-12);
    }

    #[test]
    fn orders_below_scale_length_are_absent() {
        let c = census(6, 2, 6, &ladder(), 1 << 20).unwrap();
        // L_2 = 3.61: no scale-2 diagram of bare order ≤ 3
        for r in c.rows.iter().filter(|r| r.k == 2 && r.w <= 3) {
            assert!(r.n.is_zero(), "{r:?}");
        }
        assert!(c.rows.iter().any(|r| r.k == 2 && !r.n.is_zero()));
    }

    #[test]
    fn census_is_stable_under_larger_truncation() {
        let a = census(5, 1, 5, &ladder(), 1 << 20).unwrap();
        let b = census(5, 1, 7, &ladder(), 1 << 20).unwrap();
        for r in &a.rows {
            assert_eq!(b.get(r.x, r.k, r.w).unwrap(), &r.n);
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(census(6, 1, 8, &ladder(), 3), Err(Error::BudgetExceeded { .. })));
    }
}
