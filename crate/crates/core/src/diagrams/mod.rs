//! Diagrams, triads and their factorial-weighted census.
//!
//! Orders are exact rationals: with a rational `β` every scale length
//! `L_k = (1+β)^k` and every reduced order is rational, so the strict
//! inequalities that separate scales are decided without rounding.

mod census;

pub use census::{census, Census, CensusRow, CensusState};

use std::sync::Arc;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;

use crate::pauli::{range_mask, sites_of, Interval};
use crate::{Error, Result};

/// Exact order of a diagram or triad.
pub type Order = Ratio<i128>;

/// Largest scale index supported by the exact arithmetic.
pub const MAX_SCALE: usize = 12;

pub fn order_to_f64(o: &Order) -> f64 {
    o.to_f64().unwrap_or(f64::NAN)
}

pub fn order_from_int(n: usize) -> Order {
    Order::from_integer(n as i128)
}

/// The scale ladder `L_k = (1+β)^k`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleLadder {
    beta: Order,
    lengths: Vec<Order>,
}

impl ScaleLadder {
    /// `β = num/den ∈ [1/2, 1)`.
    pub fn new(num: i128, den: i128) -> Result<Self> {
        if den <= 0 || num < 0 {
            return Err(Error::InvalidParameter(format!("beta = {num}/{den} is not a positive ratio")));
        }
        let beta = Order::new(num, den);
        if beta < Order::new(1, 2) || beta >= Order::one() {
            return Err(Error::InvalidParameter(format!("beta = {num}/{den} outside [1/2, 1)")));
        }
        let base = Order::one() + beta;
        let mut lengths = vec![Order::one()];
        for k in 1..=MAX_SCALE + 1 {
            lengths.push(lengths[k - 1] * base);
        }
        Ok(ScaleLadder { beta, lengths })
    }

    /// The proof value `β = 1 − 1/312`.
    pub fn proof_default() -> Self {
        ScaleLadder::new(311, 312).expect("valid beta")
    }

    /// Rational approximation of a float `β` with denominator `den`.
    pub fn from_f64(beta: f64, den: i128) -> Result<Self> {
        ScaleLadder::new((beta * den as f64).round() as i128, den)
    }

    pub fn beta(&self) -> Order {
        self.beta
    }

    pub fn beta_f64(&self) -> f64 {
        order_to_f64(&self.beta)
    }

    /// `L_k`; panics beyond [`MAX_SCALE`]` + 1`.
    pub fn length(&self, k: usize) -> Order {
        assert!(k <= MAX_SCALE + 1, "scale {k} beyond supported range");
        self.lengths[k]
    }

    pub fn length_f64(&self, k: usize) -> f64 {
        order_to_f64(&self.length(k))
    }
}

/// How a diagram was produced.
#[derive(Clone, Debug)]
pub enum Origin {
    /// Scale-0 couple `(S, I)`.
    Bare,
    /// Regenerated unchanged from the previous scale.
    TakenOver(Arc<Diagram>),
    /// `(t_0, t_1, …, t_n)` with `n ≥ 1`.
    Composite { head: Arc<Diagram>, triads: Vec<Arc<Triad>> },
    /// Representative of every diagram sharing these attributes.
    Class,
}

/// A diagram together with its attributes.
#[derive(Clone, Debug)]
pub struct Diagram {
    pub scale: usize,
    pub order: Order,
    pub bare_order: u32,
    pub domain: Interval,
    pub active: u64,
    pub factorial: BigUint,
    pub origin: Origin,
}

/// Attributes that determine every combinatorial rule.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DiagramKey {
    pub scale: usize,
    pub order: Order,
    pub bare_order: u32,
    pub domain: Interval,
    pub active: u64,
    pub factorial: BigUint,
}

/// Result of [`classify_crowded`].
#[derive(Clone, Debug, PartialEq)]
pub struct Crowding {
    pub crowded: bool,
    /// Present when the reduced order is defined (crowded, off-diagonal, `|g| < L_{k+1}`).
    pub reduced_order: Option<Order>,
}

impl Diagram {
    /// Scale-0 diagram `(S, I)`.
    pub fn bare(active: u64, domain: Interval) -> Result<Diagram> {
        if active & !domain.mask() != 0 {
            return Err(Error::InvalidParameter(format!("active set {active:#b} not inside {domain:?}")));
        }
        Ok(Diagram {
            scale: 0,
            order: order_from_int(domain.len()),
            bare_order: domain.len() as u32,
            domain,
            active,
            factorial: BigUint::one(),
            origin: Origin::Bare,
        })
    }

    /// Attribute-class representative.
    pub fn class(key: DiagramKey) -> Diagram {
        Diagram {
            scale: key.scale,
            order: key.order,
            bare_order: key.bare_order,
            domain: key.domain,
            active: key.active,
            factorial: key.factorial,
            origin: Origin::Class,
        }
    }

    /// Regenerate `g` at the next scale; requires `|g| ≥ L_{k+1}`.
    pub fn taken_over(g: Arc<Diagram>, ladder: &ScaleLadder) -> Result<Diagram> {
        if g.order < ladder.length(g.scale + 1) {
            return Err(Error::InvalidParameter("taken-over diagram needs order at least the next scale length".into()));
        }
        Ok(Diagram { scale: g.scale + 1, origin: Origin::TakenOver(g.clone()), ..(*g).clone() })
    }

    /// `(t_0, t_1, …, t_n)` at scale `k+1` with `n ≥ 1`.
    pub fn composite(head: Arc<Diagram>, triads: Vec<Arc<Triad>>, chain_len: usize) -> Result<Diagram> {
        if triads.is_empty() {
            return Err(Error::InvalidParameter("composite diagram needs at least one triad".into()));
        }
        if triads.iter().any(|t| t.scale != head.scale) {
            return Err(Error::InvalidParameter("triads and head must share a scale".into()));
        }
        let pieces: Vec<Piece> = std::iter::once(Piece::of_diagram(&head)).chain(triads.iter().map(|t| Piece::of_triad(t))).collect();
        for j in 1..pieces.len() {
            if !(0..j).any(|i| pieces[i].adjacent(&pieces[j], chain_len)) {
                return Err(Error::InvalidParameter(format!("triad {j} is not adjacent to an earlier component")));
            }
        }
        let mut d = Diagram {
            scale: head.scale + 1,
            order: Order::zero(),
            bare_order: 0,
            domain: head.domain,
            active: 0,
            factorial: BigUint::one(),
            origin: Origin::Composite { head, triads },
        };
        let key = d.recompute_key().expect("composite");
        d.order = key.order;
        d.bare_order = key.bare_order;
        d.domain = key.domain;
        d.active = key.active;
        d.factorial = key.factorial;
        Ok(d)
    }

    /// Attributes recomputed from the children, or `None` for bare diagrams and classes.
    pub fn recompute_key(&self) -> Option<DiagramKey> {
        match &self.origin {
            Origin::Bare | Origin::Class => None,
            Origin::TakenOver(g) => Some(DiagramKey { scale: g.scale + 1, ..g.key() }),
            Origin::Composite { head, triads } => {
                let n = triads.len();
                let mut order = head.order;
                let mut bare = head.bare_order;
                let mut domain = head.domain;
                let mut active = head.active;
                let mut fact = factorial(n) * &head.factorial;
                for t in triads {
                    order += t.order;
                    bare += t.bare_order;
                    domain = domain.hull(&t.domain);
                    active ^= t.active();
                    fact *= &t.factorial;
                }
                Some(DiagramKey { scale: head.scale + 1, order, bare_order: bare, domain, active, factorial: fact })
            }
        }
    }

    pub fn key(&self) -> DiagramKey {
        DiagramKey {
            scale: self.scale,
            order: self.order,
            bare_order: self.bare_order,
            domain: self.domain,
            active: self.active,
            factorial: self.factorial.clone(),
        }
    }

    pub fn is_diagonal(&self) -> bool {
        self.active == 0
    }

    /// `Ī(g)` clipped to the chain.
    pub fn extended_domain(&self, chain_len: usize) -> Interval {
        self.domain.extended(chain_len)
    }

    pub fn is_crowded(&self, ladder: &ScaleLadder) -> bool {
        ladder.beta() * self.order >= order_from_int(self.domain.len())
    }

    /// `max{|I(g)|, βL_k}`; defined for crowded off-diagonal `g` with `|g| < L_{k+1}`.
    pub fn reduced_order(&self, ladder: &ScaleLadder) -> Result<Order> {
        if self.is_diagonal() {
            return Err(Error::IneligibleReducedOrder("diagram is diagonal"));
        }
        if !self.is_crowded(ladder) {
            return Err(Error::IneligibleReducedOrder("diagram is not crowded"));
        }
        if self.order >= ladder.length(self.scale + 1) {
            return Err(Error::IneligibleReducedOrder("order reaches the next scale"));
        }
        Ok(order_from_int(self.domain.len()).max(ladder.beta() * ladder.length(self.scale)))
    }

    /// Structural bounds `|g| ≥ L_k`, `‖g‖ ≥ |g|`, `|g| ≥ |I(g)|`.
    pub fn bounds_hold(&self, ladder: &ScaleLadder) -> bool {
        self.order >= ladder.length(self.scale)
            && order_from_int(self.bare_order as usize) >= self.order
            && self.order >= order_from_int(self.domain.len())
    }

    pub fn to_json(&self) -> DiagramJson {
        let (kind, children) = match &self.origin {
            Origin::Bare => ("bare", vec![]),
            Origin::Class => ("class", vec![]),
            Origin::TakenOver(g) => ("taken-over", vec![ChildJson::Diagram(g.to_json())]),
            Origin::Composite { head, triads } => (
                "composite",
                std::iter::once(ChildJson::Diagram(head.to_json())).chain(triads.iter().map(|t| ChildJson::Triad(t.to_json()))).collect(),
            ),
        };
        DiagramJson {
            scale: self.scale,
            order: self.order.to_string(),
            bare_order: self.bare_order,
            domain: self.domain,
            active: sites_of(self.active).collect(),
            factorial: self.factorial.to_string(),
            kind,
            children,
        }
    }
}

/// Crowdedness and (where defined) reduced order of `g`.
pub fn classify_crowded(g: &Diagram, ladder: &ScaleLadder) -> Crowding {
    let crowded = g.is_crowded(ladder);
    Crowding { crowded, reduced_order: if crowded { g.reduced_order(ladder).ok() } else { None } }
}

pub fn factorial(n: usize) -> BigUint {
    (1..=n as u64).fold(BigUint::one(), |acc, i| acc * i)
}

/// A triad `(g, g', g'')` with optional gap diagrams.
#[derive(Clone, Debug)]
pub struct Triad {
    pub center: Arc<Diagram>,
    pub left: Option<Arc<Diagram>>,
    pub right: Option<Arc<Diagram>>,
    pub scale: usize,
    pub order: Order,
    pub bare_order: u32,
    pub domain: Interval,
    pub factorial: BigUint,
}

impl Triad {
    pub fn new(center: Arc<Diagram>, left: Option<Arc<Diagram>>, right: Option<Arc<Diagram>>, ladder: &ScaleLadder) -> Result<Triad> {
        if center.is_diagonal() {
            return Err(Error::DiagonalCentral);
        }
        let central_order = if center.is_crowded(ladder) { center.reduced_order(ladder)? } else { center.order };
        let mut order = central_order;
        let mut bare = center.bare_order;
        let mut domain = center.domain;
        let mut fact = center.factorial.clone();
        for g in left.iter().chain(right.iter()) {
            order += g.order;
            bare += g.bare_order;
            domain = domain.hull(&g.domain);
            fact *= &g.factorial;
        }
        Ok(Triad { scale: center.scale, center, left, right, order, bare_order: bare, domain, factorial: fact })
    }

    pub fn active(&self) -> u64 {
        self.center.active
    }

    /// `r(t) = min I(g) − min I(g')`, zero without a left gap diagram.
    pub fn left_offset(&self) -> usize {
        self.left.as_ref().map_or(0, |l| self.center.domain.lo - l.domain.lo)
    }

    /// `s(t) = max I(g'') − max I(g)`, zero without a right gap diagram.
    pub fn right_offset(&self) -> usize {
        self.right.as_ref().map_or(0, |r| r.domain.hi - self.center.domain.hi)
    }

    pub fn to_json(&self) -> TriadJson {
        TriadJson {
            scale: self.scale,
            order: self.order.to_string(),
            bare_order: self.bare_order,
            domain: self.domain,
            factorial: self.factorial.to_string(),
            left_offset: self.left_offset(),
            right_offset: self.right_offset(),
            center: Box::new(self.center.to_json()),
            left: self.left.as_ref().map(|g| Box::new(g.to_json())),
            right: self.right.as_ref().map(|g| Box::new(g.to_json())),
        }
    }
}

/// Active set and domain of a diagram or triad, enough for adjacency tests.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Piece {
    pub active: u64,
    pub domain: Interval,
}

impl Piece {
    pub fn of_diagram(g: &Diagram) -> Piece {
        Piece { active: g.active, domain: g.domain }
    }

    pub fn of_triad(t: &Triad) -> Piece {
        Piece { active: t.active(), domain: t.domain }
    }

    /// `(A(a) ∩ Ī(b)) ∪ (A(b) ∩ Ī(a)) ≠ ∅`.
    pub fn adjacent(&self, other: &Piece, chain_len: usize) -> bool {
        self.active & other.domain.extended(chain_len).mask() != 0 || other.active & self.domain.extended(chain_len).mask() != 0
    }
}

/// `A(g) ∩ Ī(g') ≠ ∅`.
fn touches(active: u64, g: &Diagram, chain_len: usize) -> bool {
    active & g.extended_domain(chain_len).mask() != 0
}

/// Left gap candidates `L(g)`, without the empty slot.
pub fn left_candidates<'a>(g: &Diagram, pool: &'a [Arc<Diagram>], chain_len: usize) -> Vec<&'a Arc<Diagram>> {
    pool.iter().filter(|p| touches(g.active, p, chain_len) && p.domain.lo < g.domain.lo).collect()
}

/// Right gap candidates `R(g, g')`, without the empty slot.
pub fn right_candidates<'a>(g: &Diagram, left: Option<&Diagram>, pool: &'a [Arc<Diagram>], chain_len: usize) -> Vec<&'a Arc<Diagram>> {
    let min_left = left.map_or(g.domain.lo, |l| l.domain.lo);
    pool.iter()
        .filter(|p| touches(g.active, p, chain_len) && p.domain.lo >= min_left && p.domain.hi > g.domain.hi)
        .collect()
}

/// Every triad with central diagram `g` and gap diagrams from `pool`.
pub fn build_triads(g: &Arc<Diagram>, pool: &[Arc<Diagram>], ladder: &ScaleLadder, chain_len: usize) -> Result<Vec<Triad>> {
    if g.is_diagonal() {
        return Err(Error::DiagonalCentral);
    }
    if g.order >= ladder.length(g.scale + 1) {
        return Err(Error::InvalidParameter("central diagram order reaches the next scale".into()));
    }
    let lefts: Vec<Option<&Arc<Diagram>>> = std::iter::once(None).chain(left_candidates(g, pool, chain_len).into_iter().map(Some)).collect();
    let mut out = Vec::new();
    for l in lefts {
        let rights = right_candidates(g, l.map(|a| a.as_ref()), pool, chain_len);
        for r in std::iter::once(None).chain(rights.into_iter().map(Some)) {
            out.push(Triad::new(g.clone(), l.cloned(), r.cloned(), ladder)?);
        }
    }
    Ok(out)
}

/// Every scale-0 diagram `(S, I)` on a chain, optionally restricted to `|I| ≤ max_len`.
pub fn scale_zero_diagrams(chain_len: usize, max_len: usize) -> Vec<Diagram> {
    let mut out = Vec::new();
    for len in 1..=max_len.min(chain_len) {
        for lo in 0..=chain_len - len {
            let iv = Interval::new(lo, lo + len - 1);
            for s in 0..1u64 << len {
                out.push(Diagram::bare(s << lo, iv).expect("subset of interval"));
            }
        }
    }
    out
}

/// Mask of the sites `lo..=hi` clipped to the chain.
pub fn clipped_mask(lo: i64, hi: i64, chain_len: usize) -> u64 {
    let lo = lo.max(0) as usize;
    let hi = (hi.min(chain_len as i64 - 1)).max(0) as usize;
    if lo > hi {
        0
    } else {
        range_mask(lo, hi)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DiagramJson {
    pub scale: usize,
    pub order: String,
    pub bare_order: u32,
    pub domain: Interval,
    pub active: Vec<usize>,
    pub factorial: String,
    pub kind: &'static str,
    pub children: Vec<ChildJson>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(untagged)]
pub enum ChildJson {
    Diagram(DiagramJson),
    Triad(TriadJson),
}

#[derive(Clone, Debug, Serialize)]
pub struct TriadJson {
    pub scale: usize,
    pub order: String,
    pub bare_order: u32,
    pub domain: Interval,
    pub factorial: String,
    pub left_offset: usize,
    pub right_offset: usize,
    pub center: Box<DiagramJson>,
    pub left: Option<Box<DiagramJson>>,
    pub right: Option<Box<DiagramJson>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> ScaleLadder {
        ScaleLadder::new(9, 10).unwrap()
    }

    fn synthetic(scale: usize, order: Order, domain: Interval, active: u64) -> Diagram {
        Diagram::class(DiagramKey { scale, order, bare_order: 20, domain, active, factorial: BigUint::one() })
    }

    #[test]
    fn ladder_lengths_are_exact() {
        let l = ladder();
        assert_eq!(l.length(0), Order::one());
        assert_eq!(l.length(2), Order::new(361, 100));
        for k in 0..5 {
            assert_eq!(l.length(k + 1) / l.length(k), Order::new(19, 10));
        }
        assert!(ScaleLadder::new(1, 1).is_err());
        assert!(ScaleLadder::new(2, 5).is_err());
        assert_eq!(ScaleLadder::proof_default().beta(), Order::new(311, 312));
    }

    #[test]
    fn scale_zero_diagrams_are_not_crowded() {
        for g in scale_zero_diagrams(5, 5) {
            assert!(!g.is_crowded(&ladder()));
            assert!(g.bounds_hold(&ladder()));
        }
    }

    #[test]
    fn crowded_and_reduced_order_examples() {
        let g = synthetic(1, order_from_int(10), Interval::new(0, 3), 1);
        assert!(g.is_crowded(&ladder()));
        let g = synthetic(2, Order::new(37, 10), Interval::new(0, 2), 1);
        let c = classify_crowded(&g, &ladder());
        assert!(c.crowded);
        assert_eq!(c.reduced_order, Some(Order::new(3249, 1000)));
        assert!(c.reduced_order.unwrap() <= ladder().beta() * g.order);
        let diag = synthetic(2, Order::new(37, 10), Interval::new(0, 2), 0);
        assert_eq!(diag.reduced_order(&ladder()), Err(Error::IneligibleReducedOrder("diagram is diagonal")));
        let big = synthetic(2, order_from_int(8), Interval::new(0, 2), 1);
        assert!(big.reduced_order(&ladder()).is_err());
    }

    #[test]
    fn empty_pool_gives_single_triad() {
        let g = Arc::new(Diagram::bare(0b100, Interval::point(2)).unwrap());
        let ts = build_triads(&g, &[], &ladder(), 6).unwrap();
        assert_eq!(ts.len(), 1);
        assert_eq!((ts[0].left_offset(), ts[0].right_offset()), (0, 0));
        let diag = Arc::new(Diagram::bare(0, Interval::point(2)).unwrap());
        assert!(matches!(build_triads(&diag, &[], &ladder(), 6), Err(Error::DiagonalCentral)));
    }

    #[test]
    fn pool_member_out_of_reach_is_excluded() {
        let g = Arc::new(synthetic(1, order_from_int(3), Interval::new(3, 5), 0b001000));
        let far = Arc::new(synthetic(0, order_from_int(1), Interval::point(0), 0));
        let near = Arc::new(synthetic(0, order_from_int(1), Interval::point(2), 0));
        let pool = vec![far, near];
        let lefts = left_candidates(&g, &pool, 8);
        assert_eq!(lefts.len(), 1);
        assert_eq!(lefts[0].domain, Interval::point(2));
    }

    #[test]
    fn figure_geometry_candidate_sets() {
        // central on [2,6], left piece [1,3], right piece [4,7], and a wide piece [1,7]
        let l = ladder();
        let g = Arc::new(synthetic(2, order_from_int(5), Interval::new(2, 6), 0b0100_0100));
        let a = Arc::new(synthetic(1, order_from_int(3), Interval::new(1, 3), 0));
        let b = Arc::new(synthetic(1, order_from_int(3), Interval::new(4, 7), 0));
        let c = Arc::new(synthetic(1, order_from_int(3), Interval::new(1, 7), 0));
        let pool = vec![a, b, c];
        let lefts: Vec<Interval> = left_candidates(&g, &pool, 10).iter().map(|d| d.domain).collect();
        assert_eq!(lefts, vec![Interval::new(1, 3), Interval::new(1, 7)]);
        let r_empty: Vec<Interval> = right_candidates(&g, None, &pool, 10).iter().map(|d| d.domain).collect();
        assert_eq!(r_empty, vec![Interval::new(4, 7)]);
        let r_a: Vec<Interval> = right_candidates(&g, Some(&pool[0]), &pool, 10).iter().map(|d| d.domain).collect();
        assert_eq!(r_a, vec![Interval::new(4, 7), Interval::new(1, 7)]);
        let r_c: Vec<Interval> = right_candidates(&g, Some(&pool[2]), &pool, 10).iter().map(|d| d.domain).collect();
        assert_eq!(r_c, vec![Interval::new(4, 7), Interval::new(1, 7)]);
        let ts = build_triads(&g, &pool, &l, 10).unwrap();
        // (∅: ∅, b) + (a: ∅, b, c) + (c: ∅, b, c)
        assert_eq!(ts.len(), 8);
        let t = ts.iter().find(|t| t.left.is_some() && t.right.is_some() && t.left.as_ref().unwrap().domain.lo == 1 && t.right.as_ref().unwrap().domain.lo == 4).unwrap();
        assert_eq!((t.left_offset(), t.right_offset()), (1, 1));
    }

    #[test]
    fn composite_attributes() {
        let l = ladder();
        let head = Arc::new(Diagram::bare(0b0010, Interval::new(1, 2)).unwrap());
        let c = Arc::new(Diagram::bare(0b0100, Interval::point(2)).unwrap());
        let t = Arc::new(Triad::new(c, None, None, &l).unwrap());
        let g = Diagram::composite(head.clone(), vec![t.clone(), t.clone()], 4).unwrap();
        assert_eq!(g.scale, 1);
        assert_eq!(g.order, order_from_int(4));
        assert_eq!(g.bare_order, 4);
        assert_eq!(g.active, 0b0010);
        assert_eq!(g.factorial, BigUint::from(2u32));
        assert!(g.bounds_hold(&l));
        let far = Arc::new(Triad::new(Arc::new(Diagram::bare(0b100000, Interval::point(5)).unwrap()), None, None, &l).unwrap());
        assert!(Diagram::composite(head, vec![far], 8).is_err());
    }

    #[test]
    fn taken_over_requires_large_order() {
        let l = ladder();
        let small = Arc::new(Diagram::bare(1, Interval::point(0)).unwrap());
        assert!(Diagram::taken_over(small, &l).is_err());
        let big = Arc::new(Diagram::bare(1, Interval::new(0, 1)).unwrap());
        let t = Diagram::taken_over(big.clone(), &l).unwrap();
        assert_eq!(t.scale, 1);
        assert_eq!(t.recompute_key().unwrap(), DiagramKey { scale: 1, ..big.key() });
        let json = serde_json::to_string(&t.to_json()).unwrap();
        assert!(json.contains("taken-over"));
    }
}
