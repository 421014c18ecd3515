//! Diagram-resolved flow: one operator per diagram class, generators from triads.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_bigint::BigUint;
use num_traits::ToPrimitive;

use super::{count, describe, drift_against, flip_derivative, FlowParams, FlowRun, FlowState, ResonanceEvent, ResonanceKind, ScaleRow};
use crate::diagrams::{factorial, order_to_f64, Diagram, DiagramKey, Order, ScaleLadder, Triad};
use crate::model::{self, BareSplit, DisorderSample, ModelParams};
use crate::pauli::{DiagFn, Interval, OperatorSum, Parity, XMonomial, C64};
use crate::{Error, Result};

/// `V^(k)(g)` for one diagram class.
#[derive(Clone, Debug)]
pub struct ClassEntry {
    pub diagram: Arc<Diagram>,
    pub op: XMonomial,
    /// Carried over because a denominator of one of its triads hit the floor.
    pub deferred: bool,
}

/// A diagonal class absorbed into the energy, `E^(k)(g') = V^(j−1)(g')`.
#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub diagram: Arc<Diagram>,
    pub energy: DiagFn,
}

#[derive(Clone, Debug)]
pub struct TriadicState {
    pub k: usize,
    pub chain_len: usize,
    pub e0: DiagFn,
    pub pool: Vec<PoolEntry>,
    pub classes: Vec<ClassEntry>,
}

impl TriadicState {
    /// Scale-0 classes `(S, I)` from the bare split; vanishing components are dropped.
    pub fn from_split(chain_len: usize, split: &BareSplit, drop_tol: f64) -> Result<Self> {
        let e0 = split.e0.diagonal_function()?;
        let mut classes = Vec::new();
        for t in &split.terms {
            if t.term.norm() <= drop_tol {
                continue;
            }
            let d = Diagram::bare(t.active, t.interval)?;
            classes.push(ClassEntry { diagram: Arc::new(d), op: t.term.refit(drop_tol), deferred: false });
        }
        Ok(TriadicState { k: 0, chain_len, e0, pool: Vec::new(), classes })
    }

    /// `E^(k) = E^(0) + Σ_{pool} E^(k)(g')`.
    pub fn energy(&self) -> DiagFn {
        self.pool.iter().fold(self.e0.clone(), |acc, p| acc.zip_with(&p.energy, |a, b| a + b))
    }

    pub fn energy_operator(&self) -> Result<OperatorSum> {
        OperatorSum::from_monomials(self.chain_len, Parity::Hermitian, [XMonomial::new(self.chain_len, 0, self.energy())?])
    }

    /// `V^(k) = Σ_g V^(k)(g)`.
    pub fn perturbation(&self) -> Result<OperatorSum> {
        OperatorSum::from_monomials(self.chain_len, Parity::Hermitian, self.classes.iter().map(|c| c.op.clone()))
    }

    pub fn hamiltonian(&self) -> Result<OperatorSum> {
        self.energy_operator()?.add(&self.perturbation()?)
    }
}

/// `A^(k+1)(t)` for one triad.
#[derive(Clone, Debug)]
pub struct TriadTerm {
    pub triad: Triad,
    pub a: XMonomial,
    /// `‖1/D_1(t)‖`.
    pub inv_d1: f64,
    /// `‖1/D_2(t)‖`.
    pub inv_d2: f64,
    /// Smallest entry of the truncated denominators used by this term.
    pub min_den: f64,
}

fn touches(active: u64, domain: &Interval, chain_len: usize) -> bool {
    active & domain.extended(chain_len).mask() != 0
}

/// Truncated denominators `(∂_g E)_{u,v}` of one central diagram.
struct Denominators<'a> {
    g: &'a Diagram,
    base: DiagFn,
    derivs: Vec<Option<DiagFn>>,
    pool: &'a [PoolEntry],
    cache: HashMap<(i64, i64), DiagFn>,
}

impl<'a> Denominators<'a> {
    fn new(g: &'a Diagram, e0: &DiagFn, pool: &'a [PoolEntry], chain_len: usize) -> Self {
        let derivs = pool
            .iter()
            .map(|p| touches(g.active, &p.diagram.domain, chain_len).then(|| flip_derivative(&p.energy, g.active)))
            .collect();
        Denominators { g, base: flip_derivative(e0, g.active), derivs, pool, cache: HashMap::new() }
    }

    fn derivative(&self, i: usize) -> &DiagFn {
        self.derivs[i].as_ref().expect("gap diagram touches the central one")
    }

    fn get(&mut self, u: i64, v: i64) -> DiagFn {
        if u < 0 || v < 0 {
            return DiagFn::one();
        }
        if let Some(d) = self.cache.get(&(u, v)) {
            return d.clone();
        }
        let lo = self.g.domain.lo as i64 - u;
        let hi = self.g.domain.hi as i64 + v;
        let mut d = self.base.clone();
        for (i, p) in self.pool.iter().enumerate() {
            if let Some(dp) = &self.derivs[i] {
                if p.diagram.domain.lo as i64 >= lo && p.diagram.domain.hi as i64 <= hi {
                    d = d.zip_with(dp, |a, b| a + b);
                }
            }
        }
        self.cache.insert((u, v), d.clone());
        d
    }
}

fn re_min_abs(d: &DiagFn) -> f64 {
    d.table().iter().map(|v| v.re.abs()).fold(f64::INFINITY, f64::min)
}

fn inv_max(d: &DiagFn) -> f64 {
    d.table().iter().map(|v| 1.0 / v.re.abs()).fold(0.0, f64::max)
}

/// Every triad of the central class `g` with its generator term.
pub fn solve_generator_triadic(
    g: &Arc<Diagram>,
    v_g: &XMonomial,
    e0: &DiagFn,
    pool: &[PoolEntry],
    ladder: &ScaleLadder,
    chain_len: usize,
) -> Result<Vec<TriadTerm>> {
    if g.is_diagonal() {
        return Err(Error::DiagonalCentral);
    }
    if g.order >= ladder.length(g.scale + 1) {
        return Err(Error::InvalidParameter("central diagram order reaches the next scale".into()));
    }
    let mut dens = Denominators::new(g, e0, pool, chain_len);
    let lefts: Vec<Option<usize>> = std::iter::once(None)
        .chain((0..pool.len()).filter(|&i| dens.derivs[i].is_some() && pool[i].diagram.domain.lo < g.domain.lo).map(Some))
        .collect();
    let mut out = Vec::new();
    for l in lefts {
        let min_left = l.map_or(g.domain.lo, |i| pool[i].diagram.domain.lo);
        let rights: Vec<Option<usize>> = std::iter::once(None)
            .chain(
                (0..pool.len())
                    .filter(|&j| {
                        let d = &pool[j].diagram.domain;
                        dens.derivs[j].is_some() && d.lo >= min_left && d.hi > g.domain.hi
                    })
                    .map(Some),
            )
            .collect();
        for r in rights {
            let triad = Triad::new(g.clone(), l.map(|i| pool[i].diagram.clone()), r.map(|j| pool[j].diagram.clone()), ladder)?;
            let ro = triad.left_offset() as i64;
            let so = triad.right_offset() as i64;
            let d_rs = dens.get(ro, so);
            let d_rs1 = dens.get(ro, so - 1);
            let d_r1s = dens.get(ro - 1, so);
            let d_r1s1 = dens.get(ro - 1, so - 1);
            let second = ro != 0 && so != 0 && l.map(|i| pool[i].diagram.domain.lo) != r.map(|j| pool[j].diagram.domain.lo);
            let d1 = d_rs.zip_with(&d_rs1, |a, b| a * b).zip_with(&d_r1s, |a, b| a * b);
            let d2 = d_rs1.zip_with(&d_r1s, |a, b| a * b).zip_with(&d_r1s1, |a, b| a * b);
            let resolvent = if second { d1.zip_with(&d2, |a, b| C64::new(1.0 / a.re + 1.0 / b.re, 0.0)) } else { d1.map(|a| C64::new(1.0 / a.re, 0.0)) };
            let sign = if (ro == 0) ^ (so == 0) { -1.0 } else { 1.0 };
            let mut num = v_g.diag().map(|x| x * sign);
            if let Some(i) = l {
                num = num.zip_with(dens.derivative(i), |a, b| a * b.re);
            }
            if let Some(j) = r {
                num = num.zip_with(dens.derivative(j), |a, b| a * b.re);
            }
            let diag = num.zip_with(&resolvent, |a, b| a * b);
            let mut min_den = re_min_abs(&d_rs).min(re_min_abs(&d_rs1)).min(re_min_abs(&d_r1s));
            if second {
                min_den = min_den.min(re_min_abs(&d_r1s1));
            }
            out.push(TriadTerm { a: XMonomial::new(chain_len, g.active, diag)?, inv_d1: inv_max(&d1), inv_d2: inv_max(&d2), min_den, triad });
        }
    }
    Ok(out)
}

/// `A(g) = V(g) · (1/∂_g E)`.
pub fn first_representation(v_g: &XMonomial, energy: &DiagFn) -> Result<XMonomial> {
    let d = flip_derivative(energy, v_g.active());
    XMonomial::new(v_g.chain_len(), v_g.active(), v_g.diag().zip_with(&d, |a, b| a / b.re))
}

/// NR_I and NR_II checks for the triads of one central diagram.
pub fn detect_resonances(k: usize, terms: &[TriadTerm], params: &FlowParams, gamma: f64) -> Vec<ResonanceEvent> {
    let mut out = Vec::new();
    for t in terms {
        let g = &t.triad.center;
        let desc = || format!("{} r={} s={}", describe(&t.a), t.triad.left_offset(), t.triad.right_offset());
        let nr1 = params.epsilon.powf(-order_to_f64(&g.order));
        let worst = t.inv_d1.max(t.inv_d2);
        if worst > nr1 {
            out.push(ResonanceEvent { k, kind: ResonanceKind::NrI, descriptor: desc(), value: worst, threshold: nr1 });
        }
        if !g.is_crowded(&params.ladder) {
            let order = order_to_f64(&t.triad.order);
            let fact = t.triad.factorial.to_f64().unwrap_or(f64::INFINITY);
            let bound = params.delta.powf(t.triad.bare_order as f64 - order) * (gamma / params.epsilon).powf(order) / (4.0 * fact);
            let norm = t.a.norm();
            if norm > bound {
                out.push(ResonanceEvent { k, kind: ResonanceKind::NrII, descriptor: desc(), value: norm, threshold: bound });
            }
        }
    }
    out
}

/// Outcome of one triadic step.
#[derive(Clone, Debug)]
pub struct TriadicStep {
    pub state: TriadicState,
    pub generator: OperatorSum,
    pub events: Vec<ResonanceEvent>,
    /// Largest entrywise gap between `Σ_t A(t)` and `V(g)/∂_g E` over rotated classes.
    pub equivalence_defect: f64,
    /// `‖Σ_rotated V(g) + [A, E]‖`.
    pub residual: f64,
    pub deferred_classes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct TriadClassKey {
    order: Order,
    bare: u32,
    domain: Interval,
    active: u64,
    factorial: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct PartialKey {
    hull: Interval,
    union_active: u64,
    xor_active: u64,
    order: Order,
    bare: u32,
    n: usize,
    factorial: BigUint,
}

fn add_into<K: Ord>(map: &mut BTreeMap<K, XMonomial>, key: K, m: XMonomial) {
    match map.get_mut(&key) {
        Some(x) => x.add_assign(&m),
        None => {
            map.insert(key, m);
        }
    }
}

/// `E^(k) + V^(k) → E^(k+1) + V^(k+1)` resolved by diagram class, truncated at bare order `w_max`.
pub fn triadic_step(st: &TriadicState, params: &FlowParams, gamma: f64) -> Result<TriadicStep> {
    let l = st.chain_len;
    let ladder = &params.ladder;
    let next_len = ladder.length(st.k + 1);
    let energy = st.energy();
    let mut events = Vec::new();
    let mut generator_terms = Vec::new();
    let mut rotated_v = Vec::new();
    let mut rotated = vec![false; st.classes.len()];
    let mut deferred = vec![false; st.classes.len()];
    let mut triad_classes: BTreeMap<TriadClassKey, XMonomial> = BTreeMap::new();
    let mut defect: f64 = 0.0;
    for (ci, c) in st.classes.iter().enumerate() {
        let g = &c.diagram;
        if g.is_diagonal() || g.order >= next_len {
            continue;
        }
        let terms = solve_generator_triadic(g, &c.op, &st.e0, &st.pool, ladder, l)?;
        let floor = params.floor_for(g.domain.len());
        if let Some(worst) = terms.iter().map(|t| t.min_den).reduce(f64::min).filter(|&m| m < floor) {
            events.push(ResonanceEvent { k: st.k, kind: ResonanceKind::DenominatorFloor, descriptor: describe(&c.op), value: worst, threshold: floor });
            deferred[ci] = true;
            continue;
        }
        events.extend(detect_resonances(st.k, &terms, params, gamma));
        let first = first_representation(&c.op, &energy)?;
        let mut total = XMonomial::new(l, g.active, DiagFn::zero())?;
        for t in terms {
            total.add_assign(&t.a);
            let key = TriadClassKey {
                order: t.triad.order,
                bare: t.triad.bare_order,
                domain: t.triad.domain,
                active: g.active,
                factorial: t.triad.factorial.clone(),
            };
            add_into(&mut triad_classes, key, t.a);
        }
        defect = defect.max(total.diag().zip_with(first.diag(), |a, b| a - b).max_abs());
        generator_terms.push(total);
        rotated_v.push(c.op.clone());
        rotated[ci] = true;
    }
    let generator = OperatorSum::from_monomials(l, Parity::SkewHermitian, generator_terms)?;
    let kept = OperatorSum::from_monomials(l, Parity::Hermitian, rotated_v)?;
    let e_op = XMonomial::new(l, 0, energy.clone())?;
    let e_sum = OperatorSum::from_monomials(l, Parity::Hermitian, [e_op])?;
    let residual = kept.add(&OperatorSum::commutator(&generator, &e_sum)?)?.norm_bound();

    let triads: Vec<(TriadClassKey, XMonomial)> =
        triad_classes.into_iter().filter(|(_, a)| a.norm() > params.eta_drop * 1e-4).collect();
    let min_triad_bare = triads.iter().map(|(t, _)| t.bare).min().unwrap_or(u32::MAX);
    let mut next_classes: BTreeMap<DiagramKey, XMonomial> = BTreeMap::new();
    let mut next_deferred: BTreeMap<DiagramKey, bool> = BTreeMap::new();
    let mut new_pool = st.pool.clone();
    for (ci, c) in st.classes.iter().enumerate() {
        let head = &c.diagram;
        if !rotated[ci] {
            let key = DiagramKey { scale: st.k + 1, ..head.key() };
            if head.is_diagonal() && head.order < next_len {
                new_pool.push(PoolEntry { diagram: Arc::new(Diagram::class(key)), energy: c.op.diag().clone() });
            } else {
                *next_deferred.entry(key.clone()).or_insert(false) |= deferred[ci] || (c.deferred && head.order < next_len);
                add_into(&mut next_classes, key, c.op.clone());
            }
        }
        if head.bare_order.saturating_add(min_triad_bare) > params.w_max {
            continue;
        }
        let coefficient = |n: usize| {
            let f = factorial(n).to_f64().unwrap_or(f64::INFINITY);
            if rotated[ci] {
                n as f64 / (f * (n + 1) as f64)
            } else {
                1.0 / f
            }
        };
        let start = PartialKey {
            hull: head.domain,
            union_active: head.active,
            xor_active: head.active,
            order: head.order,
            bare: head.bare_order,
            n: 0,
            factorial: head.factorial.clone(),
        };
        let mut level: BTreeMap<PartialKey, XMonomial> = BTreeMap::new();
        level.insert(start, c.op.clone());
        while !level.is_empty() {
            let mut next: BTreeMap<PartialKey, XMonomial> = BTreeMap::new();
            for (s, op) in &level {
                let hull_ext = s.hull.extended(l).mask();
                for (t, a) in &triads {
                    if s.bare + t.bare > params.w_max {
                        continue;
                    }
                    if s.union_active & t.domain.extended(l).mask() == 0 && t.active & hull_ext == 0 {
                        continue;
                    }
                    let Some(m) = a.commutator(op)? else { continue };
                    let key = PartialKey {
                        hull: s.hull.hull(&t.domain),
                        union_active: s.union_active | t.active,
                        xor_active: s.xor_active ^ t.active,
                        order: s.order + t.order,
                        bare: s.bare + t.bare,
                        n: s.n + 1,
                        factorial: &s.factorial * &t.factorial,
                    };
                    add_into(&mut next, key, m);
                }
            }
            if next.len() > params.max_states {
                return Err(Error::BudgetExceeded { dim: next.len(), budget: params.max_states });
            }
            for (s, op) in &next {
                let c_n = coefficient(s.n);
                let key = DiagramKey {
                    scale: st.k + 1,
                    order: s.order,
                    bare_order: s.bare,
                    domain: s.hull,
                    active: op.active(),
                    factorial: factorial(s.n) * &s.factorial,
                };
                next_deferred.entry(key.clone()).or_insert(false);
                add_into(&mut next_classes, key, op.scale(C64::new(c_n, 0.0)));
            }
            level = next.into_iter().filter(|(s, _)| s.bare + min_triad_bare <= params.w_max).collect();
        }
    }
    let classes = next_classes
        .into_iter()
        .filter(|(_, op)| op.norm() > params.eta_drop)
        .map(|(key, op)| {
            let deferred = next_deferred.get(&key).copied().unwrap_or(false);
            ClassEntry { diagram: Arc::new(Diagram::class(key)), op: op.refit(params.eta_drop), deferred }
        })
        .collect();
    let state = TriadicState { k: st.k + 1, chain_len: l, e0: st.e0.clone(), pool: new_pool, classes };
    let deferred_classes = deferred.iter().filter(|&&d| d).count();
    Ok(TriadicStep { state, generator, events, equivalence_defect: defect, residual, deferred_classes })
}

fn exact_norm(op: &OperatorSum, cutoff: usize) -> f64 {
    op.operator_norm(cutoff).value
}

pub(super) fn run_triadic(model_params: &ModelParams, sample: &DisorderSample, params: &FlowParams, reference: Option<Vec<f64>>) -> Result<FlowRun> {
    let l = model_params.chain_len;
    let split = model::split_bare(model_params, sample)?;
    let mut st = TriadicState::from_split(l, &split, params.eta_drop)?;
    let cutoff = params.dense_cutoff;
    let mut flow = FlowState::new(st.energy_operator()?, st.perturbation()?)?;
    let mut rows = vec![ScaleRow {
        sample: sample.index,
        k: 0,
        norm_v: exact_norm(&flow.v.off_diagonal_part(), cutoff),
        norm_a: 0.0,
        n_terms: st.classes.len(),
        nr1_events: 0,
        nr2_events: 0,
        floor_events: 0,
        spectrum_drift: drift_against(&reference, &flow.hamiltonian()?)?,
    }];
    let mut norms = vec![super::norms_by_length(&flow.v, cutoff)];
    let mut residuals = Vec::new();
    let mut any_deferred = false;
    let mut converged = exact_norm(&flow.v, cutoff) <= params.eta_conv;
    while !converged && st.k < params.k_max {
        let step = triadic_step(&st, params, model_params.gamma)?;
        any_deferred |= step.deferred_classes > 0;
        st = step.state;
        flow.k = st.k;
        flow.e = st.energy_operator()?;
        flow.v = st.perturbation()?;
        flow.generators.push(step.generator.clone());
        flow.resonance_log.extend(step.events.iter().cloned());
        residuals.push(step.residual);
        rows.push(ScaleRow {
            sample: sample.index,
            k: st.k,
            norm_v: exact_norm(&flow.v.off_diagonal_part(), cutoff),
            norm_a: exact_norm(&step.generator, cutoff),
            n_terms: st.classes.len(),
            nr1_events: count(&step.events, ResonanceKind::NrI),
            nr2_events: count(&step.events, ResonanceKind::NrII),
            floor_events: count(&step.events, ResonanceKind::DenominatorFloor),
            spectrum_drift: drift_against(&reference, &flow.hamiltonian()?)?,
        });
        norms.push(super::norms_by_length(&flow.v, cutoff));
        converged = exact_norm(&flow.v, cutoff) <= params.eta_conv;
    }
    Ok(FlowRun { state: flow, rows, residuals, norms_by_length: norms, converged, deferred: any_deferred, reference_spectrum: reference })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ensemble;

    fn ladder() -> ScaleLadder {
        ScaleLadder::new(9, 10).unwrap()
    }

    fn state(l: usize, gamma: f64, seed: u64) -> (ModelParams, TriadicState) {
        let mp = ModelParams::new(l, gamma, Ensemble::Random, seed);
        let s = model::sample_disorder(&mp, 0);
        let split = model::split_bare(&mp, &s).unwrap();
        (mp, TriadicState::from_split(l, &split, 1e-14).unwrap())
    }

    #[test]
    fn empty_pool_gives_single_triad() {
        let (_, st) = state(4, 0.1, 1);
        let c = st.classes.iter().find(|c| !c.diagram.is_diagonal()).unwrap();
        let terms = solve_generator_triadic(&c.diagram, &c.op, &st.e0, &[], &ladder(), 4).unwrap();
        assert_eq!(terms.len(), 1);
        let t = &terms[0];
        assert!(t.triad.left.is_none() && t.triad.right.is_none());
        let first = first_representation(&c.op, &st.e0).unwrap();
        assert!(t.a.diag().zip_with(first.diag(), |a, b| a - b).max_abs() < 1e-14);
    }

    #[test]
    fn representations_agree_after_two_steps() {
        let (mp, mut st) = state(5, 0.1, 4);
        let mut p = FlowParams::new(0.1, ladder());
        p.eta_den = Some(0.0);
        for _ in 0..2 {
            let step = triadic_step(&st, &p, mp.gamma).unwrap();
            assert!(step.equivalence_defect < 1e-10, "{}", step.equivalence_defect);
            st = step.state;
        }
        assert!(!st.pool.is_empty());
    }

    #[test]
    fn triadic_flow_preserves_spectrum_up_to_truncation() {
        let mp = ModelParams::new(4, 0.05, Ensemble::Random, 9);
        let s = model::sample_disorder(&mp, 1);
        let mut p = FlowParams::new(0.05, ladder());
        p.mode = super::super::FlowMode::Triadic;
        p.k_max = 2;
        let drift = |w: u32| {
            let mut p = p.clone();
            p.w_max = w;
            let run = super::super::run_flow(&mp, &s, &p).unwrap();
            run.rows.iter().map(|r| r.spectrum_drift.unwrap()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (drift(6), drift(10));
        assert!(fine < 1e-8, "{fine}");
        assert!(fine < coarse * 1e-2, "{coarse} {fine}");
    }
}
