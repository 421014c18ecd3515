//! The renormalization loop `H^(k) → e^{ad A^(k+1)} H^(k)`.
//!
//! The aggregate mode keeps one monomial per active set; the triadic mode in
//! [`triadic`] keeps one operator per diagram class and builds generators
//! from triads.

mod scan;
mod triadic;

pub use scan::{resonance_scan, ScanReport, ScanRow};
pub use triadic::{
    detect_resonances, first_representation, solve_generator_triadic, triadic_step, ClassEntry, PoolEntry, TriadTerm, TriadicState,
    TriadicStep,
};

use serde::{Deserialize, Serialize};

use crate::diagrams::{order_from_int, ScaleLadder};
use crate::model::{self, DisorderSample, ModelParams};
use crate::oracle;
use crate::pauli::{DiagFn, OperatorSum, Parity, XMonomial, C64};
use crate::{Error, Result};

/// Length used in place of the diagram order by the aggregate mode.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LengthProxy {
    /// Hull of the active sites, a lower bound on the order of every merged diagram.
    ActiveHull,
    /// Support of the diagonal function.
    Support,
}

impl LengthProxy {
    pub fn length(self, m: &XMonomial) -> usize {
        match self {
            LengthProxy::ActiveHull => crate::pauli::Interval::hull_of_mask(m.active()).map_or(0, |i| i.len()),
            LengthProxy::Support => m.support_len(),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    Aggregate,
    Triadic,
}

/// Tunables of a flow run.
#[derive(Clone, Debug)]
pub struct FlowParams {
    pub ladder: ScaleLadder,
    pub epsilon: f64,
    pub delta: f64,
    pub k_max: usize,
    /// Fixed denominator floor; `None` uses `eta_den_margin · ε^{|I|}`.
    pub eta_den: Option<f64>,
    pub eta_den_margin: f64,
    pub eta_series: f64,
    pub n_max: usize,
    pub eta_conv: f64,
    pub eta_drop: f64,
    pub mode: FlowMode,
    pub length_proxy: LengthProxy,
    /// Chains up to this length get exact norms and spectrum checks.
    pub dense_cutoff: usize,
    /// Bare-order truncation of the triadic mode.
    pub w_max: u32,
    /// Largest number of partial compositions held per head class (triadic mode).
    pub max_states: usize,
}

impl FlowParams {
    /// Defaults with `δ = ε = γ^{1/4}`.
    pub fn new(gamma: f64, ladder: ScaleLadder) -> Self {
        let eps = if gamma > 0.0 { gamma.powf(0.25) } else { 0.5 };
        FlowParams {
            ladder,
            epsilon: eps,
            delta: eps,
            k_max: 6,
            eta_den: None,
            eta_den_margin: 1e-2,
            eta_series: 1e-14,
            n_max: 40,
            eta_conv: 1e-12,
            eta_drop: 1e-14,
            mode: FlowMode::Aggregate,
            length_proxy: LengthProxy::ActiveHull,
            dense_cutoff: 10,
            w_max: 8,
            max_states: 1 << 18,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("eta_den_margin", self.eta_den_margin),
            ("eta_series", self.eta_series),
            ("eta_conv", self.eta_conv),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.epsilon >= 1.0 || self.delta >= 1.0 {
            return Err(Error::InvalidParameter("epsilon and delta must lie in (0, 1)".into()));
        }
        if let Some(e) = self.eta_den {
            if !(e >= 0.0) {
                return Err(Error::InvalidParameter(format!("eta_den must be nonnegative, got {e}")));
            }
        }
        if !(self.eta_drop >= 0.0) {
            return Err(Error::InvalidParameter("eta_drop must be nonnegative".into()));
        }
        if self.n_max == 0 {
            return Err(Error::InvalidParameter("n_max must be positive".into()));
        }
        if self.k_max >= crate::diagrams::MAX_SCALE {
            return Err(Error::InvalidParameter(format!("k_max must be below {}", crate::diagrams::MAX_SCALE)));
        }
        Ok(())
    }

    /// Denominator floor for a term of support length `len`.
    pub fn floor_for(&self, len: usize) -> f64 {
        self.eta_den.unwrap_or(self.eta_den_margin * self.epsilon.powi(len as i32))
    }

    fn prune(&self) -> f64 {
        self.eta_drop * 1e-4
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResonanceKind {
    #[serde(rename = "NR_I")]
    NrI,
    #[serde(rename = "NR_II")]
    NrII,
    #[serde(rename = "denominator-floor")]
    DenominatorFloor,
}

/// A violated non-resonance condition or a floored denominator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResonanceEvent {
    pub k: usize,
    pub kind: ResonanceKind,
    pub descriptor: String,
    pub value: f64,
    pub threshold: f64,
}

/// `H^(k) = E^(k) + V^(k)` with the generators used so far.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub k: usize,
    pub e: OperatorSum,
    pub v: OperatorSum,
    pub generators: Vec<OperatorSum>,
    pub resonance_log: Vec<ResonanceEvent>,
}

impl FlowState {
    pub fn new(e: OperatorSum, v: OperatorSum) -> Result<Self> {
        if !e.is_diagonal() {
            return Err(Error::NonDiagonal(e.terms().find(|m| !m.is_diagonal()).map_or(0, |m| m.active())));
        }
        Ok(FlowState { k: 0, e, v, generators: Vec::new(), resonance_log: Vec::new() })
    }

    pub fn chain_len(&self) -> usize {
        self.e.chain_len()
    }

    pub fn hamiltonian(&self) -> Result<OperatorSum> {
        self.e.add(&self.v)
    }
}

pub(crate) fn describe(m: &XMonomial) -> String {
    let active: Vec<String> = crate::pauli::sites_of(m.active()).map(|x| x.to_string()).collect();
    match m.support() {
        Some(s) => format!("S={{{}}} I=[{},{}]", active.join(","), s.lo, s.hi),
        None => format!("S={{{}}}", active.join(",")),
    }
}

/// Off-diagonal terms of `V` whose proxy length is below `L_{k+1}`.
pub fn select_perturbative(state: &FlowState, ladder: &ScaleLadder, proxy: LengthProxy) -> OperatorSum {
    let next = ladder.length(state.k + 1);
    state.v.filter(|m| !m.is_diagonal() && order_from_int(proxy.length(m)) < next)
}

/// Result of [`solve_generator`].
#[derive(Clone, Debug)]
pub struct GeneratorSolution {
    pub a: OperatorSum,
    /// The part of `v_per` the generator rotates away.
    pub kept: OperatorSum,
    /// Entries left in `V` because their denominator fell below the floor.
    pub deferred: OperatorSum,
    pub events: Vec<ResonanceEvent>,
    /// `‖kept + [A, E]‖` (norm bound).
    pub residual: f64,
}

/// `∂_S E(σ) = E(σ ⊕ S) − E(σ)`.
pub fn flip_derivative(e: &DiagFn, active: u64) -> DiagFn {
    e.flipped(active).zip_with(e, |a, b| a - b)
}

/// Solve `kept + [A, E] = 0` monomial by monomial.
pub fn solve_generator(state: &FlowState, v_per: &OperatorSum, params: &FlowParams) -> Result<GeneratorSolution> {
    let l = state.chain_len();
    let e = state.e.diagonal_function()?;
    let mut a_terms = Vec::new();
    let mut kept_terms = Vec::new();
    let mut deferred_terms = Vec::new();
    let mut events = Vec::new();
    for m in v_per.terms() {
        if m.is_diagonal() {
            return Err(Error::InvalidParameter("perturbative part must be off-diagonal".into()));
        }
        let len = params.length_proxy.length(m);
        let floor = params.floor_for(len);
        let d = flip_derivative(&e, m.active());
        let hull = crate::pauli::Interval::hull_opt(m.support(), d.support()).expect("off-diagonal support");
        let f = m.diag().extended_to(hull);
        let d = d.extended_to(hull);
        let mut min_den = f64::INFINITY;
        let mut any_floor = false;
        let a = f.zip_with(&d, |fv, dv| {
            let dr = dv.re;
            min_den = min_den.min(dr.abs());
            if dr.abs() < floor {
                any_floor = true;
                C64::new(0.0, 0.0)
            } else {
                fv / dr
            }
        });
        let (kept, deferred) = if any_floor {
            let kept = f.zip_with(&d, |fv, dv| if dv.re.abs() < floor { C64::new(0.0, 0.0) } else { fv });
            let deferred = f.zip_with(&d, |fv, dv| if dv.re.abs() < floor { fv } else { C64::new(0.0, 0.0) });
            events.push(ResonanceEvent {
                k: state.k,
                kind: ResonanceKind::DenominatorFloor,
                descriptor: describe(m),
                value: min_den,
                threshold: floor,
            });
            (kept, Some(deferred))
        } else {
            (f, None)
        };
        let nr1 = params.epsilon.powi(-(len as i32));
        if min_den > 0.0 && 1.0 / min_den > nr1 {
            events.push(ResonanceEvent { k: state.k, kind: ResonanceKind::NrI, descriptor: describe(m), value: 1.0 / min_den, threshold: nr1 });
        }
        a_terms.push(XMonomial::new(l, m.active(), a)?);
        kept_terms.push(XMonomial::new(l, m.active(), kept)?);
        if let Some(dfr) = deferred {
            deferred_terms.push(XMonomial::new(l, m.active(), dfr)?);
        }
    }
    let a = OperatorSum::from_monomials(l, Parity::SkewHermitian, a_terms)?;
    let kept = OperatorSum::from_monomials(l, Parity::Hermitian, kept_terms)?;
    let deferred = OperatorSum::from_monomials(l, Parity::Hermitian, deferred_terms)?;
    let residual = kept.add(&OperatorSum::commutator(&a, &state.e)?)?.norm_bound();
    Ok(GeneratorSolution { a, kept, deferred, events, residual })
}

/// Diagnostics of one commutator series.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct SeriesReport {
    pub terms: usize,
    pub tail_bound: f64,
}

/// `Σ_{n≥1} n/(n+1)! ad_A^n kept + Σ_{n≥0} ad_A^n rest / n!`.
///
/// Stops once the remaining terms are provably below `eta_series`.
pub fn resummed_series(
    a: &OperatorSum,
    kept: &OperatorSum,
    rest: &OperatorSum,
    h_norm: f64,
    params: &FlowParams,
) -> Result<(OperatorSum, SeriesReport)> {
    let mut acc = rest.clone();
    acc.set_parity(Parity::Hermitian);
    let a_norm = a.norm_bound();
    let prune = params.prune();
    let mut x = kept.clone();
    let mut y = rest.clone();
    let mut fact = 1.0f64;
    let mut apriori = h_norm;
    for n in 1..=params.n_max {
        x = OperatorSum::commutator_pruned(a, &x, prune)?;
        y = OperatorSum::commutator_pruned(a, &y, prune)?;
        fact *= n as f64;
        let cx = n as f64 / (fact * (n + 1) as f64);
        let cy = 1.0 / fact;
        acc.add_scaled_assign(&x, cx)?;
        acc.add_scaled_assign(&y, cy)?;
        apriori *= 2.0 * a_norm / (n + 1) as f64;
        let rho = 2.0 * a_norm / (n + 1) as f64;
        let current = (x.norm_bound() + y.norm_bound()) / fact;
        let tail = if rho < 1.0 { current * rho / (1.0 - rho) } else { f64::INFINITY };
        let bound = tail.min(apriori);
        if (x.is_empty() && y.is_empty()) || bound < params.eta_series {
            acc.normalize(params.eta_drop);
            acc.set_parity(Parity::Hermitian);
            return Ok((acc, SeriesReport { terms: n, tail_bound: if x.is_empty() && y.is_empty() { 0.0 } else { bound } }));
        }
    }
    Err(Error::SeriesDiverged(params.n_max))
}

/// Report of one aggregate step.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub norm_a: f64,
    pub residual: f64,
    pub series: SeriesReport,
    pub deferred: bool,
    pub events: Vec<ResonanceEvent>,
}

/// `H^(k+1) = e^{ad A} H^(k)`; every diagonal term of the result is absorbed into `E`.
pub fn rotate_step(state: &FlowState, solution: &GeneratorSolution, params: &FlowParams) -> Result<(FlowState, SeriesReport)> {
    let rest = state.v.sub(&solution.kept)?;
    let mut next = state.clone();
    next.k += 1;
    next.generators.push(solution.a.clone());
    next.resonance_log.extend(solution.events.iter().cloned());
    if solution.a.is_empty() {
        absorb(&mut next, &rest)?;
        return Ok((next, SeriesReport { terms: 0, tail_bound: 0.0 }));
    }
    let h_norm = state.e.norm_bound() + state.v.norm_bound();
    let (w, report) = resummed_series(&solution.a, &solution.kept, &rest, h_norm, params)?;
    absorb(&mut next, &w)?;
    Ok((next, report))
}

fn absorb(next: &mut FlowState, w: &OperatorSum) -> Result<()> {
    next.e = next.e.add(&w.diagonal_part())?;
    next.e.set_parity(Parity::Hermitian);
    next.v = w.off_diagonal_part();
    next.v.set_parity(Parity::Hermitian);
    Ok(())
}

/// Times the denominator floor is raised tenfold before a divergent series is reported.
pub const FLOOR_ESCALATIONS: usize = 3;

/// One aggregate step: select, solve, rotate.
pub fn aggregate_step(state: &FlowState, params: &FlowParams) -> Result<(FlowState, StepReport)> {
    let v_per = select_perturbative(state, &params.ladder, params.length_proxy);
    // a divergent series means some kept denominator is still too small; defer more and retry
    let mut p = params.clone();
    let mut attempt = 0;
    let (sol, next, series) = loop {
        let sol = solve_generator(state, &v_per, &p)?;
        match rotate_step(state, &sol, &p) {
            Ok((next, series)) => break (sol, next, series),
            Err(Error::SeriesDiverged(n)) => {
                if p.eta_den.is_some() || attempt >= FLOOR_ESCALATIONS {
                    return Err(Error::SeriesDiverged(n));
                }
                p.eta_den_margin *= 10.0;
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    };
    let report = StepReport {
        norm_a: sol.a.operator_norm(params.dense_cutoff).value,
        residual: sol.residual,
        series,
        deferred: !sol.deferred.is_empty(),
        events: sol.events,
    };
    Ok((next, report))
}

/// Per-scale summary row.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScaleRow {
    pub sample: u64,
    pub k: usize,
    #[serde(rename = "norm_V")]
    pub norm_v: f64,
    #[serde(rename = "norm_A")]
    pub norm_a: f64,
    pub n_terms: usize,
    pub nr1_events: usize,
    pub nr2_events: usize,
    pub floor_events: usize,
    /// Largest eigenvalue shift against the dense Hamiltonian, when computed.
    pub spectrum_drift: Option<f64>,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct FlowRun {
    pub state: FlowState,
    pub rows: Vec<ScaleRow>,
    /// `‖kept + [A, E]‖` per completed step.
    pub residuals: Vec<f64>,
    /// Operator norm of `V^(k)` restricted to each support length (index = length).
    pub norms_by_length: Vec<Vec<f64>>,
    pub converged: bool,
    pub deferred: bool,
    pub reference_spectrum: Option<Vec<f64>>,
}

impl FlowRun {
    pub fn offdiag_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.norm_v).collect()
    }
}

/// `‖V_I‖` grouped by support length.
pub fn norms_by_length(v: &OperatorSum, dense_cutoff: usize) -> Vec<f64> {
    let l = v.chain_len();
    (0..=l)
        .map(|len| v.filter(|m| m.support_len() == len && !m.is_diagonal()).operator_norm(dense_cutoff).value)
        .collect()
}

fn count(events: &[ResonanceEvent], kind: ResonanceKind) -> usize {
    events.iter().filter(|e| e.kind == kind).count()
}

pub(crate) fn drift_against(reference: &Option<Vec<f64>>, h: &OperatorSum) -> Result<Option<f64>> {
    match reference {
        None => Ok(None),
        Some(r) => Ok(Some(oracle::spectrum_distance(r, &oracle::dense_spectrum(&h.to_dense())?))),
    }
}

/// Run the flow on one disorder sample.
pub fn run_flow(model_params: &ModelParams, sample: &DisorderSample, params: &FlowParams) -> Result<FlowRun> {
    params.validate()?;
    let l = model_params.chain_len;
    let reference = if l <= params.dense_cutoff {
        oracle::check_budget(1 << l, oracle::DEFAULT_DENSE_BUDGET)?;
        Some(oracle::dense_spectrum(&model::dense_hamiltonian(model_params, sample))?)
    } else {
        None
    };
    match params.mode {
        FlowMode::Aggregate => run_aggregate(model_params, sample, params, reference),
        FlowMode::Triadic => triadic::run_triadic(model_params, sample, params, reference),
    }
}

fn run_aggregate(model_params: &ModelParams, sample: &DisorderSample, params: &FlowParams, reference: Option<Vec<f64>>) -> Result<FlowRun> {
    let split = model::split_bare(model_params, sample)?;
    let mut state = FlowState::new(split.e0, split.v0)?;
    let cutoff = params.dense_cutoff;
    let mut rows = vec![ScaleRow {
        sample: sample.index,
        k: 0,
        norm_v: state.v.off_diagonal_part().operator_norm(cutoff).value,
        norm_a: 0.0,
        n_terms: state.v.len(),
        nr1_events: 0,
        nr2_events: 0,
        floor_events: 0,
        spectrum_drift: drift_against(&reference, &state.hamiltonian()?)?,
    }];
    let mut norms = vec![norms_by_length(&state.v, cutoff)];
    let mut residuals = Vec::new();
    let mut deferred = false;
    let mut converged = state.v.operator_norm(cutoff).value <= params.eta_conv;
    while !converged && state.k < params.k_max {
        let (next, report) = aggregate_step(&state, params)?;
        state = next;
        deferred |= report.deferred;
        residuals.push(report.residual);
        rows.push(ScaleRow {
            sample: sample.index,
            k: state.k,
            norm_v: state.v.operator_norm(cutoff).value,
            norm_a: report.norm_a,
            n_terms: state.v.len(),
            nr1_events: count(&report.events, ResonanceKind::NrI),
            nr2_events: count(&report.events, ResonanceKind::NrII),
            floor_events: count(&report.events, ResonanceKind::DenominatorFloor),
            spectrum_drift: drift_against(&reference, &state.hamiltonian()?)?,
        });
        norms.push(norms_by_length(&state.v, cutoff));
        converged = state.v.operator_norm(cutoff).value <= params.eta_conv;
    }
    Ok(FlowRun { state, rows, residuals, norms_by_length: norms, converged, deferred, reference_spectrum: reference })
}
