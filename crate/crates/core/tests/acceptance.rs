//! Acceptance run: one line per criterion, nonzero exit if any fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use mblflow_core::diagrams::{census, ScaleLadder};
use mblflow_core::flow::{resonance_scan, run_flow, triadic_step, FlowParams, FlowRun, TriadicState};
use mblflow_core::liom::{self, Direction};
use mblflow_core::model::{self, Ensemble, ModelParams};
use mblflow_core::oracle::{self, SPECTRAL_LEMMA_CONSTANT};
use mblflow_core::pauli::{DiagFn, Interval, XMonomial, C64};
use mblflow_core::stats;
use mblflow_core::transport::{length_sweep, SweepParams, SweepReport};
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: usize = 8;
const GAMMA: f64 = 0.05;
const SEEDS: u64 = 50;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn ladder() -> ScaleLadder {
    ScaleLadder::new(9, 10).unwrap()
}

fn flow_params(gamma: f64) -> FlowParams {
    let mut p = FlowParams::new(gamma, ladder());
    p.k_max = 8;
    p
}

/// Flow runs of the reference ensemble, `None` where the run failed.
struct Ensemble8 {
    runs: Vec<Option<FlowRun>>,
    models: Vec<ModelParams>,
    elapsed: Duration,
}

fn run_ensemble(gamma: f64, n: u64) -> Ensemble8 {
    let t = Instant::now();
    let mut runs = Vec::new();
    let mut models = Vec::new();
    for seed in 0..n {
        let mp = ModelParams::new(L, gamma, Ensemble::Random, seed);
        let s = model::sample_disorder(&mp, 0);
        runs.push(run_flow(&mp, &s, &flow_params(gamma)).ok());
        models.push(mp);
    }
    Ensemble8 { runs, models, elapsed: t.elapsed() }
}

fn random_monomial(l: usize, rng: &mut ChaCha8Rng) -> (u64, DiagFn) {
    let lo = rng.random_range(0..l);
    let hi = rng.random_range(lo..l);
    let f = DiagFn::from_fn(Interval::new(lo, hi), |_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    (rng.random_range(0..1u64 << l), f)
}

fn algebra_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for i in 0..500 {
        let l = 2 + i % 3;
        let (sa, fa) = random_monomial(l, &mut rng);
        let (sb, fb) = random_monomial(l, &mut rng);
        let a = XMonomial::new(l, sa, fa.clone()).unwrap();
        let b = XMonomial::new(l, sb, fb.clone()).unwrap();
        let (da, db) = (common::reference_dense(l, sa, &fa), common::reference_dense(l, sb, &fb));
        let prod = a.multiply(&b).unwrap().to_dense();
        worst = worst.max(oracle::max_abs_diff(&prod, &(&da * &db)));
        let com = a.commutator(&b).unwrap().map_or_else(|| nalgebra::DMatrix::zeros(1 << l, 1 << l), |m| m.to_dense());
        worst = worst.max(oracle::max_abs_diff(&com, &(&da * &db - &db * &da)));
    }
    let el = t.elapsed();
    outcome(worst < 1e-12 && el < Duration::from_secs(10), format!("500 pairs, max deviation {worst:.2e}, {el:.2?}"))
}

fn spectrum(ens: &Ensemble8) -> Outcome {
    let failed = ens.runs.iter().filter(|r| r.is_none()).count();
    let drift = ens.runs.iter().flatten().flat_map(|r| r.rows.iter().map(|row| row.spectrum_drift.unwrap_or(f64::INFINITY))).fold(0.0, f64::max);
    outcome(
        failed == 0 && drift <= 1e-10 && ens.elapsed < Duration::from_secs(300),
        format!("{} runs, {failed} failed, max eigenvalue drift {drift:.2e}, {:.1?}", ens.runs.len(), ens.elapsed),
    )
}

fn generator_residual(ens: &Ensemble8) -> Outcome {
    let mut plain: f64 = 0.0;
    let mut all: f64 = 0.0;
    let mut steps = 0;
    for run in ens.runs.iter().flatten() {
        for (i, &r) in run.residuals.iter().enumerate() {
            all = all.max(r);
            if run.rows[i + 1].floor_events == 0 {
                plain = plain.max(r);
                steps += 1;
            }
        }
    }
    outcome(plain < 1e-12, format!("{steps} non-deferred steps, max residual {plain:.2e} (all steps {all:.2e})"))
}

fn representation_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut steps = 0;
    for l in 3..=6 {
        for seed in 0..5 {
            let mp = ModelParams::new(l, 0.1, Ensemble::Random, 100 + seed);
            let s = model::sample_disorder(&mp, 0);
            let split = model::split_bare(&mp, &s).unwrap();
            let mut st = TriadicState::from_split(l, &split, 1e-14).unwrap();
            let mut p = FlowParams::new(0.1, ladder());
            p.eta_den = Some(0.0);
            for _ in 0..=2 {
                let step = triadic_step(&st, &p, mp.gamma).unwrap();
                worst = worst.max(step.equivalence_defect);
                steps += 1;
                st = step.state;
            }
            instances += 1;
        }
    }
    outcome(worst < 1e-10, format!("{instances} instances, {steps} steps, max entrywise gap {worst:.2e}"))
}

fn resolvent_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut rel: f64 = 0.0;
    let mut exact: f64 = 0.0;
    let mut failures = 0;
    for r in 1..=5 {
        let rep = oracle::resolvent_identity_check(r, 2000, 7 + r as u64);
        worst = worst.max(rep.max_abs_residual);
        rel = rel.max(rep.max_rel_residual);
        exact = exact.max(rep.max_exact_residual);
        failures += rep.exact_failures;
    }
    outcome(
        exact < 1e-12,
        format!(
            "10000 instances, R ≤ 5, exact rational residual {exact:.2e} ({failures} nonzero); double precision {worst:.2e} absolute, {rel:.2e} relative"
        ),
    )
}

fn contraction(ens: &Ensemble8) -> Outcome {
    let decreasing = |r: &FlowRun| {
        let v = r.offdiag_norms();
        v.len() >= 4 && (0..3).all(|k| v[k + 1] < v[k])
    };
    let total = ens.runs.len();
    let ok = ens.runs.iter().flatten().filter(|r| decreasing(r)).count();
    let deferred: Vec<&FlowRun> = ens.runs.iter().flatten().filter(|r| r.deferred).collect();
    let deferred_ok = deferred.iter().filter(|r| decreasing(r)).count();
    let clean = ens.runs.iter().flatten().filter(|r| !r.deferred).count();
    let medians: Vec<f64> = (0..4)
        .map(|k| stats::median(&ens.runs.iter().flatten().map(|r| r.offdiag_norms().get(k).copied().unwrap_or(0.0)).collect::<Vec<_>>()))
        .collect();
    let median_ok = medians.windows(2).all(|w| w[1] < w[0]);
    outcome(
        ok as f64 >= 0.9 * total as f64 && median_ok,
        format!(
            "{ok}/{total} seeds strictly decreasing over k=0..3; without deferrals {}/{clean}, with deferrals {deferred_ok}/{}; medians {}",
            ok - deferred_ok,
            deferred.len(),
            medians.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>().join(" > ")
        ),
    )
}

fn liom_residuals(ens: &Ensemble8, eta_conv: f64) -> Outcome {
    let mut converged = 0;
    let mut good = 0;
    let mut worst: f64 = 0.0;
    for (run, mp) in ens.runs.iter().zip(&ens.models) {
        let Some(run) = run.as_ref().filter(|r| r.converged) else { continue };
        converged += 1;
        let u = liom::unitary_of_flow(&run.state).unwrap();
        let h = model::dense_hamiltonian(mp, &model::sample_disorder(mp, 0));
        let rep = liom::liom_check(&u.dense, &h, L).unwrap();
        worst = worst.max(rep.max_residual());
        if rep.max_residual() <= 10.0 * eta_conv {
            good += 1;
        }
    }
    outcome(
        converged > 0 && good as f64 >= 0.95 * converged as f64,
        format!("{good}/{converged} converged seeds within {:.0e}, max residual {worst:.2e}", 10.0 * eta_conv),
    )
}

fn locality(ens: &Ensemble8) -> Outcome {
    let mut medians = Vec::new();
    let mut rec: f64 = 0.0;
    let mut failed = 0;
    let mut parts = Vec::new();
    for gamma in [0.1, 0.05, 0.02] {
        let fresh;
        let runs: Vec<Option<&FlowRun>> = if gamma == GAMMA {
            ens.runs.iter().take(30).map(|r| r.as_ref()).collect()
        } else {
            fresh = run_ensemble(gamma, 30);
            fresh.runs.iter().map(|r| r.as_ref()).collect()
        };
        let mut rates = Vec::new();
        for run in runs {
            let Some(run) = run else {
                failed += 1;
                continue;
            };
            let u = liom::unitary_of_flow(&run.state).unwrap();
            let x = L / 2 - 1;
            let p = liom::locality_profile(&u.dense, &liom::z_dense(L, x), L, Interval::point(x), Direction::Conjugate, "Z").unwrap();
            rec = rec.max(p.reconstruction_error);
            if let Some((_, rate)) = p.fit {
                rates.push(rate);
            }
        }
        let m = stats::median(&rates);
        parts.push(format!("γ={gamma}: {m:.3} ({} fits)", rates.len()));
        medians.push(m);
    }
    let increasing = medians.windows(2).all(|w| w[1] > w[0]);
    outcome(
        increasing && rec < 1e-12 && failed == 0,
        format!("median decay rate {}; reconstruction {rec:.2e}; {failed} failed runs", parts.join(", ")),
    )
}

fn coupling_decay(ens: &Ensemble8) -> Outcome {
    let mut n = 0;
    let mut ok = 0;
    let mut worst = f64::NEG_INFINITY;
    for run in ens.runs.iter().flatten().filter(|r| r.converged) {
        let d = liom::extract_diagonal_couplings(&run.state.e).unwrap();
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            d.max_by_diameter().into_iter().filter(|&(_, m)| m > liom::FIT_FLOOR).map(|(dia, m)| (dia as f64, m.ln())).unzip();
        n += 1;
        if let Some(fit) = stats::fit_line(&xs, &ys) {
            worst = worst.max(fit.slope);
            if fit.slope <= 0.0 {
                ok += 1;
            }
        }
    }
    outcome(n > 0 && ok == n, format!("{ok}/{n} converged runs with nonpositive slope, steepest-to-flattest slope up to {worst:.3}"))
}

fn census_check() -> Outcome {
    let t = Instant::now();
    let mut mismatches = 0;
    let mut rows = 0;
    let mut power_ok = true;
    let mut bound_ok = true;
    let mut fitted: f64 = 0.0;
    for l in 2..=L {
        let w = 10u32;
        let brute = common::brute_force_census(l, w);
        let c = census(l, 1, w, &ladder(), 1 << 22).unwrap();
        fitted = fitted.max(c.fitted_c);
        for r in &c.rows {
            rows += 1;
            let want = brute.get(&(r.k, r.x, r.w)).cloned().unwrap_or_else(BigRational::zero);
            if r.n != want {
                mismatches += 1;
            }
            if r.k == 0 && r.x + r.w as usize <= l && r.n != BigRational::from_integer((1u64 << r.w).into()) {
                power_ok = false;
            }
        }
        for r in &c.rows {
            if r.n.to_f64().unwrap() > c.fitted_c.powi(r.w as i32) * (1.0 + 1e-12) {
                bound_ok = false;
            }
        }
    }
    let el = t.elapsed();
    outcome(
        mismatches == 0 && power_ok && bound_ok && el < Duration::from_secs(120),
        format!("{rows} rows for L ≤ {L}, k ≤ 1, w ≤ 10: {mismatches} mismatches, 2^w identity {power_ok}, fitted C = {fitted:.3}, {el:.2?}"),
    )
}

fn resonance_trend() -> Outcome {
    let eps = [0.4, 0.2, 0.1, 0.05];
    let mp = ModelParams::new(L, GAMMA, Ensemble::Random, 3);
    let rep = resonance_scan(&mp, 10_000, 3, &eps).unwrap();
    let freq: Vec<f64> = rep.sample_frequency.iter().map(|x| x.1).collect();
    let decreasing = freq.windows(2).all(|w| w[1] < w[0]);
    let mut slopes = Vec::new();
    for &e in &eps {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rep
            .rows
            .iter()
            .filter(|r| r.epsilon == e && r.frequency > 0.0)
            .map(|r| (r.length as f64, r.frequency.ln()))
            .unzip();
        slopes.push(stats::fit_line(&xs, &ys).map_or(f64::NEG_INFINITY, |f| f.slope));
    }
    let slopes_ok = slopes.iter().all(|&s| s <= 0.0);
    outcome(
        decreasing && slopes_ok,
        format!(
            "sample frequency {} over ε = {eps:?}; log-frequency slopes vs |g| {}",
            freq.iter().map(|f| format!("{f:.4}")).collect::<Vec<_>>().join(", "),
            slopes.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn transport_sweep() -> SweepReport {
    let sp = SweepParams::new(ModelParams::new(4, GAMMA, Ensemble::Random, 0), vec![4, 6, 8], (0..30).collect());
    length_sweep(&sp).unwrap()
}

fn transport_conservation(rep: &SweepReport) -> Outcome {
    let id = rep.rows.iter().map(|r| r.identity_residual).fold(0.0, f64::max);
    let en = rep.rows.iter().map(|r| r.energy_residual).fold(0.0, f64::max);
    outcome(id < 1e-9 && en < 1e-10, format!("{} evolutions, identity residual {id:.2e}, energy drift {en:.2e}", rep.rows.len()))
}

fn transport_trend(rep: &SweepReport) -> Outcome {
    let m: Vec<f64> = rep.per_length.iter().map(|s| s.median).collect();
    let ok = m.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        ok,
        format!(
            "median |current| {} for L = 4, 6, 8; log-log slope {:.2}",
            m.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", "),
            rep.log_log_slope.unwrap_or(f64::NAN)
        ),
    )
}

fn spectral_lemma() -> Outcome {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for (i, d) in [5, 10, 20].into_iter().enumerate() {
        for (j, e) in [0.01, 0.05, 0.1].into_iter().enumerate() {
            worst = worst.max(oracle::spectral_lemma_check(d, e, 1000, (10 * i + j) as u64));
        }
    }
    let el = t.elapsed();
    outcome(
        worst <= SPECTRAL_LEMMA_CONSTANT && el < Duration::from_secs(30),
        format!("max distance ratio {worst:.3} against bound {SPECTRAL_LEMMA_CONSTANT:.3}, {el:.2?}"),
    )
}

fn report(id: usize, name: &str, o: &Outcome) {
    println!("[{}] {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

fn main() -> ExitCode {
    let mut all = true;
    let mut emit = |id: usize, name: &str, o: Outcome| {
        report(id, name, &o);
        all &= o.pass;
    };
    emit(1, "algebra matches dense products", algebra_oracle());
    let ens = run_ensemble(GAMMA, SEEDS);
    emit(2, "flow keeps the spectrum", spectrum(&ens));
    emit(3, "generator solves its equation", generator_residual(&ens));
    emit(4, "triad sum equals direct quotient", representation_equivalence());
    emit(5, "resolvent expansion identity", resolvent_identity());
    emit(6, "off-diagonal norm contracts", contraction(&ens));
    emit(7, "integrals of motion commute with H", liom_residuals(&ens, flow_params(GAMMA).eta_conv));
    emit(8, "rotated operators stay local", locality(&ens));
    emit(9, "diagonal couplings decay with diameter", coupling_decay(&ens));
    emit(10, "diagram census", census_check());
    emit(11, "resonance frequency trend", resonance_trend());
    let sweep = transport_sweep();
    emit(12, "current-energy bookkeeping", transport_conservation(&sweep));
    emit(13, "current shrinks with length", transport_trend(&sweep));
    emit(14, "perturbed triangular spectrum", spectral_lemma());
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
