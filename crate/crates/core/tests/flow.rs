use mblflow_core::diagrams::ScaleLadder;
use mblflow_core::flow::{resonance_scan, run_flow, FlowMode, FlowParams};
use mblflow_core::liom;
use mblflow_core::model::{self, Ensemble, ModelParams};

fn params(gamma: f64) -> FlowParams {
    let mut p = FlowParams::new(gamma, ScaleLadder::new(9, 10).unwrap());
    p.k_max = 8;
    p
}

#[test]
fn converged_energies_match_assigned_eigenvalues() {
    let mut compared = 0;
    for seed in 0..6 {
        let mp = ModelParams::new(5, 0.02, Ensemble::Random, seed);
        let s = model::sample_disorder(&mp, 0);
        let run = run_flow(&mp, &s, &params(0.02)).unwrap();
        let oracle = liom::oracle_unitary(&model::dense_hamiltonian(&mp, &s)).unwrap();
        if !run.converged || !oracle.well_defined {
            continue;
        }
        let e = run.state.e.to_dense();
        for (i, want) in oracle.eigenvalues.iter().enumerate() {
            assert!((e[(i, i)].re - want).abs() < 1e-9, "seed {seed} config {i}");
        }
        compared += 1;
    }
    assert!(compared >= 4, "only {compared} seeds comparable");
}

#[test]
fn single_spin_in_transverse_field() {
    let mp = ModelParams::new(1, 0.5, Ensemble::TransverseField, 4);
    let s = model::sample_disorder(&mp, 0);
    let run = run_flow(&mp, &s, &params(0.5)).unwrap();
    assert!(run.converged);
    let e = run.state.e.to_dense();
    let r = (s.theta[0].powi(2) + 0.0625).sqrt();
    let mut got = [e[(0, 0)].re, e[(1, 1)].re];
    got.sort_by(f64::total_cmp);
    assert!((got[0] + r).abs() < 1e-12 && (got[1] - r).abs() < 1e-12, "{got:?} vs ±{r}");
}

#[test]
fn zero_coupling_needs_no_step() {
    let mp = ModelParams::new(4, 0.0, Ensemble::Random, 1);
    let run = run_flow(&mp, &model::sample_disorder(&mp, 0), &params(0.0)).unwrap();
    assert!(run.converged);
    assert_eq!(run.rows.len(), 1);
    assert!(run.state.generators.is_empty());
}

#[test]
fn triadic_drift_is_set_by_the_order_cutoff() {
    let mp = ModelParams::new(4, 0.05, Ensemble::Random, 2);
    let drift = |w_max: u32| {
        let mut p = params(0.05);
        p.mode = FlowMode::Triadic;
        p.k_max = 2;
        p.w_max = w_max;
        let run = run_flow(&mp, &model::sample_disorder(&mp, 0), &p).unwrap();
        assert_eq!(run.rows.len(), 3);
        run.rows.iter().map(|r| r.spectrum_drift.unwrap()).fold(0.0, f64::max)
    };
    let (coarse, fine) = (drift(6), drift(10));
    assert!(fine < coarse, "{fine:e} vs {coarse:e}");
    assert!(fine < 1e-10, "{fine:e}");
}

#[test]
fn large_floor_defers_but_keeps_the_spectrum() {
    let mp = ModelParams::new(5, 0.1, Ensemble::Random, 3);
    let mut p = params(0.1);
    p.eta_den = Some(0.5);
    p.k_max = 4;
    let run = run_flow(&mp, &model::sample_disorder(&mp, 0), &p).unwrap();
    assert!(run.deferred);
    assert!(run.rows.iter().any(|r| r.floor_events > 0));
    for row in &run.rows {
        assert!(row.spectrum_drift.unwrap() < 1e-10, "{row:?}");
    }
}

#[test]
fn xx_ensemble_flows() {
    let mp = ModelParams::new(6, 0.05, Ensemble::Xx, 0);
    let run = run_flow(&mp, &model::sample_disorder(&mp, 0), &params(0.05)).unwrap();
    let norms = run.offdiag_norms();
    assert!(norms.last().unwrap() < &norms[0]);
    assert!(run.rows.iter().all(|r| r.spectrum_drift.unwrap() < 1e-10));
}

#[test]
fn resonances_thin_out_as_epsilon_shrinks() {
    let mp = ModelParams::new(6, 0.05, Ensemble::Random, 0);
    let eps = [0.4, 0.2, 0.1];
    let rep = resonance_scan(&mp, 300, 3, &eps).unwrap();
    for len in 1..=3 {
        let f: Vec<f64> = eps.iter().map(|&e| rep.frequency(e, len).unwrap()).collect();
        assert!(f.windows(2).all(|w| w[1] <= w[0]), "length {len}: {f:?}");
    }
}
