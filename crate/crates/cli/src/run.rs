//! Subcommand bodies. Each writes its files into the output directory; the
//! manifest lists them.

use std::fs;
use std::path::{Path, PathBuf};

use mblflow_core::diagrams::{census, ScaleLadder};
use mblflow_core::flow::{resonance_scan, run_flow, FlowRun};
use mblflow_core::liom::{self, Direction};
use mblflow_core::model;
use mblflow_core::oracle::{self, SPECTRAL_LEMMA_CONSTANT};
use mblflow_core::pauli::Interval;
use mblflow_core::transport::{length_sweep, SweepParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, BETA_DENOMINATOR};
use crate::manifest::Manifest;
use crate::schema::{self, Table};
use crate::CliError;

/// Spectrum drift above this is an invariant breach.
pub const DRIFT_TOLERANCE: f64 = 1e-10;
/// Unitarity and reconstruction defects above this are invariant breaches.
pub const DENSE_TOLERANCE: f64 = 1e-10;
pub const TRANSPORT_IDENTITY_TOLERANCE: f64 = 1e-9;
pub const TRANSPORT_ENERGY_TOLERANCE: f64 = 1e-10;

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Command {
    Flow,
    LiomProfile,
    ResonanceScan,
    DiagramCount,
    TransportSweep,
    LemmaChecks,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::LiomProfile => "liom-profile",
            Command::ResonanceScan => "resonance-scan",
            Command::DiagramCount => "diagram-count",
            Command::TransportSweep => "transport-sweep",
            Command::LemmaChecks => "lemma-checks",
        }
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

struct Out {
    dir: PathBuf,
    written: Vec<String>,
}

impl Out {
    fn csv(&mut self, table: &Table, rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), CliError> {
        let path = self.dir.join(table.file);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(table.header())?;
        for r in rows {
            debug_assert_eq!(r.len(), table.columns.len());
            w.write_record(&r)?;
        }
        w.flush()?;
        self.written.push(table.file.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        self.written.push(name.to_string());
        Ok(())
    }
}

/// Run `command` and write the manifest, also when the run fails after parsing.
pub fn execute(command: Command, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.experiment.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let mut out = Out { dir: dir.clone(), written: Vec::new() };
    let result = dispatch(command, cfg, &mut out);
    let mut m = Manifest::new(command.name(), cfg);
    m.outputs = out.written;
    match &result {
        Ok(()) => m.status = "ok",
        Err(e) => {
            m.status = "failed";
            m.exit_code = e.exit_code();
            m.message = Some(e.to_string());
        }
    }
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")?;
    result.map(|()| path)
}

fn dispatch(command: Command, cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    match command {
        Command::Flow => flow(cfg, out),
        Command::LiomProfile => liom_profile(cfg, out),
        Command::ResonanceScan => scan(cfg, out),
        Command::DiagramCount => diagram_count(cfg, out),
        Command::TransportSweep => transport(cfg, out),
        Command::LemmaChecks => lemmas(cfg, out),
    }
}

/// Dense dimension and working-memory caps; about eight matrices are held at once.
fn check_dense(cfg: &RunConfig, dim: usize) -> Result<(), CliError> {
    oracle::check_budget(dim, cfg.budgets.dense_dim)?;
    let bytes = 8 * 16 * (dim as u128) * (dim as u128);
    let cap = (cfg.budgets.memory_mb as u128) << 20;
    if bytes > cap {
        return Err(CliError::Budget(format!("dense dimension {dim} needs about {} MiB, cap is {} MiB", bytes >> 20, cfg.budgets.memory_mb)));
    }
    Ok(())
}

/// Flow runs in seed order; the first error wins after all seeds are tried.
fn flow_runs(cfg: &RunConfig) -> Vec<(u64, Result<FlowRun, CliError>)> {
    let fp = cfg.flow_params().expect("validated config");
    cfg.experiment
        .seeds
        .par_iter()
        .map(|&seed| {
            let mp = cfg.model_params(seed);
            let sample = model::sample_disorder(&mp, 0);
            let run = run_flow(&mp, &sample, &fp).map_err(CliError::from).map(|mut r| {
                for row in &mut r.rows {
                    row.sample = seed;
                }
                r
            });
            (seed, run)
        })
        .collect()
}

fn first_error<T>(results: Vec<(u64, Result<T, CliError>)>) -> (Vec<(u64, T)>, Option<CliError>) {
    let mut ok = Vec::new();
    let mut err = None;
    for (seed, r) in results {
        match r {
            Ok(v) => ok.push((seed, v)),
            Err(e) => {
                if err.is_none() {
                    err = Some(match e {
                        CliError::Numeric(m) => CliError::Numeric(format!("seed {seed}: {m}")),
                        other => other,
                    });
                }
            }
        }
    }
    (ok, err)
}

#[derive(Serialize)]
struct FlowSummary {
    sample: u64,
    converged: bool,
    deferred: bool,
    scales: usize,
    final_norm_v: f64,
    max_generator_residual: f64,
    max_spectrum_drift: Option<f64>,
}

fn flow(cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    let l = cfg.model.chain_len;
    if l <= cfg.flow.dense_cutoff {
        check_dense(cfg, 1 << l)?;
    }
    let disorder: Vec<_> = cfg.experiment.seeds.iter().map(|&s| model::sample_disorder(&cfg.model_params(s), 0)).collect();
    out.csv(
        &schema::DISORDER,
        cfg.experiment.seeds.iter().zip(&disorder).flat_map(|(&seed, d)| {
            d.theta.iter().enumerate().map(move |(x, t)| vec![seed.to_string(), x.to_string(), fmt_f64(*t)])
        }),
    )?;
    let (runs, err) = first_error(flow_runs(cfg));
    out.csv(
        &schema::SCALES,
        runs.iter().flat_map(|(_, r)| {
            r.rows.iter().map(|row| {
                vec![
                    row.sample.to_string(),
                    row.k.to_string(),
                    fmt_f64(row.norm_v),
                    fmt_f64(row.norm_a),
                    row.n_terms.to_string(),
                    row.nr1_events.to_string(),
                    row.nr2_events.to_string(),
                    row.floor_events.to_string(),
                    fmt_opt(row.spectrum_drift),
                ]
            })
        }),
    )?;
    out.csv(
        &schema::RESONANCES,
        runs.iter().flat_map(|(seed, r)| {
            r.state.resonance_log.iter().map(move |e| {
                vec![
                    seed.to_string(),
                    e.k.to_string(),
                    serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default(),
                    e.descriptor.clone(),
                    fmt_f64(e.value),
                    fmt_f64(e.threshold),
                ]
            })
        }),
    )?;
    let summary: Vec<FlowSummary> = runs
        .iter()
        .map(|(seed, r)| FlowSummary {
            sample: *seed,
            converged: r.converged,
            deferred: r.deferred,
            scales: r.rows.len() - 1,
            final_norm_v: r.rows.last().map_or(0.0, |row| row.norm_v),
            max_generator_residual: r.residuals.iter().copied().fold(0.0, f64::max),
            max_spectrum_drift: r.rows.iter().filter_map(|row| row.spectrum_drift).reduce(f64::max),
        })
        .collect();
    out.json("flow_summary.json", &summary)?;
    if let Some(e) = err {
        return Err(e);
    }
    if let Some(s) = summary.iter().find(|s| s.max_spectrum_drift.is_some_and(|d| d > DRIFT_TOLERANCE)) {
        return Err(CliError::Numeric(format!("seed {}: spectrum drift {:e} above {DRIFT_TOLERANCE:e}", s.sample, s.max_spectrum_drift.unwrap())));
    }
    Ok(())
}

#[derive(Serialize)]
struct LiomSummary {
    sample: u64,
    converged: bool,
    unitarity_defect: f64,
    completeness_defect: f64,
    max_residual: f64,
    max_pair_commutator: f64,
    max_involution_defect: f64,
    profiles: Vec<liom::LocalityProfile>,
}

struct LiomResult {
    summary: LiomSummary,
    residuals: Vec<f64>,
    couplings: Vec<(usize, f64)>,
}

fn liom_one(cfg: &RunConfig, seed: u64, run: &FlowRun, sites: &[usize], direction: Direction) -> Result<LiomResult, CliError> {
    let l = cfg.model.chain_len;
    let mp = cfg.model_params(seed);
    let u = liom::unitary_of_flow(&run.state)?;
    let h = model::dense_hamiltonian(&mp, &model::sample_disorder(&mp, 0));
    let rep = liom::liom_check(&u.dense, &h, l)?;
    let profiles = sites
        .iter()
        .map(|&x| liom::locality_profile(&u.dense, &liom::z_dense(l, x), l, Interval::point(x), direction, &format!("Z{x}")))
        .collect::<mblflow_core::Result<Vec<_>>>()?;
    let couplings = liom::extract_diagonal_couplings(&run.state.e)?.max_by_diameter();
    Ok(LiomResult {
        summary: LiomSummary {
            sample: seed,
            converged: run.converged,
            unitarity_defect: u.unitarity_defect(),
            completeness_defect: liom::completeness_defect(&u.dense, l),
            max_residual: rep.max_residual(),
            max_pair_commutator: rep.max_pair_commutator,
            max_involution_defect: rep.max_involution_defect,
            profiles,
        },
        residuals: rep.residuals,
        couplings,
    })
}

fn liom_profile(cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    let l = cfg.model.chain_len;
    check_dense(cfg, 1 << l)?;
    let sites = if cfg.liom.sites.is_empty() { vec![(l - 1) / 2] } else { cfg.liom.sites.clone() };
    let direction: Direction = cfg.liom.direction.into();
    let (runs, flow_err) = first_error(flow_runs(cfg));
    let results: Vec<(u64, Result<LiomResult, CliError>)> =
        runs.par_iter().map(|(seed, run)| (*seed, liom_one(cfg, *seed, run, &sites, direction))).collect();
    let (results, err) = first_error(results);
    out.csv(
        &schema::LIOM_RESIDUALS,
        results.iter().flat_map(|(seed, r)| r.residuals.iter().enumerate().map(move |(x, v)| vec![seed.to_string(), x.to_string(), fmt_f64(*v)])),
    )?;
    out.csv(
        &schema::LOCALITY_TAILS,
        results.iter().flat_map(|(seed, r)| {
            r.summary.profiles.iter().flat_map(move |p| {
                p.tails.iter().enumerate().map(move |(n, t)| vec![seed.to_string(), p.operator.clone(), n.to_string(), fmt_f64(*t)])
            })
        }),
    )?;
    out.csv(
        &schema::COUPLING_DECAY,
        results.iter().flat_map(|(seed, r)| r.couplings.iter().map(move |(d, m)| vec![seed.to_string(), d.to_string(), fmt_f64(*m)])),
    )?;
    let summary: Vec<&LiomSummary> = results.iter().map(|(_, r)| &r.summary).collect();
    out.json("liom_summary.json", &summary)?;
    if let Some(e) = flow_err.or(err) {
        return Err(e);
    }
    for s in summary {
        let rec = s.profiles.iter().map(|p| p.reconstruction_error).fold(0.0, f64::max);
        if s.unitarity_defect > DENSE_TOLERANCE || rec > DENSE_TOLERANCE {
            return Err(CliError::Numeric(format!(
                "seed {}: unitarity defect {:e}, tail reconstruction error {rec:e}",
                s.sample, s.unitarity_defect
            )));
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ScanSummary {
    seed: u64,
    samples: u64,
    /// `(ε, fraction of samples with any violation)`.
    sample_frequency: Vec<(f64, f64)>,
}

fn scan(cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    let reports = cfg
        .experiment
        .seeds
        .iter()
        .map(|&seed| Ok((seed, resonance_scan(&cfg.model_params(seed), cfg.experiment.samples, cfg.scan.max_len, &cfg.scan.epsilons)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    out.csv(
        &schema::RESONANCE_SCAN,
        reports.iter().flat_map(|(seed, r)| {
            r.rows.iter().map(move |row| {
                vec![
                    seed.to_string(),
                    fmt_f64(row.epsilon),
                    row.length.to_string(),
                    row.diagrams.to_string(),
                    row.violations.to_string(),
                    fmt_f64(row.frequency),
                ]
            })
        }),
    )?;
    let summary: Vec<ScanSummary> =
        reports.iter().map(|(seed, r)| ScanSummary { seed: *seed, samples: r.samples, sample_frequency: r.sample_frequency.clone() }).collect();
    out.json("scan_summary.json", &summary)
}

fn diagram_count(cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    let ladder = ScaleLadder::from_f64(cfg.flow.beta, BETA_DENOMINATOR)?;
    let c = census(cfg.model.chain_len, cfg.census.k_max, cfg.census.w_max, &ladder, cfg.census.max_states)?;
    let fitted = fmt_f64(c.fitted_c);
    out.csv(
        &schema::CENSUS,
        c.rows.iter().map(|r| vec![r.x.to_string(), r.k.to_string(), r.w.to_string(), r.n.to_string(), fitted.clone()]),
    )
}

#[derive(Serialize)]
struct TransportSummary {
    t_final: f64,
    per_length: Vec<mblflow_core::transport::LengthStats>,
    log_log_slope: Option<f64>,
    note: &'static str,
}

fn transport(cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    let t = &cfg.transport;
    let bath = t.family.dim();
    for &l in &t.lengths {
        check_dense(cfg, (bath * bath) << l)?;
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &t_final in &t.times {
        let mut p = SweepParams::new(cfg.model_params(cfg.experiment.seeds[0]), t.lengths.clone(), cfg.experiment.seeds.clone());
        p.family = t.family;
        p.initial = cfg.initial_state();
        p.t_final = t_final;
        p.n_steps = t.n_steps;
        p.budget = cfg.budgets.dense_dim;
        let rep = length_sweep(&p)?;
        rows.extend(rep.rows);
        summary.push(TransportSummary { t_final, per_length: rep.per_length, log_log_slope: rep.log_log_slope, note: rep.note });
    }
    out.csv(
        &schema::TRANSPORT,
        rows.iter().map(|r| {
            vec![
                r.chain_len.to_string(),
                r.seed.to_string(),
                r.bath_family.clone(),
                fmt_f64(r.t_final),
                fmt_f64(r.avg_current),
                fmt_f64(r.energy_residual),
                fmt_f64(r.identity_residual),
            ]
        }),
    )?;
    out.json("transport_summary.json", &summary)?;
    if let Some(r) = rows.iter().find(|r| r.identity_residual > TRANSPORT_IDENTITY_TOLERANCE || r.energy_residual > TRANSPORT_ENERGY_TOLERANCE) {
        return Err(CliError::Numeric(format!(
            "L = {}, seed {}: identity residual {:e}, energy residual {:e}",
            r.chain_len, r.seed, r.identity_residual, r.energy_residual
        )));
    }
    Ok(())
}

fn lemmas(cfg: &RunConfig, out: &mut Out) -> Result<(), CliError> {
    let lm = &cfg.lemmas;
    let seed = cfg.experiment.seeds[0];
    let mut spectral = Vec::new();
    for (i, &d) in lm.spectral_dims.iter().enumerate() {
        for (j, &eps) in lm.spectral_epsilons.iter().enumerate() {
            let s = seed.wrapping_mul(1009).wrapping_add((i * lm.spectral_epsilons.len() + j) as u64);
            spectral.push((d, eps, oracle::spectral_lemma_check(d, eps, lm.spectral_trials, s)));
        }
    }
    let resolvent: Vec<_> =
        (1..=lm.resolvent_depth).map(|r| (r, oracle::resolvent_identity_check(r, lm.resolvent_trials, seed.wrapping_add(r as u64)))).collect();
    out.csv(
        &schema::SPECTRAL_LEMMA,
        spectral.iter().map(|&(d, eps, ratio)| {
            vec![d.to_string(), fmt_f64(eps), lm.spectral_trials.to_string(), fmt_f64(ratio), fmt_f64(SPECTRAL_LEMMA_CONSTANT)]
        }),
    )?;
    out.csv(
        &schema::RESOLVENT,
        resolvent.iter().map(|(r, rep)| {
            vec![
                r.to_string(),
                rep.trials.to_string(),
                rep.resampled.to_string(),
                fmt_f64(rep.max_abs_residual),
                fmt_f64(rep.max_rel_residual),
                rep.exact_failures.to_string(),
            ]
        }),
    )?;
    if let Some(&(d, eps, ratio)) = spectral.iter().find(|s| s.2 > SPECTRAL_LEMMA_CONSTANT) {
        return Err(CliError::Numeric(format!("spectral lemma ratio {ratio} above {SPECTRAL_LEMMA_CONSTANT} at d = {d}, epsilon = {eps}")));
    }
    if let Some((r, rep)) = resolvent.iter().find(|(_, rep)| rep.exact_failures > 0) {
        return Err(CliError::Numeric(format!("resolvent identity failed exactly on {} families at depth {r}", rep.exact_failures)));
    }
    Ok(())
}

/// Write `SCHEMA.md` into `dir`.
pub fn write_schema(dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join("SCHEMA.md");
    fs::write(&path, schema::markdown())?;
    Ok(path)
}
