//! `manifest.json`: what was run, with which settings, and how it ended.

use std::collections::BTreeMap;

use mblflow_core::flow::FLOOR_ESCALATIONS;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{RunConfig, BETA_DENOMINATOR};

/// Largest exponent `a` in `δ = ε = γ^a` for which the convergence proof applies.
pub const PROOF_EXPONENT_LIMIT: f64 = 1.0 / (7.0 * 312.0);

#[derive(Clone, Debug, Serialize)]
pub struct ProofRegime {
    pub epsilon_exponent: Option<f64>,
    pub delta_exponent: Option<f64>,
    pub exponent_limit: f64,
    pub delta_equals_epsilon: bool,
    pub beta: f64,
    pub inside: bool,
}

/// Exponents of `ε` and `δ` as powers of `γ`, and whether both sit below the proof limit.
///
/// The unknown smallness threshold on `γ` is not checked.
pub fn proof_regime(cfg: &RunConfig) -> ProofRegime {
    let p = cfg.flow_params().expect("validated config");
    let g = cfg.model.gamma;
    let exponent = |x: f64| (g > 0.0).then(|| x.ln() / g.ln());
    let (ae, ad) = (exponent(p.epsilon), exponent(p.delta));
    let below = |a: Option<f64>| a.is_some_and(|a| a > 0.0 && a < PROOF_EXPONENT_LIMIT);
    let equal = p.epsilon == p.delta;
    ProofRegime {
        epsilon_exponent: ae,
        delta_exponent: ad,
        exponent_limit: PROOF_EXPONENT_LIMIT,
        delta_equals_epsilon: equal,
        beta: p.ladder.beta_f64(),
        inside: equal && below(ae) && below(ad),
    }
}

/// Modelling choices that affect the numbers, recorded verbatim.
pub fn decisions(cfg: &RunConfig) -> BTreeMap<&'static str, String> {
    let p = cfg.flow_params().expect("validated config");
    let mut d = BTreeMap::new();
    d.insert("basis", "site 0 is the most significant tensor factor; bit 1 means spin up".into());
    d.insert("beta_ratio", format!("{} (denominator {BETA_DENOMINATOR})", p.ladder.beta()));
    d.insert("ensemble", label(&cfg.model.ensemble));
    d.insert("flow_mode", label(&cfg.flow.mode));
    d.insert("length_proxy", label(&cfg.flow.length_proxy));
    d.insert(
        "denominator_floor",
        match p.eta_den {
            Some(f) => format!("fixed {f:e}"),
            None => format!(
                "{:e} * epsilon^length, raised tenfold up to {FLOOR_ESCALATIONS} times when the rotation series diverges",
                p.eta_den_margin
            ),
        },
    );
    d.insert("series_stop", format!("ratio-test tail bound below {:e}, at most {} terms", p.eta_series, p.n_max));
    d.insert("unitary_order", "U = exp(-A_1) ... exp(-A_K), so U^dagger H U is the final Hamiltonian".into());
    d.insert("transport_split", "a chain term joins the left half when its first site is below L/2".into());
    d.insert("transport_baths", "real symmetric Gaussian bath Hamiltonians rescaled to unit norm; the chain factor of a product initial state is maximally mixed".into());
    d
}

/// Serialized name of a unit enum variant.
fn label<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

pub fn config_hash(cfg: &RunConfig) -> String {
    format!("{:x}", Sha256::digest(cfg.canonical().as_bytes()))
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config_hash: String,
    pub config: RunConfig,
    pub decisions: BTreeMap<&'static str, String>,
    pub proof_regime: ProofRegime,
    pub status: &'static str,
    pub exit_code: u8,
    pub message: Option<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config_hash: config_hash(cfg),
            config: cfg.clone(),
            decisions: decisions(cfg),
            proof_regime: proof_regime(cfg),
            status: "running",
            exit_code: 0,
            message: None,
            outputs: Vec::new(),
        }
    }
}
