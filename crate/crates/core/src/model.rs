//! Random disordered chains `Σ θ_x Z_x + Σ κ_x Z_x Z_{x+1} + Σ_I (γ/2)^{|I|} W_I`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::oracle;
use crate::pauli::{check_chain, local_components, Interval, OperatorSum, Parity, XMonomial, C64};
use crate::{Error, Result};

/// Rule generating the hermitian interval operators `W_I`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    /// Gaussian hermitian matrix on every interval, rescaled to unit norm.
    Random,
    /// `W_{x} = X_x`, nothing on longer intervals.
    TransverseField,
    /// `W_{x,x+1} = X_x X_{x+1}`, nothing else.
    Xx,
}

/// Parameters of the model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub chain_len: usize,
    pub gamma: f64,
    /// Bond couplings `κ_x`, `x = 0..L−1`; drawn from the seed when absent.
    pub kappa: Option<Vec<f64>>,
    pub c_kappa: f64,
    pub i_max: usize,
    pub ensemble: Ensemble,
    pub seed: u64,
}

impl ModelParams {
    pub fn new(chain_len: usize, gamma: f64, ensemble: Ensemble, seed: u64) -> Self {
        ModelParams { chain_len, gamma, kappa: None, c_kappa: 1.0, i_max: 3.min(chain_len.max(1)), ensemble, seed }
    }

    pub fn validate(&self) -> Result<()> {
        check_chain(self.chain_len)?;
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!("gamma = {} outside [0, 1)", self.gamma)));
        }
        if !(self.c_kappa > 0.0) {
            return Err(Error::InvalidParameter("c_kappa must be positive".into()));
        }
        if self.i_max < 1 || self.i_max > self.chain_len {
            return Err(Error::InvalidParameter(format!("i_max = {} outside 1..={}", self.i_max, self.chain_len)));
        }
        if let Some(k) = &self.kappa {
            if k.len() != self.chain_len - 1 {
                return Err(Error::InvalidParameter(format!("expected {} kappa values, got {}", self.chain_len - 1, k.len())));
            }
            if k.iter().any(|v| !(v.abs() < self.c_kappa)) {
                return Err(Error::InvalidParameter("kappa values must satisfy |kappa| < c_kappa".into()));
            }
        }
        Ok(())
    }

    /// The bond couplings, drawn once per seed when not given explicitly.
    pub fn kappa_values(&self) -> Vec<f64> {
        match &self.kappa {
            Some(k) => k.clone(),
            None => (0..self.chain_len.saturating_sub(1))
                .map(|x| {
                    let mut rng = stream_rng(self.seed, KAPPA_STREAM, x as u64);
                    let v: f64 = rng.random_range(-1.0..1.0);
                    v * self.c_kappa
                })
                .collect(),
        }
    }

    /// `(γ/2)^n`.
    pub fn weight(&self, n: usize) -> f64 {
        (self.gamma / 2.0).powi(n as i32)
    }
}

const KAPPA_STREAM: u64 = u64::MAX;
const THETA_STREAM: u64 = 0x7468_6574_61;
const W_STREAM: u64 = 0x5749;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator keyed by `(seed, stream, index)`.
pub fn stream_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(seed) ^ stream) ^ index))
}

/// One disorder realization `θ ∈ [0,1]^L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisorderSample {
    pub index: u64,
    pub theta: Vec<f64>,
}

impl DisorderSample {
    pub fn new(index: u64, theta: Vec<f64>) -> Result<Self> {
        if theta.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParameter("theta values must lie in [0, 1]".into()));
        }
        Ok(DisorderSample { index, theta })
    }
}

/// Draw sample number `index`; each site uses its own counter-keyed stream.
pub fn sample_disorder(params: &ModelParams, index: u64) -> DisorderSample {
    let theta = (0..params.chain_len)
        .map(|x| stream_rng(params.seed, THETA_STREAM ^ (index << 8), x as u64).random_range(0.0..=1.0))
        .collect();
    DisorderSample { index, theta }
}

/// CSV rows `(sample, site, theta)`.
pub fn disorder_rows(samples: &[DisorderSample]) -> Vec<(u64, usize, f64)> {
    samples.iter().flat_map(|s| s.theta.iter().enumerate().map(move |(x, &t)| (s.index, x, t))).collect()
}

/// Local hermitian operator on `interval`, lexicographic basis with the lowest site most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalTerm {
    pub interval: Interval,
    pub matrix: DMatrix<C64>,
}

pub(crate) fn pauli_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
}

fn pauli_z() -> DMatrix<C64> {
    // basis order |−1⟩, |+1⟩
    DMatrix::from_row_slice(2, 2, &[C64::new(-1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
}

pub(crate) fn random_hermitian(dim: usize, rng: &mut impl Rng) -> DMatrix<C64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let h = (&g + g.adjoint()) * C64::new(0.5, 0.0);
    let n = oracle::spectral_norm(&h);
    h / C64::new(n, 0.0)
}

/// The operators `W_I` (unweighted) for all intervals with `|I| ≤ i_max`.
pub fn generate_interval_terms(params: &ModelParams, sample: &DisorderSample) -> Vec<IntervalTerm> {
    let l = params.chain_len;
    let mut out = Vec::new();
    for len in 1..=params.i_max.min(l) {
        for lo in 0..=l - len {
            let interval = Interval::new(lo, lo + len - 1);
            let matrix = match (params.ensemble, len) {
                (Ensemble::TransverseField, 1) => pauli_x(),
                (Ensemble::Xx, 2) => pauli_x().kronecker(&pauli_x()),
                (Ensemble::Random, _) => {
                    let key = (lo as u64) << 32 | len as u64;
                    let mut rng = stream_rng(params.seed, W_STREAM ^ (sample.index << 8), key);
                    random_hermitian(1 << len, &mut rng)
                }
                _ => continue,
            };
            out.push(IntervalTerm { interval, matrix });
        }
    }
    out
}

/// One scale-0 perturbation term `X_S f_{S,I}`, with `f` tabulated on `I`.
#[derive(Clone, Debug, PartialEq)]
pub struct BareTerm {
    pub active: u64,
    pub interval: Interval,
    pub term: XMonomial,
}

/// The bare split `H = E0 + V0`.
#[derive(Clone, Debug)]
pub struct BareSplit {
    pub e0: OperatorSum,
    pub v0: OperatorSum,
    pub terms: Vec<BareTerm>,
}

/// `Σ θ_x Z_x + Σ κ_x Z_x Z_{x+1}` as a diagonal operator.
pub fn bare_energy(params: &ModelParams, sample: &DisorderSample) -> Result<OperatorSum> {
    let l = params.chain_len;
    let kappa = params.kappa_values();
    let mut terms = Vec::new();
    for x in 0..l {
        terms.push(XMonomial::z(l, x).scale(C64::new(sample.theta[x], 0.0)));
    }
    for (x, &k) in kappa.iter().enumerate() {
        terms.push(XMonomial::z_string(l, 0b11 << x).scale(C64::new(k, 0.0)));
    }
    OperatorSum::from_monomials(l, Parity::Hermitian, terms)
}

/// Split the Hamiltonian into `E0` and the interval-resolved perturbation `V0`.
pub fn split_bare(params: &ModelParams, sample: &DisorderSample) -> Result<BareSplit> {
    params.validate()?;
    let l = params.chain_len;
    let e0 = bare_energy(params, sample)?;
    let mut terms = Vec::new();
    if params.gamma > 0.0 {
        for w in generate_interval_terms(params, sample) {
            let scaled = w.matrix * C64::new(params.weight(w.interval.len()), 0.0);
            for term in local_components(l, w.interval, &scaled)? {
                terms.push(BareTerm { active: term.active(), interval: w.interval, term });
            }
        }
    }
    let v0 = OperatorSum::from_monomials(l, Parity::Hermitian, terms.iter().map(|t| t.term.clone()))?;
    Ok(BareSplit { e0, v0, terms })
}

/// Embed a local operator on `interval` into the full chain.
pub fn embed(chain_len: usize, interval: Interval, local: &DMatrix<C64>) -> DMatrix<C64> {
    let left = oracle::identity(1 << interval.lo);
    let right = oracle::identity(1 << (chain_len - 1 - interval.hi));
    left.kronecker(local).kronecker(&right)
}

/// The local pieces `H_I` of the Hamiltonian, one entry per field, bond and interval term.
pub fn local_hamiltonian_terms(params: &ModelParams, sample: &DisorderSample) -> Vec<IntervalTerm> {
    let mut out = Vec::new();
    for (x, &t) in sample.theta.iter().enumerate() {
        out.push(IntervalTerm { interval: Interval::point(x), matrix: pauli_z() * C64::new(t, 0.0) });
    }
    for (x, k) in params.kappa_values().into_iter().enumerate() {
        out.push(IntervalTerm { interval: Interval::new(x, x + 1), matrix: pauli_z().kronecker(&pauli_z()) * C64::new(k, 0.0) });
    }
    if params.gamma > 0.0 {
        for w in generate_interval_terms(params, sample) {
            let c = C64::new(params.weight(w.interval.len()), 0.0);
            out.push(IntervalTerm { interval: w.interval, matrix: w.matrix * c });
        }
    }
    out
}

/// Dense Hamiltonian assembled by tensor embedding (independent of the monomial algebra).
pub fn dense_hamiltonian(params: &ModelParams, sample: &DisorderSample) -> DMatrix<C64> {
    let l = params.chain_len;
    let n = 1 << l;
    let mut h = DMatrix::zeros(n, n);
    for t in local_hamiltonian_terms(params, sample) {
        h += embed(l, t.interval, &t.matrix);
    }
    h
}
