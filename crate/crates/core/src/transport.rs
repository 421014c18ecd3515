//! Chain coupled to two finite baths at its ends, and the heat current through its middle.
//!
//! The total space is ordered `left bath ⊗ chain ⊗ right bath`, the left bath
//! being the most significant factor.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{self, DisorderSample, ModelParams};
use crate::oracle::{self, Eigen, DEFAULT_DENSE_BUDGET};
use crate::pauli::C64;
use crate::stats;
use crate::{Error, Result};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BathFamily {
    /// One qubit per side.
    TwoLevel,
    /// Two qubits per side.
    FourLevel,
}

impl BathFamily {
    pub fn dim(self) -> usize {
        match self {
            BathFamily::TwoLevel => 2,
            BathFamily::FourLevel => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BathFamily::TwoLevel => "two-level",
            BathFamily::FourLevel => "four-level",
        }
    }
}

/// How the initial density operator is prepared. The chain factor is maximally mixed
/// unless the whole state is a random pure state.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum InitialState {
    Thermal { beta_l: f64, beta_r: f64 },
    MaximallyMixed,
    PureRandom,
}

#[derive(Clone, Debug)]
pub struct BathSpec {
    pub family: BathFamily,
    pub h_l: DMatrix<C64>,
    pub h_r: DMatrix<C64>,
    /// Bath factor of the contact `V_l ⊗ X` on the first site.
    pub v_l: DMatrix<C64>,
    /// Bath factor of the contact `X ⊗ V_r` on the last site.
    pub v_r: DMatrix<C64>,
    pub initial: InitialState,
}

const BATH_STREAM: u64 = 0x6261_7468;

fn random_symmetric(dim: usize, norm: f64, rng: &mut impl Rng) -> DMatrix<C64> {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let s = (&g + g.transpose()) * 0.5;
    let c = oracle::from_real(&s);
    let n = oracle::spectral_norm(&c);
    c * C64::new(norm / n, 0.0)
}

impl BathSpec {
    /// Real symmetric Gaussian bath Hamiltonians and contacts, all rescaled to unit norm.
    pub fn random(family: BathFamily, initial: InitialState, seed: u64) -> Self {
        let d = family.dim();
        let mut rng = model::stream_rng(seed, BATH_STREAM, d as u64);
        BathSpec {
            family,
            h_l: random_symmetric(d, 1.0, &mut rng),
            h_r: random_symmetric(d, 1.0, &mut rng),
            v_l: random_symmetric(d, 1.0, &mut rng),
            v_r: random_symmetric(d, 1.0, &mut rng),
            initial,
        }
    }

    /// Baths with no contact to the chain.
    pub fn decoupled(family: BathFamily, initial: InitialState, seed: u64) -> Self {
        let mut b = BathSpec::random(family, initial, seed);
        let d = family.dim();
        b.v_l = DMatrix::zeros(d, d);
        b.v_r = DMatrix::zeros(d, d);
        b
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.family.dim();
        for (name, m) in [("h_l", &self.h_l), ("h_r", &self.h_r), ("v_l", &self.v_l), ("v_r", &self.v_r)] {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::Shape { expected: d, rows: m.nrows(), cols: m.ncols() });
            }
            if oracle::hermitian_defect(m) > 1e-12 {
                return Err(Error::InvalidParameter(format!("bath operator {name} is not hermitian")));
            }
        }
        for (name, m) in [("v_l", &self.v_l), ("v_r", &self.v_r)] {
            if oracle::spectral_norm(m) > 1.0 + 1e-12 {
                return Err(Error::InvalidParameter(format!("bath contact {name} has norm above 1")));
            }
        }
        if let InitialState::Thermal { beta_l, beta_r } = self.initial {
            if !(beta_l >= 0.0 && beta_r >= 0.0) {
                return Err(Error::InvalidParameter("inverse temperatures must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

/// `H_tot` together with its left/right split across the middle of the chain.
#[derive(Clone, Debug)]
pub struct TotalSystem {
    pub chain_len: usize,
    pub bath_dim: usize,
    pub h_tot: DMatrix<C64>,
    pub h_left: DMatrix<C64>,
    pub h_right: DMatrix<C64>,
}

impl TotalSystem {
    pub fn dim(&self) -> usize {
        self.h_tot.nrows()
    }
}

/// `a ⊗ chain ⊗ b` with identities filled in.
fn place(bath_dim: usize, left: Option<&DMatrix<C64>>, chain: Option<&DMatrix<C64>>, right: Option<&DMatrix<C64>>, chain_dim: usize) -> DMatrix<C64> {
    let id_b = oracle::identity(bath_dim);
    let id_c = oracle::identity(chain_dim);
    left.unwrap_or(&id_b).kronecker(chain.unwrap_or(&id_c)).kronecker(right.unwrap_or(&id_b))
}

/// Assemble `H_tot` and split it: local chain terms whose interval starts in the first
/// half (1-based `min I ≤ L/2`) go left together with the left bath and its contact.
pub fn build_total_system(params: &ModelParams, sample: &DisorderSample, baths: &BathSpec, budget: usize) -> Result<TotalSystem> {
    params.validate()?;
    baths.validate()?;
    let l = params.chain_len;
    let d = baths.family.dim();
    let chain_dim = 1usize << l;
    let dim = d * chain_dim * d;
    oracle::check_budget(dim, budget)?;
    let x = model::pauli_x();
    let mut h_left = place(d, Some(&baths.h_l), None, None, chain_dim);
    h_left += place(d, Some(&baths.v_l), Some(&model::embed(l, crate::pauli::Interval::point(0), &x)), None, chain_dim);
    let mut h_right = place(d, None, None, Some(&baths.h_r), chain_dim);
    h_right += place(d, None, Some(&model::embed(l, crate::pauli::Interval::point(l - 1), &x)), Some(&baths.v_r), chain_dim);
    for term in model::local_hamiltonian_terms(params, sample) {
        let op = place(d, None, Some(&model::embed(l, term.interval, &term.matrix)), None, chain_dim);
        if term.interval.lo < l / 2 {
            h_left += op;
        } else {
            h_right += op;
        }
    }
    let h_tot = &h_left + &h_right;
    Ok(TotalSystem { chain_len: l, bath_dim: d, h_tot, h_left, h_right })
}

/// `J = i[H_r, H_l]`, the rate of change of `H_l`.
pub fn current_operator(h_left: &DMatrix<C64>, h_right: &DMatrix<C64>) -> DMatrix<C64> {
    oracle::commutator(h_right, h_left) * C64::new(0.0, 1.0)
}

fn thermal(h: &DMatrix<C64>, beta: f64) -> Result<DMatrix<C64>> {
    let e = oracle::eigh(h)?;
    let shift = e.values.first().copied().unwrap_or(0.0);
    let z: f64 = e.values.iter().map(|&v| (-beta * (v - shift)).exp()).sum();
    Ok(e.apply_fn(|v| C64::new((-beta * (v - shift)).exp() / z, 0.0)))
}

/// Initial density operator on the total space.
pub fn initial_density(sys: &TotalSystem, baths: &BathSpec, seed: u64) -> Result<DMatrix<C64>> {
    let d = sys.bath_dim;
    let chain_dim = 1usize << sys.chain_len;
    let mixed_chain = oracle::identity(chain_dim) * C64::new(1.0 / chain_dim as f64, 0.0);
    match baths.initial {
        InitialState::Thermal { beta_l, beta_r } => {
            let rl = thermal(&baths.h_l, beta_l)?;
            let rr = thermal(&baths.h_r, beta_r)?;
            Ok(rl.kronecker(&mixed_chain).kronecker(&rr))
        }
        InitialState::MaximallyMixed => {
            let n = sys.dim();
            Ok(oracle::identity(n) * C64::new(1.0 / n as f64, 0.0))
        }
        InitialState::PureRandom => {
            let n = d * chain_dim * d;
            let mut rng = model::stream_rng(seed, BATH_STREAM ^ 0xff, n as u64);
            let v = nalgebra::DVector::<C64>::from_fn(n, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
            let v = &v / C64::new(v.norm(), 0.0);
            Ok(&v * v.adjoint())
        }
    }
}

/// Reject anything that is not hermitian, unit-trace and positive.
pub fn check_density(rho: &DMatrix<C64>) -> Result<()> {
    if !rho.is_square() {
        return Err(Error::InvalidDensity("not square".into()));
    }
    if oracle::hermitian_defect(rho) > 1e-12 {
        return Err(Error::InvalidDensity("not hermitian".into()));
    }
    let tr = oracle::trace(rho);
    if (tr - C64::new(1.0, 0.0)).norm() > 1e-10 {
        return Err(Error::InvalidDensity(format!("trace {tr}")));
    }
    let min = oracle::dense_spectrum(rho)?.first().copied().unwrap_or(0.0);
    if min < -1e-10 {
        return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
    }
    Ok(())
}

/// Current and left energy along a time grid, all from the spectral representation.
#[derive(Clone, Debug, Serialize)]
pub struct CurrentTrace {
    pub times: Vec<f64>,
    pub current: Vec<f64>,
    /// `(1/t)∫_0^t ⟨J⟩` at each grid time; the first entry is `⟨J(0)⟩`.
    pub running_average: Vec<f64>,
    pub left_energy: Vec<f64>,
    /// `(1/T)∫_0^T ⟨J⟩` at the final time.
    pub average: f64,
    /// `|average − (⟨H_l(T)⟩ − ⟨H_l(0)⟩)/T|`.
    pub identity_residual: f64,
    /// `|⟨H_tot(T)⟩ − ⟨H_tot(0)⟩|`.
    pub energy_drift: f64,
}

/// `(e^{−ix} − 1)/(−ix)`, the time average of `e^{−iΔt}` over `[0, T]` with `x = ΔT`.
fn average_phase(x: f64) -> C64 {
    if x.abs() < 1e-6 {
        C64::new(1.0 - x * x / 6.0, -x / 2.0)
    } else {
        (C64::new(0.0, -x).exp() - C64::new(1.0, 0.0)) / C64::new(0.0, -x)
    }
}

/// Spectral evaluation of `Σ_{ab} ρ_{ab} O_{ba} w(λ_a − λ_b)` in the eigenbasis of `H_tot`.
struct Pairing<'a> {
    eig: &'a Eigen,
    rho: DMatrix<C64>,
}

impl Pairing<'_> {
    fn weighted(&self, op: &DMatrix<C64>, w: impl Fn(f64) -> C64) -> f64 {
        let n = self.rho.nrows();
        let mut acc = C64::new(0.0, 0.0);
        for a in 0..n {
            for b in 0..n {
                acc += self.rho[(a, b)] * op[(b, a)] * w(self.eig.values[a] - self.eig.values[b]);
            }
        }
        acc.re
    }
}

/// Evolve `rho0` under `H_tot` and average the current exactly over `[0, T]`.
pub fn average_current(sys: &TotalSystem, rho0: &DMatrix<C64>, t_final: f64, n_steps: usize) -> Result<CurrentTrace> {
    if rho0.nrows() != sys.dim() {
        return Err(Error::Shape { expected: sys.dim(), rows: rho0.nrows(), cols: rho0.ncols() });
    }
    check_density(rho0)?;
    if !(t_final > 0.0) || n_steps == 0 {
        return Err(Error::InvalidParameter("T must be positive and n_steps at least 1".into()));
    }
    let eig = oracle::eigh(&sys.h_tot)?;
    let j = current_operator(&sys.h_left, &sys.h_right);
    let jt = eig.to_eigenbasis(&j);
    let hl = eig.to_eigenbasis(&sys.h_left);
    let ht = eig.to_eigenbasis(&sys.h_tot);
    let p = Pairing { eig: &eig, rho: eig.to_eigenbasis(rho0) };

    let at = |op: &DMatrix<C64>, t: f64| p.weighted(op, |d| C64::new(0.0, -d * t).exp());
    let mut times = Vec::with_capacity(n_steps + 1);
    let mut current = Vec::with_capacity(n_steps + 1);
    let mut running = Vec::with_capacity(n_steps + 1);
    let mut left_energy = Vec::with_capacity(n_steps + 1);
    for s in 0..=n_steps {
        let t = t_final * s as f64 / n_steps as f64;
        times.push(t);
        current.push(at(&jt, t));
        running.push(if s == 0 { current[0] } else { p.weighted(&jt, |d| average_phase(d * t)) });
        left_energy.push(at(&hl, t));
    }
    let average = *running.last().unwrap();
    let identity_residual = (average - (left_energy[n_steps] - left_energy[0]) / t_final).abs();
    let energy_drift = (at(&ht, t_final) - at(&ht, 0.0)).abs();
    Ok(CurrentTrace { times, current, running_average: running, left_energy, average, identity_residual, energy_drift })
}

/// `ρ(t) = e^{−iHt} ρ e^{iHt}` through the eigendecomposition.
pub fn evolve_density(eig: &Eigen, rho0: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let mut r = eig.to_eigenbasis(rho0);
    let n = r.nrows();
    for a in 0..n {
        for b in 0..n {
            r[(a, b)] *= C64::new(0.0, -(eig.values[a] - eig.values[b]) * t).exp();
        }
    }
    oracle::matmul(&oracle::matmul(&eig.vectors, &r), &eig.vectors.adjoint())
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    #[serde(rename = "L")]
    pub chain_len: usize,
    pub seed: u64,
    pub bath_family: String,
    #[serde(rename = "T")]
    pub t_final: f64,
    pub avg_current: f64,
    pub energy_residual: f64,
    pub identity_residual: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LengthStats {
    #[serde(rename = "L")]
    pub chain_len: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub per_length: Vec<LengthStats>,
    /// Slope of `log median |current|` against `log L`.
    pub log_log_slope: Option<f64>,
    pub note: &'static str,
}

/// Fixed settings of a length sweep; the chain length of `model` is overridden per entry.
#[derive(Clone, Debug)]
pub struct SweepParams {
    pub model: ModelParams,
    pub family: BathFamily,
    pub initial: InitialState,
    pub lengths: Vec<usize>,
    pub t_final: f64,
    pub n_steps: usize,
    pub seeds: Vec<u64>,
    pub budget: usize,
}

impl SweepParams {
    pub fn new(model: ModelParams, lengths: Vec<usize>, seeds: Vec<u64>) -> Self {
        SweepParams {
            model,
            family: BathFamily::TwoLevel,
            initial: InitialState::Thermal { beta_l: 0.2, beta_r: 5.0 },
            lengths,
            t_final: 1e3,
            n_steps: 1,
            seeds,
            budget: DEFAULT_DENSE_BUDGET,
        }
    }
}

/// Median `|time-averaged current|` per chain length. The bath draw depends on the seed only,
/// so every length sees the same baths.
pub fn length_sweep(p: &SweepParams) -> Result<SweepReport> {
    if p.seeds.is_empty() || p.lengths.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one seed and one length".into()));
    }
    for &l in &p.lengths {
        oracle::check_budget((p.family.dim() * p.family.dim()) << l, p.budget)?;
    }
    let mut rows = Vec::new();
    let mut per_length = Vec::new();
    for &l in &p.lengths {
        let mut mags = Vec::with_capacity(p.seeds.len());
        for &seed in &p.seeds {
            let mut mp = p.model.clone();
            mp.chain_len = l;
            mp.i_max = mp.i_max.min(l);
            mp.seed = seed;
            if let Some(k) = &mp.kappa {
                if k.len() != l - 1 {
                    mp.kappa = None;
                }
            }
            let sample = model::sample_disorder(&mp, 0);
            let baths = BathSpec::random(p.family, p.initial, seed);
            let sys = build_total_system(&mp, &sample, &baths, p.budget)?;
            let rho = initial_density(&sys, &baths, seed)?;
            let tr = average_current(&sys, &rho, p.t_final, p.n_steps)?;
            mags.push(tr.average.abs());
            rows.push(SweepRow {
                chain_len: l,
                seed,
                bath_family: p.family.name().to_string(),
                t_final: p.t_final,
                avg_current: tr.average,
                energy_residual: tr.energy_drift,
                identity_residual: tr.identity_residual,
            });
        }
        per_length.push(LengthStats {
            chain_len: l,
            median: stats::median(&mags),
            q1: stats::quantile(&mags, 0.25),
            q3: stats::quantile(&mags, 0.75),
        });
    }
    let pts: Vec<(f64, f64)> =
        per_length.iter().filter(|s| s.median > 0.0).map(|s| ((s.chain_len as f64).ln(), s.median.ln())).collect();
    let log_log_slope = if pts.len() >= 2 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        stats::fit_line(&xs, &ys).map(|f| f.slope)
    } else {
        None
    };
    Ok(SweepReport {
        rows,
        per_length,
        log_log_slope,
        note: "slope is reported only; the predicted exponent involves an undetermined constant",
    })
}
