use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::ops::{Add, Div, Mul, Neg, Sub};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// `4/(√2 − 1)`, the constant of the perturbed-triangular spectral bound.
pub const SPECTRAL_LEMMA_CONSTANT: f64 = 4.0 / (std::f64::consts::SQRT_2 - 1.0);

/// One draw of `D + N + E`: largest `dist(λ, spec D) / ε` over the eigenvalues.
///
/// `D` is diagonal with entries uniform in `[−1, 1]`, `N` strictly upper
/// triangular with `|N_ij| ≤ 1`, `E` strictly lower triangular with
/// `|E_ij| ≤ ε^{|i−j|+1}`. For `ε = 0` the raw distance is returned.
pub fn spectral_lemma_ratio(d: usize, epsilon: f64, rng: &mut impl Rng) -> f64 {
    let diag: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let m = DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            diag[i]
        } else if j > i {
            rng.random_range(-1.0..=1.0)
        } else {
            rng.random_range(-1.0..=1.0) * epsilon.powi((i - j) as i32 + 1)
        }
    });
    let worst = m
        .complex_eigenvalues()
        .iter()
        .map(|l| diag.iter().map(|&x| ((l.re - x).powi(2) + l.im.powi(2)).sqrt()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    if epsilon > 0.0 {
        worst / epsilon
    } else {
        worst
    }
}

/// Max over `n_trials` of [`spectral_lemma_ratio`], seeded deterministically.
pub fn spectral_lemma_check(d: usize, epsilon: f64, n_trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_trials).map(|_| spectral_lemma_ratio(d, epsilon, &mut rng)).fold(0.0, f64::max)
}

/// Summary of [`resolvent_identity_check`].
#[derive(Clone, Debug, Serialize)]
pub struct ResolventReport {
    pub trials: usize,
    pub resampled: usize,
    /// Largest `|lhs − rhs|`.
    pub max_abs_residual: f64,
    /// Largest `|lhs − rhs|` divided by the sum of absolute values of the expansion terms.
    pub max_rel_residual: f64,
    /// Trials where the identity fails in exact rational arithmetic on the same inputs.
    pub exact_failures: usize,
    pub max_exact_residual: f64,
}

/// Truncated denominators built from a base value and a list of increments.
///
/// An increment `(u0, v0, x)` enters `D_{u,v}` whenever `u0 ≤ u` and `v0 ≤ v`.
struct Family<'a, T> {
    base: T,
    increments: &'a [(usize, usize, T)],
}

/// Scalars the expansion is evaluated in: `f64`, or exact rationals.
trait Scalar: Clone + Zero + One + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self> {}

impl<T> Scalar for T where T: Clone + Zero + One + Add<Output = T> + Sub<Output = T> + Mul<Output = T> + Div<Output = T> + Neg<Output = T> {}

impl<T: Scalar> Family<'_, T> {
    fn d(&self, u: i64, v: i64) -> T {
        if u < 0 || v < 0 {
            return T::one();
        }
        self.base.clone() + self.sum(|a, b| a as i64 <= u && b as i64 <= v)
    }

    fn d_left_exact(&self, u: usize, v: usize) -> T {
        self.sum(|a, b| a == u && b <= v)
    }

    fn d_right_exact(&self, u: usize, v: usize) -> T {
        self.sum(|a, b| a <= u && b == v)
    }

    fn sum(&self, keep: impl Fn(usize, usize) -> bool) -> T {
        self.increments.iter().filter(|(a, b, _)| keep(*a, *b)).fold(T::zero(), |acc, t| acc + t.2.clone())
    }

    /// Terms of the five-part expansion of `1/D_{R,R}`.
    fn expansion_terms(&self, r: usize) -> Vec<T> {
        let ri = r as i64;
        let mut t = vec![T::one() / self.d(0, 0)];
        for v in 1..=ri {
            t.push(-self.d_right_exact(0, v as usize) / (self.d(0, v) * self.d(0, v - 1)));
        }
        for u in 1..=ri {
            t.push(-self.d_left_exact(u as usize, r) / (self.d(u, 0) * self.d(u - 1, 0)));
        }
        for u in 1..=ri {
            let left = self.d_left_exact(u as usize, r);
            for v in 1..=ri {
                t.push(
                    left.clone() * self.d_right_exact(u as usize, v as usize) / (self.d(u, v) * self.d(u, v - 1) * self.d(u - 1, v)),
                );
                t.push(
                    left.clone() * self.d_right_exact(u as usize - 1, v as usize)
                        / (self.d(u, v - 1) * self.d(u - 1, v) * self.d(u - 1, v - 1)),
                );
            }
        }
        t
    }

    /// `1/D_{R,R}` minus the sum of the expansion terms.
    fn defect(&self, r: usize) -> T {
        let ri = r as i64;
        self.expansion_terms(r).into_iter().fold(T::one() / self.d(ri, ri), |acc, t| acc - t)
    }
}

impl Family<'_, f64> {
    fn min_abs_denominator(&self, r: usize) -> f64 {
        let ri = r as i64;
        let mut m = f64::INFINITY;
        for u in 0..=ri {
            for v in 0..=ri {
                m = m.min(self.d(u, v).abs());
            }
        }
        m
    }

    /// The same family with every input converted exactly to a rational.
    fn exact_defect(&self, r: usize) -> BigRational {
        let q = |x: f64| BigRational::from_float(x).expect("finite input");
        let inc: Vec<(usize, usize, BigRational)> = self.increments.iter().map(|&(a, b, x)| (a, b, q(x))).collect();
        Family { base: q(self.base), increments: &inc }.defect(r)
    }
}

/// Check the resolvent expansion of `1/D_{R,R}` on random scalar families.
///
/// Each trial draws a base value and up to `2(R+1)` increments at random
/// offsets. Trials where some truncated denominator falls below `1e−6` are
/// resampled.
pub fn resolvent_identity_check(r: usize, n_trials: usize, seed: u64) -> ResolventReport {
    assert!(r >= 1, "expansion depth must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ResolventReport {
        trials: n_trials,
        resampled: 0,
        max_abs_residual: 0.0,
        max_rel_residual: 0.0,
        exact_failures: 0,
        max_exact_residual: 0.0,
    };
    let mut done = 0;
    while done < n_trials {
        let base = rng.random_range(1.0..3.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let n_inc = rng.random_range(0..=2 * (r + 1));
        let increments: Vec<(usize, usize, f64)> = (0..n_inc)
            .map(|_| (rng.random_range(0..=r), rng.random_range(0..=r), rng.random_range(-0.5..0.5)))
            .collect();
        let fam = Family { base, increments: &increments };
        if fam.min_abs_denominator(r) < 1e-6 {
            report.resampled += 1;
            continue;
        }
        let (abs, rel) = residual(&fam, r);
        let exact = fam.exact_defect(r);
        if !exact.is_zero() {
            report.exact_failures += 1;
            report.max_exact_residual = report.max_exact_residual.max(exact.abs().to_f64().unwrap_or(f64::INFINITY));
        }
        report.max_abs_residual = report.max_abs_residual.max(abs);
        report.max_rel_residual = report.max_rel_residual.max(rel);
        done += 1;
    }
    report
}

fn residual(fam: &Family<f64>, r: usize) -> (f64, f64) {
    let terms = fam.expansion_terms(r);
    let lhs = 1.0 / fam.d(r as i64, r as i64);
    let rhs: f64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|t| t.abs()).sum::<f64>() + lhs.abs();
    let abs = (lhs - rhs).abs();
    (abs, abs / scale)
}

/// Residual of the expansion for an explicit family (used in tests).
pub fn resolvent_residual(base: f64, increments: &[(usize, usize, f64)], r: usize) -> f64 {
    residual(&Family { base, increments }, r).0
}
