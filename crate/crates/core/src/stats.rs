//! Small statistics helpers shared by the ensemble runners.

use serde::Serialize;

/// Median of a non-empty sample (mean of the two middle values for even sizes).
pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Linear-interpolated quantile, `q ∈ [0, 1]`. Returns NaN for an empty sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Result of an ordinary least-squares line fit `y ≈ intercept + slope·x`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares line through `(x, y)`; `None` with fewer than two distinct x values.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Some(LineFit { slope, intercept: my - slope * mx, points: xs.len() })
}

/// Fit `y ≈ A e^{−rate·x}` on the points with `y > floor`.
///
/// Returns `(prefactor, rate)`.
pub fn fit_exponential_decay(xs: &[f64], ys: &[f64], floor: f64) -> Option<(f64, f64)> {
    let (fx, fy): (Vec<f64>, Vec<f64>) = xs.iter().zip(ys).filter(|(_, &y)| y > floor).map(|(&x, &y)| (x, y.ln())).unzip();
    fit_line(&fx, &fy).map(|f| (f.intercept.exp(), -f.slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_quantiles() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 - 2.0 * x).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && (f.intercept - 1.5).abs() < 1e-12);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn exponential_fit_skips_noise_floor() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 2.0 * (-0.5f64).exp(), 2.0 * (-1.0f64).exp(), 1e-16, 0.0];
        let (a, rate) = fit_exponential_decay(&xs, &ys, 1e-13).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (rate - 0.5).abs() < 1e-12);
    }
}
