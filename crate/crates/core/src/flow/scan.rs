//! Monte-Carlo frequency of scale-0 NR_I violations.

use serde::Serialize;

use super::flip_derivative;
use crate::diagrams::scale_zero_diagrams;
use crate::model::{self, ModelParams};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanRow {
    pub epsilon: f64,
    pub length: usize,
    pub diagrams: u64,
    pub violations: u64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScanReport {
    pub samples: u64,
    pub rows: Vec<ScanRow>,
    /// Fraction of samples with at least one violation, per entry of `epsilons`.
    pub sample_frequency: Vec<(f64, f64)>,
}

impl ScanReport {
    pub fn frequency(&self, epsilon: f64, length: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.epsilon == epsilon && r.length == length).map(|r| r.frequency)
    }
}

/// Check `‖1/∂_g E^(0)‖ ≤ ε^{−|g|}` for every off-diagonal scale-0 diagram up to `max_len`.
pub fn resonance_scan(model_params: &ModelParams, n_samples: u64, max_len: usize, epsilons: &[f64]) -> Result<ScanReport> {
    model_params.validate()?;
    let l = model_params.chain_len;
    let diagrams: Vec<_> = scale_zero_diagrams(l, max_len).into_iter().filter(|g| !g.is_diagonal()).collect();
    let max_len = diagrams.iter().map(|g| g.domain.len()).max().unwrap_or(0);
    let mut counts = vec![vec![(0u64, 0u64); max_len + 1]; epsilons.len()];
    let mut hit_samples = vec![0u64; epsilons.len()];
    for index in 0..n_samples {
        let sample = model::sample_disorder(model_params, index);
        let e0 = model::bare_energy(model_params, &sample)?.diagonal_function()?;
        let mut hit = vec![false; epsilons.len()];
        let mut min_den = std::collections::HashMap::new();
        for g in &diagrams {
            let m = *min_den
                .entry(g.active)
                .or_insert_with(|| flip_derivative(&e0, g.active).table().iter().map(|v| v.re.abs()).fold(f64::INFINITY, f64::min));
            let len = g.domain.len();
            for (ei, &eps) in epsilons.iter().enumerate() {
                let violated = m < eps.powi(len as i32);
                counts[ei][len].0 += 1;
                if violated {
                    counts[ei][len].1 += 1;
                    hit[ei] = true;
                }
            }
        }
        for (ei, h) in hit.into_iter().enumerate() {
            hit_samples[ei] += h as u64;
        }
    }
    let mut rows = Vec::new();
    for (ei, &eps) in epsilons.iter().enumerate() {
        for len in 1..=max_len {
            let (n, v) = counts[ei][len];
            if n > 0 {
                rows.push(ScanRow { epsilon: eps, length: len, diagrams: n, violations: v, frequency: v as f64 / n as f64 });
            }
        }
    }
    let sample_frequency = epsilons.iter().zip(&hit_samples).map(|(&e, &h)| (e, h as f64 / n_samples.max(1) as f64)).collect();
    Ok(ScanReport { samples: n_samples, rows, sample_frequency })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ensemble;

    #[test]
    fn smaller_epsilon_gives_fewer_violations() {
        let mp = ModelParams::new(6, 0.05, Ensemble::TransverseField, 5);
        let r = resonance_scan(&mp, 300, 3, &[0.4, 0.2, 0.1]).unwrap();
        let f: Vec<f64> = r.sample_frequency.iter().map(|x| x.1).collect();
        assert!(f[0] >= f[1] && f[1] >= f[2], "{f:?}");
        assert!(f[0] > 0.0);
    }
}
