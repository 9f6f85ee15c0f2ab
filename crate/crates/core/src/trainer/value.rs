use serde::{Deserialize, Serialize};

use super::rollout::Trajectory;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularValueFn {
    pub values: Vec<f64>,
}

impl TabularValueFn {
    pub fn zeros(n_states: usize) -> Self {
        Self {
            values: vec![0.0; n_states],
        }
    }
}

/// Truncated TD(lambda) targets, undiscounted within each trajectory.
///
/// With `N` visits and `h = min(N, k + p)` (1-based), the `p`-step estimate
/// is `r_k + .. + r_{h-1} + V(s_h)` and the target mixes them as
/// `(1 - lambda) sum_{p<P} lambda^(p-1) V_p + lambda^(P-1) V_P`.
pub fn td_lambda_targets(
    trajectories: &[&Trajectory],
    rewards: &[Vec<f64>],
    value: &TabularValueFn,
    lambda: f64,
    truncation: usize,
) -> Result<Vec<Vec<f64>>> {
    if trajectories.len() != rewards.len() {
        return Err(Error::Misaligned(format!(
            "{} trajectories but {} reward sequences",
            trajectories.len(),
            rewards.len()
        )));
    }
    if truncation == 0 {
        return Err(invalid("truncation must be at least 1"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda must lie in [0, 1]"));
    }
    trajectories
        .iter()
        .zip(rewards)
        .map(|(t, r)| {
            if t.len() != r.len() {
                return Err(Error::Misaligned(format!(
                    "trajectory of length {} with {} rewards",
                    t.len(),
                    r.len()
                )));
            }
            let n = t.len();
            let v: Vec<f64> = t.states().map(|s| value.values[s]).collect();
            let mut prefix = vec![0.0; n + 1];
            for i in 0..n {
                prefix[i + 1] = prefix[i] + r[i];
            }
            Ok((0..n)
                .map(|k| {
                    // 0-based: the p-step estimate bootstraps at min(n - 1, k + p)
                    let estimate = |p: usize| {
                        let h = (k + p).min(n - 1);
                        prefix[h] - prefix[k] + v[h]
                    };
                    let mut target = 0.0;
                    let mut weight = 1.0;
                    for p in 1..truncation {
                        target += (1.0 - lambda) * weight * estimate(p);
                        weight *= lambda;
                    }
                    target + weight * estimate(truncation)
                })
                .collect())
        })
        .collect()
}

/// Gradient steps on the per-state mean of `(V(s) - target)^2 / 2`.
/// Returns the loss before the first step.
pub fn fit_value(
    value: &mut TabularValueFn,
    states: &[usize],
    targets: &[f64],
    lr: f64,
    epochs: usize,
) -> Result<f64> {
    if states.len() != targets.len() {
        return Err(Error::Misaligned(format!(
            "{} states but {} targets",
            states.len(),
            targets.len()
        )));
    }
    if states.is_empty() {
        return Ok(0.0);
    }
    let n = value.values.len();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (s, t) in states.iter().zip(targets) {
        sum[*s] += t;
        count[*s] += 1;
    }
    let loss = states
        .iter()
        .zip(targets)
        .map(|(s, t)| 0.5 * (value.values[*s] - t).powi(2))
        .sum::<f64>()
        / states.len() as f64;
    for _ in 0..epochs {
        for s in 0..n {
            if count[s] > 0 {
                let mean = sum[s] / count[s] as f64;
                value.values[s] += lr * (mean - value.values[s]);
            }
        }
    }
    Ok(loss)
}
