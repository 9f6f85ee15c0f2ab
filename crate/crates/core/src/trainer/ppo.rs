use serde::{Deserialize, Serialize};

use super::density::CountDensity;
use super::rollout::Trajectory;
use super::value::{td_lambda_targets, TabularValueFn};
use super::TrainerConfig;
use crate::entropy::surrogate_reward;
use crate::error::{Error, Result};
use crate::mdp::TabularPolicy;

/// `min(ratio * A, g(eps, A))` with `g = (1 + eps) A` for `A >= 0` and
/// `(1 - eps) A` otherwise.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    let clip = if advantage >= 0.0 {
        (1.0 + eps) * advantage
    } else {
        (1.0 - eps) * advantage
    };
    (ratio * advantage).min(clip)
}

/// Gradient of `H(softmax(theta))` in the logits of one row.
pub fn entropy_bonus_gradient(row: &[f64]) -> Vec<f64> {
    let h: f64 = -row
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    row.iter()
        .map(|p| if *p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    #[default]
    Plain,
    Adam,
}

/// Ascent step rule on the logits; Adam keeps its moments across updates.
#[derive(Debug, Clone)]
pub struct PolicyOptimizer {
    kind: OptimizerKind,
    lr: f64,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: i32,
}

impl PolicyOptimizer {
    pub fn new(kind: OptimizerKind, lr: f64, dim: usize) -> Self {
        Self {
            kind,
            lr,
            first: vec![0.0; dim],
            second: vec![0.0; dim],
            steps: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Plain => {
                theta
                    .iter_mut()
                    .zip(grad)
                    .for_each(|(t, g)| *t += self.lr * g);
            }
            OptimizerKind::Adam => {
                let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
                self.steps += 1;
                let c1 = 1.0 - b1.powi(self.steps);
                let c2 = 1.0 - b2.powi(self.steps);
                for i in 0..theta.len() {
                    self.first[i] = b1 * self.first[i] + (1.0 - b1) * grad[i];
                    self.second[i] = b2 * self.second[i] + (1.0 - b2) * grad[i] * grad[i];
                    let m = self.first[i] / c1;
                    let v = self.second[i] / c2;
                    theta[i] += self.lr * m / (v.sqrt() + eps);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PpoStats {
    /// Clipped objective plus bonus at the last epoch, before its step.
    pub objective: f64,
    /// Mean `KL(pi_old || pi_new)` over the batch's visited states.
    pub kl: f64,
    pub clipped_fraction: f64,
}

/// Advantages `target - V(s)` for the batch, with targets from
/// [`td_lambda_targets`] under the surrogate rewards of `density`.
pub fn batch_advantages(
    batch: &[Trajectory],
    density: &CountDensity,
    value: &TabularValueFn,
    config: &TrainerConfig,
) -> Result<Vec<f64>> {
    let refs: Vec<&Trajectory> = batch.iter().collect();
    let rewards = relabel(&refs, density, config);
    let targets = td_lambda_targets(&refs, &rewards, value, config.lambda, config.truncation)?;
    Ok(batch
        .iter()
        .zip(targets)
        .flat_map(|(t, tg)| {
            t.states()
                .zip(tg)
                .map(|(s, x)| x - value.values[s])
                .collect::<Vec<_>>()
        })
        .collect())
}

pub(crate) fn relabel(
    trajectories: &[&Trajectory],
    density: &CountDensity,
    config: &TrainerConfig,
) -> Vec<Vec<f64>> {
    trajectories
        .iter()
        .map(|t| {
            t.pairs
                .iter()
                .map(|&(s, a)| {
                    surrogate_reward(density.prob(s, a), config.alpha, config.reward_cap)
                })
                .collect()
        })
        .collect()
}

/// Clipped-ratio policy update on the newest batch with an entropy bonus.
pub fn ppo_update(
    policy: &TabularPolicy,
    batch: &[Trajectory],
    density: &CountDensity,
    value: &TabularValueFn,
    config: &TrainerConfig,
    optimizer: &mut PolicyOptimizer,
) -> Result<(TabularPolicy, PpoStats)> {
    let (n, a_n) = (policy.n_states(), policy.n_actions());
    let pairs: Vec<(usize, usize)> = batch.iter().flat_map(|t| t.pairs.iter().copied()).collect();
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut adv = batch_advantages(batch, density, value, config)?;
    if config.normalize_advantages && adv.len() > 1 {
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / adv.len() as f64;
        let sd = var.sqrt();
        adv.iter_mut().for_each(|x| {
            *x = if sd > 1e-12 {
                (*x - mean) / sd
            } else {
                *x - mean
            }
        });
    }
    let old = policy.clone();
    let mut theta = if policy.has_finite_logits() {
        policy.logits().to_vec()
    } else {
        policy.probs().iter().map(|p| p.max(1e-300).ln()).collect()
    };
    let count = pairs.len() as f64;
    let mut current = policy.clone();
    let mut objective = 0.0;
    let mut clipped = 0usize;
    for _ in 0..config.ppo_epochs.max(1) {
        let mut grad = vec![0.0; n * a_n];
        objective = 0.0;
        clipped = 0;
        for (&(s, a), &adv_i) in pairs.iter().zip(&adv) {
            let row = current.row(s);
            let ratio = row[a] / old.row(s)[a];
            let unclipped = ratio * adv_i;
            let value_i = clipped_surrogate(ratio, adv_i, config.clip);
            objective += value_i / count;
            if unclipped <= value_i {
                // d ratio / d theta_{s,b} = ratio (1[b = a] - pi(b|s))
                for b in 0..a_n {
                    let ind = if b == a { 1.0 } else { 0.0 };
                    grad[s * a_n + b] += adv_i * ratio * (ind - row[b]) / count;
                }
            } else {
                clipped += 1;
            }
            if config.eta != 0.0 {
                let bonus = entropy_bonus_gradient(row);
                let h: f64 = -row
                    .iter()
                    .filter(|p| **p > 0.0)
                    .map(|p| p * p.ln())
                    .sum::<f64>();
                objective += config.eta * h / count;
                for b in 0..a_n {
                    grad[s * a_n + b] += config.eta * bonus[b] / count;
                }
            }
        }
        optimizer.step(&mut theta, &grad);
        current = TabularPolicy::from_logits(n, a_n, theta.clone())?;
    }
    let kl = pairs
        .iter()
        .map(|&(s, _)| {
            old.row(s)
                .iter()
                .zip(current.row(s))
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, q)| p * (p / q).ln())
                .sum::<f64>()
        })
        .sum::<f64>()
        / count;
    Ok((
        current,
        PpoStats {
            objective,
            kl,
            clipped_fraction: clipped as f64 / count,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_examples() {
        assert_eq!(clipped_surrogate(1.0, 0.7, 0.2), 0.7);
        assert_eq!(clipped_surrogate(1.0, -0.7, 0.2), -0.7);
        assert!((clipped_surrogate(2.0, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert!((clipped_surrogate(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
    }

    #[test]
    fn uniform_row_has_zero_bonus_gradient() {
        assert!(entropy_bonus_gradient(&[0.25; 4])
            .iter()
            .all(|g| g.abs() < 1e-15));
        let g = entropy_bonus_gradient(&[0.7, 0.3]);
        // pushes mass toward the rarer action
        assert!(g[0] < 0.0 && g[1] > 0.0);
        assert!((g[0] + g[1]).abs() < 1e-15);
    }
}
