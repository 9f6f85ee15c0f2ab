//! Sample-based entropy maximisation: geometric rollouts, count density,
//! relabelled surrogate rewards, truncated TD(lambda) value fitting and
//! clipped-ratio policy updates with an entropy bonus.

mod density;
mod ppo;
mod rollout;
mod value;

use std::collections::HashSet;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use density::{fit_density, CountDensity, ReplayBuffer};
pub use ppo::{
    batch_advantages, clipped_surrogate, entropy_bonus_gradient, ppo_update, OptimizerKind,
    PolicyOptimizer, PpoStats,
};
pub(crate) use rollout::sample_index;
pub use rollout::{rollout_geometric, Trajectory};
pub use value::{fit_value, td_lambda_targets, TabularValueFn};

use crate::entropy::{renyi_entropy, RenyiOrder, DEFAULT_REWARD_CAP};
use crate::error::{invalid, Result};
use crate::mdp::{occupancy, DiscountedCmp, TabularPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub alpha: RenyiOrder,
    /// Entropy-bonus coefficient.
    pub eta: f64,
    pub lambda: f64,
    /// Longest n-step estimate in the value targets.
    pub truncation: usize,
    pub clip: f64,
    pub kappa: f64,
    /// Trajectories per iteration.
    pub trajectories: usize,
    /// Iterations kept in the replay buffer.
    pub buffer: usize,
    pub gamma: f64,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub ppo_epochs: usize,
    pub value_epochs: usize,
    pub reward_cap: f64,
    pub iterations: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub normalize_advantages: bool,
    /// Logged when the per-update KL exceeds it; never enforced.
    pub kl_ceiling: f64,
    /// Monte-Carlo entropy every this many iterations (0 disables).
    pub mc_every: usize,
    pub mc_trajectories: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            alpha: RenyiOrder::new(0.5).expect("valid order"),
            eta: 1e-4,
            lambda: 0.95,
            truncation: 15,
            clip: 0.2,
            kappa: 0.5,
            trajectories: 10,
            buffer: 10,
            gamma: 0.995,
            lr_policy: 4e-3,
            lr_value: 1e-3,
            ppo_epochs: 10,
            value_epochs: 10,
            reward_cap: DEFAULT_REWARD_CAP,
            iterations: 200,
            seed: 0,
            optimizer: OptimizerKind::Plain,
            normalize_advantages: true,
            kl_ceiling: 0.5,
            mc_every: 0,
            mc_trajectories: 1000,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 11] = [
            (self.eta >= 0.0, "eta must be nonnegative"),
            (
                (0.0..=1.0).contains(&self.lambda),
                "lambda must lie in [0, 1]",
            ),
            (self.truncation >= 1, "truncation must be at least 1"),
            (self.clip > 0.0, "clip must be positive"),
            (self.kappa > 0.0, "kappa must be positive"),
            (
                self.trajectories >= 1,
                "need at least one trajectory per iteration",
            ),
            (self.buffer >= 1, "buffer must hold at least one batch"),
            ((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)"),
            (
                self.lr_policy >= 0.0 && self.lr_value >= 0.0,
                "learning rates must be nonnegative",
            ),
            (self.ppo_epochs >= 1, "ppo_epochs must be at least 1"),
            (self.reward_cap > 0.0, "reward_cap must be positive"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(invalid(msg));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationMetrics {
    pub iter: usize,
    /// `H_alpha` of the exact occupancy of the updated policy.
    pub exact_entropy: f64,
    pub mc_entropy: Option<f64>,
    pub mean_traj_len: f64,
    pub policy_kl: f64,
    pub value_loss: f64,
    pub kl_exceeded: bool,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: TabularPolicy,
    pub value: TabularValueFn,
    pub density: CountDensity,
    pub metrics: Vec<IterationMetrics>,
}

impl TrainResult {
    pub fn best_exact_entropy(&self) -> f64 {
        self.metrics
            .iter()
            .map(|m| m.exact_entropy)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Runs the exploration loop. The exact entropy metric is taken on `cmp`
/// with its discount replaced by `config.gamma`.
pub fn train(cmp: &DiscountedCmp, config: &TrainerConfig) -> Result<TrainResult> {
    config.validate()?;
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let exact_env = if config.gamma > 0.0 {
        Some(cmp.with_gamma(config.gamma)?)
    } else {
        None
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut policy = TabularPolicy::uniform(n, a_n);
    let mut value = TabularValueFn::zeros(n);
    let mut buffer = ReplayBuffer::new(config.buffer);
    let mut optimizer = PolicyOptimizer::new(config.optimizer, config.lr_policy, n * a_n);
    let mut metrics = Vec::with_capacity(config.iterations);
    let mut density = None;
    for iter in 0..config.iterations {
        let batch = rollout_geometric(cmp, &policy, config.trajectories, config.gamma, &mut rng)?;
        let visits: usize = batch.iter().map(|t| t.len()).sum();
        let mean_traj_len = visits as f64 / batch.len() as f64;
        buffer.push(batch);
        let newest = buffer.newest().expect("just pushed");
        let fitted = fit_density(newest, n, a_n, config.kappa)?;
        // relabel the whole buffer with the latest density
        let all: Vec<&Trajectory> = buffer.trajectories().collect();
        let rewards = ppo::relabel(&all, &fitted, config);
        let targets = td_lambda_targets(&all, &rewards, &value, config.lambda, config.truncation)?;
        let states: Vec<usize> = all.iter().flat_map(|t| t.states()).collect();
        let flat: Vec<f64> = targets.into_iter().flatten().collect();
        let value_loss = fit_value(
            &mut value,
            &states,
            &flat,
            config.lr_value,
            config.value_epochs,
        )?;
        let (next, stats) = ppo_update(&policy, newest, &fitted, &value, config, &mut optimizer)?;
        policy = next;
        let exact_entropy = match &exact_env {
            Some(env) => renyi_entropy(occupancy(env, &policy, None)?.weights(), config.alpha),
            None => renyi_entropy(&initial_pairs(cmp, &policy), config.alpha),
        };
        let mc_entropy = if config.mc_every > 0 && (iter + 1) % config.mc_every == 0 {
            Some(estimate_entropy_mc(
                cmp,
                &policy,
                config.alpha,
                &McProtocol {
                    trajectories: config.mc_trajectories,
                    ..McProtocol::default()
                },
                config.gamma,
                &mut rng,
            )?)
        } else {
            None
        };
        metrics.push(IterationMetrics {
            iter,
            exact_entropy,
            mc_entropy,
            mean_traj_len,
            policy_kl: stats.kl,
            value_loss,
            kl_exceeded: stats.kl > config.kl_ceiling,
        });
        density = Some(fitted);
    }
    let density = match density {
        Some(d) => d,
        None => CountDensity {
            n_states: n,
            n_actions: a_n,
            counts: vec![0; n * a_n],
            total: 0,
            kappa: config.kappa,
        },
    };
    Ok(TrainResult {
        policy,
        value,
        density,
        metrics,
    })
}

/// Start-state pair distribution, the occupancy when rollouts have length 1.
fn initial_pairs(cmp: &DiscountedCmp, policy: &TabularPolicy) -> Vec<f64> {
    let a_n = cmp.n_actions();
    cmp.init()
        .iter()
        .enumerate()
        .flat_map(|(s, m)| (0..a_n).map(move |a| (s, a, *m)))
        .map(|(s, a, m)| m * policy.prob(s, a))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McProtocol {
    /// Rollouts for the empirical distribution (`alpha > 0`).
    pub trajectories: usize,
    /// Groups and trajectories per group for the support count (`alpha = 0`).
    pub groups: usize,
    pub group_size: usize,
}

impl Default for McProtocol {
    fn default() -> Self {
        Self {
            trajectories: 1000,
            groups: 50,
            group_size: 20,
        }
    }
}

/// Entropy of sampled visits. For `alpha = 0`, the mean over groups of the
/// log number of distinct pairs seen in each group.
pub fn estimate_entropy_mc(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    alpha: RenyiOrder,
    protocol: &McProtocol,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let a_n = cmp.n_actions();
    if alpha.value() == 0.0 {
        let mut total = 0.0;
        for _ in 0..protocol.groups {
            let group = rollout_geometric(cmp, policy, protocol.group_size, gamma, rng)?;
            let seen: HashSet<(usize, usize)> =
                group.iter().flat_map(|t| t.pairs.iter().copied()).collect();
            total += (seen.len() as f64).ln();
        }
        return Ok(total / protocol.groups.max(1) as f64);
    }
    let batch = rollout_geometric(cmp, policy, protocol.trajectories, gamma, rng)?;
    let mut counts = vec![0.0; cmp.n_states() * a_n];
    let mut total = 0.0;
    for (s, a) in batch.iter().flat_map(|t| t.pairs.iter()) {
        counts[s * a_n + a] += 1.0;
        total += 1.0;
    }
    counts.iter_mut().for_each(|c| *c /= total);
    Ok(renyi_entropy(&counts, alpha))
}

pub fn write_metrics_csv<W: Write>(
    mut out: W,
    metrics: &[IterationMetrics],
) -> std::io::Result<()> {
    writeln!(
        out,
        "iter,exact_entropy,mc_entropy,mean_traj_len,policy_kl,value_loss"
    )?;
    for m in metrics {
        let mc = m.mc_entropy.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            m.iter, m.exact_entropy, mc, m.mean_traj_len, m.policy_kl, m.value_loss
        )?;
    }
    Ok(())
}

/// Everything needed to resume or reuse a trained explorer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n_states: usize,
    pub n_actions: usize,
    pub logits: Vec<f64>,
    pub values: Vec<f64>,
    pub counts: Vec<u64>,
    pub config: TrainerConfig,
}

impl Checkpoint {
    pub fn new(result: &TrainResult, config: &TrainerConfig) -> Self {
        Self {
            n_states: result.policy.n_states(),
            n_actions: result.policy.n_actions(),
            logits: result.policy.logits().to_vec(),
            values: result.value.values.clone(),
            counts: result.density.counts.clone(),
            config: config.clone(),
        }
    }

    pub fn policy(&self) -> Result<TabularPolicy> {
        TabularPolicy::from_logits(self.n_states, self.n_actions, self.logits.clone())
    }
}
