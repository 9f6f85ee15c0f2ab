//! End-to-end collect, estimate, plan and evaluate on a known CMP.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    collect_dataset, estimate_model, evaluate_policy, optimal_value, plan, CollectionMode,
    DataSource, DatasetSize, EnvRef, EvaluationRow, PlanOptions, RewardFn, TransitionDataset,
};
use crate::envs::random_policy;
use crate::error::Result;
use crate::mdp::{DiscountedCmp, TabularPolicy};
use crate::trainer::{train, TrainerConfig};

/// Where the exploratory policy comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Exploration {
    /// Trained with the sample-based entropy maximiser.
    #[default]
    Trained,
    Uniform,
    /// Action rows drawn uniformly from the simplex, seeded by the run seed.
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutcome {
    pub explorer: TabularPolicy,
    pub dataset: TransitionDataset,
    pub rows: Vec<EvaluationRow>,
}

impl PipelineOutcome {
    pub fn worst_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.gap).fold(0.0, f64::max)
    }

    pub fn n_failing(&self, tol: f64) -> usize {
        self.rows.iter().filter(|r| r.gap > tol).count()
    }
}

/// One sparse reward per state-action pair, ids `s{s}a{a}`.
pub fn sparse_rewards(n_states: usize, n_actions: usize) -> Result<Vec<(String, RewardFn)>> {
    let mut out = Vec::with_capacity(n_states * n_actions);
    for s in 0..n_states {
        for a in 0..n_actions {
            out.push((
                format!("s{s}a{a}"),
                RewardFn::single_pair(n_states, n_actions, s, a)?,
            ));
        }
    }
    Ok(out)
}

pub fn exploration_policy(
    cmp: &DiscountedCmp,
    exploration: Exploration,
    trainer: &TrainerConfig,
    seed: u64,
) -> Result<TabularPolicy> {
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    match exploration {
        Exploration::Trained => Ok(train(cmp, trainer)?.policy),
        Exploration::Uniform => Ok(TabularPolicy::uniform(n, a_n)),
        Exploration::Random => random_policy(n, a_n, seed),
    }
}

/// Collects `size` with `explorer` under geometric termination at the CMP's
/// discount, plans each reward on the estimated model and scores the plan
/// against the optimum of the true CMP.
pub fn run_pipeline(
    cmp: &DiscountedCmp,
    explorer: &TabularPolicy,
    rewards: &[(String, RewardFn)],
    size: DatasetSize,
    planner: &PlanOptions,
    seed: u64,
) -> Result<PipelineOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let env = EnvRef::Discounted(cmp);
    let dataset = collect_dataset(
        env,
        DataSource::Policy(explorer),
        size,
        CollectionMode::DiscountedGeometric,
        seed,
        &mut rng,
    )?;
    let model = estimate_model(&dataset)?;
    let mut rows = Vec::with_capacity(rewards.len());
    for (id, reward) in rewards {
        let planned = plan(&model, reward, planner)?;
        let j_planned = evaluate_policy(env, &planned, reward)?;
        let (_, j_optimal) = optimal_value(env, reward)?;
        rows.push(EvaluationRow {
            reward_id: id.clone(),
            j_planned,
            j_optimal,
            gap: j_optimal - j_planned,
        });
    }
    Ok(PipelineOutcome {
        explorer: explorer.clone(),
        dataset,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::five_state;
    use crate::pipeline::PlannerMethod;
    use crate::Error;

    #[test]
    fn ten_sparse_rewards_on_the_chain() {
        let r = sparse_rewards(5, 2).unwrap();
        assert_eq!(r.len(), 10);
        assert_eq!(r[3].0, "s1a1");
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let cmp = five_state(0.9).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let rewards = sparse_rewards(5, 2).unwrap();
        let r = run_pipeline(
            &cmp,
            &pi,
            &rewards,
            DatasetSize::Transitions(0),
            &PlanOptions::default(),
            0,
        );
        assert!(matches!(r, Err(Error::EmptyDataset)));
    }

    #[test]
    fn large_uniform_dataset_plans_optimally() {
        let cmp = five_state(0.9).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let rewards = sparse_rewards(5, 2).unwrap();
        let opts = PlanOptions {
            method: PlannerMethod::BatchConstrained,
            ..PlanOptions::default()
        };
        let out = run_pipeline(
            &cmp,
            &pi,
            &rewards,
            DatasetSize::Transitions(5000),
            &opts,
            3,
        )
        .unwrap();
        assert!(out.worst_gap() <= 1e-6, "{:?}", out.rows);
        assert_eq!(out.n_failing(1e-6), 0);
    }
}
