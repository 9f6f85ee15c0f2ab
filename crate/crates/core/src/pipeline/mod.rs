//! Reward-free planning: collect transitions with an exploratory policy,
//! estimate a model from counts, then plan for any reward revealed later.

mod dataset;
mod experiment;
mod model;
mod planner;
mod theory;

pub use dataset::{
    collect_dataset, CollectionMode, DataSource, DatasetMeta, DatasetSize, EnvRef, PolicyMixture,
    TransitionDataset, TransitionRecord,
};
pub use experiment::{
    exploration_policy, run_pipeline, sparse_rewards, Exploration, PipelineOutcome,
};
pub use model::{estimate_model, EmpiricalModel};
pub use planner::{
    evaluate_policy, npg_schedule, optimal_value, plan, write_evaluation_csv, EvaluationRow,
    PlanOptions, PlannerMethod, RewardFn, UnseenValue,
};
pub use theory::{
    entropy_mixture, mixture_distributions, significance_diagnostic, theoretical_sample_bound,
    SignificanceReport, SignificantPair,
};
