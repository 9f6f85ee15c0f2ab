use std::io::{BufRead, Write};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mdp::{DiscountedCmp, EpisodicMdp, NonStationaryPolicy, TabularPolicy};
use crate::trainer::{rollout_geometric, sample_index};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollectionMode {
    DiscountedGeometric,
    Episodic,
}

/// Uniform mixture of non-stationary policies.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMixture {
    policies: Vec<NonStationaryPolicy>,
}

impl PolicyMixture {
    pub fn new(policies: Vec<NonStationaryPolicy>) -> Result<Self> {
        if policies.is_empty() {
            return Err(invalid("policy mixture needs at least one policy"));
        }
        Ok(Self { policies })
    }

    pub fn policies(&self) -> &[NonStationaryPolicy] {
        &self.policies
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EnvRef<'a> {
    Discounted(&'a DiscountedCmp),
    Episodic(&'a EpisodicMdp),
}

impl EnvRef<'_> {
    pub fn n_states(&self) -> usize {
        match self {
            EnvRef::Discounted(c) => c.n_states(),
            EnvRef::Episodic(m) => m.n_states(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            EnvRef::Discounted(c) => c.n_actions(),
            EnvRef::Episodic(m) => m.n_actions(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum DataSource<'a> {
    Policy(&'a TabularPolicy),
    Mixture(&'a PolicyMixture),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSize {
    Trajectories(usize),
    /// Discounted mode only: rollouts until exactly this many records.
    Transitions(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub s: usize,
    pub a: usize,
    pub s2: usize,
    /// 1-based step in episodic datasets.
    pub h: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub mode: CollectionMode,
    pub source: String,
    pub trajectories: usize,
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    /// Index of the mixture component behind each episodic trajectory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub meta: DatasetMeta,
    pub records: Vec<TransitionRecord>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// JSON lines: the metadata object, then one record per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.meta)?;
        writeln!(out)?;
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or(Error::EmptyDataset)??;
        let meta: DatasetMeta = serde_json::from_str(&header)?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: TransitionRecord = serde_json::from_str(&line)?;
            if r.s >= meta.n_states || r.s2 >= meta.n_states || r.a >= meta.n_actions {
                return Err(invalid(format!("record {r:?} out of range")));
            }
            records.push(r);
        }
        Ok(Self { meta, records })
    }
}

/// Collects transitions. Discounted mode needs a CMP and a stationary
/// policy; episodic mode needs an episodic MDP and a mixture, from which
/// each trajectory draws one policy uniformly.
pub fn collect_dataset(
    env: EnvRef,
    source: DataSource,
    size: DatasetSize,
    mode: CollectionMode,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<TransitionDataset> {
    let target = match size {
        DatasetSize::Trajectories(m) | DatasetSize::Transitions(m) => m,
    };
    if target == 0 {
        return Err(Error::EmptyDataset);
    }
    match (mode, env, source) {
        (CollectionMode::DiscountedGeometric, EnvRef::Discounted(cmp), DataSource::Policy(pi)) => {
            let gamma = cmp.gamma();
            if gamma >= 1.0 {
                return Err(Error::GammaOneUnsupported);
            }
            let mut records = Vec::new();
            let mut trajectories = 0;
            loop {
                let batch = match size {
                    DatasetSize::Trajectories(m) => rollout_geometric(cmp, pi, m, gamma, rng)?,
                    DatasetSize::Transitions(_) => rollout_geometric(cmp, pi, 1, gamma, rng)?,
                };
                for t in batch {
                    trajectories += 1;
                    for (&(s, a), &s2) in t.pairs.iter().zip(&t.next_states) {
                        records.push(TransitionRecord { s, a, s2, h: None });
                    }
                }
                match size {
                    DatasetSize::Trajectories(_) => break,
                    DatasetSize::Transitions(n) if records.len() >= n => {
                        records.truncate(n);
                        break;
                    }
                    DatasetSize::Transitions(_) => {}
                }
            }
            Ok(TransitionDataset {
                meta: DatasetMeta {
                    mode,
                    source: "stationary policy".into(),
                    trajectories,
                    seed,
                    n_states: cmp.n_states(),
                    n_actions: cmp.n_actions(),
                    horizon: None,
                    gamma: Some(gamma),
                    components: Vec::new(),
                },
                records,
            })
        }
        (CollectionMode::Episodic, EnvRef::Episodic(mdp), DataSource::Mixture(mix)) => {
            let DatasetSize::Trajectories(m) = size else {
                return Err(Error::ModeMismatch(
                    "episodic datasets are sized in trajectories".into(),
                ));
            };
            let horizon = mdp.horizon();
            for p in mix.policies() {
                mdp.check_policy(p, horizon)?;
            }
            let weights = vec![1.0 / mix.len() as f64; mix.len()];
            let mut records = Vec::with_capacity(m * horizon);
            let mut components = Vec::with_capacity(m);
            for _ in 0..m {
                let k = sample_index(&weights, rng);
                components.push(k);
                let pi = &mix.policies()[k];
                let mut s = sample_index(mdp.init(), rng);
                for layer in 0..horizon {
                    let a = sample_index(pi.step(layer).row(s), rng);
                    let s2 = sample_index(mdp.row(layer, s, a), rng);
                    records.push(TransitionRecord {
                        s,
                        a,
                        s2,
                        h: Some(layer + 1),
                    });
                    s = s2;
                }
            }
            Ok(TransitionDataset {
                meta: DatasetMeta {
                    mode,
                    source: format!("uniform mixture of {} policies", mix.len()),
                    trajectories: m,
                    seed,
                    n_states: mdp.n_states(),
                    n_actions: mdp.n_actions(),
                    horizon: Some(horizon),
                    gamma: None,
                    components,
                },
                records,
            })
        }
        (mode, _, _) => Err(Error::ModeMismatch(format!(
            "{mode:?} collection needs {}",
            match mode {
                CollectionMode::DiscountedGeometric => "a discounted CMP and a stationary policy",
                CollectionMode::Episodic => "an episodic MDP and a policy mixture",
            }
        ))),
    }
}
