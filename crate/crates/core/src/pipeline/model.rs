use serde::Serialize;

use super::dataset::TransitionDataset;
use crate::error::{invalid, Error, Result};
use crate::mdp::{DiscountedCmp, EpisodicMdp};

/// Count-based transition estimate, one layer per step for episodic data.
/// Rows with no visits are flagged and carry no estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    /// `counts[layer][(s*A + a)*S + s']`.
    pub counts: Vec<Vec<u64>>,
    /// `visits[layer][s*A + a]`; `u64::MAX` marks an exactly known row.
    pub visits: Vec<Vec<u64>>,
    estimates: Vec<Vec<f64>>,
}

impl EmpiricalModel {
    pub fn n_layers(&self) -> usize {
        self.visits.len()
    }

    pub fn visit_count(&self, layer: usize, s: usize, a: usize) -> u64 {
        self.visits[layer][s * self.n_actions + a]
    }

    pub fn is_seen(&self, layer: usize, s: usize, a: usize) -> bool {
        self.visit_count(layer, s, a) > 0
    }

    pub fn unseen_mask(&self, layer: usize) -> Vec<bool> {
        self.visits[layer].iter().map(|v| *v == 0).collect()
    }

    /// `P_hat(.|s,a)`, absent for unseen pairs.
    pub fn estimate(&self, layer: usize, s: usize, a: usize) -> Option<&[f64]> {
        if !self.is_seen(layer, s, a) {
            return None;
        }
        let start = (s * self.n_actions + a) * self.n_states;
        Some(&self.estimates[layer][start..start + self.n_states])
    }

    /// Model that knows the true CMP exactly.
    pub fn exact_discounted(cmp: &DiscountedCmp) -> Self {
        let (n, a_n) = (cmp.n_states(), cmp.n_actions());
        Self {
            n_states: n,
            n_actions: a_n,
            horizon: None,
            gamma: Some(cmp.gamma()),
            counts: vec![vec![0; n * a_n * n]],
            visits: vec![vec![u64::MAX; n * a_n]],
            estimates: vec![cmp.transition().to_vec()],
        }
    }

    /// Model that knows every layer of an episodic MDP exactly.
    pub fn exact_episodic(mdp: &EpisodicMdp) -> Self {
        let (n, a_n, h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
        Self {
            n_states: n,
            n_actions: a_n,
            horizon: Some(h),
            gamma: None,
            counts: vec![vec![0; n * a_n * n]; h],
            visits: vec![vec![u64::MAX; n * a_n]; h],
            estimates: (0..h).map(|l| mdp.layer(l).to_vec()).collect(),
        }
    }
}

/// Counts transitions per step (or in one layer for discounted data) and
/// normalises the seen rows.
pub fn estimate_model(dataset: &TransitionDataset) -> Result<EmpiricalModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let meta = &dataset.meta;
    let (n, a_n) = (meta.n_states, meta.n_actions);
    let layers = meta.horizon.unwrap_or(1);
    let mut counts = vec![vec![0u64; n * a_n * n]; layers];
    let mut visits = vec![vec![0u64; n * a_n]; layers];
    for r in &dataset.records {
        let layer = match (meta.horizon, r.h) {
            (Some(h), Some(step)) if (1..=h).contains(&step) => step - 1,
            (Some(_), _) => return Err(invalid(format!("record {r:?} lacks a valid step"))),
            (None, _) => 0,
        };
        if r.s >= n || r.s2 >= n || r.a >= a_n {
            return Err(invalid(format!("record {r:?} out of range")));
        }
        counts[layer][(r.s * a_n + r.a) * n + r.s2] += 1;
        visits[layer][r.s * a_n + r.a] += 1;
    }
    let estimates = counts
        .iter()
        .zip(&visits)
        .map(|(c, v)| {
            c.iter()
                .enumerate()
                .map(|(i, x)| {
                    let total = v[i / n];
                    if total > 0 {
                        *x as f64 / total as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(EmpiricalModel {
        n_states: n,
        n_actions: a_n,
        horizon: meta.horizon,
        gamma: meta.gamma,
        counts,
        visits,
        estimates,
    })
}
