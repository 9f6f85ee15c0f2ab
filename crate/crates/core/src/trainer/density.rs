use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::rollout::Trajectory;
use crate::error::{invalid, Error, Result};

/// Smoothed visit counts, `p(s,a) = (N(s,a) + kappa) / (total + kappa S A)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountDensity {
    pub n_states: usize,
    pub n_actions: usize,
    pub counts: Vec<u64>,
    pub total: u64,
    pub kappa: f64,
}

impl CountDensity {
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        let cells = (self.n_states * self.n_actions) as f64;
        (self.counts[s * self.n_actions + a] as f64 + self.kappa)
            / (self.total as f64 + self.kappa * cells)
    }

    pub fn probs(&self) -> Vec<f64> {
        (0..self.n_states)
            .flat_map(|s| (0..self.n_actions).map(move |a| (s, a)))
            .map(|(s, a)| self.prob(s, a))
            .collect()
    }
}

pub fn fit_density(
    batch: &[Trajectory],
    n_states: usize,
    n_actions: usize,
    kappa: f64,
) -> Result<CountDensity> {
    if !(kappa > 0.0) {
        return Err(invalid("smoothing kappa must be positive"));
    }
    if batch.iter().all(|t| t.is_empty()) {
        return Err(Error::EmptyBatch);
    }
    let mut counts = vec![0u64; n_states * n_actions];
    let mut total = 0;
    for t in batch {
        for &(s, a) in &t.pairs {
            if s >= n_states || a >= n_actions {
                return Err(invalid(format!("pair ({s}, {a}) out of range")));
            }
            counts[s * n_actions + a] += 1;
            total += 1;
        }
    }
    Ok(CountDensity {
        n_states,
        n_actions,
        counts,
        total,
        kappa,
    })
}

/// Trajectory batches of the most recent iterations.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    batches: VecDeque<Vec<Trajectory>>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            batches: VecDeque::new(),
        }
    }

    /// Adds a batch, evicting the oldest beyond capacity.
    pub fn push(&mut self, batch: Vec<Trajectory>) {
        self.batches.push_back(batch);
        while self.batches.len() > self.capacity {
            self.batches.pop_front();
        }
    }

    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }

    pub fn newest(&self) -> Option<&[Trajectory]> {
        self.batches.back().map(|b| b.as_slice())
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.batches.iter().flatten()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(pairs: &[(usize, usize)]) -> Trajectory {
        Trajectory {
            pairs: pairs.to_vec(),
            next_states: vec![0; pairs.len()],
        }
    }

    #[test]
    fn smoothed_counts() {
        let b = vec![traj(&[(0, 0), (0, 0), (0, 0), (0, 1)])];
        let d = fit_density(&b, 2, 2, 1.0).unwrap();
        assert_eq!(d.prob(0, 0), 4.0 / 8.0);
        assert_eq!(d.prob(0, 1), 2.0 / 8.0);
        assert_eq!(d.prob(1, 0), 1.0 / 8.0);
        assert_eq!(d.prob(1, 1), 1.0 / 8.0);
    }

    #[test]
    fn large_kappa_tends_to_uniform() {
        let b = vec![traj(&[(0, 0), (0, 0), (0, 1)])];
        let d = fit_density(&b, 2, 2, 1e9).unwrap();
        assert!(d.probs().iter().all(|p| (p - 0.25).abs() < 1e-8));
    }

    #[test]
    fn empty_batch_is_an_error() {
        assert!(matches!(
            fit_density(&[], 2, 2, 0.5),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn buffer_evicts_oldest() {
        let mut buf = ReplayBuffer::new(2);
        for i in 0..5 {
            buf.push(vec![traj(&[(i, 0)])]);
            assert!(buf.len() <= 2);
        }
        let firsts: Vec<usize> = buf.trajectories().map(|t| t.pairs[0].0).collect();
        assert_eq!(firsts, vec![3, 4]);
    }
}
