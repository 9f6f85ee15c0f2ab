use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::{DiscountedCmp, TabularPolicy};

/// Recorded visits of one rollout, with the successor drawn after each
/// visit (the last successor is drawn even though the rollout stops).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pairs: Vec<(usize, usize)>,
    pub next_states: Vec<usize>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.pairs.iter().map(|p| p.0)
    }
}

/// Index drawn from a probability row by inversion.
pub(crate) fn sample_index(row: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in row.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// `m` rollouts from the start distribution that stop after each recorded
/// visit with probability `1 - gamma`.
pub fn rollout_geometric(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    m: usize,
    gamma: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Trajectory>> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(invalid(format!("rollout discount {gamma} outside [0, 1)")));
    }
    Ok((0..m)
        .map(|_| {
            let mut s = sample_index(cmp.init(), rng);
            let mut t = Trajectory {
                pairs: Vec::new(),
                next_states: Vec::new(),
            };
            loop {
                let a = sample_index(policy.row(s), rng);
                let next = sample_index(cmp.row(s, a), rng);
                t.pairs.push((s, a));
                t.next_states.push(next);
                if rng.random::<f64>() >= gamma {
                    break t;
                }
                s = next;
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::five_state;
    use rand::SeedableRng;

    #[test]
    fn zero_discount_gives_single_visits() {
        let cmp = five_state(0.99).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ts = rollout_geometric(&cmp, &pi, 100, 0.0, &mut rng).unwrap();
        assert!(ts.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn same_seed_same_rollouts() {
        let cmp = five_state(0.99).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rollout_geometric(&cmp, &pi, 20, 0.9, &mut rng).unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn successors_follow_dynamics() {
        let cmp = five_state(0.99).unwrap();
        let pi = TabularPolicy::uniform(5, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for t in rollout_geometric(&cmp, &pi, 50, 0.9, &mut rng).unwrap() {
            for (i, (s, a)) in t.pairs.iter().enumerate() {
                assert_eq!(cmp.row(*s, *a)[t.next_states[i]], 1.0);
                if i + 1 < t.len() {
                    assert_eq!(t.pairs[i + 1].0, t.next_states[i]);
                }
            }
        }
    }
}
