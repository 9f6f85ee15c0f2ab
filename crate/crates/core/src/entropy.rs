//! Rényi entropy functionals and the surrogate exploration reward.
//! All entropies are in nats.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mdp::MASS_TOL;

/// Entries at or below this count as outside the support for `alpha = 0`.
pub const SUPPORT_EPS: f64 = 1e-12;
/// Default ceiling on surrogate rewards.
pub const DEFAULT_REWARD_CAP: f64 = 100.0;

/// Rényi order restricted to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RenyiOrder(f64);

impl RenyiOrder {
    pub const SHANNON: RenyiOrder = RenyiOrder(1.0);

    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(invalid(format!("Renyi order {alpha} outside [0, 1]")));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_shannon(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for RenyiOrder {
    type Error = crate::error::Error;

    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RenyiOrder> for f64 {
    fn from(a: RenyiOrder) -> f64 {
        a.0
    }
}

/// Point of the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(invalid("simplex point needs at least one cell"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid("simplex point has a negative or non-finite entry"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("simplex point sums to {sum}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n.max(1)])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `H_alpha(d)`. Inputs are assumed to be a probability vector.
pub fn renyi_entropy(d: &[f64], alpha: RenyiOrder) -> f64 {
    let a = alpha.value();
    if a == 0.0 {
        let support = d.iter().filter(|p| **p > SUPPORT_EPS).count();
        return (support as f64).ln();
    }
    if a == 1.0 {
        return -d
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>();
    }
    let s: f64 = d.iter().filter(|p| **p > 0.0).map(|p| p.powf(a)).sum();
    s.ln() / (1.0 - a)
}

/// Per-cell exploration reward: `p^(alpha-1)` or `-ln p`, capped.
pub fn surrogate_reward(p: f64, alpha: RenyiOrder, cap: f64) -> f64 {
    if p <= 0.0 {
        return cap;
    }
    let r = if alpha.is_shannon() {
        -p.ln()
    } else {
        p.powf(alpha.value() - 1.0)
    };
    r.min(cap)
}

/// `dH/dd` up to an additive constant, together with the positive scale
/// that turns the raw weight `f` into the true derivative:
/// `dH/dd_i = scale * f_i + c`. Zero cells get weight 0.
pub(crate) fn entropy_weights(d: &[f64], alpha: f64) -> (Vec<f64>, f64) {
    if alpha == 1.0 {
        let f = d
            .iter()
            .map(|p| if *p > 0.0 { -p.ln() } else { 0.0 })
            .collect();
        return (f, 1.0);
    }
    let norm: f64 = d.iter().filter(|p| **p > 0.0).map(|p| p.powf(alpha)).sum();
    let f = d
        .iter()
        .map(|p| if *p > 0.0 { p.powf(alpha - 1.0) } else { 0.0 })
        .collect();
    (f, alpha / ((1.0 - alpha) * norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(a: f64) -> RenyiOrder {
        RenyiOrder::new(a).unwrap()
    }

    #[test]
    fn uniform_four_cells_all_orders() {
        let d = [0.25; 4];
        for a in [0.0, 0.5, 1.0] {
            assert!((renyi_entropy(&d, order(a)) - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn point_mass_is_zero() {
        assert_eq!(renyi_entropy(&[1.0, 0.0, 0.0], order(0.5)), 0.0);
    }

    #[test]
    fn shannon_by_hand() {
        let h = renyi_entropy(&[0.5, 0.25, 0.25], order(1.0));
        assert!((h - 1.5 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn surrogate_examples() {
        assert!((surrogate_reward(0.04, order(0.5), 100.0) - 5.0).abs() < 1e-12);
        assert!((surrogate_reward((-2f64).exp(), order(1.0), 100.0) - 2.0).abs() < 1e-12);
        for a in [0.0, 0.5, 1.0] {
            assert_eq!(surrogate_reward(0.0, order(a), 100.0), 100.0);
        }
    }

    #[test]
    fn order_range_is_checked() {
        assert!(RenyiOrder::new(1.5).is_err());
        assert!(RenyiOrder::new(-0.1).is_err());
    }
}
