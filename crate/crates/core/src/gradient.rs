//! Exact policy gradients of `H_alpha(d_mu^pi)` with respect to softmax
//! logits, plus a finite-difference oracle.
//!
//! For `f = d^(alpha-1)` (or `-ln d` when `alpha = 1`) every route below
//! evaluates `sum_{s,a} grad d(s,a) f(s,a) = E_d[grad log pi(a|s) W(s,a)]`
//! with a different but equivalent `W`:
//!
//! * the two-term form `W = <d_{s,a}, f_pi> / (1 - gamma) + f(s,a)`, where
//!   `d_{s,a}` is the discounted state visitation after taking `a` in `s`
//!   and `f_pi(s') = sum_a' pi(a'|s') f(s',a')`;
//! * the action-value form `W = Q_f(s,a)`, one linear solve in state space;
//! * the differential action value for `gamma = 1`.

use serde::Serialize;

use crate::entropy::{entropy_weights, renyi_entropy, surrogate_reward, RenyiOrder};
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::mdp::{
    occupancy, state_marginal, step_distributions, DiscountedCmp, EpisodicMdp, NonStationaryPolicy,
    TabularPolicy,
};

/// Gradient with the shape of the logit table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyGradient {
    pub n_states: usize,
    pub n_actions: usize,
    pub values: Vec<f64>,
    /// Positive factor dropped by the two-term form: the true gradient is
    /// `values / normalizer` (`sum d^alpha` for `alpha < 1`, 1 otherwise).
    pub normalizer: f64,
}

impl PolicyGradient {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    /// Gradient rescaled by `1 / normalizer`.
    pub fn exact(&self) -> Vec<f64> {
        self.values.iter().map(|g| g / self.normalizer).collect()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.values
            .chunks(self.n_actions)
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn cosine(&self, other: &PolicyGradient) -> f64 {
        cosine(&self.values, &other.values)
    }

    /// Least-squares scalar `c` with `self ~ c * reference`.
    pub fn fitted_scale(&self, reference: &PolicyGradient) -> f64 {
        let num: f64 = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| a * b)
            .sum();
        let den: f64 = reference.values.iter().map(|b| b * b).sum();
        num / den
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        return 1.0;
    }
    dot / (na * nb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Both terms evaluated exactly from start-pair occupancies.
    Full,
    /// Return gradient under the surrogate reward plus an `eta`-weighted
    /// gradient of the expected per-state action entropy.
    Approximate { eta: f64, cap: f64 },
}

/// Projects `E_d[grad log pi(a|s) W(s,a)]` onto the logits:
/// `g(s,a') = d(s) pi(a'|s) (W(s,a') - sum_a pi(a|s) W(s,a))`.
fn score_projection(state_mass: &[f64], policy: &TabularPolicy, w: &[f64]) -> Vec<f64> {
    let a_n = policy.n_actions();
    let mut g = vec![0.0; w.len()];
    for (s, m) in state_mass.iter().enumerate() {
        if *m == 0.0 {
            continue;
        }
        let row = policy.row(s);
        let wr = &w[s * a_n..(s + 1) * a_n];
        let mean: f64 = row.iter().zip(wr).map(|(p, v)| p * v).sum();
        for a in 0..a_n {
            g[s * a_n + a] = m * row[a] * (wr[a] - mean);
        }
    }
    g
}

fn policy_average(policy: &TabularPolicy, f: &[f64]) -> Vec<f64> {
    let a_n = policy.n_actions();
    (0..policy.n_states())
        .map(|s| {
            policy
                .row(s)
                .iter()
                .zip(&f[s * a_n..(s + 1) * a_n])
                .map(|(p, v)| p * v)
                .sum()
        })
        .collect()
}

/// `Q(s,a) = f(s,a) + gamma * sum_s' P(s'|s,a) V(s')` for the discounted
/// evaluation of reward `f` under `policy`.
pub(crate) fn action_values(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    chain: &[f64],
    f: &[f64],
) -> Result<Vec<f64>> {
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let gamma = cmp.gamma();
    let v = linalg::evaluate(chain, n, gamma, &policy_average(policy, f))?;
    let mut q = vec![0.0; n * a_n];
    for s in 0..n {
        for a in 0..a_n {
            let next: f64 = cmp.row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
            q[s * a_n + a] = f[s * a_n + a] + gamma * next;
        }
    }
    Ok(q)
}

/// Exact `H_alpha(d_mu^pi)` and its true logit gradient. Supports
/// `gamma = 1` through the average-reward form.
pub(crate) fn entropy_and_gradient(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let d = occupancy(cmp, policy, None)?.into_weights();
    let value = renyi_entropy(&d, RenyiOrder::new(alpha)?);
    let (f, scale) = entropy_weights(&d, alpha);
    let chain = cmp.induced_chain(policy);
    let m: Vec<f64> = d.chunks(a_n).map(|r| r.iter().sum()).collect();
    let q = if cmp.gamma() < 1.0 {
        action_values(cmp, policy, &chain, &f)?
    } else {
        let (rho, h) = linalg::differential(&chain, n, &m, &policy_average(policy, &f))?;
        let mut q = vec![0.0; n * a_n];
        for s in 0..n {
            for a in 0..a_n {
                let next: f64 = cmp.row(s, a).iter().zip(&h).map(|(p, x)| p * x).sum();
                q[s * a_n + a] = f[s * a_n + a] - rho + next;
            }
        }
        q
    };
    let mut g = score_projection(&m, policy, &q);
    g.iter_mut().for_each(|x| *x *= scale);
    Ok((value, g))
}

/// Exact `H_alpha(d_h^pi)` and its gradient with respect to the logits of
/// steps `1..=h` (flattened step-major). Later steps do not affect `d_h`.
pub(crate) fn episodic_entropy_and_gradient(
    mdp: &EpisodicMdp,
    policy: &NonStationaryPolicy,
    h: usize,
    alpha: f64,
) -> Result<(f64, Vec<f64>)> {
    let (n, a_n) = (mdp.n_states(), mdp.n_actions());
    let dists = step_distributions(mdp, policy, h);
    let dh = &dists[h - 1];
    let value = renyi_entropy(dh, RenyiOrder::new(alpha)?);
    let (f, scale) = entropy_weights(dh, alpha);
    let mut grad = vec![0.0; h * n * a_n];
    // backward pass: q_t(s,a) = E[f(s_h, a_h) | s_t = s, a_t = a]
    let mut q = f;
    for t in (0..h).rev() {
        let pi = policy.step(t);
        let m: Vec<f64> = dists[t].chunks(a_n).map(|r| r.iter().sum()).collect();
        let g = score_projection(&m, pi, &q);
        for (dst, src) in grad[t * n * a_n..(t + 1) * n * a_n].iter_mut().zip(&g) {
            *dst = scale * src;
        }
        if t > 0 {
            let v = policy_average(pi, &q);
            let mut prev = vec![0.0; n * a_n];
            for s in 0..n {
                for a in 0..a_n {
                    prev[s * a_n + a] = mdp
                        .row(t - 1, s, a)
                        .iter()
                        .zip(&v)
                        .map(|(p, x)| p * x)
                        .sum();
                }
            }
            q = prev;
        }
    }
    Ok((value, grad))
}

/// Policy gradient of `H_alpha(d_mu^pi)` for `gamma < 1`.
///
/// `Full` evaluates the two-term expectation with one start-pair occupancy
/// per visited pair and includes the `alpha / (1 - alpha)` factor; the
/// result equals the true gradient times `normalizer`. `Approximate` swaps
/// the second term for the action-entropy bonus.
pub fn renyi_policy_gradient(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    alpha: RenyiOrder,
    mode: GradientMode,
) -> Result<PolicyGradient> {
    if cmp.gamma() >= 1.0 {
        return Err(Error::GammaOneUnsupported);
    }
    cmp.check_policy(policy)?;
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let gamma = cmp.gamma();
    let d = occupancy(cmp, policy, None)?.into_weights();
    let m: Vec<f64> = d.chunks(a_n).map(|r| r.iter().sum()).collect();
    let a = alpha.value();
    match mode {
        GradientMode::Full => {
            let (f, _) = entropy_weights(&d, a);
            let f_pi = policy_average(policy, &f);
            let mut w = vec![0.0; n * a_n];
            for s in 0..n {
                if m[s] == 0.0 {
                    continue;
                }
                for act in 0..a_n {
                    let from = occupancy(cmp, policy, Some((s, act)))?;
                    let visit = state_marginal(&from);
                    let inner: f64 = visit.weights().iter().zip(&f_pi).map(|(x, y)| x * y).sum();
                    w[s * a_n + act] = inner / (1.0 - gamma) + f[s * a_n + act];
                }
            }
            let (factor, normalizer) = if alpha.is_shannon() {
                (1.0, 1.0)
            } else {
                let norm: f64 = d.iter().filter(|p| **p > 0.0).map(|p| p.powf(a)).sum();
                (a / (1.0 - a), norm)
            };
            let values = score_projection(&m, policy, &w)
                .into_iter()
                .map(|g| factor * g)
                .collect();
            Ok(PolicyGradient {
                n_states: n,
                n_actions: a_n,
                values,
                normalizer,
            })
        }
        GradientMode::Approximate { eta, cap } => {
            let r: Vec<f64> = d.iter().map(|p| surrogate_reward(*p, alpha, cap)).collect();
            let chain = cmp.induced_chain(policy);
            let q = action_values(cmp, policy, &chain, &r)?;
            let mut values = score_projection(&m, policy, &q);
            values.iter_mut().for_each(|g| *g /= 1.0 - gamma);
            let bonus = action_entropy_gradient(&m, policy);
            for (g, b) in values.iter_mut().zip(bonus) {
                *g += eta * b;
            }
            Ok(PolicyGradient {
                n_states: n,
                n_actions: a_n,
                values,
                normalizer: 1.0,
            })
        }
    }
}

/// `sum_s m(s) grad H_1(pi(.|s))` with `m` held fixed.
pub fn action_entropy_gradient(state_mass: &[f64], policy: &TabularPolicy) -> Vec<f64> {
    let a_n = policy.n_actions();
    let mut g = vec![0.0; state_mass.len() * a_n];
    for (s, m) in state_mass.iter().enumerate() {
        let row = policy.row(s);
        let h: f64 = -row
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>();
        for a in 0..a_n {
            let p = row[a];
            if p > 0.0 {
                g[s * a_n + a] = -m * p * (p.ln() + h);
            }
        }
    }
    g
}

/// Second term of the Shannon gradient, `E_d[grad log pi(a|s) (-ln d(s,a))]`.
pub fn shannon_instant_term(cmp: &DiscountedCmp, policy: &TabularPolicy) -> Result<Vec<f64>> {
    let a_n = cmp.n_actions();
    let d = occupancy(cmp, policy, None)?.into_weights();
    let m: Vec<f64> = d.chunks(a_n).map(|r| r.iter().sum()).collect();
    let f: Vec<f64> = d
        .iter()
        .map(|p| if *p > 0.0 { -p.ln() } else { 0.0 })
        .collect();
    Ok(score_projection(&m, policy, &f))
}

/// Central differences of `H_alpha(d_mu^pi)` in every logit.
pub fn finite_difference_gradient(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    alpha: RenyiOrder,
    step: f64,
) -> Result<PolicyGradient> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(invalid("finite-difference step must be positive"));
    }
    if !policy.has_finite_logits() {
        return Err(invalid("finite differences need finite logits"));
    }
    cmp.check_policy(policy)?;
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let entropy_at = |logits: Vec<f64>| -> Result<f64> {
        let p = TabularPolicy::from_logits(n, a_n, logits)?;
        Ok(renyi_entropy(occupancy(cmp, &p, None)?.weights(), alpha))
    };
    let mut values = vec![0.0; n * a_n];
    for (i, v) in values.iter_mut().enumerate() {
        let mut plus = policy.logits().to_vec();
        let mut minus = plus.clone();
        plus[i] += step;
        minus[i] -= step;
        *v = (entropy_at(plus)? - entropy_at(minus)?) / (2.0 * step);
    }
    Ok(PolicyGradient {
        n_states: n,
        n_actions: a_n,
        values,
        normalizer: 1.0,
    })
}
