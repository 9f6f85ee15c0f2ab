use serde::Serialize;

use super::dataset::PolicyMixture;
use crate::entropy::RenyiOrder;
use crate::error::{invalid, Error, Result};
use crate::mdp::{reach_values, step_distributions, EpisodicMdp};
use crate::solver::{maximize_entropy, EntropyTarget, SolverMethod, SolverOptions};

/// Trajectory count sufficient for reward-free planning to accuracy `eps`
/// with failure probability `p`, up to the unknown absolute constant `c`:
/// `c (H^2 S A / eps)^(2 (beta + 1)) (H / A) ln(S A H / (p eps))` with
/// `beta = alpha / (2 (1 - alpha))`. Diverges as `alpha -> 1`.
pub fn theoretical_sample_bound(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    eps: f64,
    p: f64,
    alpha: f64,
    c: f64,
) -> Result<f64> {
    if alpha == 1.0 {
        return Err(Error::AlphaOneDivergence);
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid("alpha must lie in [0, 1)"));
    }
    if !(eps > 0.0 && eps < 1.0) || !(p > 0.0 && p < 1.0) {
        return Err(invalid("eps and p must lie in (0, 1)"));
    }
    if !(c > 0.0) {
        return Err(invalid("c must be positive"));
    }
    if n_states == 0 || n_actions == 0 || horizon == 0 {
        return Err(invalid("sizes must be positive"));
    }
    let (s, a, h) = (n_states as f64, n_actions as f64, horizon as f64);
    let beta = alpha / (2.0 * (1.0 - alpha));
    Ok(c * (h * h * s * a / eps).powf(2.0 * (beta + 1.0)) * (h / a) * (s * a * h / (p * eps)).ln())
}

/// Per-step maximisers of `H_alpha(d_h)` for `h = 1..=H`, found by
/// Frank-Wolfe. The first maximiser found is kept.
pub fn entropy_mixture(mdp: &EpisodicMdp, alpha: RenyiOrder) -> Result<PolicyMixture> {
    let opts = SolverOptions {
        tol: 1e-8,
        ..SolverOptions::default()
    };
    let policies = (1..=mdp.horizon())
        .map(|step| {
            let r = maximize_entropy(
                EntropyTarget::Episodic { mdp, step },
                alpha,
                SolverMethod::FrankWolfe,
                &opts,
            )?;
            Ok(r.policy.non_stationary().expect("episodic target").clone())
        })
        .collect::<Result<Vec<_>>>()?;
    PolicyMixture::new(policies)
}

/// Step distributions of the uniform mixture, `mu_h = mean_t d_h^{pi_t}`.
pub fn mixture_distributions(mdp: &EpisodicMdp, mixture: &PolicyMixture) -> Result<Vec<Vec<f64>>> {
    let h = mdp.horizon();
    let k = mixture.len() as f64;
    let mut mu = vec![vec![0.0; mdp.n_states() * mdp.n_actions()]; h];
    for p in mixture.policies() {
        mdp.check_policy(p, h)?;
        for (acc, d) in mu.iter_mut().zip(step_distributions(mdp, p, h)) {
            acc.iter_mut().zip(d).for_each(|(a, x)| *a += x / k);
        }
    }
    Ok(mu)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificantPair {
    pub s: usize,
    pub a: usize,
    pub h: usize,
    pub max_reach: f64,
    pub mixture: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceReport {
    pub delta: f64,
    pub alpha: f64,
    /// `S A H / delta^(alpha / (1 - alpha))`.
    pub bound: f64,
    pub worst_ratio: f64,
    pub worst: Option<SignificantPair>,
    pub n_significant: usize,
    pub satisfied: bool,
    pub pairs: Vec<SignificantPair>,
}

/// Compares, over every `(s, a, h)` reachable with probability at least
/// `delta`, the best reach probability with the mixture's probability.
pub fn significance_diagnostic(
    mdp: &EpisodicMdp,
    mixture: &PolicyMixture,
    delta: f64,
    alpha: RenyiOrder,
) -> Result<SignificanceReport> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(invalid("delta must lie in (0, 1]"));
    }
    if alpha.is_shannon() {
        return Err(Error::AlphaOneDivergence);
    }
    let (n, a_n, h) = (mdp.n_states(), mdp.n_actions(), mdp.horizon());
    let a = alpha.value();
    let bound = (n * a_n * h) as f64 / delta.powf(a / (1.0 - a));
    let mu = mixture_distributions(mdp, mixture)?;
    let mut pairs = Vec::new();
    for step in 1..=h {
        for s in 0..n {
            // the action at the step itself is free, so reach depends on s only
            let reach: f64 = reach_values(mdp, s, step)
                .iter()
                .zip(mdp.init())
                .map(|(w, m)| w * m)
                .sum();
            if reach < delta {
                continue;
            }
            for act in 0..a_n {
                let m = mu[step - 1][s * a_n + act];
                let ratio = if m > 0.0 { reach / m } else { f64::INFINITY };
                pairs.push(SignificantPair {
                    s,
                    a: act,
                    h: step,
                    max_reach: reach,
                    mixture: m,
                    ratio,
                });
            }
        }
    }
    let worst = pairs
        .iter()
        .max_by(|x, y| x.ratio.total_cmp(&y.ratio))
        .cloned();
    let worst_ratio = worst.as_ref().map_or(0.0, |w| w.ratio);
    Ok(SignificanceReport {
        delta,
        alpha: a,
        bound,
        worst_ratio,
        n_significant: pairs.len(),
        satisfied: worst_ratio <= bound,
        worst,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_example() {
        let m = theoretical_sample_bound(2, 2, 3, 0.1, 0.1, 0.0, 1.0).unwrap();
        let expect = 360f64.powi(2) * 1.5 * 1200f64.ln();
        assert!((m - expect).abs() < 1e-6 * expect);
        assert!((m - 1.378e6).abs() < 1e3);
    }

    #[test]
    fn bound_at_zero_alpha_is_quadratic_order() {
        let (s, a, h, e, p) = (3.0f64, 2.0f64, 4.0f64, 0.2, 0.05);
        let m = theoretical_sample_bound(3, 2, 4, e, p, 0.0, 2.0).unwrap();
        let expect = 2.0 * h.powi(5) * s * s * a / (e * e) * (s * a * h / (p * e)).ln();
        assert!((m - expect).abs() < 1e-9 * expect);
    }

    #[test]
    fn bound_diverges_at_one() {
        assert!(matches!(
            theoretical_sample_bound(2, 2, 3, 0.1, 0.1, 1.0, 1.0),
            Err(Error::AlphaOneDivergence)
        ));
    }
}
