//! Expected number of i.i.d. draws from `d` until every cell has been seen
//! (coupon collector with unequal probabilities),
//! `G(d) = int_0^inf 1 - prod_i (1 - exp(-d_i t)) dt`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::entropy::SimplexPoint;
use crate::error::{invalid, Error, Result};

/// Largest `n` accepted by the inclusion-exclusion route.
pub const MAX_INCLUSION_EXCLUSION: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouponMethod {
    Quadrature,
    InclusionExclusion,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouponOptions {
    /// Bound on the truncated tail `int_T^inf sum_i exp(-d_i t) dt`.
    pub tail_tol: f64,
    /// Relative tolerance of the adaptive Simpson pass.
    pub rel_tol: f64,
    pub mc_runs: usize,
    pub seed: u64,
}

impl Default for CouponOptions {
    fn default() -> Self {
        Self {
            tail_tol: 1e-10,
            rel_tol: 1e-12,
            mc_runs: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouponEstimate {
    /// `f64::INFINITY` when some cell has zero probability.
    pub value: f64,
    /// Monte-Carlo standard error.
    pub std_error: Option<f64>,
    /// Certified truncation bound for the quadrature route.
    pub tail_bound: Option<f64>,
}

impl CouponEstimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: None,
            tail_bound: None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        self.value.is_infinite()
    }
}

pub fn coupon_collector(
    d: &SimplexPoint,
    method: CouponMethod,
    opts: &CouponOptions,
) -> Result<CouponEstimate> {
    let w = d.weights();
    if method == CouponMethod::InclusionExclusion && w.len() > MAX_INCLUSION_EXCLUSION {
        return Err(Error::InfeasibleN(w.len()));
    }
    if w.iter().any(|p| *p <= 0.0) {
        return Ok(CouponEstimate::exact(f64::INFINITY));
    }
    match method {
        CouponMethod::Quadrature => Ok(quadrature(w, opts)),
        CouponMethod::InclusionExclusion => Ok(CouponEstimate::exact(inclusion_exclusion(w))),
        CouponMethod::MonteCarlo => monte_carlo(w, opts),
    }
}

/// Supports up to this size are summed exactly by [`coupon_value`].
const EXACT_SUM_LIMIT: usize = 12;

/// `G` for raw weights summing to one, infinite when a cell is zero.
/// Small supports use the exact subset sum (cheap at that size), larger ones
/// the quadrature.
pub fn coupon_value(weights: &[f64]) -> f64 {
    if weights.iter().any(|p| *p <= 0.0) {
        return f64::INFINITY;
    }
    if weights.len() <= EXACT_SUM_LIMIT {
        return inclusion_exclusion(weights);
    }
    quadrature(weights, &CouponOptions::default()).value
}

fn integrand(d: &[f64], t: f64) -> f64 {
    // 1 - prod(1 - e^{-d t}) evaluated in log space for accuracy at large t
    let log_prod: f64 = d.iter().map(|p| (-(-p * t).exp_m1()).ln()).sum();
    -log_prod.exp_m1()
}

fn tail_bound(d: &[f64], t: f64) -> f64 {
    d.iter().map(|p| (-p * t).exp() / p).sum()
}

fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
    h / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(fa, flm, fm, m - a);
    let right = simpson(fm, frm, fb, b - m);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * eps {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)
        + adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)
}

fn quadrature(d: &[f64], opts: &CouponOptions) -> CouponEstimate {
    let d_max = d.iter().copied().fold(0.0, f64::max);
    let d_min = d.iter().copied().fold(f64::INFINITY, f64::min);
    // smallest doubling of 1/d_min whose analytic tail is below tolerance
    let mut t_end = 1.0 / d_min;
    while tail_bound(d, t_end) > opts.tail_tol {
        t_end *= 1.25;
    }
    // lower bound on G (the largest single-cell waiting time) scales the tolerance
    let scale = 1.0 / d_min;
    let f = |t: f64| integrand(d, t);
    // panels doubling from 1/(4 d_max) resolve the transition regions
    let mut total = 0.0;
    let mut a = 0.0;
    let mut b = 0.25 / d_max;
    let eps_total = opts.rel_tol * scale;
    while a < t_end {
        let hi = b.min(t_end);
        let (fa, fb) = (f(a), f(hi));
        let fm = f(0.5 * (a + hi));
        let whole = simpson(fa, fm, fb, hi - a);
        let eps = (eps_total * (hi - a) / t_end).max(f64::MIN_POSITIVE);
        total += adaptive_simpson(&f, a, hi, fa, fm, fb, whole, eps, 48);
        a = hi;
        b = 2.0 * hi;
    }
    CouponEstimate {
        value: total,
        std_error: None,
        tail_bound: Some(tail_bound(d, t_end)),
    }
}

fn inclusion_exclusion(d: &[f64]) -> f64 {
    let n = d.len();
    let size = 1usize << n;
    let mut sums = vec![0.0; size];
    // Neumaier summation over alternating terms
    let mut acc = 0.0;
    let mut comp = 0.0;
    for mask in 1..size {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + d[low];
        let sign = if mask.count_ones() % 2 == 1 {
            1.0
        } else {
            -1.0
        };
        let term = sign / sums[mask];
        let t = acc + term;
        if acc.abs() >= term.abs() {
            comp += (acc - t) + term;
        } else {
            comp += (term - t) + acc;
        }
        acc = t;
    }
    acc + comp
}

fn monte_carlo(d: &[f64], opts: &CouponOptions) -> Result<CouponEstimate> {
    if opts.mc_runs < 2 {
        return Err(invalid("monte-carlo needs at least two runs"));
    }
    let dist = WeightedIndex::new(d).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n = d.len();
    let mut seen = vec![false; n];
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..opts.mc_runs {
        seen.iter_mut().for_each(|s| *s = false);
        let (mut missing, mut draws) = (n, 0u64);
        while missing > 0 {
            let i = dist.sample(&mut rng);
            draws += 1;
            if !seen[i] {
                seen[i] = true;
                missing -= 1;
            }
        }
        let x = draws as f64;
        sum += x;
        sum_sq += x * x;
    }
    let runs = opts.mc_runs as f64;
    let mean = sum / runs;
    let var = (sum_sq - runs * mean * mean) / (runs - 1.0);
    Ok(CouponEstimate {
        value: mean,
        std_error: Some((var.max(0.0) / runs).sqrt()),
        tail_bound: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(d: &[f64], m: CouponMethod) -> f64 {
        coupon_collector(
            &SimplexPoint::new(d.to_vec()).unwrap(),
            m,
            &CouponOptions::default(),
        )
        .unwrap()
        .value
    }

    #[test]
    fn uniform_two_and_three() {
        for m in [CouponMethod::Quadrature, CouponMethod::InclusionExclusion] {
            assert!((g(&[0.5, 0.5], m) - 3.0).abs() < 1e-9);
            assert!((g(&[1.0 / 3.0; 3], m) - 5.5).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_cell_is_infinite() {
        assert!(g(&[1.0, 0.0], CouponMethod::Quadrature).is_infinite());
        assert!(g(&[0.5, 0.5, 0.0], CouponMethod::InclusionExclusion).is_infinite());
    }

    #[test]
    fn inclusion_exclusion_rejects_large_n() {
        let d = SimplexPoint::uniform(21);
        let r = coupon_collector(
            &d,
            CouponMethod::InclusionExclusion,
            &CouponOptions::default(),
        );
        assert!(matches!(r, Err(Error::InfeasibleN(21))));
    }

    #[test]
    fn single_cell_takes_one_draw() {
        assert!((g(&[1.0], CouponMethod::Quadrature) - 1.0).abs() < 1e-9);
        assert!((g(&[1.0], CouponMethod::InclusionExclusion) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tail_bound_is_reported() {
        let d = SimplexPoint::new(vec![0.9, 0.1]).unwrap();
        let r = coupon_collector(&d, CouponMethod::Quadrature, &CouponOptions::default()).unwrap();
        assert!(r.tail_bound.unwrap() <= 1e-10);
        // 1/0.9 + 1/0.1 - 1/1
        assert!((r.value - (1.0 / 0.9 + 10.0 - 1.0)).abs() < 1e-9);
    }
}
