//! Exact entropy maximisation over tabular policies, and direct search for
//! the policy with the smallest coupon-collector value.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupon::coupon_value;
use crate::entropy::{entropy_weights, renyi_entropy, RenyiOrder};
use crate::error::{invalid, Error, Result};
use crate::gradient::{entropy_and_gradient, episodic_entropy_and_gradient};
use crate::linalg;
use crate::mdp::{
    conditional_policy, occupancy, step_distributions, DiscountedCmp, EpisodicMdp,
    NonStationaryPolicy, TabularPolicy,
};

/// Smallest order handed to the gradient solvers; `alpha = 0` maximises
/// support size, which has no useful gradient.
pub const MIN_SOLVER_ALPHA: f64 = 0.01;
const LBFGS_MEMORY: usize = 10;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy)]
pub enum EntropyTarget<'a> {
    /// Discounted occupancy of a CMP.
    Discounted(&'a DiscountedCmp),
    /// Step-`step` distribution (1-based) of an episodic MDP.
    Episodic { mdp: &'a EpisodicMdp, step: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverMethod {
    GradientAscent,
    FrankWolfe,
    /// Grid plus pattern search on the coupon-collector value.
    MinGSearch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-8,
            seed: 0,
            restarts: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolvedPolicy {
    Stationary(TabularPolicy),
    NonStationary(NonStationaryPolicy),
}

impl SolvedPolicy {
    pub fn stationary(&self) -> Option<&TabularPolicy> {
        match self {
            SolvedPolicy::Stationary(p) => Some(p),
            SolvedPolicy::NonStationary(_) => None,
        }
    }

    pub fn non_stationary(&self) -> Option<&NonStationaryPolicy> {
        match self {
            SolvedPolicy::NonStationary(p) => Some(p),
            SolvedPolicy::Stationary(_) => None,
        }
    }
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum PolicyJson {
    Stationary { probs: Vec<Vec<f64>> },
    NonStationary { probs: Vec<Vec<Vec<f64>>> },
}

impl Serialize for SolvedPolicy {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SolvedPolicy::Stationary(p) => PolicyJson::Stationary {
                probs: p.prob_rows(),
            },
            SolvedPolicy::NonStationary(p) => PolicyJson::NonStationary {
                probs: p.steps().iter().map(|s| s.prob_rows()).collect(),
            },
        }
        .serialize(ser)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizerReport {
    pub policy: SolvedPolicy,
    /// Final objective: `H_alpha_used` in nats, or `G` for the min-G search.
    pub value: f64,
    pub iterations: usize,
    /// Objective at every accepted iterate of the winning run.
    pub trace: Vec<f64>,
    pub method: SolverMethod,
    pub converged: bool,
    pub alpha_requested: Option<f64>,
    /// Order actually optimised (differs when the small-order proxy applied).
    pub alpha_used: Option<f64>,
    pub restart: usize,
}

struct Problem<'a> {
    target: EntropyTarget<'a>,
    alpha: f64,
}

impl Problem<'_> {
    fn shape(&self) -> (usize, usize, usize) {
        match self.target {
            EntropyTarget::Discounted(c) => (1, c.n_states(), c.n_actions()),
            EntropyTarget::Episodic { mdp, step } => (step, mdp.n_states(), mdp.n_actions()),
        }
    }

    fn dim(&self) -> usize {
        let (k, n, a) = self.shape();
        k * n * a
    }

    fn eval(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self.target {
            EntropyTarget::Discounted(cmp) => {
                let p =
                    TabularPolicy::from_logits(cmp.n_states(), cmp.n_actions(), theta.to_vec())?;
                entropy_and_gradient(cmp, &p, self.alpha)
            }
            EntropyTarget::Episodic { mdp, step } => {
                let p = self.non_stationary(theta)?;
                episodic_entropy_and_gradient(mdp, &p, step, self.alpha)
            }
        }
    }

    fn non_stationary(&self, theta: &[f64]) -> Result<NonStationaryPolicy> {
        let EntropyTarget::Episodic { mdp, .. } = self.target else {
            unreachable!("episodic only")
        };
        let (_, n, a) = self.shape();
        let block = n * a;
        let mut steps = theta
            .chunks(block)
            .map(|c| TabularPolicy::from_logits(n, a, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        while steps.len() < mdp.horizon() {
            steps.push(TabularPolicy::uniform(n, a));
        }
        NonStationaryPolicy::new(steps)
    }

    fn policy(&self, theta: &[f64]) -> Result<SolvedPolicy> {
        match self.target {
            EntropyTarget::Discounted(c) => Ok(SolvedPolicy::Stationary(
                TabularPolicy::from_logits(c.n_states(), c.n_actions(), theta.to_vec())?,
            )),
            EntropyTarget::Episodic { .. } => {
                Ok(SolvedPolicy::NonStationary(self.non_stationary(theta)?))
            }
        }
    }
}

struct Run {
    theta: Vec<f64>,
    value: f64,
    iterations: usize,
    trace: Vec<f64>,
    converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS ascent with Armijo backtracking.
fn ascend(problem: &Problem, mut theta: Vec<f64>, opts: &SolverOptions) -> Result<Run> {
    let (mut f, mut g) = problem.eval(&theta)?;
    let mut trace = vec![f];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut flat_steps = 0;
    while iterations < opts.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm < opts.tol {
            converged = true;
            break;
        }
        // two-loop recursion on the negated objective
        let mut q = g.clone();
        let mut coeffs = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            coeffs.push(a);
        }
        let gamma = match memory.back() {
            Some((s, y, _)) => dot(s, y) / dot(y, y),
            None => 1.0 / gnorm.max(1.0),
        };
        q.iter_mut().for_each(|x| *x *= gamma);
        for ((s, y, rho), a) in memory.iter().zip(coeffs.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir = q;
        let mut slope = dot(&g, &dir);
        if !(slope > 0.0) {
            memory.clear();
            dir = g.iter().map(|x| x / gnorm.max(1.0)).collect();
            slope = dot(&g, &dir);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&dir).map(|(t, d)| t + step * d).collect();
            if let Ok((fc, gc)) = problem.eval(&cand) {
                if fc.is_finite() && fc >= f + ARMIJO * step * slope {
                    accepted = Some((cand, fc, gc));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else {
            if memory.is_empty() {
                // no ascent possible along the gradient: numerically stationary
                converged = gnorm < opts.tol.sqrt();
                break;
            }
            memory.clear();
            continue;
        };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&gc).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
            memory.push_back((s, y, 1.0 / sy));
            if memory.len() > LBFGS_MEMORY {
                memory.pop_front();
            }
        }
        if fc - f <= 1e-15 * f.abs().max(1.0) {
            flat_steps += 1;
        } else {
            flat_steps = 0;
        }
        theta = cand;
        f = fc;
        g = gc;
        trace.push(f);
        iterations += 1;
        // the gradient can sit on a round-off floor above `tol`
        if flat_steps >= 10 {
            converged = dot(&g, &g).sqrt() < opts.tol.sqrt();
            break;
        }
    }
    Ok(Run {
        theta,
        value: f,
        iterations,
        trace,
        converged,
    })
}

fn check_target(target: &EntropyTarget) -> Result<()> {
    if let EntropyTarget::Episodic { mdp, step } = *target {
        if step == 0 || step > mdp.horizon() {
            return Err(Error::StepOutOfRange {
                h: step,
                horizon: mdp.horizon(),
            });
        }
    }
    Ok(())
}

/// Maximises `H_alpha` of the target distribution. Orders below
/// [`MIN_SOLVER_ALPHA`] are replaced by it and reported in `alpha_used`.
pub fn maximize_entropy(
    target: EntropyTarget,
    alpha: RenyiOrder,
    method: SolverMethod,
    opts: &SolverOptions,
) -> Result<OptimizerReport> {
    check_target(&target)?;
    let used = alpha.value().max(MIN_SOLVER_ALPHA);
    let problem = Problem {
        target,
        alpha: used,
    };
    let mut report = match method {
        SolverMethod::GradientAscent => gradient_ascent(&problem, opts)?,
        SolverMethod::FrankWolfe => frank_wolfe(&problem, opts)?,
        SolverMethod::MinGSearch => {
            return Err(invalid("min-G search is not an entropy maximiser"))
        }
    };
    report.alpha_requested = Some(alpha.value());
    report.alpha_used = Some(used);
    Ok(report)
}

fn gradient_ascent(problem: &Problem, opts: &SolverOptions) -> Result<OptimizerReport> {
    let dim = problem.dim();
    let restarts = opts.restarts.max(1);
    let runs: Vec<Result<Run>> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let theta0 = if r == 0 {
                vec![0.0; dim]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(r as u64));
                (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
            };
            ascend(problem, theta0, opts)
        })
        .collect();
    let mut best: Option<(usize, Run)> = None;
    for (r, run) in runs.into_iter().enumerate() {
        let run = run?;
        if best.as_ref().is_none_or(|(_, b)| run.value > b.value) {
            best = Some((r, run));
        }
    }
    let (restart, run) = best.expect("at least one restart");
    Ok(OptimizerReport {
        policy: problem.policy(&run.theta)?,
        value: run.value,
        iterations: run.iterations,
        trace: run.trace,
        method: SolverMethod::GradientAscent,
        converged: run.converged,
        alpha_requested: None,
        alpha_used: None,
        restart,
    })
}

/// One point of the active set: `None` for the starting occupancy, else the
/// deterministic actions that generate the vertex.
struct Atom {
    key: Option<Vec<usize>>,
    point: Vec<f64>,
    weight: f64,
}

/// Maximise `phi` on `[0, hi]` for concave `phi`.
fn golden_section<F: Fn(f64) -> f64>(phi: F, hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0, hi);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while (b - a) > 1e-12 * hi.max(1e-300) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = phi(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = phi(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the end points are candidates too
    [(0.0, phi(0.0)), (hi, phi(hi)), (mid, phi(mid))]
        .into_iter()
        .fold(
            (0.0, f64::NEG_INFINITY),
            |acc, x| if x.1 > acc.1 { x } else { acc },
        )
        .0
}

/// Best deterministic response to the linear reward `f` on the target.
fn best_response(problem: &Problem, f: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
    match problem.target {
        EntropyTarget::Discounted(cmp) => {
            let actions = policy_iteration(cmp, f)?;
            let pi = TabularPolicy::deterministic(cmp.n_actions(), &actions)?;
            Ok((actions, occupancy(cmp, &pi, None)?.into_weights()))
        }
        EntropyTarget::Episodic { mdp, step } => {
            let (n, a_n) = (mdp.n_states(), mdp.n_actions());
            let mut actions = vec![0; step * n];
            let mut q = f.to_vec();
            for t in (0..step).rev() {
                let mut v = vec![0.0; n];
                for s in 0..n {
                    let (best, val) = argmax(&q[s * a_n..(s + 1) * a_n]);
                    actions[t * n + s] = best;
                    v[s] = val;
                }
                if t > 0 {
                    for s in 0..n {
                        for a in 0..a_n {
                            q[s * a_n + a] = dot(mdp.row(t - 1, s, a), &v);
                        }
                    }
                }
            }
            let policy = deterministic_steps(mdp, &actions, step)?;
            Ok((actions, step_distributions(mdp, &policy, step).concat()))
        }
    }
}

fn argmax(row: &[f64]) -> (usize, f64) {
    row.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| {
            if *v > acc.1 {
                (i, *v)
            } else {
                acc
            }
        })
}

fn deterministic_steps(
    mdp: &EpisodicMdp,
    actions: &[usize],
    step: usize,
) -> Result<NonStationaryPolicy> {
    let (n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut steps = actions
        .chunks(n)
        .map(|c| TabularPolicy::deterministic(a_n, c))
        .collect::<Result<Vec<_>>>()?;
    steps.truncate(step);
    while steps.len() < mdp.horizon() {
        steps.push(TabularPolicy::uniform(n, a_n));
    }
    NonStationaryPolicy::new(steps)
}

/// Optimal deterministic policy for reward `f` under discount `gamma < 1`.
pub(crate) fn policy_iteration(cmp: &DiscountedCmp, f: &[f64]) -> Result<Vec<usize>> {
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let gamma = cmp.gamma();
    let mut actions: Vec<usize> = (0..n)
        .map(|s| argmax(&f[s * a_n..(s + 1) * a_n]).0)
        .collect();
    for _ in 0..1000 {
        let pi = TabularPolicy::deterministic(a_n, &actions)?;
        let chain = cmp.induced_chain(&pi);
        let r: Vec<f64> = (0..n).map(|s| f[s * a_n + actions[s]]).collect();
        let v = linalg::evaluate(&chain, n, gamma, &r)?;
        let mut changed = false;
        for s in 0..n {
            let q = |a: usize| f[s * a_n + a] + gamma * dot(cmp.row(s, a), &v);
            let current = q(actions[s]);
            let (mut best, mut best_q) = (actions[s], current);
            for a in 0..a_n {
                let qa = q(a);
                if qa > best_q + 1e-12 * current.abs().max(1.0) {
                    best = a;
                    best_q = qa;
                }
            }
            if best != actions[s] {
                actions[s] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(actions)
}

/// Pairwise Frank-Wolfe over occupancy measures.
fn frank_wolfe(problem: &Problem, opts: &SolverOptions) -> Result<OptimizerReport> {
    let alpha = RenyiOrder::new(problem.alpha)?;
    let (steps, n, a_n) = problem.shape();
    let block = n * a_n;
    // entropy is taken on the last block of the mixed point
    let tail = |x: &[f64]| x[x.len() - block..].to_vec();
    let start = match problem.target {
        EntropyTarget::Discounted(cmp) => {
            if cmp.gamma() >= 1.0 {
                return Err(Error::GammaOneUnsupported);
            }
            occupancy(cmp, &TabularPolicy::uniform(n, a_n), None)?.into_weights()
        }
        EntropyTarget::Episodic { mdp, step } => step_distributions(
            mdp,
            &NonStationaryPolicy::uniform(mdp.horizon(), n, a_n),
            step,
        )
        .concat(),
    };
    let mut x = start.clone();
    let mut atoms = vec![Atom {
        key: None,
        point: start,
        weight: 1.0,
    }];
    let mut value = renyi_entropy(&tail(&x), alpha);
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let (f, scale) = entropy_weights(&tail(&x), problem.alpha);
        let grad_at = |p: &[f64]| scale * dot(&f, &p[p.len() - block..]);
        let (key, vertex) = best_response(problem, &f)?;
        let gap = grad_at(&vertex) - grad_at(&x);
        if gap <= opts.tol {
            converged = true;
            break;
        }
        let away = atoms
            .iter()
            .enumerate()
            .min_by(|a, b| grad_at(&a.1.point).total_cmp(&grad_at(&b.1.point)))
            .map(|(i, _)| i)
            .expect("active set is never empty");
        let existing = atoms.iter().position(|a| a.key.as_ref() == Some(&key));
        if existing == Some(away) {
            // the best vertex is also the worst active atom: gap is numerical noise
            converged = true;
            break;
        }
        let dir: Vec<f64> = vertex
            .iter()
            .zip(&atoms[away].point)
            .map(|(v, w)| v - w)
            .collect();
        let line = |from: &[f64], dir: &[f64], l: f64| -> f64 {
            let y: Vec<f64> = from[from.len() - block..]
                .iter()
                .zip(&dir[dir.len() - block..])
                .map(|(a, d)| (a + l * d).max(0.0))
                .collect();
            renyi_entropy(&y, alpha)
        };
        let hi = atoms[away].weight;
        let lambda = golden_section(|l| line(&x, &dir, l), hi);
        let next = line(&x, &dir, lambda);
        iterations += 1;
        if lambda > 0.0 && next > value {
            x.iter_mut()
                .zip(&dir)
                .for_each(|(a, d)| *a = (*a + lambda * d).max(0.0));
            atoms[away].weight -= lambda;
            match existing {
                Some(i) => atoms[i].weight += lambda,
                None => atoms.push(Atom {
                    key: Some(key),
                    point: vertex,
                    weight: lambda,
                }),
            }
        } else {
            // plain step toward the vertex, shrinking every atom
            let dir: Vec<f64> = vertex.iter().zip(&x).map(|(v, a)| v - a).collect();
            let lambda = golden_section(|l| line(&x, &dir, l), 1.0);
            let next = line(&x, &dir, lambda);
            if !(lambda > 0.0 && next > value) {
                trace.push(value);
                converged = gap <= opts.tol.sqrt();
                break;
            }
            x.iter_mut()
                .zip(&dir)
                .for_each(|(a, d)| *a = (*a + lambda * d).max(0.0));
            atoms.iter_mut().for_each(|a| a.weight *= 1.0 - lambda);
            match existing {
                Some(i) => atoms[i].weight += lambda,
                None => atoms.push(Atom {
                    key: Some(key),
                    point: vertex,
                    weight: lambda,
                }),
            }
        }
        let next = renyi_entropy(&tail(&x), alpha);
        atoms.retain(|a| a.weight > 1e-15);
        value = next;
        trace.push(value);
    }
    let policy = match problem.target {
        EntropyTarget::Discounted(_) => SolvedPolicy::Stationary(conditional_policy(n, a_n, &x)),
        EntropyTarget::Episodic { mdp, .. } => {
            let mut per_step: Vec<TabularPolicy> = x
                .chunks(block)
                .map(|d| conditional_policy(n, a_n, d))
                .collect();
            debug_assert_eq!(per_step.len(), steps);
            while per_step.len() < mdp.horizon() {
                per_step.push(TabularPolicy::uniform(n, a_n));
            }
            SolvedPolicy::NonStationary(NonStationaryPolicy::new(per_step)?)
        }
    };
    // report the entropy of the extracted policy, not of the mixed iterate
    let final_value = match (&policy, problem.target) {
        (SolvedPolicy::Stationary(p), EntropyTarget::Discounted(cmp)) => {
            renyi_entropy(occupancy(cmp, p, None)?.weights(), alpha)
        }
        (SolvedPolicy::NonStationary(p), EntropyTarget::Episodic { mdp, step }) => {
            renyi_entropy(&step_distributions(mdp, p, step)[step - 1], alpha)
        }
        _ => unreachable!("policy kind follows the target"),
    };
    Ok(OptimizerReport {
        policy,
        value: final_value,
        iterations,
        trace,
        method: SolverMethod::FrankWolfe,
        converged,
        alpha_requested: None,
        alpha_used: None,
        restart: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinGOptions {
    /// Grid spacing of each state's action probabilities.
    pub step: f64,
    /// Grid points allowed before the spacing is coarsened.
    pub max_points: usize,
    /// Final pattern-search step on the logits.
    pub refine_tol: f64,
}

impl Default for MinGOptions {
    fn default() -> Self {
        Self {
            step: 0.01,
            max_points: 200_000,
            refine_tol: 1e-6,
        }
    }
}

/// Largest number of free policy parameters accepted by [`minimize_g`].
pub const MAX_G_PARAMETERS: usize = 8;

/// Interior lattice points of the simplex with `dim` cells and spacing `1/k`.
fn interior_lattice(dim: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, left: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if dim == 1 {
            if left >= 1 {
                prefix.push(left);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for i in 1..left {
            prefix.push(i);
            rec(dim - 1, left - i, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, k, &mut Vec::new(), &mut out);
    out
}

/// Policy minimising `G(d_mu^pi)` by an interior grid search over action
/// probabilities followed by pattern search on the logits.
pub fn minimize_g(cmp: &DiscountedCmp, opts: &MinGOptions) -> Result<OptimizerReport> {
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let params = n * (a_n - 1);
    if params > MAX_G_PARAMETERS {
        return Err(Error::PolicySpaceTooLarge(params));
    }
    if !(opts.step > 0.0 && opts.step < 1.0) {
        return Err(invalid("grid step must lie in (0, 1)"));
    }
    let objective = |logits: &[f64]| -> f64 {
        TabularPolicy::from_logits(n, a_n, logits.to_vec())
            .and_then(|p| occupancy(cmp, &p, None))
            .map(|d| coupon_value(d.weights()))
            .unwrap_or(f64::INFINITY)
    };
    if a_n == 1 {
        let theta = vec![0.0; n];
        let value = objective(&theta);
        return Ok(OptimizerReport {
            policy: SolvedPolicy::Stationary(TabularPolicy::uniform(n, 1)),
            value,
            iterations: 0,
            trace: vec![value],
            method: SolverMethod::MinGSearch,
            converged: true,
            alpha_requested: None,
            alpha_used: None,
            restart: 0,
        });
    }
    let mut k = (1.0 / opts.step).round() as usize;
    let mut rows = interior_lattice(a_n, k);
    while rows
        .len()
        .checked_pow(n as u32)
        .is_none_or(|c| c > opts.max_points)
        && k > a_n
    {
        k -= 1;
        rows = interior_lattice(a_n, k);
    }
    let total = rows.len().pow(n as u32);
    let to_logits = |index: usize| -> Vec<f64> {
        let mut idx = index;
        let mut theta = Vec::with_capacity(n * a_n);
        for _ in 0..n {
            let row = &rows[idx % rows.len()];
            idx /= rows.len();
            theta.extend(row.iter().map(|c| (*c as f64 / k as f64).ln()));
        }
        theta
    };
    let (best_index, grid_best) = (0..total)
        .into_par_iter()
        .map(|i| (i, objective(&to_logits(i))))
        .reduce(
            || (usize::MAX, f64::INFINITY),
            |a, b| {
                if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                    b
                } else {
                    a
                }
            },
        );
    let mut theta = to_logits(best_index.min(total - 1));
    let mut value = grid_best;
    let mut trace = vec![value];
    // pattern search: coordinate moves on the logits with a shrinking step
    let mut delta = (1.0 / k as f64).max(opts.refine_tol) * 4.0;
    let mut iterations = 0;
    while delta > opts.refine_tol && iterations < 100_000 {
        let mut improved = false;
        for i in 0..theta.len() {
            for sign in [1.0, -1.0] {
                let mut cand = theta.clone();
                cand[i] += sign * delta;
                let v = objective(&cand);
                if v < value - 1e-15 * value {
                    theta = cand;
                    value = v;
                    improved = true;
                }
            }
        }
        iterations += 1;
        if improved {
            trace.push(value);
        } else {
            delta *= 0.5;
        }
    }
    Ok(OptimizerReport {
        policy: SolvedPolicy::Stationary(TabularPolicy::from_logits(n, a_n, theta)?),
        value,
        iterations,
        trace,
        method: SolverMethod::MinGSearch,
        converged: delta <= opts.refine_tol,
        alpha_requested: None,
        alpha_used: None,
        restart: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn symmetric() -> DiscountedCmp {
        DiscountedCmp::new(2, 2, vec![0.5; 8], vec![0.5, 0.5], 0.9).unwrap()
    }

    #[test]
    fn symmetric_cmp_reaches_log_sa() {
        for method in [SolverMethod::GradientAscent, SolverMethod::FrankWolfe] {
            let cmp = symmetric();
            let r = maximize_entropy(
                EntropyTarget::Discounted(&cmp),
                RenyiOrder::new(0.5).unwrap(),
                method,
                &SolverOptions::default(),
            )
            .unwrap();
            assert!(
                (r.value - 4f64.ln()).abs() < 1e-9,
                "{method:?}: {}",
                r.value
            );
            let p = r.policy.stationary().unwrap();
            assert!(p.probs().iter().all(|x| (x - 0.5).abs() < 1e-6));
        }
    }

    #[test]
    fn zero_order_uses_proxy() {
        let cmp = symmetric();
        let r = maximize_entropy(
            EntropyTarget::Discounted(&cmp),
            RenyiOrder::new(0.0).unwrap(),
            SolverMethod::GradientAscent,
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(r.alpha_used, Some(MIN_SOLVER_ALPHA));
    }

    #[test]
    fn single_state_min_g_is_three() {
        let cmp = DiscountedCmp::new(1, 2, vec![1.0, 1.0], vec![1.0], 0.9).unwrap();
        let r = minimize_g(&cmp, &MinGOptions::default()).unwrap();
        assert!((r.value - 3.0).abs() < 1e-6);
        assert!((r.policy.stationary().unwrap().prob(0, 0) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn golden_section_finds_interior_max() {
        let x = golden_section(|l| -(l - 0.3) * (l - 0.3), 1.0);
        assert!((x - 0.3).abs() < 1e-8);
        assert_eq!(golden_section(|l| l, 0.5), 0.5);
    }

    #[test]
    fn lattice_sizes() {
        assert_eq!(interior_lattice(2, 100).len(), 99);
        assert_eq!(interior_lattice(3, 4).len(), 3);
    }

    #[test]
    fn too_many_parameters() {
        let n = 9;
        let mut transition = vec![0.0; n * 2 * n];
        transition.iter_mut().step_by(n).for_each(|p| *p = 1.0);
        let mut init = vec![0.0; n];
        init[0] = 1.0;
        let cmp = DiscountedCmp::new(n, 2, transition, init, 0.9).unwrap();
        assert!(matches!(
            minimize_g(&cmp, &MinGOptions::default()),
            Err(Error::PolicySpaceTooLarge(9))
        ));
    }
}
