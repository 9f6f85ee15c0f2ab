use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dataset::EnvRef;
use super::model::EmpiricalModel;
use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::mdp::{step_distributions, NonStationaryPolicy, TabularPolicy};
use crate::solver::SolvedPolicy;

/// Reward table, stationary (one layer) or per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardFn {
    n_states: usize,
    n_actions: usize,
    layers: Vec<Vec<f64>>,
    episodic: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RewardTable {
    Stationary(Vec<Vec<f64>>),
    Episodic(Vec<Vec<Vec<f64>>>),
}

fn flatten(rows: &[Vec<f64>]) -> Result<(usize, usize, Vec<f64>)> {
    let n = rows.len();
    let a_n = rows.first().map_or(0, |r| r.len());
    if n == 0 || a_n == 0 || rows.iter().any(|r| r.len() != a_n) {
        return Err(invalid("reward table must be a nonempty rectangle"));
    }
    Ok((n, a_n, rows.concat()))
}

impl RewardFn {
    pub fn stationary(n_states: usize, n_actions: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != n_states * n_actions {
            return Err(invalid("reward table has the wrong size"));
        }
        let r = Self {
            n_states,
            n_actions,
            layers: vec![table],
            episodic: false,
        };
        r.check_finite()?;
        Ok(r)
    }

    pub fn episodic(n_states: usize, n_actions: usize, layers: Vec<Vec<f64>>) -> Result<Self> {
        if layers.is_empty() || layers.iter().any(|l| l.len() != n_states * n_actions) {
            return Err(invalid("episodic reward layers have the wrong size"));
        }
        let r = Self {
            n_states,
            n_actions,
            layers,
            episodic: true,
        };
        r.check_finite()?;
        Ok(r)
    }

    /// Indicator reward on one pair.
    pub fn single_pair(n_states: usize, n_actions: usize, s: usize, a: usize) -> Result<Self> {
        if s >= n_states || a >= n_actions {
            return Err(invalid(format!("pair ({s}, {a}) out of range")));
        }
        let mut table = vec![0.0; n_states * n_actions];
        table[s * n_actions + a] = 1.0;
        Self::stationary(n_states, n_actions, table)
    }

    fn check_finite(&self) -> Result<()> {
        if self.layers.iter().flatten().any(|x| !x.is_finite()) {
            return Err(invalid("reward entries must be finite"));
        }
        Ok(())
    }

    /// Range check for the bounded-reward setting.
    pub fn check_unit_range(&self) -> Result<()> {
        if self
            .layers
            .iter()
            .flatten()
            .any(|x| !(0.0..=1.0).contains(x))
        {
            return Err(invalid("theory mode needs rewards in [0, 1]"));
        }
        Ok(())
    }

    pub fn is_episodic(&self) -> bool {
        self.episodic
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// Reward at 0-based step `layer`; stationary tables ignore it.
    pub fn layer(&self, layer: usize) -> &[f64] {
        if self.episodic {
            &self.layers[layer]
        } else {
            &self.layers[0]
        }
    }

    pub fn max(&self) -> f64 {
        self.layers
            .iter()
            .flatten()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        match serde_json::from_str::<RewardTable>(text)? {
            RewardTable::Stationary(rows) => {
                let (n, a, t) = flatten(&rows)?;
                Self::stationary(n, a, t)
            }
            RewardTable::Episodic(steps) => {
                let mut shape = None;
                let mut layers = Vec::new();
                for rows in &steps {
                    let (n, a, t) = flatten(rows)?;
                    if shape.is_some_and(|x| x != (n, a)) {
                        return Err(invalid("reward layers differ in shape"));
                    }
                    shape = Some((n, a));
                    layers.push(t);
                }
                let (n, a) = shape.ok_or_else(|| invalid("empty reward table"))?;
                Self::episodic(n, a, layers)
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = |l: &Vec<f64>| {
            l.chunks(self.n_actions)
                .map(|c| c.to_vec())
                .collect::<Vec<_>>()
        };
        let table = if self.episodic {
            RewardTable::Episodic(self.layers.iter().map(rows).collect())
        } else {
            RewardTable::Stationary(rows(&self.layers[0]))
        };
        Ok(serde_json::to_string(&table)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlannerMethod {
    ValueIteration,
    Npg,
    BatchConstrained,
}

/// Action value assumed for pairs the data never showed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum UnseenValue {
    /// Zero, a lower bound for nonnegative rewards.
    #[default]
    Pessimistic,
    /// Largest reward times the remaining horizon.
    Optimistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    pub method: PlannerMethod,
    pub unseen: UnseenValue,
    /// Batch-constrained planning keeps actions seen at least this often.
    pub min_count: u64,
    /// Accuracy target behind the NPG schedule.
    pub epsilon: f64,
    pub npg_step: Option<f64>,
    pub npg_iters: Option<usize>,
    /// Span tolerance of discounted value iteration.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            method: PlannerMethod::ValueIteration,
            unseen: UnseenValue::Pessimistic,
            min_count: 1,
            epsilon: 0.05,
            npg_step: None,
            npg_iters: None,
            tol: 1e-10,
            max_iters: 1_000_000,
        }
    }
}

/// NPG iteration count and step from the accuracy target:
/// `T = ceil(4 H^3 ln A / eps^2)`, `eta = sqrt(ln A / (H T))`.
pub fn npg_schedule(horizon: f64, n_actions: usize, epsilon: f64) -> (usize, f64) {
    let log_a = (n_actions as f64).ln().max(f64::MIN_POSITIVE);
    let t = (4.0 * horizon.powi(3) * log_a / (epsilon * epsilon))
        .ceil()
        .max(1.0);
    (t as usize, (log_a / (horizon * t)).sqrt())
}

struct Backup<'a> {
    model: &'a EmpiricalModel,
    reward: &'a RewardFn,
    opts: &'a PlanOptions,
    r_max: f64,
}

impl Backup<'_> {
    fn allowed(&self, layer: usize, s: usize, a: usize) -> bool {
        match self.opts.method {
            PlannerMethod::BatchConstrained => {
                self.model.visit_count(layer, s, a) >= self.opts.min_count.max(1)
            }
            _ => true,
        }
    }

    /// `remaining` is the horizon left after this step (`gamma / (1 - gamma)`
    /// in the discounted case).
    fn q(
        &self,
        layer: usize,
        s: usize,
        a: usize,
        next: &[f64],
        discount: f64,
        remaining: f64,
    ) -> f64 {
        let r = self.reward.layer(layer)[s * self.model.n_actions + a];
        match self.model.estimate(layer, s, a) {
            Some(row) => r + discount * row.iter().zip(next).map(|(p, v)| p * v).sum::<f64>(),
            None => match self.opts.unseen {
                UnseenValue::Pessimistic => 0.0,
                UnseenValue::Optimistic => self.r_max.max(0.0) * (1.0 + remaining),
            },
        }
    }

    /// Greedy row over allowed actions; uniform when none is allowed.
    fn greedy(&self, layer: usize, s: usize, q: &[f64]) -> (Vec<f64>, f64) {
        let a_n = self.model.n_actions;
        let mut best: Option<(usize, f64)> = None;
        for (a, v) in q.iter().enumerate() {
            if self.allowed(layer, s, a)
                && best.is_none_or(|(_, b)| *v > b + 1e-12 * b.abs().max(1.0))
            {
                best = Some((a, *v));
            }
        }
        match best {
            Some((a, v)) => {
                let mut row = vec![0.0; a_n];
                row[a] = 1.0;
                (row, v)
            }
            None => (vec![1.0 / a_n as f64; a_n], 0.0),
        }
    }
}

/// Solves the empirical model for `reward`.
pub fn plan(model: &EmpiricalModel, reward: &RewardFn, opts: &PlanOptions) -> Result<SolvedPolicy> {
    let (n, a_n) = (model.n_states, model.n_actions);
    if model.visits.iter().flatten().all(|v| *v == 0) {
        return Err(Error::EmptyModel);
    }
    if reward.n_states != n || reward.n_actions != a_n {
        return Err(invalid("reward shape does not match the model"));
    }
    let backup = Backup {
        model,
        reward,
        opts,
        r_max: reward.max(),
    };
    match model.horizon {
        None => {
            if reward.is_episodic() {
                return Err(Error::ModeMismatch(
                    "discounted model with a per-step reward".into(),
                ));
            }
            let gamma = model
                .gamma
                .ok_or_else(|| invalid("discounted model lacks gamma"))?;
            if gamma >= 1.0 {
                return Err(Error::GammaOneUnsupported);
            }
            let remaining = gamma / (1.0 - gamma);
            match opts.method {
                PlannerMethod::Npg => npg_discounted(&backup, gamma, remaining),
                _ => {
                    let mut v = vec![0.0; n];
                    for _ in 0..opts.max_iters {
                        let next: Vec<f64> = (0..n)
                            .map(|s| {
                                let q: Vec<f64> = (0..a_n)
                                    .map(|a| backup.q(0, s, a, &v, gamma, remaining))
                                    .collect();
                                backup.greedy(0, s, &q).1
                            })
                            .collect();
                        let diff: Vec<f64> = next.iter().zip(&v).map(|(a, b)| a - b).collect();
                        let span = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                            - diff.iter().copied().fold(f64::INFINITY, f64::min);
                        v = next;
                        if span < opts.tol {
                            break;
                        }
                    }
                    let probs = (0..n)
                        .flat_map(|s| {
                            let q: Vec<f64> = (0..a_n)
                                .map(|a| backup.q(0, s, a, &v, gamma, remaining))
                                .collect();
                            backup.greedy(0, s, &q).0
                        })
                        .collect();
                    Ok(SolvedPolicy::Stationary(TabularPolicy::from_probs(
                        n, a_n, probs,
                    )?))
                }
            }
        }
        Some(h) => {
            if reward.is_episodic() && reward.n_layers() < h {
                return Err(invalid("reward has fewer steps than the model horizon"));
            }
            match opts.method {
                PlannerMethod::Npg => npg_episodic(&backup, h),
                _ => {
                    let mut steps = vec![TabularPolicy::uniform(n, a_n); h];
                    let mut v = vec![0.0; n];
                    for layer in (0..h).rev() {
                        let remaining = (h - layer - 1) as f64;
                        let mut probs = Vec::with_capacity(n * a_n);
                        let mut next = vec![0.0; n];
                        for (s, slot) in next.iter_mut().enumerate() {
                            let q: Vec<f64> = (0..a_n)
                                .map(|a| backup.q(layer, s, a, &v, 1.0, remaining))
                                .collect();
                            let (row, val) = backup.greedy(layer, s, &q);
                            probs.extend(row);
                            *slot = val;
                        }
                        steps[layer] = TabularPolicy::from_probs(n, a_n, probs)?;
                        v = next;
                    }
                    Ok(SolvedPolicy::NonStationary(NonStationaryPolicy::new(
                        steps,
                    )?))
                }
            }
        }
    }
}

fn npg_discounted(backup: &Backup, gamma: f64, remaining: f64) -> Result<SolvedPolicy> {
    let model = backup.model;
    let (n, a_n) = (model.n_states, model.n_actions);
    let (sched_t, sched_eta) = npg_schedule(1.0 / (1.0 - gamma), a_n, backup.opts.epsilon);
    let iters = backup.opts.npg_iters.unwrap_or(sched_t);
    let eta = backup.opts.npg_step.unwrap_or(sched_eta);
    let mut theta = vec![0.0; n * a_n];
    for _ in 0..iters {
        let pi = TabularPolicy::from_logits(n, a_n, theta.clone())?;
        // unseen pairs contribute their fixed value and no continuation
        let mut chain = vec![0.0; n * n];
        let mut base = vec![0.0; n];
        for s in 0..n {
            for a in 0..a_n {
                let p = pi.prob(s, a);
                match model.estimate(0, s, a) {
                    Some(row) => {
                        base[s] += p * backup.reward.layer(0)[s * a_n + a];
                        for (t, x) in row.iter().enumerate() {
                            chain[s * n + t] += p * x;
                        }
                    }
                    None => base[s] += p * backup.q(0, s, a, &[], gamma, remaining),
                }
            }
        }
        let v = linalg::evaluate(&chain, n, gamma, &base)?;
        for s in 0..n {
            for a in 0..a_n {
                theta[s * a_n + a] += eta * backup.q(0, s, a, &v, gamma, remaining);
            }
        }
    }
    Ok(SolvedPolicy::Stationary(TabularPolicy::from_logits(
        n, a_n, theta,
    )?))
}

fn npg_episodic(backup: &Backup, h: usize) -> Result<SolvedPolicy> {
    let model = backup.model;
    let (n, a_n) = (model.n_states, model.n_actions);
    let (sched_t, sched_eta) = npg_schedule(h as f64, a_n, backup.opts.epsilon);
    let iters = backup.opts.npg_iters.unwrap_or(sched_t);
    let eta = backup.opts.npg_step.unwrap_or(sched_eta);
    let mut theta = vec![vec![0.0; n * a_n]; h];
    let mut q = vec![vec![0.0; n * a_n]; h];
    for _ in 0..iters {
        let mut v = vec![0.0; n];
        for layer in (0..h).rev() {
            let pi = TabularPolicy::from_logits(n, a_n, theta[layer].clone())?;
            let remaining = (h - layer - 1) as f64;
            let mut next = vec![0.0; n];
            for s in 0..n {
                for a in 0..a_n {
                    let x = backup.q(layer, s, a, &v, 1.0, remaining);
                    q[layer][s * a_n + a] = x;
                    next[s] += pi.prob(s, a) * x;
                }
            }
            v = next;
        }
        for (t, ql) in theta.iter_mut().zip(&q) {
            t.iter_mut().zip(ql).for_each(|(x, y)| *x += eta * y);
        }
    }
    let steps = theta
        .into_iter()
        .map(|t| TabularPolicy::from_logits(n, a_n, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(SolvedPolicy::NonStationary(NonStationaryPolicy::new(
        steps,
    )?))
}

/// Exact `J(pi; r)` on the true environment: the discounted return from
/// the start distribution, or the sum of expected per-step rewards.
pub fn evaluate_policy(env: EnvRef, policy: &SolvedPolicy, reward: &RewardFn) -> Result<f64> {
    if reward.n_states != env.n_states() || reward.n_actions != env.n_actions() {
        return Err(invalid("reward shape does not match the environment"));
    }
    match (env, policy) {
        (EnvRef::Discounted(cmp), SolvedPolicy::Stationary(pi)) => {
            if reward.is_episodic() {
                return Err(Error::ModeMismatch(
                    "discounted evaluation of a per-step reward".into(),
                ));
            }
            if cmp.gamma() >= 1.0 {
                return Err(Error::GammaOneUnsupported);
            }
            let a_n = cmp.n_actions();
            let r = reward.layer(0);
            let r_pi: Vec<f64> = (0..cmp.n_states())
                .map(|s| (0..a_n).map(|a| pi.prob(s, a) * r[s * a_n + a]).sum())
                .collect();
            let chain = cmp.induced_chain(pi);
            let v = linalg::evaluate(&chain, cmp.n_states(), cmp.gamma(), &r_pi)?;
            Ok(v.iter().zip(cmp.init()).map(|(x, m)| x * m).sum())
        }
        (EnvRef::Episodic(mdp), policy) => {
            let h = mdp.horizon();
            let repeated;
            let pi = match policy {
                SolvedPolicy::NonStationary(p) => p,
                SolvedPolicy::Stationary(p) => {
                    repeated = NonStationaryPolicy::repeated(p, h);
                    &repeated
                }
            };
            mdp.check_policy(pi, h)?;
            Ok(step_distributions(mdp, pi, h)
                .iter()
                .enumerate()
                .map(|(l, d)| {
                    d.iter()
                        .zip(reward.layer(l))
                        .map(|(x, r)| x * r)
                        .sum::<f64>()
                })
                .sum())
        }
        (EnvRef::Discounted(_), SolvedPolicy::NonStationary(_)) => Err(Error::ModeMismatch(
            "discounted evaluation needs a stationary policy".into(),
        )),
    }
}

/// Optimal policy and value on the true environment.
pub fn optimal_value(env: EnvRef, reward: &RewardFn) -> Result<(SolvedPolicy, f64)> {
    let model = match env {
        EnvRef::Discounted(c) => EmpiricalModel::exact_discounted(c),
        EnvRef::Episodic(m) => EmpiricalModel::exact_episodic(m),
    };
    let pi = plan(&model, reward, &PlanOptions::default())?;
    let j = evaluate_policy(env, &pi, reward)?;
    Ok((pi, j))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationRow {
    pub reward_id: String,
    pub j_planned: f64,
    pub j_optimal: f64,
    pub gap: f64,
}

pub fn write_evaluation_csv<W: Write>(mut out: W, rows: &[EvaluationRow]) -> std::io::Result<()> {
    writeln!(out, "reward_id,j_planned,j_optimal,gap")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.reward_id, r.j_planned, r.j_optimal, r.gap
        )?;
    }
    Ok(())
}
