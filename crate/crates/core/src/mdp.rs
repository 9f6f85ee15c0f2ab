//! Reward-free environment models, tabular policies and exact occupancy
//! measures.
//!
//! Transition tensors are stored flat in row-major `[s][a][s']` order.
//! Occupancy weights are stored flat in `[s][a]` order.

use crate::error::{invalid, Error, Result, ValidationError};
use crate::linalg;

/// Row-sum tolerance for transition rows and initial distributions.
pub const ROW_TOL: f64 = 1e-12;
/// Mass tolerance for occupancy measures.
pub const MASS_TOL: f64 = 1e-9;

fn check_distribution(
    row: &[f64],
    s: Option<usize>,
    a: Option<usize>,
    h: Option<usize>,
    what: &str,
) -> std::result::Result<(), ValidationError> {
    let sum: f64 = row.iter().sum();
    let bad_entry = row.iter().any(|p| !p.is_finite() || *p < 0.0);
    if bad_entry || (sum - 1.0).abs() > ROW_TOL {
        return Err(ValidationError {
            s,
            a,
            h,
            row_sum: Some(sum),
            reason: if bad_entry {
                format!("{what} has a negative or non-finite entry")
            } else {
                format!("{what} does not sum to 1")
            },
        });
    }
    Ok(())
}

/// Controlled Markov process: an MDP without rewards.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscountedCmp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    init: Vec<f64>,
    gamma: f64,
}

impl DiscountedCmp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        init: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let cmp = Self {
            n_states,
            n_actions,
            transition,
            init,
            gamma,
        };
        cmp.validate()?;
        Ok(cmp)
    }

    /// Builds from a nested `[s][a][s']` tensor.
    pub fn from_nested(transition: &[Vec<Vec<f64>>], init: Vec<f64>, gamma: f64) -> Result<Self> {
        let n_states = transition.len();
        let n_actions = transition.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n_states * n_actions * n_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(ValidationError {
                    s: Some(s),
                    ..ValidationError::general("ragged action dimension")
                }
                .into());
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(ValidationError {
                        s: Some(s),
                        a: Some(a),
                        ..ValidationError::general("next-state dimension does not match n_states")
                    }
                    .into());
                }
                flat.extend_from_slice(row);
            }
        }
        Self::new(n_states, n_actions, flat, init, gamma)
    }

    /// Checks every invariant and reports the first violation.
    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        let (s_n, a_n) = (self.n_states, self.n_actions);
        if s_n == 0 || a_n == 0 {
            return Err(ValidationError::general(
                "n_states and n_actions must be positive",
            ));
        }
        if self.transition.len() != s_n * a_n * s_n {
            return Err(ValidationError::general(format!(
                "transition has {} entries, expected {}",
                self.transition.len(),
                s_n * a_n * s_n
            )));
        }
        if self.init.len() != s_n {
            return Err(ValidationError::general(
                "init length does not match n_states",
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(ValidationError::general(format!(
                "gamma {} outside (0, 1]",
                self.gamma
            )));
        }
        for s in 0..s_n {
            for a in 0..a_n {
                check_distribution(self.row(s, a), Some(s), Some(a), None, "transition row")?;
            }
        }
        check_distribution(&self.init, None, None, None, "initial distribution")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// `P(. | s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.init.clone(),
            gamma,
        )
    }

    pub(crate) fn dense(&self) -> bool {
        self.n_pairs() <= linalg::DENSE_LIMIT
    }

    pub(crate) fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states() != self.n_states || policy.n_actions() != self.n_actions {
            return Err(invalid(format!(
                "policy shape {}x{} does not match model {}x{}",
                policy.n_states(),
                policy.n_actions(),
                self.n_states,
                self.n_actions
            )));
        }
        Ok(())
    }

    /// State-to-state chain induced by a policy.
    pub fn induced_chain(&self, policy: &TabularPolicy) -> Vec<f64> {
        induced_chain(
            &self.transition,
            self.n_states,
            self.n_actions,
            policy.probs(),
        )
    }

    /// States reachable from the support of `init` under some policy.
    pub fn reachable_states(&self) -> Vec<bool> {
        let n = self.n_states;
        let mut seen: Vec<bool> = self.init.iter().map(|p| *p > 0.0).collect();
        let mut stack: Vec<usize> = (0..n).filter(|s| seen[*s]).collect();
        while let Some(s) = stack.pop() {
            for a in 0..self.n_actions {
                for (t, p) in self.row(s, a).iter().enumerate() {
                    if *p > 0.0 && !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        seen
    }
}

pub(crate) fn induced_chain(transition: &[f64], n: usize, a_n: usize, probs: &[f64]) -> Vec<f64> {
    let mut chain = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..a_n {
            let p = probs[s * a_n + a];
            if p == 0.0 {
                continue;
            }
            let row = &transition[(s * a_n + a) * n..(s * a_n + a + 1) * n];
            for (t, q) in row.iter().enumerate() {
                chain[s * n + t] += p * q;
            }
        }
    }
    chain
}

/// Finite-horizon MDP without rewards. Layer `h` (0-based) holds the
/// transition used after acting at step `h + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodicMdp {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    transitions: Vec<Vec<f64>>,
    init: Vec<f64>,
}

impl EpisodicMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        transitions: Vec<Vec<f64>>,
        init: Vec<f64>,
    ) -> Result<Self> {
        let mdp = Self {
            n_states,
            n_actions,
            horizon,
            transitions,
            init,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Episodic view of a CMP with the same dynamics at every step.
    pub fn from_cmp(cmp: &DiscountedCmp, horizon: usize) -> Result<Self> {
        Self::new(
            cmp.n_states(),
            cmp.n_actions(),
            horizon,
            vec![cmp.transition().to_vec(); horizon],
            cmp.init().to_vec(),
        )
    }

    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        let (s_n, a_n) = (self.n_states, self.n_actions);
        if s_n == 0 || a_n == 0 {
            return Err(ValidationError::general(
                "n_states and n_actions must be positive",
            ));
        }
        if self.horizon == 0 {
            return Err(ValidationError::general("horizon must be at least 1"));
        }
        if self.transitions.len() != self.horizon {
            return Err(ValidationError::general(format!(
                "{} transition layers for horizon {}",
                self.transitions.len(),
                self.horizon
            )));
        }
        if self.init.len() != s_n {
            return Err(ValidationError::general(
                "init length does not match n_states",
            ));
        }
        for (h, layer) in self.transitions.iter().enumerate() {
            if layer.len() != s_n * a_n * s_n {
                return Err(ValidationError {
                    h: Some(h + 1),
                    ..ValidationError::general("transition layer has the wrong size")
                });
            }
            for s in 0..s_n {
                for a in 0..a_n {
                    let start = (s * a_n + a) * s_n;
                    check_distribution(
                        &layer[start..start + s_n],
                        Some(s),
                        Some(a),
                        Some(h + 1),
                        "transition row",
                    )?;
                }
            }
        }
        check_distribution(&self.init, None, None, None, "initial distribution")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn init(&self) -> &[f64] {
        &self.init
    }

    /// Flat `[s][a][s']` tensor of layer `layer` (0-based).
    pub fn layer(&self, layer: usize) -> &[f64] {
        &self.transitions[layer]
    }

    pub fn row(&self, layer: usize, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transitions[layer][start..start + self.n_states]
    }

    pub(crate) fn check_policy(
        &self,
        policy: &NonStationaryPolicy,
        min_steps: usize,
    ) -> Result<()> {
        if policy.horizon() < min_steps {
            return Err(invalid(format!(
                "policy covers {} steps, {} needed",
                policy.horizon(),
                min_steps
            )));
        }
        let p = policy.step(0);
        if p.n_states() != self.n_states || p.n_actions() != self.n_actions {
            return Err(invalid("policy shape does not match model"));
        }
        Ok(())
    }
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
}

/// Stationary policy with softmax parameterization. Policies built from
/// probabilities may contain zeros (deterministic planners need them); those
/// carry `-inf` logits.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn from_logits(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || logits.len() != n_states * n_actions {
            return Err(invalid("logit table has the wrong shape"));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(invalid("logits must be finite"));
        }
        let mut probs = vec![0.0; logits.len()];
        for s in 0..n_states {
            let r = s * n_actions..(s + 1) * n_actions;
            softmax_into(&logits[r.clone()], &mut probs[r]);
        }
        Ok(Self {
            n_states,
            n_actions,
            logits,
            probs,
        })
    }

    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || probs.len() != n_states * n_actions {
            return Err(invalid("probability table has the wrong shape"));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            check_distribution(row, Some(s), None, None, "policy row").map_err(Error::from)?;
        }
        let logits = probs
            .iter()
            .map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            logits,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self::from_logits(n_states, n_actions, vec![0.0; n_states * n_actions])
            .expect("positive shape")
    }

    /// Deterministic policy choosing `actions[s]` at every state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, a) in actions.iter().enumerate() {
            if *a >= n_actions {
                return Err(invalid(format!("action {a} out of range")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Self::from_probs(actions.len(), n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// `pi(. | s)`.
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn has_finite_logits(&self) -> bool {
        self.logits.iter().all(|l| l.is_finite())
    }

    /// Probability table as nested rows, for serialization.
    pub fn prob_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_states).map(|s| self.row(s).to_vec()).collect()
    }
}

/// One stationary policy per step.
#[derive(Debug, Clone, PartialEq)]
pub struct NonStationaryPolicy {
    steps: Vec<TabularPolicy>,
}

impl NonStationaryPolicy {
    pub fn new(steps: Vec<TabularPolicy>) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| invalid("empty non-stationary policy"))?;
        let shape = (first.n_states(), first.n_actions());
        if steps.iter().any(|p| (p.n_states(), p.n_actions()) != shape) {
            return Err(invalid("steps have mismatched shapes"));
        }
        Ok(Self { steps })
    }

    pub fn uniform(horizon: usize, n_states: usize, n_actions: usize) -> Self {
        Self {
            steps: vec![TabularPolicy::uniform(n_states, n_actions); horizon.max(1)],
        }
    }

    /// Same stationary policy at every step.
    pub fn repeated(policy: &TabularPolicy, horizon: usize) -> Self {
        Self {
            steps: vec![policy.clone(); horizon.max(1)],
        }
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Policy at 0-based step index.
    pub fn step(&self, layer: usize) -> &TabularPolicy {
        &self.steps[layer]
    }

    pub fn steps(&self) -> &[TabularPolicy] {
        &self.steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupancyKind {
    StateAction,
    State,
}

/// Probability vector over state-action pairs or over states.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    n_states: usize,
    n_actions: usize,
    weights: Vec<f64>,
    kind: OccupancyKind,
}

impl OccupancyMeasure {
    pub fn state_action(n_states: usize, n_actions: usize, weights: Vec<f64>) -> Result<Self> {
        Self::build(n_states, n_actions, weights, OccupancyKind::StateAction)
    }

    pub fn state(n_states: usize, weights: Vec<f64>) -> Result<Self> {
        Self::build(n_states, 1, weights, OccupancyKind::State)
    }

    fn build(
        n_states: usize,
        n_actions: usize,
        weights: Vec<f64>,
        kind: OccupancyKind,
    ) -> Result<Self> {
        let expected = match kind {
            OccupancyKind::StateAction => n_states * n_actions,
            OccupancyKind::State => n_states,
        };
        if weights.len() != expected || expected == 0 {
            return Err(invalid("occupancy has the wrong shape"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < -MASS_TOL) {
            return Err(invalid("occupancy has a negative or non-finite entry"));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > MASS_TOL {
            return Err(invalid(format!("occupancy sums to {sum}")));
        }
        let weights = weights.into_iter().map(|w| w.max(0.0)).collect();
        Ok(Self {
            n_states,
            n_actions,
            weights,
            kind,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn kind(&self) -> OccupancyKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        match self.kind {
            OccupancyKind::StateAction => self.weights[s * self.n_actions + a],
            OccupancyKind::State => self.weights[s],
        }
    }
}

fn outer(state: &[f64], policy: &TabularPolicy) -> Vec<f64> {
    let a_n = policy.n_actions();
    let mut d = vec![0.0; state.len() * a_n];
    for (s, m) in state.iter().enumerate() {
        for a in 0..a_n {
            d[s * a_n + a] = m * policy.prob(s, a);
        }
    }
    d
}

/// Discounted state visitation of the policy started from `source`
/// (a state distribution), i.e. `(1 - gamma) sum_t gamma^t Pr(s_t)`.
/// For `gamma = 1` this is the unique stationary distribution.
pub(crate) fn state_visitation(
    cmp: &DiscountedCmp,
    chain: &[f64],
    source: &[f64],
) -> Result<Vec<f64>> {
    let n = cmp.n_states();
    let gamma = cmp.gamma();
    if gamma >= 1.0 {
        return linalg::stationary(chain, n, cmp.dense());
    }
    let src: Vec<f64> = source.iter().map(|m| (1.0 - gamma) * m).collect();
    linalg::discounted_visitation(chain, n, gamma, &src, cmp.dense())
}

/// Discounted state-action occupancy `d_mu^pi`, or `d_{s0,a0}^pi` when a
/// start pair is given (first action fixed to `a0`). With `gamma = 1` the
/// stationary distribution of the induced chain is returned, which does not
/// depend on the start.
pub fn occupancy(
    cmp: &DiscountedCmp,
    policy: &TabularPolicy,
    start: Option<(usize, usize)>,
) -> Result<OccupancyMeasure> {
    cmp.check_policy(policy)?;
    let (n, a_n) = (cmp.n_states(), cmp.n_actions());
    let chain = cmp.induced_chain(policy);
    let gamma = cmp.gamma();
    let weights = match start {
        None => {
            let m = state_visitation(cmp, &chain, cmp.init())?;
            outer(&m, policy)
        }
        Some((s0, a0)) => {
            if s0 >= n || a0 >= a_n {
                return Err(invalid(format!("start pair ({s0}, {a0}) out of range")));
            }
            if gamma >= 1.0 {
                let m = linalg::stationary(&chain, n, cmp.dense())?;
                outer(&m, policy)
            } else {
                // d = (1-g) e_{s0,a0} + x (x) pi, x = g(1-g) P(.|s0,a0) + g P_pi^T x
                let src: Vec<f64> = cmp
                    .row(s0, a0)
                    .iter()
                    .map(|p| gamma * (1.0 - gamma) * p)
                    .collect();
                let x = linalg::discounted_visitation(&chain, n, gamma, &src, cmp.dense())?;
                let mut d = outer(&x, policy);
                d[s0 * a_n + a0] += 1.0 - gamma;
                d
            }
        }
    };
    OccupancyMeasure::state_action(n, a_n, weights)
}

/// Marginal over actions.
pub fn state_marginal(d: &OccupancyMeasure) -> OccupancyMeasure {
    match d.kind() {
        OccupancyKind::State => d.clone(),
        OccupancyKind::StateAction => {
            let a_n = d.n_actions();
            let m = (0..d.n_states())
                .map(|s| d.weights()[s * a_n..(s + 1) * a_n].iter().sum())
                .collect();
            OccupancyMeasure {
                n_states: d.n_states(),
                n_actions: 1,
                weights: m,
                kind: OccupancyKind::State,
            }
        }
    }
}

/// All step distributions `d_1 .. d_upto` as flat `[s][a]` vectors.
pub(crate) fn step_distributions(
    mdp: &EpisodicMdp,
    policy: &NonStationaryPolicy,
    upto: usize,
) -> Vec<Vec<f64>> {
    let (n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut out = Vec::with_capacity(upto);
    let mut m = mdp.init().to_vec();
    for layer in 0..upto {
        let d = outer(&m, policy.step(layer));
        if layer + 1 < upto {
            let mut next = vec![0.0; n];
            for s in 0..n {
                for a in 0..a_n {
                    let w = d[s * a_n + a];
                    if w == 0.0 {
                        continue;
                    }
                    for (t, p) in mdp.row(layer, s, a).iter().enumerate() {
                        next[t] += w * p;
                    }
                }
            }
            m = next;
        }
        out.push(d);
    }
    out
}

/// Exact state-action distribution at step `h` (1-based).
pub fn episodic_step_distribution(
    mdp: &EpisodicMdp,
    policy: &NonStationaryPolicy,
    h: usize,
) -> Result<OccupancyMeasure> {
    if h == 0 || h > mdp.horizon() {
        return Err(Error::StepOutOfRange {
            h,
            horizon: mdp.horizon(),
        });
    }
    mdp.check_policy(policy, h)?;
    let d = step_distributions(mdp, policy, h).pop().expect("h >= 1");
    OccupancyMeasure::state_action(mdp.n_states(), mdp.n_actions(), d)
}

/// Conditional `pi(a|s) = d(s,a) / d(s)`, uniform where `d(s) = 0`.
pub(crate) fn conditional_policy(n: usize, a_n: usize, d: &[f64]) -> TabularPolicy {
    let mut probs = vec![0.0; n * a_n];
    for s in 0..n {
        let row = &d[s * a_n..(s + 1) * a_n];
        let m: f64 = row.iter().sum();
        for a in 0..a_n {
            probs[s * a_n + a] = if m > 0.0 {
                row[a] / m
            } else {
                1.0 / a_n as f64
            };
        }
        // renormalize away rounding so the row passes validation
        let z: f64 = probs[s * a_n..(s + 1) * a_n].iter().sum();
        for p in &mut probs[s * a_n..(s + 1) * a_n] {
            *p /= z;
        }
    }
    TabularPolicy::from_probs(n, a_n, probs).expect("conditional rows are distributions")
}

/// Policy whose occupancy reproduces `d` (uniform at zero-mass states).
pub fn policy_from_occupancy(d: &OccupancyMeasure) -> Result<TabularPolicy> {
    if d.kind() != OccupancyKind::StateAction {
        return Err(invalid(
            "policy_from_occupancy needs a state-action measure",
        ));
    }
    Ok(conditional_policy(d.n_states(), d.n_actions(), d.weights()))
}

/// `max_pi d_h^pi(s, a)` over non-stationary policies. The action at step
/// `h` is free, so this equals the best probability of being in `s` at `h`.
pub fn max_reach(mdp: &EpisodicMdp, s: usize, a: usize, h: usize) -> Result<f64> {
    let (n, a_n) = (mdp.n_states(), mdp.n_actions());
    if s >= n || a >= a_n {
        return Err(invalid(format!("pair ({s}, {a}) out of range")));
    }
    if h == 0 || h > mdp.horizon() {
        return Err(Error::StepOutOfRange {
            h,
            horizon: mdp.horizon(),
        });
    }
    Ok(reach_values(mdp, s, h)
        .iter()
        .zip(mdp.init())
        .map(|(w, m)| w * m)
        .sum())
}

/// Backward DP: best probability of occupying `target` at step `h` when
/// starting from each state at step 1.
pub(crate) fn reach_values(mdp: &EpisodicMdp, target: usize, h: usize) -> Vec<f64> {
    let (n, a_n) = (mdp.n_states(), mdp.n_actions());
    let mut w: Vec<f64> = (0..n)
        .map(|x| if x == target { 1.0 } else { 0.0 })
        .collect();
    for layer in (0..h - 1).rev() {
        w = (0..n)
            .map(|x| {
                (0..a_n)
                    .map(|b| {
                        mdp.row(layer, x, b)
                            .iter()
                            .zip(&w)
                            .map(|(p, v)| p * v)
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_five() -> DiscountedCmp {
        let mut t = vec![0.0; 5 * 2 * 5];
        for s in 0..5 {
            t[(s * 2) * 5] = 1.0;
            t[(s * 2 + 1) * 5 + (s + 1).min(4)] = 1.0;
        }
        let mut init = vec![0.0; 5];
        init[0] = 1.0;
        DiscountedCmp::new(5, 2, t, init, 0.99).unwrap()
    }

    #[test]
    fn identity_cmp_is_valid_and_trivial() {
        let cmp = DiscountedCmp::new(1, 1, vec![1.0], vec![1.0], 0.7).unwrap();
        let d = occupancy(&cmp, &TabularPolicy::uniform(1, 1), None).unwrap();
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn bad_row_names_the_row() {
        let err =
            DiscountedCmp::new(2, 1, vec![1.0, 0.0, 0.5, 0.4], vec![1.0, 0.0], 0.9).unwrap_err();
        match err {
            Error::Validation(v) => {
                assert_eq!((v.s, v.a), (Some(1), Some(0)));
                assert!((v.row_sum.unwrap() - 0.9).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn episodic_validation_reports_step() {
        let good = vec![1.0, 0.0, 0.0, 1.0];
        let bad = vec![1.0, 0.0, 0.0, 0.9];
        let err = EpisodicMdp::new(2, 1, 2, vec![good, bad], vec![1.0, 0.0]).unwrap_err();
        match err {
            Error::Validation(v) => assert_eq!((v.h, v.s), (Some(2), Some(1))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn state_marginal_examples() {
        let d = OccupancyMeasure::state_action(2, 2, vec![0.25; 4]).unwrap();
        assert_eq!(state_marginal(&d).weights(), &[0.5, 0.5]);
        let delta = OccupancyMeasure::state_action(2, 2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(state_marginal(&delta).weights(), &[1.0, 0.0]);
    }

    #[test]
    fn start_pair_occupancy_holds_first_action_mass() {
        let cmp = chain_five();
        let pi = TabularPolicy::uniform(5, 2);
        let d = occupancy(&cmp, &pi, Some((2, 1))).unwrap();
        assert!(d.get(2, 1) >= 1.0 - cmp.gamma());
        assert!((d.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_occupancy_gives_uniform_policy() {
        let d = OccupancyMeasure::state_action(3, 2, vec![1.0 / 6.0; 6]).unwrap();
        let pi = policy_from_occupancy(&d).unwrap();
        assert!(pi.probs().iter().all(|p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn zero_marginal_state_maps_to_uniform() {
        let d = OccupancyMeasure::state_action(2, 2, vec![0.3, 0.7, 0.0, 0.0]).unwrap();
        let pi = policy_from_occupancy(&d).unwrap();
        assert_eq!(pi.row(1), &[0.5, 0.5]);
        assert!((pi.prob(0, 1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn first_step_is_init_times_policy() {
        let cmp = chain_five();
        let mdp = EpisodicMdp::from_cmp(&cmp, 3).unwrap();
        let pi = NonStationaryPolicy::uniform(3, 5, 2);
        let d1 = episodic_step_distribution(&mdp, &pi, 1).unwrap();
        assert_eq!(d1.get(0, 0), 0.5);
        assert!(matches!(
            episodic_step_distribution(&mdp, &pi, 4),
            Err(Error::StepOutOfRange { .. })
        ));
    }

    #[test]
    fn deterministic_two_step_path() {
        let cmp = chain_five();
        let mdp = EpisodicMdp::from_cmp(&cmp, 2).unwrap();
        let go = TabularPolicy::deterministic(2, &[1, 1, 1, 1, 1]).unwrap();
        let pi = NonStationaryPolicy::repeated(&go, 2);
        let d2 = episodic_step_distribution(&mdp, &pi, 2).unwrap();
        assert_eq!(d2.get(1, 1), 1.0);
    }

    #[test]
    fn max_reach_examples() {
        let mdp = EpisodicMdp::from_cmp(&chain_five(), 5).unwrap();
        assert_eq!(max_reach(&mdp, 2, 0, 3).unwrap(), 1.0);
        assert_eq!(max_reach(&mdp, 3, 0, 3).unwrap(), 0.0);
        let spread =
            EpisodicMdp::new(2, 1, 1, vec![vec![1.0, 0.0, 0.0, 1.0]], vec![0.3, 0.7]).unwrap();
        assert!((max_reach(&spread, 0, 0, 1).unwrap() - 0.3).abs() < 1e-15);
    }
}
