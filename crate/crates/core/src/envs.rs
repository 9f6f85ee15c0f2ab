//! Built-in environments, a random CMP generator, and the exhaustive
//! two-state comparison of Shannon and Rényi maximisers under `G`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupon::coupon_value;
use crate::entropy::RenyiOrder;
use crate::error::{invalid, Error, Result};
use crate::mdp::{occupancy, DiscountedCmp, EpisodicMdp, TabularPolicy};
use crate::solver::{maximize_entropy, EntropyTarget, SolverMethod, SolverOptions};

pub const FIVE_STATE_GAMMA: f64 = 0.99;
pub const TWO_STATE_GAP_GAMMA: f64 = 0.9;
pub const FOUR_ROOMS_GAMMA: f64 = 0.995;

/// Interior of the 11x11 four-room grid; `w` marks a wall.
const FOUR_ROOMS: [&str; 11] = [
    "     w     ",
    "     w     ",
    "           ",
    "     w     ",
    "     w     ",
    "w wwww     ",
    "     www ww",
    "     w     ",
    "     w     ",
    "           ",
    "     w     ",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum EnvSpec {
    /// Chain where the first action returns to the start and the second
    /// advances (self-loop at the end).
    FiveState {
        #[serde(default = "five_state_gamma")]
        gamma: f64,
    },
    /// The two-state, two-action CMP of the G comparison.
    TwoStateGap {
        #[serde(default = "two_state_gap_gamma")]
        gamma: f64,
    },
    FourRooms {
        #[serde(default = "four_rooms_gamma")]
        gamma: f64,
    },
    Random {
        n_states: usize,
        n_actions: usize,
        #[serde(default = "one")]
        concentration: f64,
        gamma: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Every row and the start distribution uniform.
    Symmetric {
        n_states: usize,
        n_actions: usize,
        gamma: f64,
    },
}

fn five_state_gamma() -> f64 {
    FIVE_STATE_GAMMA
}
fn two_state_gap_gamma() -> f64 {
    TWO_STATE_GAP_GAMMA
}
fn four_rooms_gamma() -> f64 {
    FOUR_ROOMS_GAMMA
}
fn one() -> f64 {
    1.0
}

impl EnvSpec {
    /// Spec with default parameters for a named built-in.
    pub fn named(name: &str) -> Result<Self> {
        match name {
            "five-state" => Ok(EnvSpec::FiveState {
                gamma: FIVE_STATE_GAMMA,
            }),
            "two-state-gap" => Ok(EnvSpec::TwoStateGap {
                gamma: TWO_STATE_GAP_GAMMA,
            }),
            "four-rooms" => Ok(EnvSpec::FourRooms {
                gamma: FOUR_ROOMS_GAMMA,
            }),
            "random" => Ok(EnvSpec::Random {
                n_states: 4,
                n_actions: 3,
                concentration: 1.0,
                gamma: 0.9,
                seed: 0,
            }),
            "symmetric" => Ok(EnvSpec::Symmetric {
                n_states: 2,
                n_actions: 2,
                gamma: 0.9,
            }),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            EnvSpec::FiveState { gamma }
            | EnvSpec::TwoStateGap { gamma }
            | EnvSpec::FourRooms { gamma }
            | EnvSpec::Random { gamma, .. }
            | EnvSpec::Symmetric { gamma, .. } => *gamma,
        }
    }

    pub fn set_gamma(&mut self, value: f64) {
        match self {
            EnvSpec::FiveState { gamma }
            | EnvSpec::TwoStateGap { gamma }
            | EnvSpec::FourRooms { gamma }
            | EnvSpec::Random { gamma, .. }
            | EnvSpec::Symmetric { gamma, .. } => *gamma = value,
        }
    }

    pub fn build(&self) -> Result<DiscountedCmp> {
        match *self {
            EnvSpec::FiveState { gamma } => five_state(gamma),
            EnvSpec::TwoStateGap { gamma } => two_state_gap(gamma),
            EnvSpec::FourRooms { gamma } => four_rooms(gamma),
            EnvSpec::Random {
                n_states,
                n_actions,
                concentration,
                gamma,
                seed,
            } => random_cmp(n_states, n_actions, concentration, gamma, seed),
            EnvSpec::Symmetric {
                n_states,
                n_actions,
                gamma,
            } => symmetric(n_states, n_actions, gamma),
        }
    }

    pub fn build_episodic(&self, horizon: usize) -> Result<EpisodicMdp> {
        EpisodicMdp::from_cmp(&self.build()?, horizon)
    }
}

pub fn five_state(gamma: f64) -> Result<DiscountedCmp> {
    let n = 5;
    let mut p = vec![0.0; n * 2 * n];
    for s in 0..n {
        p[(s * 2) * n] = 1.0;
        p[(s * 2 + 1) * n + (s + 1).min(n - 1)] = 1.0;
    }
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    DiscountedCmp::new(n, 2, p, init, gamma)
}

pub fn two_state_gap(gamma: f64) -> Result<DiscountedCmp> {
    DiscountedCmp::new(
        2,
        2,
        vec![1.0, 0.0, 0.9, 0.1, 1.0, 0.0, 0.4, 0.6],
        vec![1.0, 0.0],
        gamma,
    )
}

/// Free cells of the four-room grid in row-major order.
pub fn four_rooms_cells() -> Vec<(usize, usize)> {
    FOUR_ROOMS
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.bytes()
                .enumerate()
                .filter(|(_, b)| *b != b'w')
                .map(move |(c, _)| (r, c))
        })
        .collect()
}

/// Deterministic grid world; actions up, down, left, right; moving into a
/// wall or the border leaves the agent in place. Starts at the top-left.
pub fn four_rooms(gamma: f64) -> Result<DiscountedCmp> {
    let cells = four_rooms_cells();
    let n = cells.len();
    let index = |r: isize, c: isize| -> Option<usize> {
        if r < 0 || c < 0 {
            return None;
        }
        cells.iter().position(|x| *x == (r as usize, c as usize))
    };
    let moves: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];
    let mut p = vec![0.0; n * 4 * n];
    for (s, &(r, c)) in cells.iter().enumerate() {
        for (a, (dr, dc)) in moves.iter().enumerate() {
            let next = index(r as isize + dr, c as isize + dc).unwrap_or(s);
            p[(s * 4 + a) * n + next] = 1.0;
        }
    }
    let mut init = vec![0.0; n];
    init[0] = 1.0;
    DiscountedCmp::new(n, 4, p, init, gamma)
}

fn dirichlet_row(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, len: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
    let z: f64 = row.iter().sum();
    if z <= 0.0 {
        // all draws underflowed: fall back to a point mass
        row.iter_mut().for_each(|x| *x = 0.0);
        row[0] = 1.0;
        return row;
    }
    row.iter_mut().for_each(|x| *x /= z);
    row
}

/// Random CMP with Dirichlet(`concentration`) transition rows and start
/// distribution.
pub fn random_cmp(
    n_states: usize,
    n_actions: usize,
    concentration: f64,
    gamma: f64,
    seed: u64,
) -> Result<DiscountedCmp> {
    if n_states == 0 || n_actions == 0 {
        return Err(invalid("random CMP needs positive sizes"));
    }
    let dist = Gamma::new(concentration, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = (0..n_states * n_actions)
        .flat_map(|_| dirichlet_row(&mut rng, &dist, n_states))
        .collect();
    let init = dirichlet_row(&mut rng, &dist, n_states);
    DiscountedCmp::new(n_states, n_actions, p, init, gamma)
}

/// Policy whose action rows are drawn uniformly from the simplex
/// (Dirichlet(1)), the usual "random policy" baseline.
pub fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> Result<TabularPolicy> {
    if n_states == 0 || n_actions == 0 {
        return Err(invalid("random policy needs positive sizes"));
    }
    let dist = Gamma::new(1.0, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probs = (0..n_states)
        .flat_map(|_| dirichlet_row(&mut rng, &dist, n_actions))
        .collect();
    TabularPolicy::from_probs(n_states, n_actions, probs)
}

/// Random episodic MDP with an independent Dirichlet layer per step.
pub fn random_episodic(
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    concentration: f64,
    seed: u64,
) -> Result<EpisodicMdp> {
    if n_states == 0 || n_actions == 0 {
        return Err(invalid("random MDP needs positive sizes"));
    }
    let dist = Gamma::new(concentration, 1.0).map_err(|e| invalid(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..horizon)
        .map(|_| {
            (0..n_states * n_actions)
                .flat_map(|_| dirichlet_row(&mut rng, &dist, n_states))
                .collect()
        })
        .collect();
    let init = dirichlet_row(&mut rng, &dist, n_states);
    EpisodicMdp::new(n_states, n_actions, horizon, layers, init)
}

pub fn symmetric(n_states: usize, n_actions: usize, gamma: f64) -> Result<DiscountedCmp> {
    let u = 1.0 / n_states as f64;
    DiscountedCmp::new(
        n_states,
        n_actions,
        vec![u; n_states * n_actions * n_states],
        vec![u; n_states],
        gamma,
    )
}

/// Free parameters of a two-state, two-action CMP: `P(s1 | s, a)` for
/// `(s1,a1), (s1,a2), (s2,a1), (s2,a2)` and `mu(s1)`.
pub type CmpParams = [f64; 5];

pub fn cmp_from_params(params: &CmpParams, gamma: f64) -> Result<DiscountedCmp> {
    let p = params[..4].iter().flat_map(|x| [*x, 1.0 - x]).collect();
    DiscountedCmp::new(2, 2, p, vec![params[4], 1.0 - params[4]], gamma)
}

fn grid_divisions(step: f64) -> Result<usize> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(invalid("step must lie in (0, 1]"));
    }
    let k = (1.0 / step).round() as usize;
    if ((k as f64) * step - 1.0).abs() > 1e-9 {
        return Err(invalid(format!("step {step} does not divide 1")));
    }
    Ok(k)
}

/// Every grid CMP, last parameter varying fastest. There are
/// `(1/step + 1)^5` of them.
pub fn enumerate_cmps(step: f64, gamma: f64) -> Result<Vec<(CmpParams, DiscountedCmp)>> {
    let k = grid_divisions(step)?;
    let m = k + 1;
    (0..m.pow(5))
        .map(|mut i| {
            let mut params = [0.0; 5];
            for slot in params.iter_mut().rev() {
                *slot = (i % m) as f64 / k as f64;
                i /= m;
            }
            cmp_from_params(&params, gamma).map(|c| (params, c))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct CmpComparison {
    pub params: CmpParams,
    pub g_shannon: f64,
    pub g_renyi: f64,
    /// `G(Shannon maximiser) - G(Rényi maximiser)`; negative means Shannon
    /// wins.
    pub gap: f64,
    /// A state is unreachable, so both values are infinite.
    pub skipped: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    pub step: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub n_cmps: usize,
    pub n_skipped: usize,
    pub n_counterexamples: usize,
    /// Most negative gap over non-skipped CMPs.
    pub worst_gap: f64,
    pub worst_params: Option<CmpParams>,
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct SearchReport {
    pub summary: SearchSummary,
    pub rows: Vec<CmpComparison>,
}

pub const COUNTEREXAMPLE_TOL: f64 = 1e-6;

/// Options for the per-CMP solves of [`brute_force_compare`].
pub fn search_solver_options() -> SolverOptions {
    SolverOptions {
        max_iters: 2_000,
        tol: 1e-10,
        seed: 0,
        restarts: 2,
    }
}

/// `G` of the Shannon and Rényi maximisers on one CMP.
pub fn compare_cmp(
    params: CmpParams,
    cmp: &DiscountedCmp,
    alpha: RenyiOrder,
    opts: &SolverOptions,
) -> Result<CmpComparison> {
    if cmp.reachable_states().iter().any(|r| !r) {
        return Ok(CmpComparison {
            params,
            g_shannon: f64::INFINITY,
            g_renyi: f64::INFINITY,
            gap: 0.0,
            skipped: true,
        });
    }
    let g_of = |order: RenyiOrder| -> Result<f64> {
        let r = maximize_entropy(
            EntropyTarget::Discounted(cmp),
            order,
            SolverMethod::GradientAscent,
            opts,
        )?;
        let pi = r.policy.stationary().expect("discounted target");
        Ok(coupon_value(occupancy(cmp, pi, None)?.weights()))
    };
    let g_shannon = g_of(RenyiOrder::SHANNON)?;
    let g_renyi = g_of(alpha)?;
    Ok(CmpComparison {
        params,
        g_shannon,
        g_renyi,
        gap: g_shannon - g_renyi,
        skipped: false,
    })
}

/// Solves both maximisers on every grid CMP with `workers` threads (0 uses
/// the global pool). Row order follows [`enumerate_cmps`].
pub fn brute_force_compare(
    step: f64,
    alpha: RenyiOrder,
    gamma: f64,
    workers: usize,
) -> Result<SearchReport> {
    if alpha.is_shannon() {
        return Err(invalid("comparison needs alpha < 1"));
    }
    let cmps = enumerate_cmps(step, gamma)?;
    let opts = search_solver_options();
    let solve = || -> Result<Vec<CmpComparison>> {
        cmps.par_iter()
            .map(|(params, cmp)| compare_cmp(*params, cmp, alpha, &opts))
            .collect()
    };
    let rows = if workers == 0 {
        solve()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| invalid(e.to_string()))?
            .install(solve)?
    };
    let mut summary = SearchSummary {
        step,
        alpha: alpha.value(),
        gamma,
        n_cmps: rows.len(),
        n_skipped: 0,
        n_counterexamples: 0,
        worst_gap: f64::INFINITY,
        worst_params: None,
        tolerance: COUNTEREXAMPLE_TOL,
    };
    for row in &rows {
        if row.skipped {
            summary.n_skipped += 1;
            continue;
        }
        if row.gap < -COUNTEREXAMPLE_TOL {
            summary.n_counterexamples += 1;
        }
        if row.gap < summary.worst_gap {
            summary.worst_gap = row.gap;
            summary.worst_params = Some(row.params);
        }
    }
    Ok(SearchReport { summary, rows })
}

pub fn write_search_csv<W: Write>(mut out: W, rows: &[CmpComparison]) -> std::io::Result<()> {
    writeln!(
        out,
        "p_s1a1,p_s1a2,p_s2a1,p_s2a2,mu_s1,g_shannon,g_renyi,gap,skipped"
    )?;
    let fmt = |x: f64| {
        if x.is_infinite() {
            "inf".to_string()
        } else {
            x.to_string()
        }
    };
    for r in rows {
        let p = r.params;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            p[0],
            p[1],
            p[2],
            p[3],
            p[4],
            fmt(r.g_shannon),
            fmt(r.g_renyi),
            r.gap,
            r.skipped
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_gap_rows() {
        let c = two_state_gap(0.9).unwrap();
        assert_eq!(c.row(0, 0), &[1.0, 0.0]);
        assert_eq!(c.row(0, 1), &[0.9, 0.1]);
        assert_eq!(c.row(1, 0), &[1.0, 0.0]);
        assert_eq!(c.row(1, 1), &[0.4, 0.6]);
        assert_eq!(c.init(), &[1.0, 0.0]);
    }

    #[test]
    fn five_state_moves() {
        let c = five_state(0.99).unwrap();
        assert_eq!(c.row(2, 0), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.row(2, 1), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(c.row(4, 1), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn four_rooms_shape() {
        let c = four_rooms(0.995).unwrap();
        assert_eq!(c.n_states(), 104);
        assert_eq!(c.n_actions(), 4);
        assert!(c.transition().iter().all(|p| *p == 0.0 || *p == 1.0));
        assert!(c.reachable_states().iter().all(|r| *r));
    }

    #[test]
    fn random_is_seeded() {
        let a = random_cmp(4, 3, 1.0, 0.9, 7).unwrap();
        let b = random_cmp(4, 3, 1.0, 0.9, 7).unwrap();
        let c = random_cmp(4, 3, 1.0, 0.9, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn grid_counts() {
        assert_eq!(enumerate_cmps(0.5, 0.9).unwrap().len(), 243);
        assert!(enumerate_cmps(0.3, 0.9).is_err());
    }

    #[test]
    fn unknown_name() {
        assert!(matches!(EnvSpec::named("maze"), Err(Error::UnknownEnv(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec: EnvSpec = serde_json::from_str(r#"{"name":"five-state"}"#).unwrap();
        assert_eq!(spec, EnvSpec::FiveState { gamma: 0.99 });
    }
}
