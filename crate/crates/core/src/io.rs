//! File formats shared by the CLI and the FFI layer: model JSON, occupancy
//! CSV and policy JSON.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Result};
use crate::mdp::{
    DiscountedCmp, EpisodicMdp, NonStationaryPolicy, OccupancyKind, OccupancyMeasure, TabularPolicy,
};
use crate::solver::SolvedPolicy;

/// A model loaded from disk; `gamma` selects the discounted form and
/// `horizon` the episodic one.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvModel {
    Discounted(DiscountedCmp),
    Episodic(EpisodicMdp),
}

impl EnvModel {
    pub fn n_states(&self) -> usize {
        match self {
            EnvModel::Discounted(c) => c.n_states(),
            EnvModel::Episodic(m) => m.n_states(),
        }
    }

    pub fn n_actions(&self) -> usize {
        match self {
            EnvModel::Discounted(c) => c.n_actions(),
            EnvModel::Episodic(m) => m.n_actions(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    n_states: usize,
    n_actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<usize>,
    /// `[s][a][s']`, or `[h][s][a][s']` for step-dependent episodic models.
    transition: Value,
    init: Vec<f64>,
}

fn flatten3(t: &[Vec<Vec<f64>>], n: usize, a_n: usize) -> Result<Vec<f64>> {
    if t.len() != n
        || t.iter()
            .any(|r| r.len() != a_n || r.iter().any(|x| x.len() != n))
    {
        return Err(invalid(
            "transition tensor does not match n_states/n_actions",
        ));
    }
    Ok(t.iter().flatten().flatten().copied().collect())
}

fn nest3(flat: &[f64], n: usize, a_n: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n)
        .map(|s| {
            (0..a_n)
                .map(|a| flat[(s * a_n + a) * n..(s * a_n + a + 1) * n].to_vec())
                .collect()
        })
        .collect()
}

pub fn model_from_json(text: &str) -> Result<EnvModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    let (n, a_n) = (file.n_states, file.n_actions);
    match (file.gamma, file.horizon) {
        (Some(gamma), None) => {
            let t: Vec<Vec<Vec<f64>>> = serde_json::from_value(file.transition)?;
            let flat = flatten3(&t, n, a_n)?;
            Ok(EnvModel::Discounted(DiscountedCmp::new(
                n, a_n, flat, file.init, gamma,
            )?))
        }
        (None, Some(horizon)) => {
            let layers = if let Ok(t) =
                serde_json::from_value::<Vec<Vec<Vec<Vec<f64>>>>>(file.transition.clone())
            {
                if t.len() != horizon {
                    return Err(invalid("episodic transition needs one layer per step"));
                }
                t.iter()
                    .map(|l| flatten3(l, n, a_n))
                    .collect::<Result<Vec<_>>>()?
            } else {
                let t: Vec<Vec<Vec<f64>>> = serde_json::from_value(file.transition)?;
                vec![flatten3(&t, n, a_n)?; horizon]
            };
            Ok(EnvModel::Episodic(EpisodicMdp::new(
                n, a_n, horizon, layers, file.init,
            )?))
        }
        _ => Err(invalid("model needs exactly one of gamma or horizon")),
    }
}

pub fn model_to_json(model: &EnvModel) -> Result<String> {
    let file = match model {
        EnvModel::Discounted(c) => ModelFile {
            n_states: c.n_states(),
            n_actions: c.n_actions(),
            gamma: Some(c.gamma()),
            horizon: None,
            transition: serde_json::to_value(nest3(c.transition(), c.n_states(), c.n_actions()))?,
            init: c.init().to_vec(),
        },
        EnvModel::Episodic(m) => {
            let layers: Vec<_> = (0..m.horizon())
                .map(|h| nest3(m.layer(h), m.n_states(), m.n_actions()))
                .collect();
            ModelFile {
                n_states: m.n_states(),
                n_actions: m.n_actions(),
                gamma: None,
                horizon: Some(m.horizon()),
                transition: serde_json::to_value(layers)?,
                init: m.init().to_vec(),
            }
        }
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

/// CSV `s,a,d`; state occupancies leave the action column empty.
pub fn write_occupancy_csv<W: Write>(mut out: W, d: &OccupancyMeasure) -> std::io::Result<()> {
    writeln!(out, "s,a,d")?;
    match d.kind() {
        OccupancyKind::StateAction => {
            for s in 0..d.n_states() {
                for a in 0..d.n_actions() {
                    writeln!(out, "{s},{a},{}", d.get(s, a))?;
                }
            }
        }
        OccupancyKind::State => {
            for (s, w) in d.weights().iter().enumerate() {
                writeln!(out, "{s},,{w}")?;
            }
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum PolicyFile {
    Stationary { probs: Vec<Vec<f64>> },
    NonStationary { probs: Vec<Vec<Vec<f64>>> },
}

fn table(rows: &[Vec<f64>]) -> Result<TabularPolicy> {
    let a_n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != a_n) {
        return Err(invalid("ragged policy table"));
    }
    TabularPolicy::from_probs(rows.len(), a_n, rows.concat())
}

/// Reads the `{"kind": ..., "probs": ...}` document written by
/// `serde_json::to_string(&SolvedPolicy)`.
pub fn policy_from_json(text: &str) -> Result<SolvedPolicy> {
    match serde_json::from_str::<PolicyFile>(text)? {
        PolicyFile::Stationary { probs } => Ok(SolvedPolicy::Stationary(table(&probs)?)),
        PolicyFile::NonStationary { probs } => {
            let steps = probs.iter().map(|p| table(p)).collect::<Result<Vec<_>>>()?;
            Ok(SolvedPolicy::NonStationary(NonStationaryPolicy::new(
                steps,
            )?))
        }
    }
}

pub fn policy_to_json(policy: &SolvedPolicy) -> Result<String> {
    Ok(serde_json::to_string_pretty(policy)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{five_state, random_episodic};
    use crate::mdp::occupancy;

    #[test]
    fn discounted_round_trip() {
        let m = EnvModel::Discounted(five_state(0.9).unwrap());
        let back = model_from_json(&model_to_json(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn episodic_round_trip_and_shared_layer() {
        let m = EnvModel::Episodic(random_episodic(3, 2, 4, 1.0, 7).unwrap());
        assert_eq!(model_from_json(&model_to_json(&m).unwrap()).unwrap(), m);
        let text =
            r#"{"n_states":1,"n_actions":1,"horizon":3,"transition":[[[1.0]]],"init":[1.0]}"#;
        let EnvModel::Episodic(e) = model_from_json(text).unwrap() else {
            panic!("expected episodic")
        };
        assert_eq!(e.horizon(), 3);
    }

    #[test]
    fn rejects_both_or_neither() {
        let both = r#"{"n_states":1,"n_actions":1,"gamma":0.5,"horizon":2,"transition":[[[1.0]]],"init":[1.0]}"#;
        let neither = r#"{"n_states":1,"n_actions":1,"transition":[[[1.0]]],"init":[1.0]}"#;
        assert!(model_from_json(both).is_err());
        assert!(model_from_json(neither).is_err());
        let bad_row =
            r#"{"n_states":1,"n_actions":1,"gamma":0.5,"transition":[[[0.7]]],"init":[1.0]}"#;
        assert!(model_from_json(bad_row).is_err());
    }

    #[test]
    fn occupancy_csv_rows() {
        let cmp = five_state(0.9).unwrap();
        let d = occupancy(&cmp, &TabularPolicy::uniform(5, 2), None).unwrap();
        let mut buf = Vec::new();
        write_occupancy_csv(&mut buf, &d).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("s,a,d\n0,0,"));
    }

    #[test]
    fn policy_round_trip() {
        let p = SolvedPolicy::Stationary(
            TabularPolicy::from_probs(2, 2, vec![0.25, 0.75, 1.0, 0.0]).unwrap(),
        );
        assert_eq!(policy_from_json(&policy_to_json(&p).unwrap()).unwrap(), p);
        let ns = NonStationaryPolicy::uniform(3, 2, 2);
        let text = policy_to_json(&SolvedPolicy::NonStationary(ns.clone())).unwrap();
        let back = policy_from_json(&text).unwrap();
        let back = back.non_stationary().unwrap();
        assert_eq!(back.horizon(), 3);
        assert_eq!(back.step(2).probs(), ns.step(2).probs());
    }
}
