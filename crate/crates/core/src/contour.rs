//! Objective values on a regular lattice of the 3-cell simplex.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupon::coupon_value;
use crate::entropy::{renyi_entropy, RenyiOrder};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ContourObjective {
    /// Coupon-collector objective.
    G,
    Renyi(RenyiOrder),
}

impl ContourObjective {
    fn label(&self) -> &'static str {
        match self {
            ContourObjective::G => "G",
            ContourObjective::Renyi(_) => "H",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourPoint {
    pub d: [f64; 3],
    pub value: f64,
}

/// Every point with coordinates in `{0, 1/k, ..., 1}`, ordered by the first
/// then second coordinate's numerator. `G` is infinite on the boundary.
pub fn contour_grid(resolution: usize, objective: ContourObjective) -> Result<Vec<ContourPoint>> {
    if resolution < 2 {
        return Err(invalid("contour resolution must be at least 2"));
    }
    let k = resolution;
    let lattice: Vec<(usize, usize)> = (0..=k)
        .flat_map(|i| (0..=k - i).map(move |j| (i, j)))
        .collect();
    Ok(lattice
        .par_iter()
        .map(|&(i, j)| {
            let l = k - i - j;
            let d = [
                i as f64 / k as f64,
                j as f64 / k as f64,
                l as f64 / k as f64,
            ];
            let value = match objective {
                ContourObjective::G => coupon_value(&d),
                ContourObjective::Renyi(a) => renyi_entropy(&d, a),
            };
            ContourPoint { d, value }
        })
        .collect())
}

/// CSV with header `d1,d2,d3,value,objective,alpha`; infinite values are
/// written as `inf`.
pub fn write_contour_csv<W: Write>(
    mut out: W,
    points: &[ContourPoint],
    objective: ContourObjective,
) -> std::io::Result<()> {
    writeln!(out, "d1,d2,d3,value,objective,alpha")?;
    let alpha = match objective {
        ContourObjective::G => String::new(),
        ContourObjective::Renyi(a) => a.value().to_string(),
    };
    for p in points {
        let value = if p.value.is_infinite() {
            "inf".to_string()
        } else {
            p.value.to_string()
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.d[0],
            p.d[1],
            p.d[2],
            value,
            objective.label(),
            alpha
        )?;
    }
    Ok(())
}
