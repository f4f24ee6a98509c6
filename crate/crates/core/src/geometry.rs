//! Covering and packing radii.

use rayon::prelude::*;

use crate::design::{full_factorial, squared_distance, Design};
use crate::error::{Error, Result};
use crate::testbed::sobol_points;

/// Half the smallest distance between two design points.
pub fn packing_radius(design: &Design) -> Result<f64> {
    let s = design.len();
    if s < 2 {
        return Err(Error::Parameter(format!("packing radius needs at least two points, got {s}")));
    }
    let min = (0..s)
        .into_par_iter()
        .map(|i| {
            let a = design.point(i);
            (i + 1..s).map(|j| squared_distance(a, design.point(j))).fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    Ok(0.5 * min.sqrt())
}

fn nearest_squared(design: &Design, x: &[f64]) -> f64 {
    let mut best = f64::INFINITY;
    for p in design.iter() {
        let mut s = 0.0;
        for (a, b) in p.iter().zip(x) {
            s += (a - b) * (a - b);
            if s >= best {
                break;
            }
        }
        if s < best {
            best = s;
        }
    }
    best
}

/// Largest distance from a probe point to its nearest design point; a
/// lower bound on the covering radius.
pub fn covering_radius_approx(design: &Design, probes: &Design) -> Result<f64> {
    if design.is_empty() {
        return Err(Error::Parameter("covering radius of an empty design".into()));
    }
    if probes.is_empty() {
        return Err(Error::Parameter("empty probe set".into()));
    }
    probes.expect_dim(design.dim())?;
    let max = (0..probes.len())
        .into_par_iter()
        .map(|i| nearest_squared(design, probes.point(i)))
        .reduce(|| 0.0, f64::max);
    Ok(max.sqrt())
}

/// `count` scrambled Sobol' points followed by the `3^d` factorial grid.
pub fn default_probes(dim: usize, count: usize, seed: u64) -> Result<Design> {
    let sobol = sobol_points(dim, count, seed, true)?;
    sobol.concat(&full_factorial(dim, 3))
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct SpaceFillingReport {
    pub size: usize,
    pub covering: f64,
    pub packing: f64,
    /// `s^{1/d}` times the radius for a design of size `s`.
    pub covering_renormalized: f64,
    pub packing_renormalized: f64,
    pub probes: usize,
}

pub fn space_filling_report(design: &Design, probes: &Design) -> Result<SpaceFillingReport> {
    let covering = covering_radius_approx(design, probes)?;
    let packing = packing_radius(design)?;
    let scale = (design.len() as f64).powf(1.0 / design.dim() as f64);
    Ok(SpaceFillingReport {
        size: design.len(),
        covering,
        packing,
        covering_renormalized: scale * covering,
        packing_renormalized: scale * packing,
        probes: probes.len(),
    })
}
