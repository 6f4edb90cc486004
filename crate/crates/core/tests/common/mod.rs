#![allow(dead_code)]

use thermocloak::mesh::{Cloak, LayoutSpec, Observation, SourceDisc};
use thermocloak::Problem;

/// Coarse annular layout (a few hundred nodes) for fast end-to-end tests.
pub fn coarse_layout(h: f64) -> LayoutSpec {
    LayoutSpec {
        cloak: Cloak::Annulus { r_inner: 0.25, r_outer: 0.45 },
        observation: Observation::Annulus { r_inner: 0.5, r_outer: 0.75 },
        source: SourceDisc { center: [0.85, 0.0], radius: 0.12 },
        h,
        ..LayoutSpec::annulus()
    }
}

pub fn coarse_problem() -> Problem {
    Problem::from_layout(&coarse_layout(0.1)).unwrap()
}

pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}
