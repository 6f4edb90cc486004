use std::f64::consts::PI;
use std::path::Path;

use super::{signed_area, Point};
use crate::error::{CloakError, Result};

/// The region removed from the domain and held at a fixed temperature.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    /// No hole: the control mesh coincides with the unperturbed mesh.
    None,
    Circle { center: Point, radius: f64 },
    /// Simple polygon, stored counter-clockwise.
    Polygon(Vec<Point>),
}

/// Support of the distributed control.
#[derive(Debug, Clone, PartialEq)]
pub enum Cloak {
    Annulus { r_inner: f64, r_outer: f64 },
    DiscRing { count: usize, ring_radius: f64, disc_radius: f64 },
    /// Band `0 < d ≤ thickness` around the obstacle, `d` the signed distance.
    PolygonOffset { thickness: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Annulus { r_inner: f64, r_outer: f64 },
    /// Everything outside the obstacle that is not control.
    ComplementOfCloak,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceDisc {
    pub center: Point,
    pub radius: f64,
}

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = signed_area(a, b, c);
    let o2 = signed_area(a, b, d);
    let o3 = signed_area(c, d, a);
    let o4 = signed_area(c, d, b);
    o1 * o2 < 0.0 && o3 * o4 < 0.0
}

impl Obstacle {
    pub fn polygon(vertices: Vec<Point>) -> Result<Self> {
        let mut v = vertices;
        if v.len() > 1 && v.first() == v.last() {
            v.pop();
        }
        if v.len() < 3 {
            return Err(CloakError::InvalidLayout(format!(
                "obstacle polygon needs at least 3 vertices, got {}",
                v.len()
            )));
        }
        let n = v.len();
        for i in 0..n {
            for j in i + 1..n {
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                if segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]) {
                    return Err(CloakError::InvalidLayout(format!(
                        "obstacle polygon edges {i} and {j} intersect"
                    )));
                }
            }
        }
        let twice_area: f64 = (0..n)
            .map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                a[0] * b[1] - b[0] * a[1]
            })
            .sum();
        if twice_area == 0.0 {
            return Err(CloakError::InvalidLayout("obstacle polygon has zero area".into()));
        }
        if twice_area < 0.0 {
            v.reverse();
        }
        Ok(Obstacle::Polygon(v))
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Obstacle::None)
    }

    /// Signed distance to the obstacle boundary, negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        match self {
            Obstacle::None => f64::INFINITY,
            Obstacle::Circle { center, radius } => dist(p, *center) - radius,
            Obstacle::Polygon(v) => {
                let n = v.len();
                let d = (0..n)
                    .map(|i| segment_distance(p, v[i], v[(i + 1) % n]))
                    .fold(f64::INFINITY, f64::min);
                if point_in_polygon(p, v) {
                    -d
                } else {
                    d
                }
            }
        }
    }

    /// Largest distance from `from` to a point of the obstacle.
    pub fn extent_from(&self, from: Point) -> f64 {
        match self {
            Obstacle::None => 0.0,
            Obstacle::Circle { center, radius } => dist(*center, from) + radius,
            Obstacle::Polygon(v) => v.iter().map(|&q| dist(q, from)).fold(0.0, f64::max),
        }
    }

    /// Exact area of the geometric obstacle.
    pub fn area(&self) -> f64 {
        match self {
            Obstacle::None => 0.0,
            Obstacle::Circle { radius, .. } => PI * radius * radius,
            Obstacle::Polygon(v) => {
                let n = v.len();
                0.5 * (0..n)
                    .map(|i| v[i][0] * v[(i + 1) % n][1] - v[(i + 1) % n][0] * v[i][1])
                    .sum::<f64>()
            }
        }
    }

    pub fn perimeter(&self) -> f64 {
        match self {
            Obstacle::None => 0.0,
            Obstacle::Circle { radius, .. } => 2.0 * PI * radius,
            Obstacle::Polygon(v) => (0..v.len()).map(|i| dist(v[i], v[(i + 1) % v.len()])).sum(),
        }
    }
}

impl Cloak {
    pub fn disc_centers(&self, center: Point) -> Vec<Point> {
        match *self {
            Cloak::DiscRing { count, ring_radius, .. } => (0..count)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / count as f64;
                    [center[0] + ring_radius * a.cos(), center[1] + ring_radius * a.sin()]
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn contains(&self, p: Point, center: Point, obstacle: &Obstacle) -> bool {
        match *self {
            Cloak::Annulus { r_inner, r_outer } => {
                let r = dist(p, center);
                r >= r_inner && r <= r_outer
            }
            Cloak::DiscRing { disc_radius, .. } => self
                .disc_centers(center)
                .iter()
                .any(|&c| dist(p, c) <= disc_radius),
            Cloak::PolygonOffset { thickness } => {
                let d = obstacle.signed_distance(p);
                d > 0.0 && d <= thickness
            }
        }
    }

    /// Radius (from `center`) of the smallest disc containing the cloak.
    pub fn outer_extent(&self, center: Point, obstacle: &Obstacle) -> f64 {
        match *self {
            Cloak::Annulus { r_outer, .. } => r_outer,
            Cloak::DiscRing { ring_radius, disc_radius, .. } => ring_radius + disc_radius,
            Cloak::PolygonOffset { thickness } => obstacle.extent_from(center) + thickness,
        }
    }
}

impl Observation {
    pub fn contains(&self, p: Point, center: Point, obstacle: &Obstacle) -> bool {
        match *self {
            Observation::Annulus { r_inner, r_outer } => {
                let r = dist(p, center);
                r >= r_inner && r <= r_outer
            }
            Observation::ComplementOfCloak => obstacle.signed_distance(p) > 0.0,
        }
    }
}

impl SourceDisc {
    pub fn contains(&self, p: Point) -> bool {
        dist(p, self.center) <= self.radius
    }
}

/// Reads a polygon file: one `x y` vertex per line, `#` comments allowed.
pub fn load_polygon(path: impl AsRef<Path>) -> Result<Obstacle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| CloakError::io(path, e))?;
    let mut vertices = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| CloakError::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(format!("expected `x y`, found {} fields", fields.len())));
        }
        let mut xy = [0.0; 2];
        for (slot, f) in xy.iter_mut().zip(&fields) {
            *slot = f
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(format!("invalid coordinate `{f}`")))?;
        }
        vertices.push(xy);
    }
    Obstacle::polygon(vertices)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polygon_signed_distance_and_orientation() {
        let sq = Obstacle::polygon(vec![[-0.1, -0.1], [-0.1, 0.1], [0.1, 0.1], [0.1, -0.1]]).unwrap();
        assert!((sq.area() - 0.04).abs() < 1e-15);
        assert!((sq.signed_distance([0.0, 0.0]) + 0.1).abs() < 1e-15);
        assert!((sq.signed_distance([0.3, 0.0]) - 0.2).abs() < 1e-15);
        assert!((sq.perimeter() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn self_intersecting_polygon_is_rejected() {
        let bowtie = vec![[0.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.0, 1.0]];
        assert!(Obstacle::polygon(bowtie).is_err());
    }

    #[test]
    fn disc_ring_has_requested_centers() {
        let ring = Cloak::DiscRing { count: 8, ring_radius: 0.3, disc_radius: 0.06 };
        let c = ring.disc_centers([0.0, 0.0]);
        assert_eq!(c.len(), 8);
        assert!(ring.contains([0.3, 0.0], [0.0, 0.0], &Obstacle::None));
        assert!(!ring.contains([0.0, 0.0], [0.0, 0.0], &Obstacle::None));
    }
}
