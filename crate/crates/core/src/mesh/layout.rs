use super::shapes::{Cloak, Obstacle, Observation, SourceDisc};
use super::Point;
use crate::error::{CloakError, Result};

/// Geometric description of a cloaking configuration on the square
/// `[-half_width, half_width]²`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutSpec {
    pub half_width: f64,
    /// Center used by the annular and ring-shaped regions.
    pub center: Point,
    pub obstacle: Obstacle,
    pub cloak: Cloak,
    pub observation: Observation,
    pub source: SourceDisc,
    /// Target element size of the background grid.
    pub h: f64,
}

impl Default for LayoutSpec {
    fn default() -> Self {
        LayoutSpec::annulus()
    }
}

fn invalid(msg: impl Into<String>) -> CloakError {
    CloakError::InvalidLayout(msg.into())
}

impl LayoutSpec {
    /// Circular obstacle surrounded by an annular control layer.
    pub fn annulus() -> Self {
        LayoutSpec {
            half_width: 1.0,
            center: [0.0, 0.0],
            obstacle: Obstacle::Circle { center: [0.0, 0.0], radius: 0.2 },
            cloak: Cloak::Annulus { r_inner: 0.25, r_outer: 0.35 },
            observation: Observation::Annulus { r_inner: 0.40, r_outer: 0.60 },
            source: SourceDisc { center: [0.7, 0.0], radius: 0.1 },
            h: 1.0 / 60.0,
        }
    }

    /// Eight small control discs on a ring around the obstacle.
    pub fn disc_ring() -> Self {
        LayoutSpec {
            cloak: Cloak::DiscRing { count: 8, ring_radius: 0.30, disc_radius: 0.06 },
            ..LayoutSpec::annulus()
        }
    }

    /// Arbitrary polygonal obstacle wrapped by a control band of the given
    /// thickness; everything else outside the obstacle is observed.
    pub fn polygon_offset(polygon: Obstacle, thickness: f64) -> Self {
        LayoutSpec {
            obstacle: polygon,
            cloak: Cloak::PolygonOffset { thickness },
            observation: Observation::ComplementOfCloak,
            ..LayoutSpec::annulus()
        }
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn with_obstacle(mut self, obstacle: Obstacle) -> Self {
        self.obstacle = obstacle;
        self
    }

    /// Checks the geometric compatibility of the regions. The error message
    /// names the violated constraint.
    pub fn validate(&self) -> Result<()> {
        let hw = self.half_width;
        if !(hw > 0.0 && hw.is_finite()) {
            return Err(invalid(format!("domain half-width must be positive, got {hw}")));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(invalid(format!("mesh size h must be positive, got {}", self.h)));
        }
        if self.h > hw {
            return Err(invalid(format!("mesh size h = {} exceeds the domain half-width", self.h)));
        }
        let inside = |p: Point, r: f64| p[0].abs() + r < hw && p[1].abs() + r < hw;

        match &self.obstacle {
            Obstacle::None => {}
            Obstacle::Circle { center, radius } => {
                if !(*radius > 0.0) {
                    return Err(invalid("obstacle radius must be positive"));
                }
                if !inside(*center, *radius) {
                    return Err(invalid("obstacle must lie strictly inside the domain"));
                }
            }
            Obstacle::Polygon(v) => {
                if !v.iter().all(|&p| inside(p, 0.0)) {
                    return Err(invalid("obstacle must lie strictly inside the domain"));
                }
            }
        }
        let obstacle_extent = self.obstacle.extent_from(self.center);

        match self.cloak {
            Cloak::Annulus { r_inner, r_outer } => {
                if !(r_inner > 0.0 && r_outer > r_inner) {
                    return Err(invalid("control annulus needs 0 < r_inner < r_outer"));
                }
                if obstacle_extent >= r_inner {
                    return Err(invalid("obstacle must lie inside the hole of the control annulus"));
                }
            }
            Cloak::DiscRing { count, ring_radius, disc_radius } => {
                if count == 0 || !(disc_radius > 0.0) || !(ring_radius > disc_radius) {
                    return Err(invalid(
                        "control disc ring needs count >= 1 and 0 < disc radius < ring radius",
                    ));
                }
                if obstacle_extent >= ring_radius - disc_radius {
                    return Err(invalid("obstacle must lie inside the hole of the control disc ring"));
                }
            }
            Cloak::PolygonOffset { thickness } => {
                if !(thickness > 0.0) {
                    return Err(invalid("control band thickness must be positive"));
                }
                if self.obstacle.is_empty() {
                    return Err(invalid("an offset control band needs an obstacle"));
                }
            }
        }
        let cloak_extent = self.cloak.outer_extent(self.center, &self.obstacle);
        if !inside(self.center, cloak_extent) {
            return Err(invalid("control region must lie strictly inside the domain"));
        }

        if let Observation::Annulus { r_inner, r_outer } = self.observation {
            if !(r_inner > 0.0 && r_outer > r_inner) {
                return Err(invalid("observation annulus needs 0 < r_inner < r_outer"));
            }
            let (c_lo, c_hi) = match self.cloak {
                Cloak::Annulus { r_inner, r_outer } => (r_inner, r_outer),
                Cloak::DiscRing { ring_radius, disc_radius, .. } => {
                    (ring_radius - disc_radius, ring_radius + disc_radius)
                }
                Cloak::PolygonOffset { .. } => (0.0, cloak_extent),
            };
            if !(r_inner > c_hi || r_outer < c_lo) {
                return Err(invalid("control and observation regions overlap"));
            }
            if obstacle_extent >= r_inner {
                return Err(invalid("observation region overlaps the obstacle"));
            }
            if !inside(self.center, r_outer) {
                return Err(invalid("observation region must lie strictly inside the domain"));
            }
        }

        let s = self.source;
        if !(s.radius > 0.0) {
            return Err(invalid("source radius must be positive"));
        }
        if !inside(s.center, s.radius) {
            return Err(invalid("source disc must lie strictly inside the domain"));
        }
        let d = (s.center[0] - self.center[0]).hypot(s.center[1] - self.center[1]);
        if d - s.radius <= cloak_extent.max(obstacle_extent) {
            return Err(invalid("source disc must be disjoint from the control region and the obstacle"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        LayoutSpec::annulus().validate().unwrap();
        LayoutSpec::disc_ring().validate().unwrap();
        LayoutSpec::annulus().with_obstacle(Obstacle::None).validate().unwrap();
    }

    #[test]
    fn overlapping_regions_are_named() {
        let mut spec = LayoutSpec::annulus();
        spec.observation = Observation::Annulus { r_inner: 0.3, r_outer: 0.6 };
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("overlap"), "{msg}");

        let mut spec = LayoutSpec::annulus();
        spec.obstacle = Obstacle::Circle { center: [0.0, 0.0], radius: 0.3 };
        let msg = spec.validate().unwrap_err().to_string();
        assert!(msg.contains("hole"), "{msg}");

        let mut spec = LayoutSpec::annulus();
        spec.source.center = [0.3, 0.0];
        assert!(spec.validate().is_err());
    }
}
