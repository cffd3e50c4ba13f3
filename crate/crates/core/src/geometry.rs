//! Bounded domains, their closures and the nearest-point projection that
//! realizes the reflection numerically.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance (in domain length units) for "on the boundary" tests.
pub const TOL_BOUNDARY: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point has dimension {got}, domain has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
    #[error("point is not on the boundary (distance {0:e})")]
    NotOnBoundary(f64),
    #[error("point lies outside the closed domain")]
    OutsideDomain,
}

/// The spatial domain. `HalfLine` is `[0, ∞)` and only exists as an oracle
/// geometry for local-time checks; it is not bounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Interval { a: f64, b: f64 },
    /// `[a, b] × [c, d]`.
    Rectangle { a: f64, b: f64, c: f64, d: f64 },
    Disk { center: [f64; 2], radius: f64 },
    HalfLine,
}

/// Outcome of projecting a point onto the closed domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Euclidean distance between the input point and its projection.
    pub push: f64,
    /// Coordinate axis of the last violated face (rectangle only).
    pub last_axis: Option<usize>,
}

impl Domain {
    pub fn interval(a: f64, b: f64) -> Result<Self, GeometryError> {
        let d = Domain::Interval { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn rectangle(a: f64, b: f64, c: f64, d: f64) -> Result<Self, GeometryError> {
        let r = Domain::Rectangle { a, b, c, d };
        r.validate()?;
        Ok(r)
    }

    pub fn disk(center: [f64; 2], radius: f64) -> Result<Self, GeometryError> {
        let d = Domain::Disk { center, radius };
        d.validate()?;
        Ok(d)
    }

    pub fn unit_interval() -> Self {
        Domain::Interval { a: 0.0, b: 1.0 }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match *self {
            Domain::Interval { a, b } => {
                if !finite(&[a, b]) || a >= b {
                    return Err(GeometryError::InvalidDomain(format!(
                        "interval needs finite a < b, got [{a}, {b}]"
                    )));
                }
            }
            Domain::Rectangle { a, b, c, d } => {
                if !finite(&[a, b, c, d]) || a >= b || c >= d {
                    return Err(GeometryError::InvalidDomain(format!(
                        "rectangle needs a < b and c < d, got [{a}, {b}] x [{c}, {d}]"
                    )));
                }
            }
            Domain::Disk { center, radius } => {
                if !finite(&[center[0], center[1], radius]) || radius <= 0.0 {
                    return Err(GeometryError::InvalidDomain(format!(
                        "disk radius must be positive, got {radius}"
                    )));
                }
            }
            Domain::HalfLine => {}
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        match self {
            Domain::Interval { .. } | Domain::HalfLine => 1,
            Domain::Rectangle { .. } | Domain::Disk { .. } => 2,
        }
    }

    pub fn is_bounded(&self) -> bool {
        !matches!(self, Domain::HalfLine)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Domain::Interval { .. } => "interval",
            Domain::Rectangle { .. } => "rectangle",
            Domain::Disk { .. } => "disk",
            Domain::HalfLine => "half_line",
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<(), GeometryError> {
        if p.len() != self.dimension() {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dimension(),
                got: p.len(),
            });
        }
        Ok(())
    }

    /// True iff `p` lies in the closed domain.
    pub fn contains(&self, p: &[f64]) -> Result<bool, GeometryError> {
        self.check_dim(p)?;
        Ok(match *self {
            Domain::Interval { a, b } => p[0] >= a && p[0] <= b,
            Domain::Rectangle { a, b, c, d } => p[0] >= a && p[0] <= b && p[1] >= c && p[1] <= d,
            Domain::Disk { center, radius } => {
                (p[0] - center[0]).hypot(p[1] - center[1]) <= radius
            }
            Domain::HalfLine => p[0] >= 0.0,
        })
    }

    /// Nearest point of the closed domain together with the push distance.
    pub fn project_to_closure(&self, p: &[f64]) -> Result<(Vec<f64>, f64), GeometryError> {
        self.check_dim(p)?;
        let mut q = p.to_vec();
        let proj = self.project_in_place(&mut q);
        Ok((q, proj.push))
    }

    /// Projects `p` onto the closed domain in place. `p` must have the
    /// domain's dimension.
    #[inline]
    pub fn project_in_place(&self, p: &mut [f64]) -> Projection {
        match *self {
            Domain::Interval { a, b } => {
                let x = p[0];
                let y = x.clamp(a, b);
                p[0] = y;
                Projection { push: (x - y).abs(), last_axis: (x != y).then_some(0) }
            }
            Domain::HalfLine => {
                let x = p[0];
                if x < 0.0 {
                    p[0] = 0.0;
                    Projection { push: -x, last_axis: Some(0) }
                } else {
                    Projection { push: 0.0, last_axis: None }
                }
            }
            Domain::Rectangle { a, b, c, d } => {
                let (x, y) = (p[0], p[1]);
                let (qx, qy) = (x.clamp(a, b), y.clamp(c, d));
                p[0] = qx;
                p[1] = qy;
                let last_axis = if qy != y {
                    Some(1)
                } else if qx != x {
                    Some(0)
                } else {
                    None
                };
                Projection { push: (x - qx).hypot(y - qy), last_axis }
            }
            Domain::Disk { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let r = dx.hypot(dy);
                if r <= radius {
                    return Projection { push: 0.0, last_axis: None };
                }
                // shrink by ulps until rounding lands the point inside
                let mut s = radius / r;
                loop {
                    let (qx, qy) = (center[0] + dx * s, center[1] + dy * s);
                    if (qx - center[0]).hypot(qy - center[1]) <= radius {
                        p[0] = qx;
                        p[1] = qy;
                        break;
                    }
                    s *= 1.0 - f64::EPSILON;
                }
                Projection { push: r - radius, last_axis: None }
            }
        }
    }

    /// Outward unit normal at a boundary point. At rectangle corners the
    /// normal of the y-face is returned, matching the clamping order of
    /// [`Domain::project_in_place`]; use [`Domain::outward_normal_on_axis`]
    /// to pick a face explicitly.
    pub fn outward_normal(&self, q: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.outward_normal_on_axis(q, None)
    }

    pub fn outward_normal_on_axis(
        &self,
        q: &[f64],
        axis_hint: Option<usize>,
    ) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(q)?;
        match *self {
            Domain::Interval { a, b } => {
                let (da, db) = ((q[0] - a).abs(), (q[0] - b).abs());
                if da <= TOL_BOUNDARY && da <= db {
                    Ok(vec![-1.0])
                } else if db <= TOL_BOUNDARY {
                    Ok(vec![1.0])
                } else {
                    Err(GeometryError::NotOnBoundary(da.min(db)))
                }
            }
            Domain::HalfLine => {
                if q[0].abs() <= TOL_BOUNDARY {
                    Ok(vec![-1.0])
                } else {
                    Err(GeometryError::NotOnBoundary(q[0].abs()))
                }
            }
            Domain::Rectangle { a, b, c, d } => {
                if !self.contains_with_tol(q) {
                    return Err(GeometryError::OutsideDomain);
                }
                let faces = [
                    ((q[0] - a).abs(), 0usize, -1.0),
                    ((q[0] - b).abs(), 0, 1.0),
                    ((q[1] - c).abs(), 1, -1.0),
                    ((q[1] - d).abs(), 1, 1.0),
                ];
                let on: Vec<_> = faces.iter().filter(|f| f.0 <= TOL_BOUNDARY).collect();
                let pick = match axis_hint {
                    Some(ax) => on.iter().rev().find(|f| f.1 == ax).or(on.last()),
                    None => on.last(),
                };
                match pick {
                    Some(&&(_, axis, sign)) => {
                        let mut n = vec![0.0; 2];
                        n[axis] = sign;
                        Ok(n)
                    }
                    None => {
                        let dist = faces.iter().map(|f| f.0).fold(f64::INFINITY, f64::min);
                        Err(GeometryError::NotOnBoundary(dist))
                    }
                }
            }
            Domain::Disk { center, radius } => {
                let (dx, dy) = (q[0] - center[0], q[1] - center[1]);
                let r = dx.hypot(dy);
                if (r - radius).abs() > TOL_BOUNDARY {
                    return Err(GeometryError::NotOnBoundary((r - radius).abs()));
                }
                Ok(vec![dx / r, dy / r])
            }
        }
    }

    fn contains_with_tol(&self, p: &[f64]) -> bool {
        match *self {
            Domain::Rectangle { a, b, c, d } => {
                p[0] >= a - TOL_BOUNDARY
                    && p[0] <= b + TOL_BOUNDARY
                    && p[1] >= c - TOL_BOUNDARY
                    && p[1] <= d + TOL_BOUNDARY
            }
            _ => self.contains(p).unwrap_or(false),
        }
    }

    /// Distance from a point of the closed domain to the boundary.
    pub fn boundary_distance(&self, p: &[f64]) -> Result<f64, GeometryError> {
        if !self.contains(p)? {
            return Err(GeometryError::OutsideDomain);
        }
        Ok(self.boundary_distance_unchecked(p))
    }

    #[inline]
    pub(crate) fn boundary_distance_unchecked(&self, p: &[f64]) -> f64 {
        match *self {
            Domain::Interval { a, b } => (p[0] - a).min(b - p[0]),
            Domain::HalfLine => p[0],
            Domain::Rectangle { a, b, c, d } => {
                (p[0] - a).min(b - p[0]).min(p[1] - c).min(d - p[1])
            }
            Domain::Disk { center, radius } => {
                radius - (p[0] - center[0]).hypot(p[1] - center[1])
            }
        }
    }

    /// True when `p` is within [`TOL_BOUNDARY`] of the boundary.
    #[inline]
    pub fn on_boundary(&self, p: &[f64]) -> bool {
        self.boundary_distance_unchecked(p).abs() <= TOL_BOUNDARY
    }

    /// Nearest boundary point to `p`. For the disk centre, where every
    /// boundary point is equally near, the point at angle 0 is returned.
    pub fn nearest_boundary_point(&self, p: &[f64]) -> Result<Vec<f64>, GeometryError> {
        self.check_dim(p)?;
        Ok(match *self {
            Domain::Interval { a, b } => {
                if (p[0] - a).abs() <= (p[0] - b).abs() { vec![a] } else { vec![b] }
            }
            Domain::HalfLine => vec![0.0],
            Domain::Rectangle { a, b, c, d } => {
                let (x, y) = (p[0].clamp(a, b), p[1].clamp(c, d));
                let faces = [((x - a).abs(), [a, y]), ((b - x).abs(), [b, y]), ((y - c).abs(), [x, c]), ((d - y).abs(), [x, d])];
                let best = faces.iter().fold(faces[0], |m, f| if f.0 < m.0 { *f } else { m });
                best.1.to_vec()
            }
            Domain::Disk { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                let r = dx.hypot(dy);
                if r == 0.0 {
                    vec![center[0] + radius, center[1]]
                } else {
                    vec![center[0] + dx * radius / r, center[1] + dy * radius / r]
                }
            }
        })
    }
}
