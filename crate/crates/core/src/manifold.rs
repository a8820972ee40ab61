//! Chart coordinates on (S^2)^m x R^n.
//!
//! Every sphere factor carries an azimuth angle in [-pi, pi) and a polar
//! angle in [-pi/2, pi/2]; the equator of a factor is {polar = 0}. Line
//! factors are plain real coordinates. Only azimuths wrap. Iterative code
//! (Newton, integration) works with unwrapped angles and normalizes at API
//! boundaries so that derivative estimates stay smooth across the seam.

use crate::error::{Error, Result};
use nalgebra::DVector;
use std::f64::consts::{PI, TAU};

/// Points whose polar gap to a pole is below this raise a near-pole warning:
/// the unperturbed equations switch branch on the polar lines.
pub const POLE_WARN_MARGIN: f64 = 1e-3;

/// Role of a single chart coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordKind {
    /// Wrapping angle in [-pi, pi).
    Azimuth,
    /// Polar angle in [-pi/2, pi/2]; does not wrap.
    Polar,
    /// Plain real line coordinate.
    Line,
}

/// Wraps an azimuth into [-pi, pi). The left endpoint is fixed, the right
/// endpoint maps to the left one.
pub fn wrap_angle(x: f64) -> f64 {
    x - TAU * ((x + PI) / TAU).floor()
}

/// Reduces an angle into [-pi, pi] symmetrically. Used before trigonometric
/// evaluation so that exact period multiples give exact results.
pub fn reduce_angle(x: f64) -> f64 {
    x - TAU * (x / TAU).round()
}

/// Shortest arc length between two azimuths.
pub fn azimuth_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % TAU;
    d.min(TAU - d)
}

/// Factor structure of (S^2)^m x R^n together with the coordinate layout.
///
/// The canonical layout from [`ManifoldSpec::product`] is
/// (theta_1, phi_1, ..., theta_m, phi_m, x_1, ..., x_n). Scenario
/// constructors may order factors differently (for example R^2 x S^2 puts
/// the plane first); the layout vector is authoritative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifoldSpec {
    m: usize,
    n: usize,
    layout: Vec<CoordKind>,
    planar_pairs: Vec<(usize, usize)>,
}

impl ManifoldSpec {
    /// Canonical product manifold with m sphere factors followed by n line
    /// factors.
    pub fn product(m: usize, n: usize) -> Result<Self> {
        let mut layout = Vec::with_capacity(2 * m + n);
        for _ in 0..m {
            layout.push(CoordKind::Azimuth);
            layout.push(CoordKind::Polar);
        }
        layout.extend(std::iter::repeat(CoordKind::Line).take(n));
        Self::from_layout(layout, Vec::new())
    }

    /// Builds a spec from an explicit coordinate layout. `planar_pairs`
    /// designates pairs of line coordinates that form a plane (their joint
    /// Euclidean norm is what region bounds apply to).
    pub fn from_layout(layout: Vec<CoordKind>, planar_pairs: Vec<(usize, usize)>) -> Result<Self> {
        let azimuths = layout.iter().filter(|k| **k == CoordKind::Azimuth).count();
        let polars = layout.iter().filter(|k| **k == CoordKind::Polar).count();
        let lines = layout.iter().filter(|k| **k == CoordKind::Line).count();
        if azimuths != polars {
            return Err(Error::InvalidParameter {
                name: "layout",
                reason: "every azimuth needs a matching polar coordinate",
            });
        }
        if azimuths + lines == 0 {
            return Err(Error::InvalidParameter {
                name: "layout",
                reason: "need at least one factor",
            });
        }
        for &(i, j) in &planar_pairs {
            if i >= layout.len()
                || j >= layout.len()
                || layout[i] != CoordKind::Line
                || layout[j] != CoordKind::Line
            {
                return Err(Error::InvalidParameter {
                    name: "planar_pairs",
                    reason: "planar pairs must reference line coordinates",
                });
            }
        }
        Ok(Self {
            m: azimuths,
            n: lines,
            layout,
            planar_pairs,
        })
    }

    /// Number of sphere factors.
    pub fn sphere_factors(&self) -> usize {
        self.m
    }

    /// Number of line factors.
    pub fn line_factors(&self) -> usize {
        self.n
    }

    /// Chart dimension 2m + n.
    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    /// Coordinate roles in layout order.
    pub fn layout(&self) -> &[CoordKind] {
        &self.layout
    }

    /// Role of coordinate `i`.
    pub fn kind(&self, i: usize) -> CoordKind {
        self.layout[i]
    }

    /// Indices of azimuth coordinates.
    pub fn azimuth_indices(&self) -> Vec<usize> {
        self.indices_of(CoordKind::Azimuth)
    }

    /// Indices of polar coordinates.
    pub fn polar_indices(&self) -> Vec<usize> {
        self.indices_of(CoordKind::Polar)
    }

    /// Indices of line coordinates.
    pub fn line_indices(&self) -> Vec<usize> {
        self.indices_of(CoordKind::Line)
    }

    /// Pairs of line coordinates forming planes.
    pub fn planar_pairs(&self) -> &[(usize, usize)] {
        &self.planar_pairs
    }

    fn indices_of(&self, kind: CoordKind) -> Vec<usize> {
        self.layout
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == kind)
            .map(|(i, _)| i)
            .collect()
    }

    fn is_paired(&self, i: usize) -> bool {
        self.planar_pairs.iter().any(|&(a, b)| a == i || b == i)
    }
}

/// A point in chart coordinates. Coordinates may be unwrapped; call
/// [`ChartPoint::normalize`] at API boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartPoint {
    spec: ManifoldSpec,
    coords: DVector<f64>,
}

impl ChartPoint {
    /// Wraps a coordinate vector of matching length.
    pub fn new(spec: ManifoldSpec, coords: DVector<f64>) -> Result<Self> {
        if coords.len() != spec.dim() {
            return Err(Error::DimensionMismatch {
                expected: spec.dim(),
                actual: coords.len(),
            });
        }
        Ok(Self { spec, coords })
    }

    /// Convenience constructor from a slice.
    pub fn from_slice(spec: ManifoldSpec, coords: &[f64]) -> Result<Self> {
        Self::new(spec, DVector::from_row_slice(coords))
    }

    /// The manifold this point lives on.
    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    /// Raw coordinates in layout order.
    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    /// Consumes the point and returns the raw coordinate vector.
    pub fn into_coords(self) -> DVector<f64> {
        self.coords
    }

    /// Wraps all azimuths into [-pi, pi). Polar and line coordinates are
    /// left unchanged. Idempotent. Fails on non-finite coordinates.
    pub fn normalize(&self) -> Result<Self> {
        if let Some(index) = self.coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint { index });
        }
        let mut coords = self.coords.clone();
        for (i, kind) in self.spec.layout.iter().enumerate() {
            if *kind == CoordKind::Azimuth {
                coords[i] = wrap_angle(coords[i]);
            }
        }
        Ok(Self {
            spec: self.spec.clone(),
            coords,
        })
    }

    /// Smallest gap pi/2 - |phi| over all polar coordinates, `None` when the
    /// manifold has no sphere factor.
    pub fn pole_gap(&self) -> Option<f64> {
        self.spec
            .polar_indices()
            .iter()
            .map(|&i| PI / 2.0 - self.coords[i].abs())
            .fold(None, |acc, g| Some(acc.map_or(g, |a: f64| a.min(g))))
    }

    /// True when some polar coordinate is within [`POLE_WARN_MARGIN`] of a
    /// pole.
    pub fn near_pole(&self) -> bool {
        self.pole_gap().is_some_and(|g| g < POLE_WARN_MARGIN)
    }
}

/// Distance that respects azimuth wrap-around: the Euclidean norm over polar
/// and line coordinate differences combined with the shortest arc per
/// azimuth. Both points must be normalized and share a spec.
pub fn chart_distance(p: &ChartPoint, q: &ChartPoint) -> Result<f64> {
    if p.spec != q.spec {
        return Err(Error::SpecMismatch);
    }
    let mut sum = 0.0;
    for (i, kind) in p.spec.layout.iter().enumerate() {
        let d = match kind {
            CoordKind::Azimuth => azimuth_distance(p.coords[i], q.coords[i]),
            _ => p.coords[i] - q.coords[i],
        };
        sum += d * d;
    }
    Ok(sum.sqrt())
}

/// Working region: a polar margin band plus an optional bound on line
/// coordinates.
///
/// A point is inside when every polar coordinate lies strictly in
/// (-pi/2 + delta0, pi/2 - delta0) and, when `kappa > 0`, every designated
/// planar pair has Euclidean norm < 1 + kappa and every unpaired line
/// coordinate has absolute value < 1 + kappa. `kappa = 0` leaves the line
/// factors unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChartRegion {
    delta0: f64,
    kappa: f64,
}

impl ChartRegion {
    pub fn new(delta0: f64, kappa: f64) -> Result<Self> {
        if !(delta0 > 0.0 && delta0 < PI / 2.0) {
            return Err(Error::InvalidParameter {
                name: "delta0",
                reason: "polar margin must lie in (0, pi/2)",
            });
        }
        if !(kappa >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                reason: "radial bound must be >= 0",
            });
        }
        Ok(Self { delta0, kappa })
    }

    /// Polar margin delta0.
    pub fn delta0(&self) -> f64 {
        self.delta0
    }

    /// Line/planar bound parameter kappa; 0 means unbounded.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Region membership for a normalized point.
    pub fn contains(&self, p: &ChartPoint) -> bool {
        let spec = p.spec();
        for &i in &spec.polar_indices() {
            let phi = p.coords()[i];
            if !(phi > -PI / 2.0 + self.delta0 && phi < PI / 2.0 - self.delta0) {
                return false;
            }
        }
        if self.kappa > 0.0 {
            let bound = 1.0 + self.kappa;
            for &(i, j) in spec.planar_pairs() {
                if p.coords()[i].hypot(p.coords()[j]) >= bound {
                    return false;
                }
            }
            for &i in &spec.line_indices() {
                if !spec.is_paired(i) && p.coords()[i].abs() >= bound {
                    return false;
                }
            }
        }
        true
    }
}

impl Default for ChartRegion {
    /// delta0 = 0.05 rad, line factors unbounded.
    fn default() -> Self {
        Self {
            delta0: 0.05,
            kappa: 0.0,
        }
    }
}

/// Free-function form of [`ChartRegion::contains`].
pub fn in_region(p: &ChartPoint, region: &ChartRegion) -> bool {
    region.contains(p)
}
