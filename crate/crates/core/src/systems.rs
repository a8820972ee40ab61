//! The three built-in scenarios and their affine perturbations.
//!
//! Each scenario is an unperturbed linear flow assembled from blocks:
//!
//! * drift      — an azimuth with theta' = 1
//! * constant   — a polar angle with phi' = 0
//! * radial     — a line coordinate with r' = r - 1
//! * rotation   — a plane with x' = -y, y' = x
//!
//! S1 lives on S^2 x R (drift, constant, radial), S2 on (S^2)^2 x R
//! (drift, constant, drift, constant, radial) and S3 on R^2 x S^2
//! (rotation, drift, constant). All periodic orbits of interest have
//! period 2 pi. Flows, fundamental matrices and the monodromy defect
//! M^{-1}(0) - M^{-1}(T) are blockwise closed forms.

use crate::error::{Error, Result};
use crate::manifold::{reduce_angle, ChartPoint, CoordKind, ManifoldSpec};
use crate::numerics::{LinearizableField, VectorField};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;

/// Identifier of a built-in scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioId {
    S1,
    S2,
    S3,
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioId::S1 => write!(f, "S1"),
            ScenarioId::S2 => write!(f, "S2"),
            ScenarioId::S3 => write!(f, "S3"),
        }
    }
}

impl std::str::FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S1" | "s1" => Ok(ScenarioId::S1),
            "S2" | "s2" => Ok(ScenarioId::S2),
            "S3" | "s3" => Ok(ScenarioId::S3),
            _ => Err(Error::InvalidParameter {
                name: "scenario",
                reason: "expected one of S1, S2, S3",
            }),
        }
    }
}

/// One block of the unperturbed vector field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Drift,
    Constant,
    Radial,
    Rotation,
}

impl Block {
    /// Number of coordinates the block spans.
    pub fn width(self) -> usize {
        match self {
            Block::Rotation => 2,
            _ => 1,
        }
    }
}

/// An unperturbed scenario: manifold, block structure and the projection
/// dimension k of the isochronous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    id: ScenarioId,
    spec: ManifoldSpec,
    blocks: Vec<(Block, usize)>,
    projection_dim: usize,
}

impl Scenario {
    /// S^2 x R with theta' = 1, phi' = 0, r' = r - 1; k = 2.
    pub fn s1() -> Self {
        let spec = ManifoldSpec::product(1, 1).expect("valid layout");
        Self {
            id: ScenarioId::S1,
            spec,
            blocks: vec![(Block::Drift, 0), (Block::Constant, 1), (Block::Radial, 2)],
            projection_dim: 2,
        }
    }

    /// (S^2)^2 x R with two drift/constant sphere pairs and a radial line;
    /// k = 4.
    pub fn s2() -> Self {
        let spec = ManifoldSpec::product(2, 1).expect("valid layout");
        Self {
            id: ScenarioId::S2,
            spec,
            blocks: vec![
                (Block::Drift, 0),
                (Block::Constant, 1),
                (Block::Drift, 2),
                (Block::Constant, 3),
                (Block::Radial, 4),
            ],
            projection_dim: 4,
        }
    }

    /// R^2 x S^2 with a rotation plane followed by a drift/constant sphere;
    /// k = 4 = dim (the whole phase space is isochronous).
    pub fn s3() -> Self {
        let spec = ManifoldSpec::from_layout(
            vec![
                CoordKind::Line,
                CoordKind::Line,
                CoordKind::Azimuth,
                CoordKind::Polar,
            ],
            vec![(0, 1)],
        )
        .expect("valid layout");
        Self {
            id: ScenarioId::S3,
            spec,
            blocks: vec![(Block::Rotation, 0), (Block::Drift, 2), (Block::Constant, 3)],
            projection_dim: 4,
        }
    }

    /// Scenario by identifier.
    pub fn from_id(id: ScenarioId) -> Self {
        match id {
            ScenarioId::S1 => Self::s1(),
            ScenarioId::S2 => Self::s2(),
            ScenarioId::S3 => Self::s3(),
        }
    }

    pub fn id(&self) -> ScenarioId {
        self.id
    }

    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// Projection dimension k of the averaged map.
    pub fn projection_dim(&self) -> usize {
        self.projection_dim
    }

    /// Common period of the unperturbed periodic orbits.
    pub fn period(&self) -> f64 {
        TAU
    }

    /// Blocks with their starting coordinate index.
    pub fn blocks(&self) -> &[(Block, usize)] {
        &self.blocks
    }

    /// Chart coordinate names in layout order.
    pub fn coordinate_names(&self) -> &'static [&'static str] {
        match self.id {
            ScenarioId::S1 => &["theta", "phi", "r"],
            ScenarioId::S2 => &["theta", "phi", "nu", "phi2", "r"],
            ScenarioId::S3 => &["x", "y", "theta", "phi"],
        }
    }

    /// Coefficient row letters, one per perturbed equation.
    pub fn row_names(&self) -> &'static [&'static str] {
        match self.id {
            ScenarioId::S1 => &["a", "b", "c"],
            ScenarioId::S2 => &["a", "b", "c", "d", "e"],
            ScenarioId::S3 => &["a", "b", "c", "d"],
        }
    }

    /// Unperturbed field value.
    pub fn f0(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        for &(block, i) in &self.blocks {
            match block {
                Block::Drift => v[i] = 1.0,
                Block::Constant => {}
                Block::Radial => v[i] = z[i] - 1.0,
                Block::Rotation => {
                    v[i] = -z[i + 1];
                    v[i + 1] = z[i];
                }
            }
        }
        v
    }

    /// Constant Jacobian of the unperturbed field.
    pub fn f0_jacobian(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(d, d);
        for &(block, i) in &self.blocks {
            match block {
                Block::Drift | Block::Constant => {}
                Block::Radial => j[(i, i)] = 1.0,
                Block::Rotation => {
                    j[(i, i + 1)] = -1.0;
                    j[(i + 1, i)] = 1.0;
                }
            }
        }
        j
    }

    /// Closed-form unperturbed flow on raw coordinates, blockwise; angles
    /// are not wrapped.
    pub fn flow_raw(&self, z: &DVector<f64>, t: f64) -> DVector<f64> {
        let mut out = z.clone();
        let (s, c) = {
            let a = reduce_angle(t);
            (a.sin(), a.cos())
        };
        for &(block, i) in &self.blocks {
            match block {
                Block::Drift => out[i] = z[i] + t,
                Block::Constant => {}
                Block::Radial => out[i] = (z[i] - 1.0) * t.exp() + 1.0,
                Block::Rotation => {
                    out[i] = z[i] * c - z[i + 1] * s;
                    out[i + 1] = z[i] * s + z[i + 1] * c;
                }
            }
        }
        out
    }

    /// Unperturbed flow with unwrapped angles (azimuths keep growing).
    pub fn flow_unwrapped(&self, z0: &ChartPoint, t: f64) -> Result<ChartPoint> {
        self.check_point(z0)?;
        ChartPoint::new(self.spec.clone(), self.flow_raw(z0.coords(), t))
    }

    /// Unperturbed flow, normalized at the boundary.
    pub fn flow(&self, z0: &ChartPoint, t: f64) -> Result<ChartPoint> {
        self.flow_unwrapped(z0, t)?.normalize()
    }

    /// Fundamental matrix M(t) = exp(D F0 t): identity on drift/constant
    /// coordinates, e^t on radial ones, a planar rotation by t on rotation
    /// blocks. M(0) is the identity.
    pub fn fundamental_matrix(&self, t: f64) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.dim(), self.dim());
        let (s, c) = {
            let a = reduce_angle(t);
            (a.sin(), a.cos())
        };
        for &(block, i) in &self.blocks {
            match block {
                Block::Drift | Block::Constant => {}
                Block::Radial => m[(i, i)] = t.exp(),
                Block::Rotation => {
                    m[(i, i)] = c;
                    m[(i, i + 1)] = -s;
                    m[(i + 1, i)] = s;
                    m[(i + 1, i + 1)] = c;
                }
            }
        }
        m
    }

    /// Exact inverse M^{-1}(t) = M(-t).
    pub fn fundamental_matrix_inverse(&self, t: f64) -> DMatrix<f64> {
        self.fundamental_matrix(-t)
    }

    /// The defect M^{-1}(0) - M^{-1}(2 pi) with its block diagnostics for
    /// projection dimension `k`.
    pub fn monodromy_defect(&self, k: usize) -> Result<MonodromyDefect> {
        let d = self.dim();
        if k == 0 || k > d {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "projection dimension must satisfy 1 <= k <= dim",
            });
        }
        let defect = DMatrix::identity(d, d) - self.fundamental_matrix_inverse(self.period());
        let mut upper_right_norm: f64 = 0.0;
        for r in 0..k {
            for c in k..d {
                upper_right_norm = upper_right_norm.max(defect[(r, c)].abs());
            }
        }
        let delta_det = if k == d {
            1.0
        } else {
            defect.view((k, k), (d - k, d - k)).clone_owned().determinant()
        };
        Ok(MonodromyDefect {
            matrix: defect,
            projection_dim: k,
            upper_right_norm,
            delta_det,
        })
    }

    /// Start point z_alpha of the unperturbed periodic orbit indexed by the
    /// first k coordinates: trailing radial coordinates sit on their
    /// invariant value r = 1.
    pub fn periodic_orbit_start(&self, alpha: &[f64]) -> Result<ChartPoint> {
        let k = self.projection_dim;
        if alpha.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: alpha.len(),
            });
        }
        let mut coords = DVector::zeros(self.dim());
        for (i, a) in alpha.iter().enumerate() {
            coords[i] = *a;
        }
        for i in k..self.dim() {
            match self.block_at(i) {
                Some(Block::Radial) => coords[i] = 1.0,
                _ => return Err(Error::UnsupportedProjection { index: i }),
            }
        }
        ChartPoint::new(self.spec.clone(), coords)
    }

    /// Block covering coordinate `i`.
    pub fn block_at(&self, i: usize) -> Option<Block> {
        self.blocks
            .iter()
            .find(|&&(b, start)| i >= start && i < start + b.width())
            .map(|&(b, _)| b)
    }

    fn check_point(&self, p: &ChartPoint) -> Result<()> {
        if p.spec() != &self.spec {
            return Err(Error::SpecMismatch);
        }
        Ok(())
    }
}

/// The coefficient block (A | b) of a linear perturbation F1(z) = A z + b in
/// chart coordinates. Row i holds the coefficients of the i-th perturbed
/// equation.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePerturbation {
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffinePerturbation {
    pub fn new(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() != offset.len() {
            return Err(Error::DimensionMismatch {
                expected: matrix.nrows(),
                actual: offset.len(),
            });
        }
        if let Some(index) = matrix.iter().chain(offset.iter()).position(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint { index });
        }
        Ok(Self { matrix, offset })
    }

    /// The zero perturbation in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    /// Builds a perturbation from named scalars like `("a2", 1.0)`: the row
    /// letter picks the equation in scenario row order, index 0 is the
    /// constant term and index j >= 1 the coefficient of coordinate j - 1.
    pub fn from_named(scenario: &Scenario, entries: &[(String, f64)]) -> Result<Self> {
        let dim = scenario.dim();
        let mut p = Self::zero(dim);
        for (name, value) in entries {
            let (letter, idx) = name.split_at(1);
            let row = scenario
                .row_names()
                .iter()
                .position(|r| *r == letter)
                .ok_or(Error::InvalidParameter {
                    name: "coefficient",
                    reason: "unknown row letter for this scenario",
                })?;
            let col: usize = idx.parse().map_err(|_| Error::InvalidParameter {
                name: "coefficient",
                reason: "index must be an integer",
            })?;
            if col > dim {
                return Err(Error::InvalidParameter {
                    name: "coefficient",
                    reason: "index exceeds the scenario dimension",
                });
            }
            if col == 0 {
                p.offset[row] = *value;
            } else {
                p.matrix[(row, col - 1)] = *value;
            }
        }
        Self::new(p.matrix, p.offset)
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// F1(z) = A z + b.
    pub fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z + &self.offset
    }

    /// Checks the block shape against a scenario.
    pub fn validate_for(&self, scenario: &Scenario) -> Result<()> {
        if self.dim() != scenario.dim() {
            return Err(Error::DimensionMismatch {
                expected: scenario.dim(),
                actual: self.dim(),
            });
        }
        Ok(())
    }
}

/// Verification record for Theorem condition (ii): the defect
/// D = M^{-1}(0) - M^{-1}(T) must have a zero k x (dim-k) block in the upper
/// right and an invertible lower-right block Delta. With k = dim the
/// condition is vacuous and Delta's determinant is reported as 1.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyDefect {
    matrix: DMatrix<f64>,
    projection_dim: usize,
    upper_right_norm: f64,
    delta_det: f64,
}

impl MonodromyDefect {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn projection_dim(&self) -> usize {
        self.projection_dim
    }

    /// Max-norm of the upper-right k x (dim-k) block.
    pub fn upper_right_norm(&self) -> f64 {
        self.upper_right_norm
    }

    /// Determinant of the lower-right (dim-k) x (dim-k) block; 1 when
    /// k = dim.
    pub fn delta_det(&self) -> f64 {
        self.delta_det
    }

    /// Whether the monodromy condition holds.
    pub fn condition_holds(&self) -> bool {
        self.projection_dim == self.matrix.nrows()
            || (self.upper_right_norm == 0.0 && self.delta_det != 0.0)
    }
}

/// The perturbed vector field F0(z) + eps (A z + b) + eps^2 F2(z).
///
/// The second-order slot is carried for fidelity to the perturbation family
/// but is identically zero.
#[derive(Debug, Clone)]
pub struct PerturbedField {
    scenario: Scenario,
    perturbation: AffinePerturbation,
    epsilon: f64,
}

impl PerturbedField {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// F2 is identically zero for the perturbation families studied here.
    fn second_order(&self, _z: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.scenario.dim())
    }
}

/// Builds the perturbed field, checking dimensions and eps >= 0.
pub fn perturbed_field(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    epsilon: f64,
) -> Result<PerturbedField> {
    perturbation.validate_for(scenario)?;
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            reason: "perturbation size must be >= 0",
        });
    }
    Ok(PerturbedField {
        scenario: scenario.clone(),
        perturbation: perturbation.clone(),
        epsilon,
    })
}

impl VectorField for PerturbedField {
    fn dim(&self) -> usize {
        self.scenario.dim()
    }

    fn eval(&self, z: &DVector<f64>) -> DVector<f64> {
        let e2 = self.epsilon * self.epsilon;
        self.scenario.f0(z) + self.perturbation.eval(z) * self.epsilon
            + self.second_order(z) * e2
    }
}

impl LinearizableField for PerturbedField {
    fn jacobian(&self, _z: &DVector<f64>) -> DMatrix<f64> {
        self.scenario.f0_jacobian() + self.perturbation.matrix() * self.epsilon
    }
}
