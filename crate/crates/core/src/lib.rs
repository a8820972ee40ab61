//! Limit cycles of linearly perturbed linear flows on (S^2)^m x R^n.
//!
//! A linear flow on one of these product manifolds can carry whole
//! isochronous families of periodic orbits. Under a generic linear
//! perturbation eps (A z + b) exactly one of those orbits survives as a
//! limit cycle, and first-order averaging pins it down in closed form: the
//! averaged function F(alpha) is affine, its unique zero is the bifurcation
//! point, and det(DF) != 0 is the persistence condition.
//!
//! The crate computes F symbolically (module [`integrand`] supplies an exact
//! exp-trig term algebra, [`averaging`] assembles and solves F), and then
//! confirms every prediction by machinery that never touches the closed
//! form: adaptive integration of the perturbed flow, a Poincare return map
//! on a transversal section, a shooting solve for the 2 pi-periodic cycle,
//! and Floquet multipliers of the return map ([`numerics`] and
//! [`verifier`]). The [`selftest`] suites cross-check both paths under
//! seeded randomness.

pub mod averaging;
pub mod error;
pub mod integrand;
pub mod manifold;
pub mod numerics;
pub mod selftest;
pub mod systems;
pub mod verifier;

pub use averaging::{averaged_map, numeric_averaged, AveragedMap, RootResult};
pub use error::{Error, Result};
pub use integrand::{ExpTrigTerm, TermSum, Trig};
pub use manifold::{
    chart_distance, in_region, wrap_angle, ChartPoint, ChartRegion, CoordKind, ManifoldSpec,
};
pub use numerics::{
    advance_state, finite_difference_jacobian, gauss_legendre, gauss_legendre_integrate,
    integrate, integrate_to_crossing, integrate_with_tangents, monodromy_numeric, EventOutcome,
    IntegratorConfig, LinearizableField, Method, Outcome, Trajectory, VectorField, Warning,
    WarningKind,
};
pub use systems::{
    perturbed_field, AffinePerturbation, Block, MonodromyDefect, PerturbedField, Scenario,
    ScenarioId,
};
pub use verifier::{
    epsilon_sweep, find_fixed_point, return_map, section_guess, CycleCertificate, FlightError,
    ReturnMap, SectionSpec, SweepRow, SweepTable, VerifyFailure, VerifyOptions,
};
