//! Independent confirmation of predicted cycles.
//!
//! A transversal section is placed at an azimuth value (default the chart
//! seam theta = -pi, where both worked bifurcation points sit; flights run
//! in unwrapped angles so the seam is harmless). The first-return map P and
//! the flight time T are computed by event integration.
//!
//! The shooting solve itself targets the closure system of the time-2 pi
//! map over the full chart state,
//!
//!   R(z0) = Phi_{2 pi}(z0) - z0 - w,     w = 2 pi per drift azimuth,
//!
//! with a damped Gauss-Newton iteration on a finite-difference Jacobian and
//! minimum-norm steps from a truncated SVD. This formulation is what the
//! averaged prediction actually asserts (a solution of period exactly
//! 2 pi), and it is the only one that works across the whole family:
//!
//! * the worked perturbation families conserve a first integral on the
//!   invariant sphere, so their plain return maps are the identity there (a
//!   continuum of periodic orbits of varying period) and y - P(y) = 0 alone
//!   cannot isolate the bifurcating cycle — the period pin does;
//! * perturbations with azimuth coefficients are not invariant under the
//!   2 pi wrap of the chart, so the closed 2 pi-orbit has a determined
//!   phase; pinning the section value would overdetermine the system. The
//!   phase is left free and the certificate is aligned to the physical
//!   section afterwards. For wrap-invariant perturbations the phase
//!   direction is a null column and the minimum-norm step simply leaves it
//!   alone.
//!
//! Floquet multipliers are the eigenvalues of the return-map Jacobian at
//! the certified section point; certificates with some multiplier inside
//! the isolation margin of 1 are marked non-hyperbolic rather than
//! rejected.

use crate::error::Error;
use crate::manifold::{chart_distance, ChartPoint, ChartRegion, CoordKind};
use crate::numerics::{
    integrate, integrate_to_crossing, EventOutcome, IntegratorConfig, Warning,
};
use crate::systems::{perturbed_field, AffinePerturbation, Block, Scenario};
use nalgebra::{Complex, DMatrix, DVector};
use std::f64::consts::{PI, TAU};

/// A codimension-one section {theta_i = value} crossed in the positive
/// theta direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionSpec {
    azimuth_index: usize,
    value: f64,
}

impl SectionSpec {
    pub fn new(scenario: &Scenario, azimuth_index: usize, value: f64) -> crate::error::Result<Self> {
        if azimuth_index >= scenario.dim()
            || scenario.spec().kind(azimuth_index) != CoordKind::Azimuth
        {
            return Err(Error::InvalidParameter {
                name: "azimuth_index",
                reason: "section coordinate must be an azimuth",
            });
        }
        Ok(Self {
            azimuth_index,
            value,
        })
    }

    /// Default section for a scenario: its first azimuth at the seam -pi.
    pub fn for_scenario(scenario: &Scenario) -> Self {
        let azimuth_index = scenario.spec().azimuth_indices()[0];
        Self {
            azimuth_index,
            value: -PI,
        }
    }

    pub fn azimuth_index(&self) -> usize {
        self.azimuth_index
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    /// Embeds section coordinates into a full chart state.
    pub fn insert(&self, scenario: &Scenario, y: &DVector<f64>) -> DVector<f64> {
        let dim = scenario.dim();
        let mut full = DVector::zeros(dim);
        let mut j = 0;
        for i in 0..dim {
            if i == self.azimuth_index {
                full[i] = self.value;
            } else {
                full[i] = y[j];
                j += 1;
            }
        }
        full
    }

    /// Projects a full state onto section coordinates.
    pub fn extract(&self, full: &DVector<f64>) -> DVector<f64> {
        let dim = full.len();
        let mut y = DVector::zeros(dim - 1);
        let mut j = 0;
        for i in 0..dim {
            if i != self.azimuth_index {
                y[j] = full[i];
                j += 1;
            }
        }
        y
    }

    /// Names of the section coordinates.
    pub fn coordinate_names(&self, scenario: &Scenario) -> Vec<&'static str> {
        scenario
            .coordinate_names()
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != self.azimuth_index)
            .map(|(_, n)| *n)
            .collect()
    }
}

/// Knobs of the verification pipeline.
#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub integrator: IntegratorConfig,
    /// Central-difference step for return-map Jacobians.
    pub fd_step: f64,
    pub max_iterations: usize,
    /// Newton step halvings before giving up on a descent step. The radial
    /// direction expands by e^{2 pi} over one return, so undamped steps can
    /// overshoot badly.
    pub max_damping: u32,
    /// Abort the flight if no crossing happens within this time.
    pub max_flight: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        let region = ChartRegion::new(0.05, 9.0).expect("valid default region");
        Self {
            integrator: IntegratorConfig {
                region: Some(region),
                ..Default::default()
            },
            fd_step: 1e-6,
            max_iterations: 50,
            max_damping: 8,
            max_flight: 2.0 * TAU,
        }
    }
}

/// Why a flight failed to produce a return.
#[derive(Debug, Clone, PartialEq)]
pub enum FlightError {
    BoundaryExit { time: f64 },
    Stiffness { time: f64 },
    NoCrossing { t_max: f64 },
}

impl std::fmt::Display for FlightError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FlightError::BoundaryExit { time } => {
                write!(f, "trajectory left the working region at t = {time:.6}")
            }
            FlightError::Stiffness { time } => {
                write!(f, "step size underflow at t = {time:.6}")
            }
            FlightError::NoCrossing { t_max } => {
                write!(f, "no section crossing within t = {t_max:.6}")
            }
        }
    }
}

/// Why verification did not certify a cycle.
#[derive(Debug, Clone)]
pub enum VerifyFailure {
    /// The shooting Jacobian is rank-deficient: a continuum of fixed points
    /// (for example at eps = 0) rather than an isolated cycle.
    Degenerate { sigma_min: f64 },
    NoConvergence { iterations: usize, residual: f64 },
    Flight(FlightError),
    Setup(Error),
}

impl std::fmt::Display for VerifyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyFailure::Degenerate { sigma_min } => write!(
                f,
                "degenerate shooting system (smallest scaled singular value {sigma_min:.3e})"
            ),
            VerifyFailure::NoConvergence {
                iterations,
                residual,
            } => write!(
                f,
                "no convergence after {iterations} iterations (residual {residual:.3e})"
            ),
            VerifyFailure::Flight(e) => write!(f, "{e}"),
            VerifyFailure::Setup(e) => write!(f, "{e}"),
        }
    }
}

/// One evaluation of the section return map.
#[derive(Debug, Clone)]
pub struct ReturnMap {
    /// Section coordinates after one return, drift azimuths reduced by the
    /// full turn they accumulate per flight.
    pub section: DVector<f64>,
    /// Flight time, close to 2 pi for small eps.
    pub time: f64,
    pub warnings: Vec<Warning>,
}

/// Verification record for one certified cycle.
#[derive(Debug, Clone)]
pub struct CycleCertificate {
    pub epsilon: f64,
    /// Fixed point in section coordinates.
    pub section_point: DVector<f64>,
    /// Full chart state of the fixed point, normalized.
    pub state: ChartPoint,
    /// Max-norm of P(y) - y at the fixed point.
    pub residual: f64,
    /// Return time of the certified cycle.
    pub period: f64,
    /// Eigenvalues of the return-map Jacobian, dim - 1 of them.
    pub multipliers: Vec<Complex<f64>>,
    /// Chart distance from the averaging prediction on the section.
    pub distance: f64,
    /// All multipliers at distance >= eps / 10 from 1.
    pub isolated: bool,
    /// Largest |r - 1| along one period, for scenarios with a radial
    /// coordinate.
    pub radial_deviation: Option<f64>,
    pub warnings: Vec<Warning>,
}

/// Integrates from a section point to the next positive crossing of the
/// section and reports the return.
pub fn return_map(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    epsilon: f64,
    section: &SectionSpec,
    y: &DVector<f64>,
    options: &VerifyOptions,
) -> Result<ReturnMap, VerifyFailure> {
    let field = perturbed_field(scenario, perturbation, epsilon).map_err(VerifyFailure::Setup)?;
    if y.len() + 1 != scenario.dim() {
        return Err(VerifyFailure::Setup(Error::DimensionMismatch {
            expected: scenario.dim() - 1,
            actual: y.len(),
        }));
    }
    let full = section.insert(scenario, y);
    let z0 = ChartPoint::new(scenario.spec().clone(), full).map_err(VerifyFailure::Setup)?;
    let target = section.value + TAU;
    let az = section.azimuth_index;
    let outcome = integrate_to_crossing(
        &field,
        &z0,
        &|v| v[az] - target,
        options.max_flight,
        &options.integrator,
    )
    .map_err(|e| match e {
        Error::Stiffness { t } => VerifyFailure::Flight(FlightError::Stiffness { time: t }),
        other => VerifyFailure::Setup(other),
    })?;
    match outcome {
        EventOutcome::Crossed {
            time,
            state,
            warnings,
        } => {
            let mut out = section.extract(state.coords());
            // non-section drift azimuths also wrap (once, for small eps);
            // reduce them to the turn count actually accumulated
            let mut j = 0;
            for i in 0..scenario.dim() {
                if i == az {
                    continue;
                }
                if scenario.spec().kind(i) == CoordKind::Azimuth {
                    out[j] -= TAU * ((out[j] - y[j]) / TAU).round();
                }
                j += 1;
            }
            Ok(ReturnMap {
                section: out,
                time,
                warnings,
            })
        }
        EventOutcome::BoundaryExit { time } => {
            Err(VerifyFailure::Flight(FlightError::BoundaryExit { time }))
        }
        EventOutcome::NoCrossing => Err(VerifyFailure::Flight(FlightError::NoCrossing {
            t_max: options.max_flight,
        })),
    }
}

/// A column whose norm falls below this is treated as numerically zero in
/// the closure Jacobian; genuinely zero columns (continua of periodic
/// orbits) sit orders of magnitude below it.
const COLUMN_FLOOR: f64 = 5e-6;
/// Rank tolerance for the column-equilibrated closure Jacobian.
const SIGMA_RATIO_FLOOR: f64 = 1e-6;
/// Relative truncation for minimum-norm Gauss-Newton steps: singular values
/// below this fraction of the largest are treated as phase freedom.
const STEP_TRUNCATION: f64 = 1e-8;

struct Shooting<'a> {
    scenario: &'a Scenario,
    perturbation: &'a AffinePerturbation,
    epsilon: f64,
    options: &'a VerifyOptions,
    /// 2 pi on every drift azimuth: the wrap a closed orbit accumulates.
    wrap: DVector<f64>,
}

impl<'a> Shooting<'a> {
    fn new(
        scenario: &'a Scenario,
        perturbation: &'a AffinePerturbation,
        epsilon: f64,
        options: &'a VerifyOptions,
    ) -> Self {
        let mut wrap = DVector::zeros(scenario.dim());
        for &(block, i) in scenario.blocks() {
            if block == Block::Drift {
                wrap[i] = TAU;
            }
        }
        Self {
            scenario,
            perturbation,
            epsilon,
            options,
            wrap,
        }
    }

    /// Closure residual Phi_{2 pi}(z0) - z0 - w, with region and pole
    /// monitoring along the flight.
    fn residual(&self, z0: &DVector<f64>) -> Result<(DVector<f64>, Vec<Warning>), VerifyFailure> {
        let field = perturbed_field(self.scenario, self.perturbation, self.epsilon)
            .map_err(VerifyFailure::Setup)?;
        let start = ChartPoint::new(self.scenario.spec().clone(), z0.clone())
            .map_err(VerifyFailure::Setup)?;
        let traj = integrate(&field, &start, TAU, &self.options.integrator).map_err(
            |e| match e {
                Error::Stiffness { t } => VerifyFailure::Flight(FlightError::Stiffness { time: t }),
                other => VerifyFailure::Setup(other),
            },
        )?;
        if let crate::numerics::Outcome::BoundaryExit { time } = traj.outcome {
            return Err(VerifyFailure::Flight(FlightError::BoundaryExit { time }));
        }
        let r = traj.endpoint().coords() - z0 - &self.wrap;
        Ok((r, traj.warnings))
    }

    /// Central-difference Jacobian of the closure residual.
    fn jacobian(&self, z0: &DVector<f64>) -> Result<DMatrix<f64>, VerifyFailure> {
        let d = z0.len();
        let h = self.options.fd_step;
        let mut jac = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut plus = z0.clone();
            let mut minus = z0.clone();
            plus[j] += h;
            minus[j] -= h;
            let (rp, _) = self.residual(&plus)?;
            let (rm, _) = self.residual(&minus)?;
            jac.set_column(j, &((rp - rm) / (2.0 * h)));
        }
        Ok(jac)
    }
}

/// Rank check of the closure Jacobian with the phase column removed: the
/// section azimuth is legitimate freedom, but any other numerically zero
/// column (or a tiny equilibrated singular value) means a continuum of
/// periodic orbits instead of an isolated cycle.
fn degeneracy(jac: &DMatrix<f64>, phase_column: usize) -> Option<f64> {
    let d = jac.ncols();
    let mut scaled = DMatrix::zeros(d, d - 1);
    let mut out = 0;
    for j in 0..d {
        if j == phase_column {
            continue;
        }
        let norm = jac.column(j).norm();
        if norm < COLUMN_FLOOR {
            return Some(0.0);
        }
        scaled.set_column(out, &(jac.column(j) / norm));
        out += 1;
    }
    let sv = scaled.svd(false, false).singular_values;
    let (smin, smax) = (sv.min(), sv.max());
    if smin <= SIGMA_RATIO_FLOOR * smax {
        Some(smin)
    } else {
        None
    }
}

/// Damped Gauss-Newton solve for the 2 pi-periodic cycle near the
/// prediction. The guess lives in section coordinates (it is always the
/// averaging prediction restricted to the section); internally the phase is
/// free and the certificate is aligned back to the section. On success the
/// certificate carries residual, period, Floquet multipliers and the
/// distance to the prediction.
pub fn find_fixed_point(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    epsilon: f64,
    section: &SectionSpec,
    guess: &DVector<f64>,
    tolerance: f64,
    options: &VerifyOptions,
) -> Result<CycleCertificate, VerifyFailure> {
    if guess.len() + 1 != scenario.dim() {
        return Err(VerifyFailure::Setup(Error::DimensionMismatch {
            expected: scenario.dim() - 1,
            actual: guess.len(),
        }));
    }
    let shooting = Shooting::new(scenario, perturbation, epsilon, options);
    let mut z = section.insert(scenario, guess);
    let (mut r, mut warnings) = shooting.residual(&z)?;

    let mut jac = shooting.jacobian(&z)?;
    if let Some(sigma_min) = degeneracy(&jac, section.azimuth_index()) {
        return Err(VerifyFailure::Degenerate { sigma_min });
    }

    let mut converged = r.abs().max() < tolerance;
    let mut iterations = 0;
    while !converged && iterations < options.max_iterations {
        iterations += 1;
        if iterations > 1 {
            jac = shooting.jacobian(&z)?;
        }
        let svd = jac.clone().svd(true, true);
        let sigma_max = svd.singular_values.max();
        let delta = svd
            .solve(&(-&r), STEP_TRUNCATION * sigma_max)
            .map_err(|_| VerifyFailure::Degenerate { sigma_min: 0.0 })?
            .column(0)
            .clone_owned();

        // halve the step until the closure residual decreases
        let mut factor = 1.0;
        let mut improved = false;
        for _ in 0..=options.max_damping {
            let candidate = &z + &delta * factor;
            match shooting.residual(&candidate) {
                Ok((rc, wc)) => {
                    if rc.norm() < r.norm() {
                        z = candidate;
                        r = rc;
                        warnings = wc;
                        improved = true;
                        break;
                    }
                }
                Err(VerifyFailure::Flight(_)) => {}
                Err(other) => return Err(other),
            }
            factor *= 0.5;
        }
        if !improved {
            return Err(VerifyFailure::NoConvergence {
                iterations,
                residual: r.abs().max(),
            });
        }
        converged = r.abs().max() < tolerance;
    }
    if !converged {
        return Err(VerifyFailure::NoConvergence {
            iterations,
            residual: r.abs().max(),
        });
    }
    let residual = r.abs().max();

    // align the free phase back onto the physical section
    let field = perturbed_field(scenario, perturbation, epsilon).map_err(VerifyFailure::Setup)?;
    let cycle_point = ChartPoint::new(scenario.spec().clone(), z.clone())
        .map_err(VerifyFailure::Setup)?;
    let on_section = align_to_section(&field, &cycle_point, section, options)?;
    let y = section.extract(on_section.coords());

    // period: one event flight from the aligned point
    let rm = return_map(scenario, perturbation, epsilon, section, &y, options)?;
    warnings.extend(rm.warnings.iter().copied());

    // Floquet multipliers: eigenvalues of the return-map Jacobian on the
    // physical section
    let dp = return_map_jacobian(scenario, perturbation, epsilon, section, &y, options)?;
    let multipliers: Vec<Complex<f64>> = dp.complex_eigenvalues().iter().copied().collect();
    let margin = epsilon / 10.0;
    let isolated = multipliers
        .iter()
        .all(|m| (m - Complex::new(1.0, 0.0)).norm() >= margin);

    let state = on_section.normalize().map_err(VerifyFailure::Setup)?;
    let guess_state = ChartPoint::new(scenario.spec().clone(), section.insert(scenario, guess))
        .and_then(|p| p.normalize())
        .map_err(VerifyFailure::Setup)?;
    let distance = chart_distance(&state, &guess_state).map_err(VerifyFailure::Setup)?;

    let radial_deviation =
        radial_deviation(scenario, perturbation, epsilon, &on_section, rm.time)?;

    Ok(CycleCertificate {
        epsilon,
        section_point: y,
        state,
        residual,
        period: rm.time,
        multipliers,
        distance,
        isolated,
        radial_deviation,
        warnings,
    })
}

/// Short time shift bringing a cycle point onto the section azimuth value;
/// Newton on the azimuth with the field rate as the derivative.
fn align_to_section(
    field: &crate::systems::PerturbedField,
    point: &ChartPoint,
    section: &SectionSpec,
    options: &VerifyOptions,
) -> Result<ChartPoint, VerifyFailure> {
    use crate::numerics::{advance_state, VectorField};
    let az = section.azimuth_index();
    let mut tau = section.value() - point.coords()[az];
    if tau == 0.0 {
        return Ok(point.clone());
    }
    let mut current = point.clone();
    let mut shifted = tau;
    for _ in 0..10 {
        current = advance_state(field, point, shifted, &options.integrator).map_err(|e| {
            match e {
                Error::Stiffness { t } => VerifyFailure::Flight(FlightError::Stiffness { time: t }),
                other => VerifyFailure::Setup(other),
            }
        })?;
        let gap = section.value() - current.coords()[az];
        if gap.abs() < 1e-12 {
            break;
        }
        let rate = field.eval(current.coords())[az];
        tau = gap / rate;
        shifted += tau;
    }
    Ok(current)
}

/// Finite-difference Jacobian of the pinned-section return map.
fn return_map_jacobian(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    epsilon: f64,
    section: &SectionSpec,
    y: &DVector<f64>,
    options: &VerifyOptions,
) -> Result<DMatrix<f64>, VerifyFailure> {
    let n = y.len();
    let h = options.fd_step;
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut plus = y.clone();
        let mut minus = y.clone();
        plus[j] += h;
        minus[j] -= h;
        let rp = return_map(scenario, perturbation, epsilon, section, &plus, options)?;
        let rm = return_map(scenario, perturbation, epsilon, section, &minus, options)?;
        jac.set_column(j, &((rp.section - rm.section) / (2.0 * h)));
    }
    Ok(jac)
}

/// Largest |r - 1| along one period of the certified cycle, when the
/// scenario has a radial coordinate. Whether the cycle stays on the
/// invariant sphere in general is left open; this only reports the
/// deviation.
fn radial_deviation(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    epsilon: f64,
    start: &ChartPoint,
    period: f64,
) -> Result<Option<f64>, VerifyFailure> {
    let radial: Vec<usize> = scenario
        .blocks()
        .iter()
        .filter(|(b, _)| *b == Block::Radial)
        .map(|&(_, i)| i)
        .collect();
    if radial.is_empty() {
        return Ok(None);
    }
    let field = perturbed_field(scenario, perturbation, epsilon).map_err(VerifyFailure::Setup)?;
    let traj = integrate(&field, start, period, &IntegratorConfig::default()).map_err(|e| {
        match e {
            Error::Stiffness { t } => VerifyFailure::Flight(FlightError::Stiffness { time: t }),
            other => VerifyFailure::Setup(other),
        }
    })?;
    let mut dev: f64 = 0.0;
    for state in &traj.states {
        for &i in &radial {
            dev = dev.max((state.coords()[i] - 1.0).abs());
        }
    }
    Ok(Some(dev))
}

/// One row of an epsilon sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub epsilon: f64,
    pub outcome: Result<CycleCertificate, VerifyFailure>,
}

impl SweepRow {
    pub fn status(&self) -> &'static str {
        match &self.outcome {
            Ok(_) => "certified",
            Err(VerifyFailure::Degenerate { .. }) => "degenerate",
            Err(VerifyFailure::NoConvergence { .. }) => "no-convergence",
            Err(VerifyFailure::Flight(FlightError::BoundaryExit { .. })) => "boundary-exit",
            Err(VerifyFailure::Flight(FlightError::Stiffness { .. })) => "stiffness",
            Err(VerifyFailure::Flight(FlightError::NoCrossing { .. })) => "no-crossing",
            Err(VerifyFailure::Setup(_)) => "setup-error",
        }
    }
}

/// Sweep result: one row per epsilon plus the log-log slope of distance
/// against epsilon over the certified rows.
#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub slope: Option<f64>,
    /// The guess used for every row: the prediction restricted to the
    /// section.
    pub guess: DVector<f64>,
}

impl SweepTable {
    pub fn all_certified(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.outcome.is_ok())
    }

    /// Serializes the sweep as CSV with full double precision.
    pub fn to_csv(&self, scenario: &Scenario, section: &SectionSpec) -> String {
        let n = scenario.dim() - 1;
        let mut out = String::from("eps");
        for name in section.coordinate_names(scenario) {
            out.push(',');
            out.push_str(name);
        }
        out.push_str(",residual");
        for i in 1..=n {
            out.push_str(&format!(",mult{i}_re,mult{i}_im"));
        }
        out.push_str(",distance,status\n");
        for row in &self.rows {
            out.push_str(&fmt(row.epsilon));
            match &row.outcome {
                Ok(cert) => {
                    for v in cert.section_point.iter() {
                        out.push(',');
                        out.push_str(&fmt(*v));
                    }
                    out.push(',');
                    out.push_str(&fmt(cert.residual));
                    for m in &cert.multipliers {
                        out.push(',');
                        out.push_str(&fmt(m.re));
                        out.push(',');
                        out.push_str(&fmt(m.im));
                    }
                    out.push(',');
                    out.push_str(&fmt(cert.distance));
                    out.push_str(",certified\n");
                }
                Err(_) => {
                    for _ in 0..n {
                        out.push(',');
                    }
                    out.push(','); // residual
                    for _ in 0..n {
                        out.push(',');
                        out.push(',');
                    }
                    out.push(','); // distance
                    out.push_str(row.status());
                    out.push('\n');
                }
            }
        }
        out
    }
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Restricts a full-state prediction to the section: flow it along the
/// unperturbed field until its azimuth reaches the section value, then drop
/// that coordinate.
pub fn section_guess(
    scenario: &Scenario,
    section: &SectionSpec,
    prediction: &ChartPoint,
) -> crate::error::Result<DVector<f64>> {
    if prediction.spec() != scenario.spec() {
        return Err(Error::SpecMismatch);
    }
    let theta0 = prediction.coords()[section.azimuth_index];
    let dt = (section.value - theta0).rem_euclid(TAU);
    let flowed = scenario.flow_raw(prediction.coords(), dt);
    let mut y = section.extract(&flowed);
    let mut j = 0;
    for i in 0..scenario.dim() {
        if i == section.azimuth_index {
            continue;
        }
        if scenario.spec().kind(i) == CoordKind::Azimuth {
            y[j] = crate::manifold::wrap_angle(y[j]);
        }
        j += 1;
    }
    Ok(y)
}

/// Runs [`find_fixed_point`] for every epsilon (descending), all starting
/// from the prediction restricted to the section, and fits the log-log
/// slope of distance against epsilon. Rows are independent; `jobs` bounds
/// the worker threads, and results keep input order regardless of
/// completion order.
pub fn epsilon_sweep(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    section: &SectionSpec,
    prediction: &ChartPoint,
    epsilons: &[f64],
    tolerance: f64,
    options: &VerifyOptions,
    jobs: usize,
) -> crate::error::Result<SweepTable> {
    if epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter {
            name: "epsilons",
            reason: "sweep values must be positive",
        });
    }
    let mut eps = epsilons.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();

    let guess = section_guess(scenario, section, prediction)?;
    let jobs = jobs.max(1).min(eps.len().max(1));

    let mut outcomes: Vec<Option<Result<CycleCertificate, VerifyFailure>>> =
        (0..eps.len()).map(|_| None).collect();
    if jobs <= 1 {
        for (i, &e) in eps.iter().enumerate() {
            outcomes[i] = Some(find_fixed_point(
                scenario,
                perturbation,
                e,
                section,
                &guess,
                tolerance,
                options,
            ));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let results = std::sync::Mutex::new(&mut outcomes);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if i >= eps.len() {
                        break;
                    }
                    let out = find_fixed_point(
                        scenario,
                        perturbation,
                        eps[i],
                        section,
                        &guess,
                        tolerance,
                        options,
                    );
                    results.lock().unwrap()[i] = Some(out);
                });
            }
        });
    }

    let rows: Vec<SweepRow> = eps
        .iter()
        .zip(outcomes)
        .map(|(&epsilon, outcome)| SweepRow {
            epsilon,
            outcome: outcome.expect("every row computed"),
        })
        .collect();

    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|row| match &row.outcome {
            Ok(cert) if cert.distance > 0.0 => Some((row.epsilon.ln(), cert.distance.ln())),
            _ => None,
        })
        .collect();
    let slope = fit_slope(&points);

    Ok(SweepTable { rows, slope, guess })
}

/// Least-squares slope of y against x; `None` below two points.
fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn named(s: &Scenario, entries: &[(&str, f64)]) -> AffinePerturbation {
        let owned: Vec<(String, f64)> =
            entries.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        AffinePerturbation::from_named(s, &owned).unwrap()
    }

    #[test]
    fn unperturbed_s1_return_is_identity_on_the_sphere() {
        let s = Scenario::s1();
        let sec = SectionSpec::for_scenario(&s);
        let y = DVector::from_row_slice(&[0.2, 1.0]);
        let rm = return_map(
            &s,
            &AffinePerturbation::zero(3),
            0.0,
            &sec,
            &y,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!((rm.section.clone() - y).abs().max() < 1e-9);
        assert_abs_diff_eq!(rm.time, TAU, epsilon = 1e-10);
    }

    #[test]
    fn unperturbed_s1_off_sphere_escapes() {
        let s = Scenario::s1();
        let sec = SectionSpec::for_scenario(&s);
        let y = DVector::from_row_slice(&[0.2, 1.5]);
        let out = return_map(
            &s,
            &AffinePerturbation::zero(3),
            0.0,
            &sec,
            &y,
            &VerifyOptions::default(),
        );
        assert!(matches!(
            out,
            Err(VerifyFailure::Flight(FlightError::BoundaryExit { .. }))
        ));
    }

    #[test]
    fn unperturbed_s3_return_is_identity() {
        let s = Scenario::s3();
        let sec = SectionSpec::for_scenario(&s);
        let y = DVector::from_row_slice(&[0.3, 0.0, 0.1]);
        let rm = return_map(
            &s,
            &AffinePerturbation::zero(4),
            0.0,
            &sec,
            &y,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!((rm.section.clone() - y).abs().max() < 1e-9);
        assert_abs_diff_eq!(rm.time, TAU, epsilon = 1e-10);
    }

    #[test]
    fn isochronous_continuum_reports_degenerate() {
        let s = Scenario::s1();
        let sec = SectionSpec::for_scenario(&s);
        let guess = DVector::from_row_slice(&[0.2, 1.0]);
        let out = find_fixed_point(
            &s,
            &named(&s, &[("a2", 1.0), ("b1", 1.0)]),
            0.0,
            &sec,
            &guess,
            1e-8,
            &VerifyOptions::default(),
        );
        assert!(matches!(out, Err(VerifyFailure::Degenerate { .. })));

        // the zero perturbation is degenerate at any eps
        let out = find_fixed_point(
            &s,
            &AffinePerturbation::zero(3),
            1e-2,
            &sec,
            &guess,
            1e-8,
            &VerifyOptions::default(),
        );
        assert!(matches!(out, Err(VerifyFailure::Degenerate { .. })));
    }

    #[test]
    fn s1_worked_example_certifies_near_the_equator() {
        let s = Scenario::s1();
        let sec = SectionSpec::for_scenario(&s);
        let guess = DVector::from_row_slice(&[0.0, 1.0]);
        let cert = find_fixed_point(
            &s,
            &named(&s, &[("a2", 1.0), ("b1", 1.0)]),
            1e-2,
            &sec,
            &guess,
            1e-8,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!(cert.residual < 1e-8);
        assert!((cert.section_point.clone() - guess).abs().max() < 0.05);
        assert_abs_diff_eq!(cert.period, TAU, epsilon = 1e-9);
        // radial multiplier e^{2 pi}, in-sphere multiplier near 1
        let top = cert
            .multipliers
            .iter()
            .map(|m| m.norm())
            .fold(0.0_f64, f64::max);
        assert!((top - TAU.exp()).abs() / TAU.exp() < 0.02);
        // example family keeps the cycle on the invariant sphere
        assert!(cert.radial_deviation.unwrap() < 1e-7);

        // re-integration lands on itself within 2 tol
        let rm = return_map(
            &s,
            &named(&s, &[("a2", 1.0), ("b1", 1.0)]),
            1e-2,
            &sec,
            &cert.section_point,
            &VerifyOptions::default(),
        )
        .unwrap();
        assert!((rm.section - cert.section_point).abs().max() < 2e-8);
    }

    #[test]
    fn sweep_fits_first_order_slope() {
        let s = Scenario::s1();
        let sec = SectionSpec::for_scenario(&s);
        let prediction = s.periodic_orbit_start(&[-PI, 0.0]).unwrap();
        let table = epsilon_sweep(
            &s,
            &named(&s, &[("a2", 1.0), ("b1", 1.0)]),
            &sec,
            &prediction,
            &[1e-2, 5e-3],
            1e-8,
            &VerifyOptions::default(),
            2,
        )
        .unwrap();
        assert!(table.all_certified());
        let slope = table.slope.unwrap();
        assert!((0.8..=1.2).contains(&slope), "slope {slope}");
        let csv = table.to_csv(&s, &sec);
        assert!(csv.starts_with("eps,phi,r,residual,mult1_re,mult1_im,mult2_re,mult2_im,distance,status"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn section_guess_flows_prediction_to_section() {
        let s = Scenario::s1();
        let sec = SectionSpec::for_scenario(&s);
        // a prediction away from the seam keeps phi and r under the drift
        let prediction = s.periodic_orbit_start(&[0.7, 0.2]).unwrap();
        let y = section_guess(&s, &sec, &prediction).unwrap();
        assert_abs_diff_eq!(y[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(y[1], 1.0, epsilon = 1e-12);
    }
}
