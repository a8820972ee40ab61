//! General-purpose ODE integration with tangent propagation.
//!
//! This is the independent oracle path: nothing here touches the closed-form
//! algebra. Two methods are provided, a fixed-step classical RK4 and an
//! adaptive Dormand-Prince 5(4) pair with local extrapolation. Section
//! crossings are located by bisection on honestly re-integrated states, not
//! on interpolants, so event states inherit the integrator accuracy.

use crate::error::{Error, Result};
use crate::manifold::{ChartPoint, ChartRegion};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::PI;

/// Right-hand side of an autonomous ODE in chart coordinates.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, y: &DVector<f64>) -> DVector<f64>;
}

/// A field with a known Jacobian, enough to propagate tangent matrices.
pub trait LinearizableField: VectorField {
    fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64>;
}

/// Integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Classical RK4 with fixed step `initial_step`.
    Rk4Fixed,
    /// Dormand-Prince 5(4) with embedded error control.
    Rk45Adaptive,
}

/// Integrator settings. Residual verification downstream needs errors well
/// below the smallest swept epsilon, hence the tight defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Never exceeds one sixteenth of the period 2 pi.
    pub max_step: f64,
    /// First trial step; also the fixed step of [`Method::Rk4Fixed`].
    pub initial_step: f64,
    /// Working region; accepted steps outside it stop the integration with a
    /// boundary-exit report.
    pub region: Option<ChartRegion>,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_step: PI / 8.0,
            initial_step: 1e-3,
            region: None,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter {
                name: "tolerance",
                reason: "tolerances must be positive",
            });
        }
        if !(self.max_step > 0.0 && self.max_step <= 2.0 * PI / 16.0) {
            return Err(Error::InvalidParameter {
                name: "max_step",
                reason: "max step must lie in (0, T/16] with T = 2 pi",
            });
        }
        if !(self.initial_step > 0.0) {
            return Err(Error::InvalidParameter {
                name: "initial_step",
                reason: "initial step must be positive",
            });
        }
        Ok(())
    }
}

/// How an integration ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Completed,
    /// The trajectory left the working region at the given time; the
    /// trajectory is truncated there.
    BoundaryExit { time: f64 },
}

/// Non-fatal observations raised along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Warning {
    pub time: f64,
    pub kind: WarningKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WarningKind {
    /// A sample came within the pole margin of phi = +-pi/2.
    NearPole,
}

/// Sampled solution with unwrapped angles. Dense output between samples is
/// linear interpolation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ChartPoint>,
    pub tangents: Option<Vec<DMatrix<f64>>>,
    pub outcome: Outcome,
    pub warnings: Vec<Warning>,
}

impl Trajectory {
    pub fn endpoint(&self) -> &ChartPoint {
        self.states.last().expect("trajectory has at least the initial state")
    }

    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("trajectory has at least the initial time")
    }

    /// Linear interpolation between the two samples bracketing `t`.
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let times = &self.times;
        if t <= times[0] {
            return self.states[0].coords().clone();
        }
        if t >= *times.last().unwrap() {
            return self.endpoint().coords().clone();
        }
        let i = times.partition_point(|&ti| ti <= t) - 1;
        let (t0, t1) = (times[i], times[i + 1]);
        let w = (t - t0) / (t1 - t0);
        self.states[i].coords() * (1.0 - w) + self.states[i + 1].coords() * w
    }
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
/// Below this step the problem counts as stiff for the explicit pair.
fn min_step(t: f64) -> f64 {
    1e-13 * (1.0 + t.abs())
}

/// One classical RK4 step.
fn rk4_step(field: &dyn VectorField, y: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = field.eval(y);
    let k2 = field.eval(&(y + &k1 * (h / 2.0)));
    let k3 = field.eval(&(y + &k2 * (h / 2.0)));
    let k4 = field.eval(&(y + &k3 * h));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// One Dormand-Prince 5(4) step: returns the 5th-order solution and the
/// normalized error estimate of the embedded 4th-order one.
fn dopri5_step(
    field: &dyn VectorField,
    y: &DVector<f64>,
    h: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> (DVector<f64>, f64) {
    let k1 = field.eval(y);
    let k2 = field.eval(&(y + &k1 * (h * 0.2)));
    let k3 = field.eval(&(y + &k1 * (h * 3.0 / 40.0) + &k2 * (h * 9.0 / 40.0)));
    let k4 = field.eval(
        &(y + &k1 * (h * 44.0 / 45.0) - &k2 * (h * 56.0 / 15.0) + &k3 * (h * 32.0 / 9.0)),
    );
    let k5 = field.eval(
        &(y + &k1 * (h * 19372.0 / 6561.0) - &k2 * (h * 25360.0 / 2187.0)
            + &k3 * (h * 64448.0 / 6561.0)
            - &k4 * (h * 212.0 / 729.0)),
    );
    let k6 = field.eval(
        &(y + &k1 * (h * 9017.0 / 3168.0) - &k2 * (h * 355.0 / 33.0)
            + &k3 * (h * 46732.0 / 5247.0)
            + &k4 * (h * 49.0 / 176.0)
            - &k5 * (h * 5103.0 / 18656.0)),
    );
    let y5 = y
        + &k1 * (h * 35.0 / 384.0)
        + &k3 * (h * 500.0 / 1113.0)
        + &k4 * (h * 125.0 / 192.0)
        - &k5 * (h * 2187.0 / 6784.0)
        + &k6 * (h * 11.0 / 84.0);
    let k7 = field.eval(&y5);
    let err = &k1 * (h * 71.0 / 57600.0) - &k3 * (h * 71.0 / 16695.0)
        + &k4 * (h * 71.0 / 1920.0)
        - &k5 * (h * 17253.0 / 339200.0)
        + &k6 * (h * 22.0 / 525.0)
        - &k7 * (h / 40.0);

    let mut norm: f64 = 0.0;
    for i in 0..y.len() {
        if !y5[i].is_finite() {
            return (y5, f64::INFINITY);
        }
        let scale = abs_tol + rel_tol * y[i].abs().max(y5[i].abs());
        let e = (err[i] / scale).abs();
        if !e.is_finite() {
            return (y5, f64::INFINITY);
        }
        norm = norm.max(e);
    }
    (y5, norm)
}

fn grow_factor(err: f64) -> f64 {
    if err == 0.0 {
        MAX_FACTOR
    } else {
        (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
    }
}

fn shrink_factor(err: f64) -> f64 {
    if err.is_finite() {
        (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0)
    } else {
        MIN_FACTOR
    }
}

/// Advances state from `t0` to exactly `t1` with no event or region checks.
/// This is the workhorse behind crossing refinement and the raw drivers.
fn propagate_raw(
    field: &dyn VectorField,
    y0: &DVector<f64>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
) -> Result<DVector<f64>> {
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(y0.clone());
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0.clone();
    match cfg.method {
        Method::Rk4Fixed => {
            let h = cfg.initial_step.min(cfg.max_step) * dir;
            while (t1 - t) * dir > 0.0 {
                let step = if (t1 - t).abs() < h.abs() { t1 - t } else { h };
                y = rk4_step(field, &y, step);
                t += step;
            }
            Ok(y)
        }
        Method::Rk45Adaptive => {
            let mut h = cfg.initial_step.min(cfg.max_step).min(span.abs()) * dir;
            while (t1 - t) * dir > 0.0 {
                if h.abs() > (t1 - t).abs() {
                    h = t1 - t;
                }
                let (y_new, err) = dopri5_step(field, &y, h, cfg.abs_tol, cfg.rel_tol);
                if err <= 1.0 {
                    t += h;
                    y = y_new;
                    h = (h.abs() * grow_factor(err)).min(cfg.max_step) * dir;
                } else {
                    h = h.abs() * shrink_factor(err) * dir;
                }
                if h.abs() < min_step(t) {
                    return Err(Error::Stiffness { t });
                }
            }
            Ok(y)
        }
    }
}

struct AcceptedStep<'a> {
    t_prev: f64,
    y_prev: &'a DVector<f64>,
    t: f64,
    y: &'a DVector<f64>,
}

/// Runs the configured method from `t0` to `t_end`, invoking `on_accept`
/// after every accepted step. The callback may halt the run early.
fn drive(
    field: &dyn VectorField,
    y0: &DVector<f64>,
    t0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
    mut on_accept: impl FnMut(AcceptedStep<'_>) -> std::ops::ControlFlow<()>,
) -> Result<()> {
    cfg.validate()?;
    let span = t_end - t0;
    if span == 0.0 {
        return Ok(());
    }
    let dir = span.signum();
    let mut t = t0;
    let mut y = y0.clone();
    let mut h = cfg.initial_step.min(cfg.max_step).min(span.abs()) * dir;
    loop {
        if (t_end - t) * dir <= 0.0 {
            return Ok(());
        }
        if h.abs() > (t_end - t).abs() {
            h = t_end - t;
        }
        let (y_new, accepted, err) = match cfg.method {
            Method::Rk4Fixed => (rk4_step(field, &y, h), true, 0.0),
            Method::Rk45Adaptive => {
                let (y_new, err) = dopri5_step(field, &y, h, cfg.abs_tol, cfg.rel_tol);
                (y_new, err <= 1.0, err)
            }
        };
        if accepted {
            let t_new = t + h;
            let flow = on_accept(AcceptedStep {
                t_prev: t,
                y_prev: &y,
                t: t_new,
                y: &y_new,
            });
            t = t_new;
            y = y_new;
            if flow.is_break() {
                return Ok(());
            }
            if cfg.method == Method::Rk45Adaptive {
                h = (h.abs() * grow_factor(err)).min(cfg.max_step) * dir;
            }
        } else {
            h = h.abs() * shrink_factor(err) * dir;
            if h.abs() < min_step(t) {
                return Err(Error::Stiffness { t });
            }
        }
    }
}

/// Integrates the field from `z0` over [0, t_end], sampling at every
/// accepted step. Region exits truncate the trajectory and are reported in
/// the outcome, not as errors; near-pole samples raise warnings.
pub fn integrate(
    field: &dyn VectorField,
    z0: &ChartPoint,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if field.dim() != z0.spec().dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            actual: z0.spec().dim(),
        });
    }
    let spec = z0.spec().clone();
    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    let mut warnings = Vec::new();
    let mut warned_pole = false;
    let mut outcome = Outcome::Completed;

    drive(field, z0.coords(), 0.0, t_end, cfg, |step| {
        let point = ChartPoint::new(spec.clone(), step.y.clone()).expect("dimension preserved");
        if !warned_pole && point.near_pole() {
            warnings.push(Warning {
                time: step.t,
                kind: WarningKind::NearPole,
            });
            warned_pole = true;
        }
        let exited = cfg.region.as_ref().is_some_and(|r| !r.contains(&point));
        times.push(step.t);
        states.push(point);
        if exited {
            outcome = Outcome::BoundaryExit { time: step.t };
            std::ops::ControlFlow::Break(())
        } else {
            std::ops::ControlFlow::Continue(())
        }
    })?;

    Ok(Trajectory {
        times,
        states,
        tangents: None,
        outcome,
        warnings,
    })
}

/// Result of hunting for a positive-direction zero crossing of an event
/// function along a flight.
#[derive(Debug, Clone)]
pub enum EventOutcome {
    /// The event function crossed from negative to non-negative; the state
    /// is resolved at the crossing time (bisection to 1e-12 in time).
    Crossed {
        time: f64,
        state: ChartPoint,
        warnings: Vec<Warning>,
    },
    BoundaryExit {
        time: f64,
    },
    NoCrossing,
}

/// Integrates forward until the event function crosses zero from below, the
/// region is exited, or `t_max` is reached.
pub fn integrate_to_crossing(
    field: &dyn VectorField,
    z0: &ChartPoint,
    event: &dyn Fn(&DVector<f64>) -> f64,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<EventOutcome> {
    if field.dim() != z0.spec().dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            actual: z0.spec().dim(),
        });
    }
    let spec = z0.spec().clone();
    let mut warnings = Vec::new();
    let mut warned_pole = false;
    let mut result: Option<std::result::Result<(f64, DVector<f64>, f64), f64>> = None;
    let mut g_prev = event(z0.coords());

    drive(field, z0.coords(), 0.0, t_max, cfg, |step| {
        let g_new = event(step.y);
        if g_prev < 0.0 && g_new >= 0.0 {
            result = Some(Ok((step.t_prev, step.y_prev.clone(), step.t)));
            return std::ops::ControlFlow::Break(());
        }
        g_prev = g_new;
        let point = ChartPoint::new(spec.clone(), step.y.clone()).expect("dimension preserved");
        if !warned_pole && point.near_pole() {
            warnings.push(Warning {
                time: step.t,
                kind: WarningKind::NearPole,
            });
            warned_pole = true;
        }
        if cfg.region.as_ref().is_some_and(|r| !r.contains(&point)) {
            result = Some(Err(step.t));
            return std::ops::ControlFlow::Break(());
        }
        std::ops::ControlFlow::Continue(())
    })?;

    match result {
        None => Ok(EventOutcome::NoCrossing),
        Some(Err(time)) => Ok(EventOutcome::BoundaryExit { time }),
        Some(Ok((t_lo0, y_lo0, t_hi0))) => {
            // bisection on re-integrated states; the left bracket state moves
            // forward so each evaluation integrates only a short hop
            let mut t_lo = t_lo0;
            let mut y_lo = y_lo0;
            let mut t_hi = t_hi0;
            while t_hi - t_lo > 1e-12 {
                let mid = 0.5 * (t_lo + t_hi);
                let y_mid = propagate_raw(field, &y_lo, t_lo, mid, cfg)?;
                if event(&y_mid) >= 0.0 {
                    t_hi = mid;
                } else {
                    t_lo = mid;
                    y_lo = y_mid;
                }
            }
            let y_cross = propagate_raw(field, &y_lo, t_lo, t_hi, cfg)?;
            Ok(EventOutcome::Crossed {
                time: t_hi,
                state: ChartPoint::new(spec, y_cross)?,
                warnings,
            })
        }
    }
}

/// Like [`integrate`], but also carries the tangent matrix M(t) of the
/// variational equation at every sample (M(0) = I).
pub fn integrate_with_tangents(
    field: &dyn LinearizableField,
    z0: &ChartPoint,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let d = field.dim();
    if d != z0.spec().dim() {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: z0.spec().dim(),
        });
    }
    let spec = z0.spec().clone();
    let augmented = AugmentedField { base: field, d };
    let mut w0 = DVector::zeros(d + d * d);
    for i in 0..d {
        w0[i] = z0.coords()[i];
        w0[d + i * d + i] = 1.0;
    }
    let unpack = |w: &DVector<f64>| {
        let mut m = DMatrix::zeros(d, d);
        for col in 0..d {
            for row in 0..d {
                m[(row, col)] = w[d + col * d + row];
            }
        }
        m
    };

    let mut times = vec![0.0];
    let mut states = vec![z0.clone()];
    let mut tangents = vec![DMatrix::identity(d, d)];
    let mut warnings = Vec::new();
    let mut warned_pole = false;
    let mut outcome = Outcome::Completed;
    drive(&augmented, &w0, 0.0, t_end, cfg, |step| {
        let point = ChartPoint::new(spec.clone(), step.y.rows(0, d).clone_owned())
            .expect("dimension preserved");
        if !warned_pole && point.near_pole() {
            warnings.push(Warning {
                time: step.t,
                kind: WarningKind::NearPole,
            });
            warned_pole = true;
        }
        let exited = cfg.region.as_ref().is_some_and(|r| !r.contains(&point));
        times.push(step.t);
        states.push(point);
        tangents.push(unpack(step.y));
        if exited {
            outcome = Outcome::BoundaryExit { time: step.t };
            std::ops::ControlFlow::Break(())
        } else {
            std::ops::ControlFlow::Continue(())
        }
    })?;
    Ok(Trajectory {
        times,
        states,
        tangents: Some(tangents),
        outcome,
        warnings,
    })
}

/// Advances a chart state over a signed time span with no sampling, event
/// or region handling.
pub fn advance_state(
    field: &dyn VectorField,
    z0: &ChartPoint,
    span: f64,
    cfg: &IntegratorConfig,
) -> Result<ChartPoint> {
    if field.dim() != z0.spec().dim() {
        return Err(Error::DimensionMismatch {
            expected: field.dim(),
            actual: z0.spec().dim(),
        });
    }
    cfg.validate()?;
    let y = propagate_raw(field, z0.coords(), 0.0, span, cfg)?;
    ChartPoint::new(z0.spec().clone(), y)
}

/// Propagates the tangent matrix alongside the state: M' = DF(x(t)) M with
/// M(0) = I. At eps = 0 this reproduces the closed-form fundamental matrix.
pub fn monodromy_numeric(
    field: &dyn LinearizableField,
    z0: &ChartPoint,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<DMatrix<f64>> {
    let d = field.dim();
    if d != z0.spec().dim() {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: z0.spec().dim(),
        });
    }
    cfg.validate()?;
    let augmented = AugmentedField { base: field, d };
    let mut w0 = DVector::zeros(d + d * d);
    for i in 0..d {
        w0[i] = z0.coords()[i];
        w0[d + i * d + i] = 1.0; // identity tangent, column-major
    }
    let w = propagate_raw(&augmented, &w0, 0.0, t_end, cfg)?;
    let mut m = DMatrix::zeros(d, d);
    for col in 0..d {
        for row in 0..d {
            m[(row, col)] = w[d + col * d + row];
        }
    }
    Ok(m)
}

struct AugmentedField<'a> {
    base: &'a dyn LinearizableField,
    d: usize,
}

impl VectorField for AugmentedField<'_> {
    fn dim(&self) -> usize {
        self.d + self.d * self.d
    }

    fn eval(&self, w: &DVector<f64>) -> DVector<f64> {
        let d = self.d;
        let y = w.rows(0, d).clone_owned();
        let j = self.base.jacobian(&y);
        let mut out = DVector::zeros(d + d * d);
        out.rows_mut(0, d).copy_from(&self.base.eval(&y));
        for col in 0..d {
            let m_col = w.rows(d + col * d, d).clone_owned();
            out.rows_mut(d + col * d, d).copy_from(&(&j * m_col));
        }
        out
    }
}

/// Central-difference Jacobian of a vector map.
pub fn finite_difference_jacobian(
    map: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    at: &DVector<f64>,
    step: f64,
) -> DMatrix<f64> {
    let n = at.len();
    let probe = map(at);
    let mut jac = DMatrix::zeros(probe.len(), n);
    for j in 0..n {
        let mut plus = at.clone();
        let mut minus = at.clone();
        plus[j] += step;
        minus[j] -= step;
        let diff = (map(&plus) - map(&minus)) / (2.0 * step);
        jac.set_column(j, &diff);
    }
    jac
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature order must be at least 1");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    nodes.reverse();
    weights.reverse();
    (nodes, weights)
}

/// Legendre polynomial P_n and its derivative at x.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Composite Gauss-Legendre quadrature of `f` over [a, b].
pub fn gauss_legendre_integrate(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    nodes: usize,
    panels: usize,
) -> f64 {
    let (xs, ws) = gauss_legendre(nodes);
    let panel_width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * panel_width;
        let mid = lo + 0.5 * panel_width;
        let half = 0.5 * panel_width;
        for (x, w) in xs.iter().zip(&ws) {
            total += w * f(mid + half * x);
        }
    }
    total * 0.5 * panel_width
}
