//! Seeded property suites used by the selftest command and the acceptance
//! tests: closed forms against quadrature, flow composition, integrator
//! order, and finite-difference recovery of the averaged-map matrix.

use crate::averaging::{averaged_map, numeric_averaged};
use crate::integrand::{ExpTrigTerm, TermSum, Trig};
use crate::manifold::{chart_distance, ChartPoint, CoordKind};
use crate::numerics::{
    finite_difference_jacobian, gauss_legendre_integrate, integrate, IntegratorConfig, Method,
};
use crate::systems::{perturbed_field, AffinePerturbation, Scenario};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};

/// Deliberate corruptions for negative controls: the suites must fail when
/// the thing they check is broken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Injects a spurious constant term into the closed-form integrand
    /// before integration.
    IntegrandTable,
}

/// Result of one property suite.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every suite under one seed.
pub fn run_all(seed: u64, fault: Option<Fault>) -> Vec<SuiteReport> {
    vec![
        integrand_vs_quadrature(seed, 500, fault),
        flow_composition(seed, 100),
        rk4_order_check(),
        fd_jacobian_recovery(seed, 20),
        averaged_map_vs_quadrature(seed, 20),
    ]
}

fn random_term(rng: &mut ChaCha8Rng) -> ExpTrigTerm {
    let coeff = rng.random_range(-2.0..2.0);
    let power = rng.random_range(0..=3u32);
    let rate = *[-2.0, -1.0, 0.0, 1.0, 2.0].iter().nth(rng.random_range(0..5)).unwrap();
    let trig = match rng.random_range(0..3) {
        0 => Trig::None,
        1 => Trig::Sin,
        _ => Trig::Cos,
    };
    let freq = if trig == Trig::None {
        0.0
    } else {
        [1.0, 2.0][rng.random_range(0..2)]
    };
    ExpTrigTerm::new(coeff, power, rate, trig, freq)
}

fn random_perturbation(rng: &mut ChaCha8Rng, dim: usize) -> AffinePerturbation {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let b = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
    AffinePerturbation::new(a, b).expect("finite entries")
}

/// Closed-form definite integrals against a 64-node x 8-panel
/// Gauss-Legendre oracle, relative 1e-10.
pub fn integrand_vs_quadrature(seed: u64, cases: usize, fault: Option<Fault>) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..cases {
        let n_terms = rng.random_range(1..=6);
        let sum = TermSum::from_terms((0..n_terms).map(|_| random_term(&mut rng)));
        let closed_path = match fault {
            Some(Fault::IntegrandTable) => sum.add(&TermSum::constant(1e-3)),
            None => sum.clone(),
        };
        let closed = closed_path.definite_integral(TAU);
        let oracle = gauss_legendre_integrate(|t| sum.eval(t), 0.0, TAU, 64, 8);
        if (closed - oracle).abs() > 1e-10 * (1.0 + oracle.abs()) {
            failures.push(format!(
                "case {case}: closed {closed:.15e} vs quadrature {oracle:.15e}"
            ));
        }
    }
    SuiteReport {
        name: "integrand-vs-quadrature",
        cases,
        failures,
    }
}

/// flow(flow(z, t), u) = flow(z, t + u) to 1e-12 after normalization.
/// Radial starts stay near the invariant value so the exponential factor
/// does not amplify rounding past the tolerance.
pub fn flow_composition(seed: u64, cases_per_scenario: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut cases = 0;
    for s in [Scenario::s1(), Scenario::s2(), Scenario::s3()] {
        for case in 0..cases_per_scenario {
            cases += 1;
            let coords: Vec<f64> = (0..s.dim())
                .map(|i| match s.spec().kind(i) {
                    CoordKind::Azimuth => rng.random_range(-PI..PI),
                    CoordKind::Polar => rng.random_range(-1.2..1.2),
                    CoordKind::Line => 1.0 + rng.random_range(-0.1..0.1),
                })
                .collect();
            let z = ChartPoint::from_slice(s.spec().clone(), &coords).expect("dims match");
            let t: f64 = rng.random_range(-PI..PI);
            let u: f64 = rng.random_range(-PI..PI);
            let two = s.flow(&s.flow(&z, t).unwrap(), u).unwrap();
            let one = s.flow(&z, t + u).unwrap();
            let d = chart_distance(&two, &one).unwrap();
            if d > 1e-12 {
                failures.push(format!("{} case {case}: composition defect {d:.3e}", s.id()));
            }
        }
    }
    SuiteReport {
        name: "flow-composition",
        cases,
        failures,
    }
}

/// Halving the RK4 step must shrink the endpoint error by 16 within 25%.
pub fn rk4_order_check() -> SuiteReport {
    let s = Scenario::s1();
    let field = perturbed_field(&s, &AffinePerturbation::zero(3), 0.0).expect("valid field");
    let z0 = ChartPoint::from_slice(s.spec().clone(), &[0.0, 0.3, 1.1]).expect("dims match");
    let exact = s.flow_unwrapped(&z0, TAU).unwrap();
    let mut errs = Vec::new();
    for h in [TAU / 64.0, TAU / 128.0] {
        let cfg = IntegratorConfig {
            method: Method::Rk4Fixed,
            initial_step: h,
            ..Default::default()
        };
        let traj = integrate(&field, &z0, TAU, &cfg).expect("integration succeeds");
        errs.push((traj.endpoint().coords() - exact.coords()).abs().max());
    }
    let ratio = errs[0] / errs[1];
    let mut failures = Vec::new();
    if !(12.0..=20.0).contains(&ratio) {
        failures.push(format!("error ratio {ratio:.3} outside 16 +- 25%"));
    }
    SuiteReport {
        name: "rk4-order",
        cases: 1,
        failures,
    }
}

/// Central differences on F(alpha) = K alpha + h recover K to 1e-8.
pub fn fd_jacobian_recovery(seed: u64, cases: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let scenarios = [Scenario::s1(), Scenario::s2(), Scenario::s3()];
    for case in 0..cases {
        let s = &scenarios[case % scenarios.len()];
        let p = random_perturbation(&mut rng, s.dim());
        let map = averaged_map(s, &p).expect("dims match");
        let k = map.matrix().clone();
        let eval = move |alpha: &DVector<f64>| map.eval(alpha).expect("dims match");
        let at = DVector::from_fn(s.projection_dim(), |_, _| rng.random_range(-0.5..0.5));
        let jac = finite_difference_jacobian(&eval, &at, 1e-5);
        let err = (jac - k).abs().max();
        if err > 1e-8 {
            failures.push(format!("{} case {case}: FD error {err:.3e}", s.id()));
        }
    }
    SuiteReport {
        name: "fd-jacobian-recovery",
        cases,
        failures,
    }
}

/// Closed-form averaged map against the 64-node quadrature oracle, max
/// component error 1e-9.
pub fn averaged_map_vs_quadrature(seed: u64, cases_per_scenario: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut cases = 0;
    for s in [Scenario::s1(), Scenario::s2(), Scenario::s3()] {
        for case in 0..cases_per_scenario {
            cases += 1;
            let p = random_perturbation(&mut rng, s.dim());
            let map = averaged_map(&s, &p).expect("dims match");
            let alpha = DVector::from_fn(s.projection_dim(), |_, _| rng.random_range(-0.5..0.5));
            let closed = map.eval(&alpha).expect("dims match");
            let quad = numeric_averaged(&s, &p, &alpha, 64).expect("dims match");
            let err = (closed - quad).abs().max();
            if err > 1e-9 {
                failures.push(format!("{} case {case}: oracle gap {err:.3e}", s.id()));
            }
        }
    }
    SuiteReport {
        name: "averaged-map-vs-quadrature",
        cases,
        failures,
    }
}
