//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use nalgebra::{DMatrix, DVector};
use orbit_averager_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

fn named(s: &Scenario, entries: &[(&str, f64)]) -> AffinePerturbation {
    let owned: Vec<(String, f64)> = entries.iter().map(|(n, v)| (n.to_string(), *v)).collect();
    AffinePerturbation::from_named(s, &owned).unwrap()
}

fn example_3() -> (Scenario, AffinePerturbation) {
    let s = Scenario::s1();
    let p = named(&s, &[("a2", 1.0), ("b1", 1.0)]);
    (s, p)
}

fn example_8() -> (Scenario, AffinePerturbation) {
    let s = Scenario::s3();
    let p = named(&s, &[("a2", 2.0), ("b1", 1.0), ("c4", 1.0), ("d3", 1.0)]);
    (s, p)
}

struct Criterion {
    label: &'static str,
    budget: Option<Duration>,
    start: Instant,
}

impl Criterion {
    fn new(label: &'static str, budget: Option<Duration>) -> Self {
        Self {
            label,
            budget,
            start: Instant::now(),
        }
    }

    fn pass(self) {
        let elapsed = self.start.elapsed();
        if let Some(budget) = self.budget {
            assert!(
                elapsed <= budget,
                "{} exceeded its runtime budget: {elapsed:?} > {budget:?}",
                self.label
            );
        }
        println!("ACCEPTANCE {}: PASS ({elapsed:.2?})", self.label);
    }
}

#[test]
fn criterion_1_equator_bifurcation_regression() {
    let (s, p) = example_3();
    let c = Criterion::new("1 equator-bifurcation regression", Some(Duration::from_millis(1)));
    let map = averaged_map(&s, &p).unwrap();
    let root = map.solve_root(&ChartRegion::default());
    let alpha = root.alpha.expect("non-degenerate map");
    assert!((alpha[0] + PI).abs() <= 1e-12, "theta0 = {}", alpha[0]);
    assert!(alpha[1].abs() <= 1e-12, "phi0 = {}", alpha[1]);
    let det = map.jacobian_det();
    let expected = -4.0 * PI * PI;
    assert!(
        (det - expected).abs() <= 1e-12 * expected.abs(),
        "det = {det}"
    );
    c.pass();
}

#[test]
fn criterion_2_two_sphere_linear_system_regression() {
    let s = Scenario::s2();
    let mut rng = ChaCha8Rng::seed_from_u64(1202);
    // sample the perturbations first; the budget covers solve + checks
    let mut cases = Vec::new();
    while cases.len() < 20 {
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let minor = a.view((0, 0), (4, 4)).clone_owned();
        let minor_det = det4(&minor);
        if minor_det.abs() > 0.1 {
            cases.push((AffinePerturbation::new(a, b).unwrap(), minor_det));
        }
    }

    let c = Criterion::new("2 two-sphere linear-system regression", Some(Duration::from_millis(10)));
    for (p, minor_det) in &cases {
        let map = averaged_map(&s, p).unwrap();
        let root = map.solve_root(&ChartRegion::default());
        let alpha = root.alpha.expect("invertible minor");

        // the four equations of the bifurcation linear system, transcribed
        // independently of the engine
        let a = p.matrix();
        let b = p.offset();
        for row in 0..4 {
            let lhs = a[(row, 0)] * alpha[0]
                + a[(row, 1)] * alpha[1]
                + a[(row, 2)] * alpha[2]
                + a[(row, 3)] * alpha[3];
            let rhs = -b[row] - a[(row, 0)] * PI - a[(row, 2)] * PI - a[(row, 4)];
            assert!(
                (lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()),
                "row {row} residual {}",
                lhs - rhs
            );
        }

        let det = map.jacobian_det();
        let expected = 16.0 * PI.powi(4) * minor_det;
        assert!(
            (det - expected).abs() <= 1e-10 * expected.abs(),
            "det {det} vs 16 pi^4 minor {expected}"
        );
    }
    c.pass();
}

/// Explicit 4x4 determinant by cofactor expansion, independent of LU.
fn det4(m: &DMatrix<f64>) -> f64 {
    let mut det = 0.0;
    for j in 0..4 {
        let minor = m.clone().remove_row(0).remove_column(j);
        let d3 = minor[(0, 0)] * (minor[(1, 1)] * minor[(2, 2)] - minor[(1, 2)] * minor[(2, 1)])
            - minor[(0, 1)] * (minor[(1, 0)] * minor[(2, 2)] - minor[(1, 2)] * minor[(2, 0)])
            + minor[(0, 2)] * (minor[(1, 0)] * minor[(2, 1)] - minor[(1, 1)] * minor[(2, 0)]);
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        det += sign * m[(0, j)] * d3;
    }
    det
}

#[test]
fn criterion_3_plane_sphere_regression() {
    let (s, p) = example_8();
    let c = Criterion::new("3 plane-sphere regression", Some(Duration::from_millis(1)));
    let map = averaged_map(&s, &p).unwrap();
    let root = map.solve_root(&ChartRegion::default());
    let alpha = root.alpha.expect("non-degenerate map");
    let expected = [0.0, 0.0, -PI, 0.0];
    for (i, e) in expected.iter().enumerate() {
        assert!(
            (alpha[i] - e).abs() <= 1e-12,
            "component {i}: {} vs {e}",
            alpha[i]
        );
    }
    // both block determinant conditions are nonzero
    let (rotation_block, sphere_block) = map.diagonal_block_determinants(2).unwrap();
    assert!(rotation_block != 0.0 && sphere_block != 0.0);
    // and agree with the coefficient-level conditions
    let (a1, a2, b1, b2) = (0.0, 2.0, 1.0, 0.0);
    let (c3, c4, d3, d4) = (0.0, 1.0, 1.0, 0.0);
    let cond1: f64 = (b2 + a1) * (b2 + a1) + (a2 - b1) * (a2 - b1);
    let cond2: f64 = c3 * d4 - c4 * d3;
    assert!(cond1 != 0.0 && cond2 != 0.0);
    c.pass();
}

#[test]
fn criterion_4_closed_form_against_quadrature_oracle() {
    let c = Criterion::new("4 closed form vs quadrature oracle", Some(Duration::from_secs(5)));
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for s in [Scenario::s1(), Scenario::s2(), Scenario::s3()] {
        let dim = s.dim();
        for case in 0..100 {
            let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
            let p = AffinePerturbation::new(a, b).unwrap();
            let map = averaged_map(&s, &p).unwrap();
            let alpha = DVector::from_fn(s.projection_dim(), |_, _| rng.random_range(-0.5..0.5));
            let closed = map.eval(&alpha).unwrap();
            let quad = numeric_averaged(&s, &p, &alpha, 64).unwrap();
            let gap = (closed - quad).abs().max();
            assert!(gap <= 1e-9, "{} case {case}: oracle gap {gap:.3e}", s.id());
        }
    }
    c.pass();
}

const SWEEP_EPS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

#[test]
fn criterion_5_sphere_line_sweep_certifies_with_first_order_slope() {
    let (s, p) = example_3();
    let c = Criterion::new("5 sphere-line sweep", Some(Duration::from_secs(30)));
    let map = averaged_map(&s, &p).unwrap();
    let root = map.solve_root(&ChartRegion::default());
    let prediction = s
        .periodic_orbit_start(root.alpha.unwrap().as_slice())
        .unwrap();
    let sec = SectionSpec::for_scenario(&s);
    let table = epsilon_sweep(
        &s,
        &p,
        &sec,
        &prediction,
        &SWEEP_EPS,
        1e-8,
        &VerifyOptions::default(),
        4,
    )
    .unwrap();
    assert!(table.all_certified(), "rows: {:?}", table.rows.iter().map(|r| r.status()).collect::<Vec<_>>());
    for row in &table.rows {
        let cert = row.outcome.as_ref().unwrap();
        assert!(cert.residual < 1e-8, "eps {}: residual {}", row.epsilon, cert.residual);
    }
    let slope = table.slope.expect("enough certified rows");
    assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    let last = table.rows.last().unwrap().outcome.as_ref().unwrap();
    let top = last.multipliers.iter().map(|m| m.norm()).fold(0.0_f64, f64::max);
    assert!(
        (top - TAU.exp()).abs() / TAU.exp() <= 0.02,
        "largest multiplier {top} vs e^(2 pi) = {}",
        TAU.exp()
    );
    c.pass();
}

#[test]
fn criterion_6_plane_sphere_sweep_certifies_with_first_order_slope() {
    let (s, p) = example_8();
    let c = Criterion::new("6 plane-sphere sweep", Some(Duration::from_secs(30)));
    let map = averaged_map(&s, &p).unwrap();
    let root = map.solve_root(&ChartRegion::default());
    let prediction = s
        .periodic_orbit_start(root.alpha.unwrap().as_slice())
        .unwrap();
    let sec = SectionSpec::for_scenario(&s);
    let table = epsilon_sweep(
        &s,
        &p,
        &sec,
        &prediction,
        &SWEEP_EPS,
        1e-8,
        &VerifyOptions::default(),
        4,
    )
    .unwrap();
    assert!(table.all_certified(), "rows: {:?}", table.rows.iter().map(|r| r.status()).collect::<Vec<_>>());
    let slope = table.slope.expect("enough certified rows");
    assert!((0.8..=1.2).contains(&slope), "slope {slope}");
    // the unperturbed monodromy is the identity: all return-map multipliers
    // stay near 1
    let last = table.rows.last().unwrap().outcome.as_ref().unwrap();
    for m in &last.multipliers {
        let gap = (m - nalgebra::Complex::new(1.0, 0.0)).norm();
        assert!(gap <= 0.1, "multiplier {m} at distance {gap} from 1");
    }
    c.pass();
}

#[test]
fn criterion_7_monodromy_defect_blocks() {
    let c = Criterion::new("7 monodromy defect", None);
    let expected = 1.0 - (-TAU).exp(); // about 0.998133

    for (s, k) in [(Scenario::s1(), 2usize), (Scenario::s2(), 4usize)] {
        let defect = s.monodromy_defect(k).unwrap();
        assert_eq!(defect.upper_right_norm(), 0.0, "{} upper right", s.id());
        assert!(
            (defect.delta_det() - expected).abs() <= 1e-12,
            "{}: {} vs {expected}",
            s.id(),
            defect.delta_det()
        );
        // everything except the lower-right radial entry vanishes
        let d = defect.matrix();
        for i in 0..s.dim() {
            for j in 0..s.dim() {
                if (i, j) != (s.dim() - 1, s.dim() - 1) {
                    assert_eq!(d[(i, j)], 0.0);
                }
            }
        }
        assert!(defect.condition_holds());
    }

    let defect = Scenario::s3().monodromy_defect(4).unwrap();
    assert_eq!(defect.matrix().abs().max(), 0.0, "defect must vanish");
    assert_eq!(defect.delta_det(), 1.0);
    assert!(defect.condition_holds());
    c.pass();
}

#[test]
fn criterion_8_property_suites_across_seeds() {
    let c = Criterion::new("8 property suites on 10 seeds", None);
    for seed in 0..10 {
        for report in selftest::run_all(seed, None) {
            assert!(
                report.passed(),
                "seed {seed}, suite {}: {:?}",
                report.name,
                report.failures
            );
        }
    }
    c.pass();
}
