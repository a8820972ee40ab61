//! Shared fixtures for the benchmark targets.

use nalgebra::{DMatrix, DVector};
use orbit_averager_core::{AffinePerturbation, Scenario};

/// The worked sphere-times-line perturbation (a2 = b1 = 1).
pub fn s1_worked() -> (Scenario, AffinePerturbation) {
    let s = Scenario::s1();
    let entries = vec![("a2".to_string(), 1.0), ("b1".to_string(), 1.0)];
    let p = AffinePerturbation::from_named(&s, &entries).expect("valid coefficients");
    (s, p)
}

/// A dense two-sphere perturbation with every coefficient populated.
pub fn s2_dense() -> (Scenario, AffinePerturbation) {
    let s = Scenario::s2();
    let dim = s.dim();
    let a = DMatrix::from_fn(dim, dim, |i, j| ((i * dim + j) as f64 * 0.37).sin());
    let b = DVector::from_fn(dim, |i, _| (i as f64 * 0.71).cos());
    let p = AffinePerturbation::new(a, b).expect("finite entries");
    (s, p)
}
