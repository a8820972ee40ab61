//! The averaging engine.
//!
//! For an affine perturbation F1(z) = A z + b along the isochronous flows of
//! this crate, the averaged function
//!
//!   F(alpha) = xi( integral_0^T M^{-1}(t) F1(x(t, z_alpha, 0)) dt )
//!
//! is itself affine in alpha. The engine substitutes the closed-form
//! periodic solution into F1 symbolically (every entry is a [`TermSum`] in
//! t), multiplies by the inverse fundamental matrix, integrates exactly over
//! [0, 2 pi], and factors the result as F(alpha) = K alpha + h. Roots are
//! obtained by a direct linear solve of K alpha = -h, never by transcribing
//! printed root formulas. A Gauss-Legendre quadrature of the same integral,
//! built only on the numeric flow, serves as the independent oracle.

use crate::error::{Error, Result};
use crate::integrand::{ExpTrigTerm, TermSum};
use crate::manifold::ChartRegion;
use crate::numerics::gauss_legendre;
use crate::systems::{AffinePerturbation, Block, Scenario, ScenarioId};
use nalgebra::{DMatrix, DVector};
use std::f64::consts::{PI, TAU};

/// A quantity affine in alpha whose constant part and alpha-coefficients are
/// functions of t from the exp-trig class.
#[derive(Debug, Clone)]
struct AffineExpr {
    constant: TermSum,
    coeffs: Vec<TermSum>,
}

impl AffineExpr {
    fn zero(k: usize) -> Self {
        Self {
            constant: TermSum::zero(),
            coeffs: vec![TermSum::zero(); k],
        }
    }

    fn add(&self, other: &Self) -> Self {
        Self {
            constant: self.constant.add(&other.constant),
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a.add(b))
                .collect(),
        }
    }

    fn scale(&self, c: f64) -> Self {
        Self {
            constant: self.constant.scale(c),
            coeffs: self.coeffs.iter().map(|s| s.scale(c)).collect(),
        }
    }

    fn mul_sum(&self, factor: &TermSum) -> Self {
        Self {
            constant: self.constant.mul(factor),
            coeffs: self.coeffs.iter().map(|s| s.mul(factor)).collect(),
        }
    }
}

/// Audit record of one averaged-map component: the integrand of the
/// component before integration, split into its constant part and its
/// alpha-coefficients.
#[derive(Debug, Clone)]
pub struct ComponentExpression {
    pub constant: TermSum,
    pub alpha_coeffs: Vec<TermSum>,
}

/// The affine representation F(alpha) = K alpha + h of the averaged
/// function. All constant factors (the 2 pi or pi coming out of the
/// integrals) are absorbed into K and h; `scale` records the scenario's
/// natural common factor for display only.
#[derive(Debug, Clone)]
pub struct AveragedMap {
    scenario: Scenario,
    matrix: DMatrix<f64>,
    offset: DVector<f64>,
    scale: f64,
    components: Vec<ComponentExpression>,
}

/// Outcome of solving F = 0.
#[derive(Debug, Clone)]
pub struct RootResult {
    /// Present iff the map is non-degenerate.
    pub alpha: Option<DVector<f64>>,
    /// det K = det(DF).
    pub det: f64,
    /// Whether z_alpha lies inside the supplied region.
    pub in_region: bool,
    /// |det K| below the singular threshold.
    pub degenerate: bool,
}

impl AveragedMap {
    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    /// Projection dimension k.
    pub fn k(&self) -> usize {
        self.offset.len()
    }

    /// The k x k matrix K.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The offset h.
    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    /// Scenario's natural common factor (2 pi for the sphere-times-line
    /// scenarios, pi for the plane-times-sphere one); informational.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Per-component integrand provenance.
    pub fn components(&self) -> &[ComponentExpression] {
        &self.components
    }

    /// F(alpha) = K alpha + h.
    pub fn eval(&self, alpha: &DVector<f64>) -> Result<DVector<f64>> {
        if alpha.len() != self.k() {
            return Err(Error::DimensionMismatch {
                expected: self.k(),
                actual: alpha.len(),
            });
        }
        Ok(&self.matrix * alpha + &self.offset)
    }

    /// det(DF) = det K, exact up to floating rounding.
    pub fn jacobian_det(&self) -> f64 {
        self.matrix.clone().determinant()
    }

    /// Scale-aware absolute floor below which the map counts as degenerate.
    pub fn singular_threshold(&self) -> f64 {
        let norm_inf = (0..self.matrix.nrows())
            .map(|i| self.matrix.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0_f64, f64::max);
        1e-12 * (1.0 + norm_inf.powi(self.k() as i32))
    }

    /// Determinants of the two leading diagonal blocks split at `split`.
    /// For the plane-times-sphere scenario with split = 2 these are the
    /// rotation-block and sphere-block conditions.
    pub fn diagonal_block_determinants(&self, split: usize) -> Result<(f64, f64)> {
        let k = self.k();
        if split == 0 || split >= k {
            return Err(Error::InvalidParameter {
                name: "split",
                reason: "block split must lie strictly inside the map dimension",
            });
        }
        let top = self.matrix.view((0, 0), (split, split)).clone_owned();
        let bottom = self
            .matrix
            .view((split, split), (k - split, k - split))
            .clone_owned();
        Ok((top.determinant(), bottom.determinant()))
    }

    /// Solves K alpha = -h by a direct linear solve and reports whether the
    /// bifurcation point z_alpha lies in the region. A map with |det K| at
    /// or below the singular threshold yields a degenerate result, not an
    /// error.
    pub fn solve_root(&self, region: &ChartRegion) -> RootResult {
        let det = self.jacobian_det();
        if det.abs() <= self.singular_threshold() {
            return RootResult {
                alpha: None,
                det,
                in_region: false,
                degenerate: true,
            };
        }
        let lu = self.matrix.clone().lu();
        match lu.solve(&(-&self.offset)) {
            Some(alpha) => {
                let in_region = self
                    .scenario
                    .periodic_orbit_start(alpha.as_slice())
                    .and_then(|z| z.normalize())
                    .map(|z| region.contains(&z))
                    .unwrap_or(false);
                RootResult {
                    alpha: Some(alpha),
                    det,
                    in_region,
                    degenerate: false,
                }
            }
            None => RootResult {
                alpha: None,
                det,
                in_region: false,
                degenerate: true,
            },
        }
    }
}

/// Closed-form periodic solution x(t, z_alpha, 0) with each coordinate
/// affine in alpha.
fn symbolic_solution(scenario: &Scenario) -> Result<Vec<AffineExpr>> {
    let k = scenario.projection_dim();
    let dim = scenario.dim();
    let mut sol = vec![AffineExpr::zero(k); dim];
    for &(block, i) in scenario.blocks() {
        match block {
            Block::Drift => {
                if i >= k {
                    return Err(Error::UnsupportedProjection { index: i });
                }
                sol[i].constant = TermSum::from_term(ExpTrigTerm::monomial(1.0, 1));
                sol[i].coeffs[i] = TermSum::constant(1.0);
            }
            Block::Constant => {
                if i >= k {
                    return Err(Error::UnsupportedProjection { index: i });
                }
                sol[i].coeffs[i] = TermSum::constant(1.0);
            }
            Block::Radial => {
                if i < k {
                    return Err(Error::UnsupportedProjection { index: i });
                }
                // the isochronous slice pins r = 1
                sol[i].constant = TermSum::constant(1.0);
            }
            Block::Rotation => {
                if i + 1 >= k {
                    return Err(Error::UnsupportedProjection { index: i + 1 });
                }
                sol[i].coeffs[i] = TermSum::from_term(ExpTrigTerm::cos(1.0, 1.0));
                sol[i].coeffs[i + 1] = TermSum::from_term(ExpTrigTerm::sin(-1.0, 1.0));
                sol[i + 1].coeffs[i] = TermSum::from_term(ExpTrigTerm::sin(1.0, 1.0));
                sol[i + 1].coeffs[i + 1] = TermSum::from_term(ExpTrigTerm::cos(1.0, 1.0));
            }
        }
    }
    Ok(sol)
}

/// M^{-1}(t) with every entry a [`TermSum`].
fn symbolic_inverse_fundamental(scenario: &Scenario) -> Vec<Vec<TermSum>> {
    let dim = scenario.dim();
    let mut m = vec![vec![TermSum::zero(); dim]; dim];
    for i in 0..dim {
        m[i][i] = TermSum::constant(1.0);
    }
    for &(block, i) in scenario.blocks() {
        match block {
            Block::Drift | Block::Constant => {}
            Block::Radial => {
                m[i][i] = TermSum::from_term(ExpTrigTerm::exponential(1.0, -1.0));
            }
            Block::Rotation => {
                m[i][i] = TermSum::from_term(ExpTrigTerm::cos(1.0, 1.0));
                m[i][i + 1] = TermSum::from_term(ExpTrigTerm::sin(1.0, 1.0));
                m[i + 1][i] = TermSum::from_term(ExpTrigTerm::sin(-1.0, 1.0));
                m[i + 1][i + 1] = TermSum::from_term(ExpTrigTerm::cos(1.0, 1.0));
            }
        }
    }
    m
}

/// Builds the averaged map of a scenario under an affine perturbation in
/// closed form.
pub fn averaged_map(scenario: &Scenario, perturbation: &AffinePerturbation) -> Result<AveragedMap> {
    perturbation.validate_for(scenario)?;
    let k = scenario.projection_dim();
    let dim = scenario.dim();
    let period = scenario.period();
    let sol = symbolic_solution(scenario)?;
    let minv = symbolic_inverse_fundamental(scenario);

    // F1 rows along the periodic solution, affine in alpha
    let rows: Vec<AffineExpr> = (0..dim)
        .map(|l| {
            let mut row = AffineExpr::zero(k);
            row.constant = TermSum::constant(perturbation.offset()[l]);
            for (j, coord) in sol.iter().enumerate() {
                let c = perturbation.matrix()[(l, j)];
                if c != 0.0 {
                    row = row.add(&coord.scale(c));
                }
            }
            row
        })
        .collect();

    let mut matrix = DMatrix::zeros(k, k);
    let mut offset = DVector::zeros(k);
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let mut integrand = AffineExpr::zero(k);
        for (l, row) in rows.iter().enumerate() {
            if !minv[i][l].is_zero() {
                integrand = integrand.add(&row.mul_sum(&minv[i][l]));
            }
        }
        offset[i] = integrand.constant.definite_integral(period);
        for j in 0..k {
            matrix[(i, j)] = integrand.coeffs[j].definite_integral(period);
        }
        components.push(ComponentExpression {
            constant: integrand.constant.clone(),
            alpha_coeffs: integrand.coeffs.clone(),
        });
    }

    let scale = match scenario.id() {
        ScenarioId::S1 | ScenarioId::S2 => TAU,
        ScenarioId::S3 => PI,
    };
    Ok(AveragedMap {
        scenario: scenario.clone(),
        matrix,
        offset,
        scale,
        components,
    })
}

/// Gauss-Legendre quadrature of xi(M^{-1}(t) F1(x(t, z_alpha, 0))) over one
/// period. Built on the numeric flow only; this is the oracle against the
/// closed form.
pub fn numeric_averaged(
    scenario: &Scenario,
    perturbation: &AffinePerturbation,
    alpha: &DVector<f64>,
    nodes: usize,
) -> Result<DVector<f64>> {
    if nodes < 16 {
        return Err(Error::InvalidParameter {
            name: "nodes",
            reason: "quadrature needs at least 16 nodes",
        });
    }
    perturbation.validate_for(scenario)?;
    let k = scenario.projection_dim();
    let z = scenario.periodic_orbit_start(alpha.as_slice())?;
    let period = scenario.period();
    let (xs, ws) = gauss_legendre(nodes);
    let mut acc = DVector::zeros(k);
    for (x, w) in xs.iter().zip(&ws) {
        let t = 0.5 * period * (x + 1.0);
        // the solution is left unwrapped: the averaged integrand reads the
        // chart coordinates of the covering-space solution
        let state = scenario.flow_raw(z.coords(), t);
        let f1 = perturbation.eval(&state);
        let v = scenario.fundamental_matrix_inverse(t) * f1;
        acc += v.rows(0, k) * *w;
    }
    Ok(acc * (0.5 * period))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn named(s: &Scenario, entries: &[(&str, f64)]) -> AffinePerturbation {
        let owned: Vec<(String, f64)> =
            entries.iter().map(|(n, v)| (n.to_string(), *v)).collect();
        AffinePerturbation::from_named(s, &owned).unwrap()
    }

    fn random_perturbation(rng: &mut ChaCha8Rng, dim: usize) -> AffinePerturbation {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        let b = DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0));
        AffinePerturbation::new(a, b).unwrap()
    }

    #[test]
    fn s1_worked_example_map() {
        // theta' = 1 + eps a phi, phi' = eps b theta gives
        // F(theta0, phi0) = (2 pi a phi0, 2 pi b (theta0 + pi))
        let s = Scenario::s1();
        let (a, b) = (1.7, -0.6);
        let map = averaged_map(&s, &named(&s, &[("a2", a), ("b1", b)])).unwrap();
        assert_abs_diff_eq!(map.matrix()[(0, 0)], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(map.matrix()[(0, 1)], TAU * a, epsilon = 1e-13);
        assert_abs_diff_eq!(map.matrix()[(1, 0)], TAU * b, epsilon = 1e-13);
        assert_abs_diff_eq!(map.matrix()[(1, 1)], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(map.offset()[0], 0.0, epsilon = 0.0);
        assert_abs_diff_eq!(map.offset()[1], TAU * PI * b, epsilon = 1e-12);

        let alpha = DVector::from_row_slice(&[0.3, -0.2]);
        let f = map.eval(&alpha).unwrap();
        assert_abs_diff_eq!(f[0], TAU * a * -0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(f[1], TAU * b * (0.3 + PI), epsilon = 1e-12);
    }

    #[test]
    fn zero_perturbation_gives_zero_map() {
        let s = Scenario::s1();
        let map = averaged_map(&s, &AffinePerturbation::zero(3)).unwrap();
        assert_eq!(map.matrix().abs().max(), 0.0);
        assert_eq!(map.offset().abs().max(), 0.0);
        let root = map.solve_root(&ChartRegion::default());
        assert!(root.degenerate);
        assert!(root.alpha.is_none());
    }

    #[test]
    fn s3_worked_example_components() {
        // a2 = a, b1 = b: the first component reduces to pi (a - b) y0
        let s = Scenario::s3();
        let (a, b) = (2.0, 1.0);
        let map = averaged_map(
            &s,
            &named(&s, &[("a2", a), ("b1", b), ("c4", 1.0), ("d3", 1.0)]),
        )
        .unwrap();
        let k = map.matrix();
        assert_abs_diff_eq!(k[(0, 0)], 0.0, epsilon = 1e-13); // pi (b2 + a1)
        assert_abs_diff_eq!(k[(0, 1)], PI * (a - b), epsilon = 1e-13);
        assert_abs_diff_eq!(k[(1, 0)], PI * (b - a), epsilon = 1e-13);
        assert_abs_diff_eq!(k[(1, 1)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(k[(2, 2)], 0.0, epsilon = 1e-13); // 2 pi c3
        assert_abs_diff_eq!(k[(2, 3)], TAU, epsilon = 1e-13); // 2 pi c4
        assert_abs_diff_eq!(k[(3, 2)], TAU, epsilon = 1e-13); // 2 pi d3
        assert_abs_diff_eq!(k[(3, 3)], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(map.offset()[0], 0.0, epsilon = 1e-13); // -2 pi b3
        assert_abs_diff_eq!(map.offset()[1], 0.0, epsilon = 1e-13); // 2 pi a3
        assert_abs_diff_eq!(map.offset()[2], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(map.offset()[3], TAU * PI, epsilon = 1e-12); // 2 pi^2 d3
    }

    #[test]
    fn s1_jacobian_det_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let s = Scenario::s1();
        for _ in 0..50 {
            let p = random_perturbation(&mut rng, 3);
            let map = averaged_map(&s, &p).unwrap();
            let (a1, a2) = (p.matrix()[(0, 0)], p.matrix()[(0, 1)]);
            let (b1, b2) = (p.matrix()[(1, 0)], p.matrix()[(1, 1)]);
            let expected = 4.0 * PI * PI * (a1 * b2 - a2 * b1);
            let got = map.jacobian_det();
            assert!((got - expected).abs() <= 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn s3_jacobian_det_example_value() {
        let s = Scenario::s3();
        let map = averaged_map(
            &s,
            &named(&s, &[("a2", 2.0), ("b1", 1.0), ("c4", 1.0), ("d3", 1.0)]),
        )
        .unwrap();
        // pi^2 ((b2+a1)^2 + (a2-b1)^2) * 4 pi^2 (c3 d4 - c4 d3) = -4 pi^4
        let expected = -4.0 * PI.powi(4);
        assert!((map.jacobian_det() - expected).abs() <= 1e-12 * expected.abs());
        let (top, bottom) = map.diagonal_block_determinants(2).unwrap();
        assert!(top != 0.0 && bottom != 0.0);
        assert_abs_diff_eq!(top, PI * PI, epsilon = 1e-10);
        assert_abs_diff_eq!(bottom, -4.0 * PI * PI, epsilon = 1e-10);
    }

    #[test]
    fn solve_root_reproduces_equator_bifurcation() {
        let s = Scenario::s1();
        let map = averaged_map(&s, &named(&s, &[("a2", 1.0), ("b1", 1.0)])).unwrap();
        let root = map.solve_root(&ChartRegion::default());
        assert!(!root.degenerate);
        let alpha = root.alpha.unwrap();
        assert_abs_diff_eq!(alpha[0], -PI, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[1], 0.0, epsilon = 1e-12);
        assert!(root.in_region);
        assert!((root.det + 4.0 * PI * PI).abs() <= 1e-12 * (4.0 * PI * PI));
    }

    #[test]
    fn solve_root_from_linear_system_not_printed_formula() {
        // a-row (-pi, 1, 0, 0), b-row (0.3 - pi, 0, 1, 0): solving F = 0
        // gives phi0 = pi - 0.3 (outside the polar band), confirmed by the
        // quadrature oracle below.
        let s = Scenario::s1();
        let p = named(&s, &[("a0", -PI), ("a1", 1.0), ("b0", 0.3 - PI), ("b2", 1.0)]);
        let map = averaged_map(&s, &p).unwrap();
        let root = map.solve_root(&ChartRegion::default());
        let alpha = root.alpha.clone().unwrap();
        assert_abs_diff_eq!(alpha[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[1], PI - 0.3, epsilon = 1e-12);
        assert!(!root.in_region);

        let f = numeric_averaged(&s, &p, &alpha, 64).unwrap();
        assert!(f.abs().max() < 1e-10);
    }

    #[test]
    fn solve_root_s3_example() {
        let s = Scenario::s3();
        let map = averaged_map(
            &s,
            &named(&s, &[("a2", 2.0), ("b1", 1.0), ("c4", 1.0), ("d3", 1.0)]),
        )
        .unwrap();
        let root = map.solve_root(&ChartRegion::default());
        let alpha = root.alpha.unwrap();
        assert_abs_diff_eq!(alpha[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[1], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[2], -PI, epsilon = 1e-12);
        assert_abs_diff_eq!(alpha[3], 0.0, epsilon = 1e-12);
        assert!(root.in_region);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for s in [Scenario::s1(), Scenario::s2(), Scenario::s3()] {
            for _ in 0..20 {
                let p = random_perturbation(&mut rng, s.dim());
                let map = averaged_map(&s, &p).unwrap();
                let alpha =
                    DVector::from_fn(s.projection_dim(), |_, _| rng.random_range(-0.5..0.5));
                let closed = map.eval(&alpha).unwrap();
                let quad = numeric_averaged(&s, &p, &alpha, 64).unwrap();
                assert!(
                    (closed - quad).abs().max() < 1e-10,
                    "closed form disagrees with quadrature for {}",
                    s.id()
                );
            }
        }
    }

    #[test]
    fn numeric_averaged_vanishes_at_root_and_for_zero_perturbation() {
        let s = Scenario::s3();
        let p = named(&s, &[("a2", 2.0), ("b1", 1.0), ("c4", 1.0), ("d3", 1.0)]);
        let root = DVector::from_row_slice(&[0.0, 0.0, -PI, 0.0]);
        assert!(numeric_averaged(&s, &p, &root, 64).unwrap().abs().max() < 1e-10);

        let s1 = Scenario::s1();
        let zero = AffinePerturbation::zero(3);
        let alpha = DVector::from_row_slice(&[0.4, 0.1]);
        assert_eq!(
            numeric_averaged(&s1, &zero, &alpha, 32).unwrap().abs().max(),
            0.0
        );
    }

    #[test]
    fn scaling_equivariance_of_the_root() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = Scenario::s2();
        for _ in 0..10 {
            let p = random_perturbation(&mut rng, 5);
            let map = averaged_map(&s, &p).unwrap();
            let root = map.solve_root(&ChartRegion::default());
            if root.degenerate {
                continue;
            }
            let lambda = rng.random_range(0.5..3.0);
            let scaled = AffinePerturbation::new(
                p.matrix() * lambda,
                p.offset() * lambda,
            )
            .unwrap();
            let map2 = averaged_map(&s, &scaled).unwrap();
            let root2 = map2.solve_root(&ChartRegion::default());
            let a = root.alpha.unwrap();
            let b = root2.alpha.unwrap();
            assert!((a - b).abs().max() < 1e-12);
        }
    }
}
