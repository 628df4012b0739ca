//! Fixed-point machinery: quantitative Picard iteration on a time grid,
//! uniform contraction families with parameter sensitivities, and the
//! derivative of parameter-dependent linear inverses.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::LieAlgebraCurve;
use crate::linalg::{dist, norm, solve_matrix, solve};
use crate::numdiff::central_jacobian;

/// Default base step for sensitivity finite differences.
pub const SENS_STEP: f64 = 1e-5;

/// Soft threshold on confinement violations (beyond it the result is
/// flagged; an order 1e-6 violation is treated as a broken certificate).
pub const CONFINE_SOFT: f64 = 1e-9;
const CONFINE_HARD: f64 = 1e-6;

/// A family `f(p, .)` of maps that are uniform contractions in the state,
/// with certificate `sup_p Lip(f_p) <= theta < 1` over the admissible
/// parameter box.
pub struct ContractionFamily {
    map: Box<dyn Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync>,
    param_dim: usize,
    state_dim: usize,
    theta: f64,
    param_box: Option<Vec<(f64, f64)>>,
    state_box: Option<Vec<(f64, f64)>>,
}

impl ContractionFamily {
    pub fn new<F>(param_dim: usize, state_dim: usize, theta: f64, map: F) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::BadCertificate(format!(
                "contraction certificate theta = {theta} must lie in [0, 1)"
            )));
        }
        Ok(ContractionFamily {
            map: Box::new(map),
            param_dim,
            state_dim,
            theta,
            param_box: None,
            state_box: None,
        })
    }

    /// Restrict the admissible parameters to a box.
    pub fn with_param_box(mut self, limits: Vec<(f64, f64)>) -> Result<Self> {
        if limits.len() != self.param_dim {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim,
                got: limits.len(),
            });
        }
        self.param_box = Some(limits);
        Ok(self)
    }

    /// Restrict the state domain to a box (checked on initial guesses).
    pub fn with_state_box(mut self, limits: Vec<(f64, f64)>) -> Result<Self> {
        if limits.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: limits.len(),
            });
        }
        self.state_box = Some(limits);
        Ok(self)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn check_admissible(&self, p: &[f64], x: Option<&[f64]>) -> Result<()> {
        if let Some(limits) = &self.param_box {
            for (i, (&v, &(lo, hi))) in p.iter().zip(limits).enumerate() {
                if v < lo || v > hi {
                    return Err(Error::OutOfDomain(format!(
                        "parameter p{} = {v} outside [{lo}, {hi}]",
                        i + 1
                    )));
                }
            }
        }
        if let (Some(limits), Some(x)) = (&self.state_box, x) {
            for (i, (&v, &(lo, hi))) in x.iter().zip(limits).enumerate() {
                if v < lo || v > hi {
                    return Err(Error::OutOfDomain(format!(
                        "state x{} = {v} outside [{lo}, {hi}]",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.param_dim {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim,
                got: p.len(),
            });
        }
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                expected: self.state_dim,
                got: x.len(),
            });
        }
        (self.map)(p, x)
    }

    /// Banach iteration `x <- f(p, x)`. Stops once the step is at most
    /// `tol * (1 - theta)`, which certifies `||x - x_p|| <= tol`.
    pub fn fixed_point(
        &self,
        p: &[f64],
        x_init: &[f64],
        tol: f64,
        max_iter: usize,
    ) -> Result<Vec<f64>> {
        if !(tol > 0.0) {
            return Err(Error::OutOfDomain("tol must be positive".into()));
        }
        self.check_admissible(p, Some(x_init))?;
        let threshold = tol * (1.0 - self.theta);
        let mut x = x_init.to_vec();
        let mut prev_step = f64::INFINITY;
        let mut expansions = 0usize;
        let mut ratio: f64 = 0.0;
        for _ in 0..max_iter {
            let next = self.eval(p, &x)?;
            let step = dist(&next, &x);
            x = next;
            if step <= threshold {
                return Ok(x);
            }
            if prev_step.is_finite() {
                ratio = ratio.max(step / prev_step);
                if step > prev_step {
                    expansions += 1;
                    if expansions >= 5 {
                        return Err(Error::Diverged { expansions });
                    }
                } else {
                    expansions = 0;
                }
            }
            prev_step = step;
        }
        Err(Error::MaxIterExceeded {
            max_iter,
            last_step: prev_step,
            ratio,
        })
    }

    /// Derivative of `p -> x_p` at a certified fixed point:
    /// `(I - D_x f)^{-1} D_p f`, both Jacobians by central differences with
    /// base step `h` scaled by the argument size.
    pub fn fixed_point_sensitivity(
        &self,
        p: &[f64],
        x_p: &[f64],
        h: f64,
    ) -> Result<DMatrix<f64>> {
        self.check_admissible(p, None)?;
        let hx = h * (1.0 + norm(x_p));
        let hp = h * (1.0 + norm(p));
        let dx = central_jacobian(|x| self.eval(p, x), x_p, hx)?;
        let dp = central_jacobian(|q| self.eval(q, x_p), p, hp)?;
        let lhs = DMatrix::identity(self.state_dim, self.state_dim) - dx;
        solve_matrix(&lhs, &dp)
    }
}

/// Directional derivative of `p -> A(p)^{-1} z`:
/// `-A(p)^{-1} (D_p A . y) A(p)^{-1} z`, with `D_p A` by central
/// differences in the direction `y`.
///
/// The leading minus sign is essential and easy to drop by accident; the
/// scalar case pins it down: `d/dx (1+x)^{-1} = -1` at `x = 0`.
pub fn linear_family_inverse_derivative<A>(
    a: A,
    p: &[f64],
    z: &[f64],
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Result<DMatrix<f64>>,
{
    let a0 = a(p)?;
    let w = solve(&a0, &DVector::from_column_slice(z))?;
    let hp = h * (1.0 + norm(p));
    let shift = |sign: f64| -> Vec<f64> {
        p.iter().zip(y).map(|(pi, yi)| pi + sign * hp * yi).collect()
    };
    let da = (a(&shift(1.0))? - a(&shift(-1.0))?) / (2.0 * hp);
    let v = solve(&a0, &(da * w))?;
    Ok((-v).iter().copied().collect())
}

/// A Picard initial value problem on the unit time interval, confined to
/// the closed ball of the given radius around `x0`.
pub struct PicardProblem<F> {
    rhs: F,
    x0: Vec<f64>,
    radius: f64,
    lip: f64,
    sup_norm: f64,
}

impl<F> PicardProblem<F>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    /// Requires the quantitative hypotheses `sup ||f|| <= R` and `L < 1`.
    pub fn new(rhs: F, x0: Vec<f64>, radius: f64, lip: f64, sup_norm: f64) -> Result<Self> {
        if sup_norm > radius {
            return Err(Error::BadCertificate(format!(
                "sup-norm certificate {sup_norm} exceeds confinement radius {radius}"
            )));
        }
        if !(lip < 1.0) || lip < 0.0 {
            return Err(Error::BadCertificate(format!(
                "Lipschitz certificate {lip} must lie in [0, 1)"
            )));
        }
        Ok(PicardProblem {
            rhs,
            x0,
            radius,
            lip,
            sup_norm,
        })
    }

    pub fn x0(&self) -> &[f64] {
        &self.x0
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }
}

/// Picard problem for the flow of a Lie-algebra curve started at `x0`,
/// confined to the half-boundary-distance ball.
pub fn curve_problem(
    curve: &LieAlgebraCurve,
    x0: &[f64],
) -> Result<PicardProblem<impl Fn(f64, &[f64]) -> Result<Vec<f64>>>> {
    let d = curve.body().distance_to_boundary(x0)?;
    let theta = curve.theta();
    let radius = 0.5 * d;
    let sup_norm = 1.5 * theta * d;
    let curve_ref = curve.clone();
    PicardProblem::new(
        move |t, x| curve_ref.eval(t, x),
        x0.to_vec(),
        radius,
        theta,
        sup_norm.min(radius),
    )
}

/// A solved trajectory on the uniform grid, with diagnostics.
#[derive(Debug, Clone)]
pub struct FlowResult {
    /// Grid times `t_i = i / N` on `[0, 1]`.
    pub grid: Vec<f64>,
    /// States at the grid times.
    pub states: Vec<Vec<f64>>,
    /// Picard sweeps performed.
    pub iterations: usize,
    /// Max trapezoid defect of the returned trajectory.
    pub residual: f64,
    /// Max observed per-sweep contraction factor.
    pub contraction_ratio: f64,
    /// Whether all states stayed inside the confinement ball (up to 1e-9).
    pub confinement_ok: bool,
    /// Max distance by which any state left the ball (0 when confined).
    pub confinement_violation: f64,
}

impl FlowResult {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("non-empty grid")
    }

    /// CSV form `t,y1,..,yn` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for j in 0..n {
            out.push_str(&format!(",y{}", j + 1));
        }
        out.push('\n');
        for (t, y) in self.grid.iter().zip(&self.states) {
            out.push_str(&format!("{t:.16e}"));
            for v in y {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn diagnostics(&self) -> FlowDiagnostics {
        FlowDiagnostics {
            iterations: self.iterations,
            residual: self.residual,
            contraction_ratio: self.contraction_ratio,
            confinement_ok: self.confinement_ok,
        }
    }
}

/// JSON diagnostics sidecar of a [`FlowResult`].
#[derive(Debug, Clone, Serialize)]
pub struct FlowDiagnostics {
    pub iterations: usize,
    pub residual: f64,
    pub contraction_ratio: f64,
    pub confinement_ok: bool,
}

/// Iterate `eta <- (t -> x0 + int_0^t f(s, eta(s)) ds)` on a uniform grid
/// with composite trapezoid quadrature, starting from the constant curve.
pub fn picard_solve<F>(
    problem: &PicardProblem<F>,
    n_grid: usize,
    tol: f64,
    max_iter: usize,
) -> Result<FlowResult>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    if n_grid < 8 {
        return Err(Error::OutOfDomain("grid size must be at least 8".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::OutOfDomain("tol must be positive".into()));
    }
    let n = n_grid;
    let dt = 1.0 / n as f64;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * dt).collect();
    let dim = problem.x0.len();
    let mut states = vec![problem.x0.clone(); n + 1];
    let threshold = tol * (1.0 - problem.lip);
    let mut prev_step = f64::INFINITY;
    let mut ratio: f64 = 0.0;
    let mut expansions = 0usize;
    let mut iterations = 0usize;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        let (next, _) = sweep(problem, &grid, &states, dim)?;
        let step = states
            .iter()
            .zip(&next)
            .map(|(a, b)| dist(a, b))
            .fold(0.0, f64::max);
        states = next;
        if step <= threshold {
            converged = true;
            break;
        }
        if prev_step.is_finite() && prev_step > 0.0 {
            ratio = ratio.max(step / prev_step);
            if step > prev_step {
                expansions += 1;
                if expansions >= 5 {
                    return Err(Error::Diverged { expansions });
                }
            } else {
                expansions = 0;
            }
        }
        prev_step = step;
    }
    if !converged {
        return Err(Error::MaxIterExceeded {
            max_iter,
            last_step: prev_step,
            ratio,
        });
    }
    let residual = trapezoid_defect(problem, &grid, &states, dim)?;
    let mut violation = 0.0_f64;
    for y in &states {
        violation = violation.max(dist(y, &problem.x0) - problem.radius);
    }
    let violation = violation.max(0.0);
    if violation > CONFINE_HARD * (1.0 + problem.radius) {
        return Err(Error::ConfinementViolated { excess: violation });
    }
    Ok(FlowResult {
        grid,
        states,
        iterations,
        residual,
        contraction_ratio: ratio,
        confinement_ok: violation <= CONFINE_SOFT,
        confinement_violation: violation,
    })
}

/// One application of the Picard operator: cumulative trapezoid of the
/// right-hand side along the current curve.
fn sweep<F>(
    problem: &PicardProblem<F>,
    grid: &[f64],
    states: &[Vec<f64>],
    dim: usize,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let dt = grid[1] - grid[0];
    let mut values = Vec::with_capacity(grid.len());
    for (t, y) in grid.iter().zip(states) {
        values.push((problem.rhs)(*t, y)?);
    }
    let mut next = Vec::with_capacity(grid.len());
    let mut integral = vec![0.0; dim];
    next.push(problem.x0.clone());
    for i in 1..grid.len() {
        for j in 0..dim {
            integral[j] += 0.5 * dt * (values[i - 1][j] + values[i][j]);
        }
        next.push(
            problem
                .x0
                .iter()
                .zip(&integral)
                .map(|(a, b)| a + b)
                .collect(),
        );
    }
    Ok((next, values))
}

/// Max defect `||y(t_i) - x0 - int_0^{t_i} f(s, y(s)) ds||` of a trajectory
/// under the same composite trapezoid quadrature used by the solver.
pub fn trapezoid_defect<F>(
    problem: &PicardProblem<F>,
    grid: &[f64],
    states: &[Vec<f64>],
    dim: usize,
) -> Result<f64>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let (image, _) = sweep(problem, grid, states, dim)?;
    Ok(states
        .iter()
        .zip(&image)
        .map(|(a, b)| dist(a, b))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr;
    use crate::fields::{BoundaryVanishingField, Weight};
    use crate::geometry::ConvexBody;
    use std::sync::Arc;

    fn sigma(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    fn logistic_curve(c: f64) -> LieAlgebraCurve {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        let field = Arc::new(
            BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::constant(c)],
                Weight::SlackProduct,
                (0.0, 1.0),
            )
            .unwrap(),
        );
        LieAlgebraCurve::new(field).unwrap()
    }

    #[test]
    fn picard_logistic_closed_form() {
        let curve = logistic_curve(0.3);
        let problem = curve_problem(&curve, &[0.5]).unwrap();
        let result = picard_solve(&problem, 2048, 1e-10, 200).unwrap();
        let expected = sigma(0.3);
        assert!(
            (result.final_state()[0] - expected).abs() < 1e-6,
            "got {} want {}",
            result.final_state()[0],
            expected
        );
        assert!(result.confinement_ok);
        assert!(
            result.contraction_ratio <= problem.lip() + 1e-2,
            "ratio {} vs L {}",
            result.contraction_ratio,
            problem.lip()
        );
    }

    #[test]
    fn picard_zero_field_single_sweep() {
        let curve = logistic_curve(0.0);
        let problem = curve_problem(&curve, &[0.3]).unwrap();
        let result = picard_solve(&problem, 64, 1e-12, 50).unwrap();
        assert_eq!(result.iterations, 1);
        assert!(result.states.iter().all(|y| y[0] == 0.3));
    }

    #[test]
    fn picard_boundary_start_exact() {
        let curve = logistic_curve(0.3);
        let problem = curve_problem(&curve, &[0.0]).unwrap();
        let result = picard_solve(&problem, 64, 1e-12, 50).unwrap();
        assert!(result.states.iter().all(|y| y[0] == 0.0), "bitwise constant");
    }

    #[test]
    fn picard_error_scales_with_grid_squared() {
        let curve = logistic_curve(0.3);
        let problem = curve_problem(&curve, &[0.5]).unwrap();
        let expected = sigma(0.3);
        let err = |n: usize| {
            let r = picard_solve(&problem, n, 1e-13, 400).unwrap();
            (r.final_state()[0] - expected).abs()
        };
        let (e1, e2, e3) = (err(256), err(512), err(1024));
        let (r1, r2) = (e1 / e2, e2 / e3);
        assert!((3.2..=4.8).contains(&r1), "ratio {r1}");
        assert!((3.2..=4.8).contains(&r2), "ratio {r2}");
    }

    #[test]
    fn picard_residual_recomputes_identically() {
        let curve = logistic_curve(0.3);
        let problem = curve_problem(&curve, &[0.5]).unwrap();
        let result = picard_solve(&problem, 256, 1e-10, 100).unwrap();
        let again = trapezoid_defect(&problem, &result.grid, &result.states, 1).unwrap();
        assert!((again - result.residual).abs() <= 1e-12);
    }

    #[test]
    fn picard_rejects_bad_certificates() {
        let rhs = |_t: f64, _x: &[f64]| Ok(vec![1.0]);
        assert!(PicardProblem::new(rhs, vec![0.0], 0.5, 0.2, 1.0).is_err());
        let rhs = |_t: f64, _x: &[f64]| Ok(vec![0.0]);
        assert!(PicardProblem::new(rhs, vec![0.0], 0.5, 1.2, 0.1).is_err());
    }

    fn sine_family() -> ContractionFamily {
        ContractionFamily::new(1, 1, 0.5, |p: &[f64], x: &[f64]| {
            Ok(vec![0.5 * p[0].sin() + 0.5 * x[0]])
        })
        .unwrap()
    }

    #[test]
    fn fixed_point_sine_example() {
        let family = sine_family();
        let x = family.fixed_point(&[0.7], &[0.0], 1e-10, 200).unwrap();
        assert!((x[0] - 0.7_f64.sin()).abs() < 1e-10, "x = {}", x[0]);
    }

    #[test]
    fn fixed_point_constant_map() {
        let family =
            ContractionFamily::new(1, 1, 0.0, |p: &[f64], _x: &[f64]| Ok(vec![p[0]])).unwrap();
        let x = family.fixed_point(&[2.5], &[0.0], 1e-12, 10).unwrap();
        assert_eq!(x[0], 2.5);
    }

    #[test]
    fn fixed_point_geometric_series() {
        let family = ContractionFamily::new(1, 1, 0.9, |p: &[f64], x: &[f64]| {
            Ok(vec![0.9 * x[0] + p[0]])
        })
        .unwrap();
        let x = family.fixed_point(&[1.0], &[0.0], 1e-9, 500).unwrap();
        assert!((x[0] - 10.0).abs() < 1e-8, "x = {}", x[0]);
    }

    #[test]
    fn fixed_point_uniqueness_across_inits() {
        let family = sine_family();
        let tol = 1e-9;
        let a = family.fixed_point(&[0.7], &[-0.9], tol, 200).unwrap();
        let b = family.fixed_point(&[0.7], &[0.9], tol, 200).unwrap();
        assert!(dist(&a, &b) <= 2.0 * tol);
    }

    #[test]
    fn domain_boxes_enforced() {
        let family = sine_family().with_param_box(vec![(0.0, 1.0)]).unwrap();
        assert!(family.fixed_point(&[0.7], &[0.0], 1e-9, 100).is_ok());
        assert!(matches!(
            family.fixed_point(&[2.0], &[0.0], 1e-9, 100),
            Err(Error::OutOfDomain(_))
        ));
        let family = sine_family().with_state_box(vec![(-1.0, 1.0)]).unwrap();
        assert!(matches!(
            family.fixed_point(&[0.7], &[5.0], 1e-9, 100),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn divergence_detected() {
        // expanding map with a lying certificate
        let family =
            ContractionFamily::new(0, 1, 0.9, |_p: &[f64], x: &[f64]| Ok(vec![1.1 * x[0] + 1.0]))
                .unwrap();
        match family.fixed_point(&[], &[1.0], 1e-12, 1000) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn sensitivity_sine_example() {
        let family = sine_family();
        let p = [0.7];
        let x = family.fixed_point(&p, &[0.0], 1e-12, 400).unwrap();
        let s = family.fixed_point_sensitivity(&p, &x, SENS_STEP).unwrap();
        // (1 - 1/2)^{-1} * (1/2) cos p = cos p
        assert!((s[(0, 0)] - 0.7_f64.cos()).abs() < 1e-8, "{}", s[(0, 0)]);
    }

    #[test]
    fn sensitivity_geometric_example() {
        let family = ContractionFamily::new(1, 1, 0.9, |p: &[f64], x: &[f64]| {
            Ok(vec![0.9 * x[0] + p[0]])
        })
        .unwrap();
        let s = family
            .fixed_point_sensitivity(&[1.0], &[10.0], SENS_STEP)
            .unwrap();
        assert!((s[(0, 0)] - 10.0).abs() < 1e-6, "{}", s[(0, 0)]);
    }

    #[test]
    fn sensitivity_parameter_free() {
        let family =
            ContractionFamily::new(1, 1, 0.5, |_p: &[f64], x: &[f64]| Ok(vec![0.5 * x[0]]))
                .unwrap();
        let s = family
            .fixed_point_sensitivity(&[0.3], &[0.0], SENS_STEP)
            .unwrap();
        assert!(s[(0, 0)].abs() < 1e-12);
    }

    #[test]
    fn sensitivity_matches_resolve_differences() {
        let family = sine_family();
        let p = [0.7];
        let tol = 1e-13;
        let x = family.fixed_point(&p, &[0.0], tol, 500).unwrap();
        let s = family.fixed_point_sensitivity(&p, &x, SENS_STEP).unwrap();
        let h = 1e-5;
        let xp = family.fixed_point(&[p[0] + h], &[0.0], tol, 500).unwrap();
        let xm = family.fixed_point(&[p[0] - h], &[0.0], tol, 500).unwrap();
        let fd = (xp[0] - xm[0]) / (2.0 * h);
        assert!(
            ((s[(0, 0)] - fd) / fd).abs() < 1e-5,
            "sens {} vs fd {fd}",
            s[(0, 0)]
        );
    }

    #[test]
    fn linear_inverse_derivative_1d() {
        // A(x) = 1 + x, z = 1: d/dx (1+x)^{-1} at 0 is -1
        let a = |p: &[f64]| Ok(DMatrix::from_element(1, 1, 1.0 + p[0]));
        let v = linear_family_inverse_derivative(a, &[0.0], &[1.0], &[1.0], 1e-6).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-9, "{}", v[0]);
    }

    #[test]
    fn linear_inverse_derivative_constant_family() {
        let a = |_p: &[f64]| Ok(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        let v =
            linear_family_inverse_derivative(a, &[0.4], &[1.0, 1.0], &[1.0], 1e-6).unwrap();
        assert!(norm(&v) < 1e-12);
    }

    #[test]
    fn linear_inverse_derivative_diagonal() {
        // A(x) = diag(1+x, 2), z = (1,1), derivative (-1, 0)
        let a = |p: &[f64]| {
            Ok(DMatrix::from_row_slice(
                2,
                2,
                &[1.0 + p[0], 0.0, 0.0, 2.0],
            ))
        };
        let v = linear_family_inverse_derivative(a, &[0.0], &[1.0, 1.0], &[1.0], 1e-6).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-9);
        assert!(v[1].abs() < 1e-12);
    }

    #[test]
    fn linear_inverse_derivative_matches_differences() {
        let a = |p: &[f64]| {
            Ok(DMatrix::from_row_slice(
                2,
                2,
                &[1.0 + p[0], 0.3 * p[1], 0.1 * p[0] * p[1], 2.0 - p[1]],
            ))
        };
        let p = [0.2, 0.5];
        let z = [1.0, -1.0];
        let y = [0.7, -0.3];
        let v = linear_family_inverse_derivative(&a, &p, &z, &y, 1e-6).unwrap();
        let h = 1e-6;
        let solve_at = |q: &[f64]| {
            let m = a(q).unwrap();
            solve(&m, &DVector::from_column_slice(&z)).unwrap()
        };
        let shift = |s: f64| -> Vec<f64> { p.iter().zip(&y).map(|(a, b)| a + s * h * b).collect() };
        let fd = (solve_at(&shift(1.0)) - solve_at(&shift(-1.0))) / (2.0 * h);
        for i in 0..2 {
            assert!(
                (v[i] - fd[i]).abs() / fd[i].abs().max(1e-9) < 1e-6,
                "component {i}: {} vs {}",
                v[i],
                fd[i]
            );
        }
    }
}
