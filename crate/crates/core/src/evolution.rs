//! The evolution operator of continuous Lie-algebra curves and the
//! parametric flow map.
//!
//! `evolve` produces group-valued snapshots of the flow of a curve with
//! `theta <= 1/3`, together with a residual for the right-logarithmic-
//! derivative characterization. `flow_map` realizes the flow
//! `(p, t0, t, x0) -> y(t)` of a parametric field over an arbitrary window
//! by the exact rescaling `g(tau, x) = (t - t0) f(t0 + tau (t - t0), x)`,
//! splitting into panels whenever the rescaled Lipschitz certificate
//! exceeds 1/3. Backward time is the sign of `(t - t0)`; there is no
//! separate backward integrator.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::contraction::{curve_problem, picard_solve};
use crate::diffeo::Diffeo;
use crate::error::{Error, Result};
use crate::fields::{BoundaryVanishingField, LieAlgebraCurve, ParametricFieldFamily};
use crate::linalg::{dist, norm};
use crate::numdiff::{central_jacobian, richardson_ratio};

const PICARD_MAX_ITER: usize = 400;
const RESIDUAL_SAMPLES: usize = 6;
const RESIDUAL_SEED: u64 = 0;

/// Snapshots of the evolution of a curve, with the flow-equation residual.
#[derive(Debug)]
pub struct EvolutionResult {
    /// Snapshot times `t_j = j / M` on `[0, 1]`.
    pub times: Vec<f64>,
    /// Flow-generated group elements `x -> y_{gamma,x}(t_j)`.
    pub snapshots: Vec<Diffeo>,
    /// Max over sampled `(t, x)` of the defect of
    /// `d/dt eta(t)(x) = gamma(t)(eta(t)(x))`, with `d/dt` by central
    /// differences on the snapshot grid.
    pub logderiv_residual: f64,
}

/// Integrate a curve into `M+1` group snapshots (Picard grid `N`, rounded
/// up to a multiple of `M`) and measure the right-logarithmic-derivative
/// residual on an interior sample set.
pub fn evolve(
    curve: &Arc<LieAlgebraCurve>,
    snapshots: usize,
    grid: usize,
    tol: f64,
) -> Result<EvolutionResult> {
    let m = snapshots;
    if m < 2 {
        return Err(Error::OutOfDomain("need at least 2 snapshots".into()));
    }
    let n_grid = grid.div_ceil(m) * m;
    let times: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let elements: Vec<Diffeo> = times
        .iter()
        .map(|&t| Diffeo::from_flow(curve.clone(), t, n_grid, tol))
        .collect::<Result<_>>()?;

    // residual along full-interval trajectories: one fine solve per sample,
    // snapshot states read off at grid multiples
    let stride = n_grid / m;
    let mut residual = 0.0_f64;
    for x in curve.body().sample_interior(RESIDUAL_SAMPLES, RESIDUAL_SEED) {
        if curve.body().distance_to_boundary(&x)? == 0.0 {
            continue;
        }
        let problem = curve_problem(curve, &x)?;
        let solved = picard_solve(&problem, n_grid, tol, PICARD_MAX_ITER)?;
        for j in 1..m {
            let y_prev = &solved.states[(j - 1) * stride];
            let y_here = &solved.states[j * stride];
            let y_next = &solved.states[(j + 1) * stride];
            let target = curve.eval(times[j], y_here)?;
            let mut defect = 0.0_f64;
            for c in 0..x.len() {
                let dy = (y_next[c] - y_prev[c]) * m as f64 / 2.0;
                defect += (dy - target[c]) * (dy - target[c]);
            }
            residual = residual.max(defect.sqrt());
        }
    }
    Ok(EvolutionResult {
        times,
        snapshots: elements,
        logderiv_residual: residual,
    })
}

/// Time-1 evolution: the group element `evol(gamma)`.
pub fn evol_r(curve: &Arc<LieAlgebraCurve>, grid: usize, tol: f64) -> Result<Diffeo> {
    Diffeo::from_flow(curve.clone(), 1.0, grid, tol)
}

/// Flow a field over the window `[t0, t1]` from `x0`, splitting into
/// panels so each rescaled piece has `theta <= 0.3`.
pub fn field_flow(
    field: &Arc<BoundaryVanishingField>,
    t0: f64,
    t1: f64,
    x0: &[f64],
    grid: usize,
    tol: f64,
) -> Result<Vec<f64>> {
    if t1 == t0 {
        if !field.body().contains(x0)? {
            return Err(Error::OutsideBody { slack: 0.0 });
        }
        return Ok(x0.to_vec());
    }
    if field.body().distance_to_boundary(x0)? == 0.0 {
        return Ok(x0.to_vec());
    }
    let theta_total = (t1 - t0).abs() * field.theta_bound();
    let panels = if theta_total <= 1.0 / 3.0 {
        1
    } else {
        (theta_total / 0.3).ceil() as usize
    };
    let mut x = x0.to_vec();
    for i in 0..panels {
        let s0 = t0 + (t1 - t0) * i as f64 / panels as f64;
        let s1 = t0 + (t1 - t0) * (i + 1) as f64 / panels as f64;
        let curve = LieAlgebraCurve::over_window(field.clone(), s0, s1)?;
        if field.body().distance_to_boundary(&x)? == 0.0 {
            return Ok(x);
        }
        let problem = curve_problem(&curve, &x)?;
        let solved = picard_solve(&problem, grid, tol, PICARD_MAX_ITER)?;
        x = solved.final_state().to_vec();
    }
    Ok(x)
}

/// A sampled multi-panel trajectory over real time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub panel_diagnostics: Vec<crate::contraction::FlowDiagnostics>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("non-empty trajectory")
    }

    /// CSV form `t,y1,..,yn` with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for j in 0..n {
            out.push_str(&format!(",y{}", j + 1));
        }
        out.push('\n');
        for (t, y) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.16e}"));
            for v in y {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// As [`field_flow`], returning the whole sampled trajectory with one
/// diagnostics record per panel.
pub fn field_flow_trajectory(
    field: &Arc<BoundaryVanishingField>,
    t0: f64,
    t1: f64,
    x0: &[f64],
    grid: usize,
    tol: f64,
) -> Result<Trajectory> {
    if !field.body().contains(x0)? {
        return Err(Error::OutsideBody { slack: 0.0 });
    }
    if t1 == t0 {
        return Ok(Trajectory {
            times: vec![t0],
            states: vec![x0.to_vec()],
            panel_diagnostics: Vec::new(),
        });
    }
    let boundary_start = field.body().distance_to_boundary(x0)? == 0.0;
    let theta_total = (t1 - t0).abs() * field.theta_bound();
    let panels = if boundary_start || theta_total <= 1.0 / 3.0 {
        1
    } else {
        (theta_total / 0.3).ceil() as usize
    };
    let mut times = vec![t0];
    let mut states = vec![x0.to_vec()];
    let mut diagnostics = Vec::new();
    let mut x = x0.to_vec();
    for i in 0..panels {
        let s0 = t0 + (t1 - t0) * i as f64 / panels as f64;
        let s1 = t0 + (t1 - t0) * (i + 1) as f64 / panels as f64;
        if field.body().distance_to_boundary(&x)? == 0.0 {
            // boundary points stay put; emit the constant tail
            for j in 1..=grid {
                times.push(s0 + (s1 - s0) * j as f64 / grid as f64);
                states.push(x.clone());
            }
            continue;
        }
        let curve = LieAlgebraCurve::over_window(field.clone(), s0, s1)?;
        let problem = curve_problem(&curve, &x)?;
        let solved = picard_solve(&problem, grid, tol, PICARD_MAX_ITER)?;
        for (tau, y) in solved.grid.iter().zip(&solved.states).skip(1) {
            times.push(s0 + (s1 - s0) * tau);
            states.push(y.clone());
        }
        x = solved.final_state().to_vec();
        diagnostics.push(solved.diagnostics());
    }
    Ok(Trajectory {
        times,
        states,
        panel_diagnostics: diagnostics,
    })
}

/// A parametric field family with its parameter box and solver settings.
pub struct ParametricFlowSpec {
    family: ParametricFieldFamily,
    param_box: Vec<(f64, f64)>,
    grid: usize,
    tol: f64,
}

impl ParametricFlowSpec {
    pub fn new(
        family: ParametricFieldFamily,
        param_box: Vec<(f64, f64)>,
        grid: usize,
        tol: f64,
    ) -> Result<Self> {
        if param_box.len() != family.param_dim() {
            return Err(Error::DimensionMismatch {
                expected: family.param_dim(),
                got: param_box.len(),
            });
        }
        Ok(ParametricFlowSpec {
            family,
            param_box,
            grid,
            tol,
        })
    }

    pub fn family(&self) -> &ParametricFieldFamily {
        &self.family
    }

    pub fn param_dim(&self) -> usize {
        self.param_box.len()
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    fn check_args(&self, p: &[f64], t0: f64, t: f64) -> Result<()> {
        if p.len() != self.param_box.len() {
            return Err(Error::DimensionMismatch {
                expected: self.param_box.len(),
                got: p.len(),
            });
        }
        for (i, (&pi, &(lo, hi))) in p.iter().zip(&self.param_box).enumerate() {
            let slop = 1e-9 * (1.0 + lo.abs() + hi.abs());
            if pi < lo - slop || pi > hi + slop {
                return Err(Error::OutOfDomain(format!(
                    "parameter p{} = {pi} outside [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        let (ja, jb) = self.family.time_interval();
        let slop = 1e-12 * (1.0 + ja.abs() + jb.abs());
        for s in [t0, t] {
            if s < ja - slop || s > jb + slop {
                return Err(Error::OutOfDomain(format!(
                    "time {s} outside interval [{ja}, {jb}]"
                )));
            }
        }
        Ok(())
    }

    /// `Phi(p, t0, t, x0)`, the solution at time `t` of
    /// `y' = f(p, s, y), y(t0) = x0`. Handles `t < t0` and `t = t0`.
    pub fn flow_map(&self, p: &[f64], t0: f64, t: f64, x0: &[f64]) -> Result<Vec<f64>> {
        self.check_args(p, t0, t)?;
        let field = Arc::new(self.family.bind(p)?);
        field_flow(&field, t0, t, x0, self.grid, self.tol)
    }

    /// Finite-difference sensitivities of the flow map in the parameter
    /// and the initial point, with a two-step error estimate and a
    /// three-step Richardson ratio per block.
    pub fn flow_sensitivity(
        &self,
        p: &[f64],
        t0: f64,
        t: f64,
        x0: &[f64],
        h: f64,
    ) -> Result<FlowSensitivity> {
        self.check_args(p, t0, t)?;
        let d = self.family.body().distance_to_boundary(x0)?;
        if d == 0.0 {
            return Err(Error::OutOfDomain(
                "sensitivities need an interior initial point".into(),
            ));
        }
        let m = self.param_box.len();
        let hp = h * (1.0 + norm(p));
        let hx = (h * (1.0 + norm(x0))).min(0.25 * d);

        let jac_p = |step: f64| -> Result<DMatrix<f64>> {
            if m == 0 {
                return Ok(DMatrix::zeros(x0.len(), 0));
            }
            central_jacobian(|q| self.flow_map(q, t0, t, x0), p, step)
        };
        let jac_x = |step: f64| -> Result<DMatrix<f64>> {
            central_jacobian(|y| self.flow_map(p, t0, t, y), x0, step)
        };

        let (p1, p2, p4) = (jac_p(hp)?, jac_p(hp / 2.0)?, jac_p(hp / 4.0)?);
        let (x1, x2, x4) = (jac_x(hx)?, jac_x(hx / 2.0)?, jac_x(hx / 4.0)?);
        let param_error = (&p1 - &p2).norm();
        let x0_error = (&x1 - &x2).norm();
        let param_ratio = if m == 0 {
            None
        } else {
            Some(richardson_ratio(&p1, &p2, &p4))
        };
        let x0_ratio = Some(richardson_ratio(&x1, &x2, &x4));
        Ok(FlowSensitivity {
            d_param: p2,
            d_x0: x2,
            step_param: hp,
            step_x0: hx,
            param_error_estimate: param_error,
            x0_error_estimate: x0_error,
            param_richardson_ratio: param_ratio,
            x0_richardson_ratio: x0_ratio,
        })
    }
}

/// Finite-difference flow sensitivities with convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FlowSensitivity {
    pub d_param: DMatrix<f64>,
    pub d_x0: DMatrix<f64>,
    pub step_param: f64,
    pub step_x0: f64,
    pub param_error_estimate: f64,
    pub x0_error_estimate: f64,
    pub param_richardson_ratio: Option<f64>,
    pub x0_richardson_ratio: Option<f64>,
}

/// One-parameter group law check for autonomous fields: the flow over
/// `[0, s+t]` against the composition of the flows over `[0, s]` and
/// `[0, t]`, on an interior sample set.
#[derive(Debug, Clone, Serialize)]
pub struct GroupFlowReport {
    pub s: f64,
    pub t: f64,
    pub samples: usize,
    pub max_discrepancy: f64,
}

pub fn group_flow_consistency(
    field: &Arc<BoundaryVanishingField>,
    s: f64,
    t: f64,
    samples: usize,
    grid: usize,
    tol: f64,
) -> Result<GroupFlowReport> {
    let time_dependent = field.base().iter().any(|g| g.depends_on_time());
    if time_dependent {
        return Err(Error::OutOfDomain(
            "group law check needs an autonomous field".into(),
        ));
    }
    let mut max_disc = 0.0_f64;
    let points = field.body().sample_interior(samples, RESIDUAL_SEED);
    for x in &points {
        let direct = field_flow(field, 0.0, s + t, x, grid, tol)?;
        let first = field_flow(field, 0.0, s, x, grid, tol)?;
        let second = field_flow(field, 0.0, t, &first, grid, tol)?;
        max_disc = max_disc.max(dist(&direct, &second));
    }
    Ok(GroupFlowReport {
        s,
        t,
        samples: points.len(),
        max_discrepancy: max_disc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr;
    use crate::fields::Weight;
    use crate::geometry::ConvexBody;

    fn sigma(z: f64) -> f64 {
        1.0 / (1.0 + (-z).exp())
    }

    fn logistic_field(c: f64, interval: (f64, f64)) -> Arc<BoundaryVanishingField> {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        Arc::new(
            BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::constant(c)],
                Weight::SlackProduct,
                interval,
            )
            .unwrap(),
        )
    }

    fn logistic_spec(interval: (f64, f64)) -> ParametricFlowSpec {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        let family = ParametricFieldFamily::new(
            body,
            vec![ScalarExpr::parse("p1").unwrap()],
            Weight::SlackProduct,
            interval,
        )
        .unwrap();
        ParametricFlowSpec::new(family, vec![(0.0, 1.0)], 2048, 1e-11).unwrap()
    }

    #[test]
    fn evolve_zero_field_is_identity() {
        let field = logistic_field(0.0, (0.0, 1.0));
        let curve = Arc::new(LieAlgebraCurve::new(field).unwrap());
        let result = evolve(&curve, 8, 128, 1e-12).unwrap();
        assert_eq!(result.logderiv_residual, 0.0);
        for snap in &result.snapshots {
            for x in curve.body().sample_interior(10, 4) {
                assert_eq!(snap.apply(&x).unwrap(), x);
            }
        }
    }

    #[test]
    fn evolve_logistic_time_one() {
        let field = logistic_field(0.3, (0.0, 1.0));
        let curve = Arc::new(LieAlgebraCurve::new(field).unwrap());
        let result = evolve(&curve, 4, 2048, 1e-11).unwrap();
        let last = result.snapshots.last().unwrap();
        let y = last.apply(&[0.5]).unwrap();
        assert!((y[0] - sigma(0.3)).abs() < 1e-6, "y = {}", y[0]);
        // initial snapshot is the identity
        let first = &result.snapshots[0];
        assert_eq!(first.apply(&[0.25]).unwrap(), vec![0.25]);
    }

    #[test]
    fn evolve_snapshots_fix_boundary() {
        let field = logistic_field(0.3, (0.0, 1.0));
        let curve = Arc::new(LieAlgebraCurve::new(field).unwrap());
        let result = evolve(&curve, 4, 256, 1e-10).unwrap();
        for snap in &result.snapshots {
            for b in curve.body().sample_boundary(64, 7) {
                assert_eq!(snap.apply(&b).unwrap(), b);
            }
        }
    }

    #[test]
    fn evolve_logderiv_residual_small() {
        let field = logistic_field(0.3, (0.0, 1.0));
        let curve = Arc::new(LieAlgebraCurve::new(field).unwrap());
        let result = evolve(&curve, 16, 512, 1e-12).unwrap();
        assert!(
            result.logderiv_residual < 1e-3,
            "residual {}",
            result.logderiv_residual
        );
    }

    #[test]
    fn evol_r_matches_evolution_endpoint() {
        let field = logistic_field(0.3, (0.0, 1.0));
        let curve = Arc::new(LieAlgebraCurve::new(field).unwrap());
        let phi = evol_r(&curve, 2048, 1e-11).unwrap();
        let y = phi.apply(&[0.5]).unwrap();
        assert!((y[0] - sigma(0.3)).abs() < 1e-6);
        assert!(phi.chart_certified(64).unwrap());
    }

    #[test]
    fn flow_map_fixed_time_returns_start() {
        let spec = logistic_spec((0.0, 4.0));
        let y = spec.flow_map(&[0.4], 1.5, 1.5, &[0.3]).unwrap();
        assert_eq!(y, vec![0.3]);
    }

    #[test]
    fn flow_map_logistic_long_horizon() {
        // y' = p y(1-y) from 0.5: y(t) = sigma(p t); needs panels since
        // p * t = 0.8 exceeds 1/3
        let spec = logistic_spec((0.0, 4.0));
        let y = spec.flow_map(&[0.4], 0.0, 2.0, &[0.5]).unwrap();
        assert!((y[0] - sigma(0.8)).abs() < 1e-6, "y = {}", y[0]);
    }

    #[test]
    fn flow_map_reverses() {
        let spec = logistic_spec((0.0, 4.0));
        for (t0, t, x0) in [(0.0, 2.0, 0.3), (1.0, 3.5, 0.6), (2.0, 0.5, 0.45)] {
            let fwd = spec.flow_map(&[0.35], t0, t, &[x0]).unwrap();
            let back = spec.flow_map(&[0.35], t, t0, &fwd).unwrap();
            assert!(
                (back[0] - x0).abs() < 1e-6,
                "t0={t0} t={t} round trip {} vs {x0}",
                back[0]
            );
        }
    }

    #[test]
    fn flow_map_boundary_start() {
        let spec = logistic_spec((0.0, 4.0));
        let y = spec.flow_map(&[0.4], 0.0, 3.0, &[0.0]).unwrap();
        assert_eq!(y, vec![0.0]);
    }

    #[test]
    fn sensitivity_zero_field() {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        let family = ParametricFieldFamily::new(
            body,
            vec![ScalarExpr::parse("p1 * 0").unwrap()],
            Weight::SlackProduct,
            (0.0, 1.0),
        )
        .unwrap();
        let spec = ParametricFlowSpec::new(family, vec![(0.0, 1.0)], 256, 1e-11).unwrap();
        let s = spec.flow_sensitivity(&[0.5], 0.0, 1.0, &[0.4], 1e-4).unwrap();
        assert!(s.d_param[(0, 0)].abs() < 1e-9);
        assert!((s.d_x0[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sensitivity_logistic_parameter_derivative() {
        // Phi(p) = sigma(2p) at t = 2: dPhi/dp = 2 sigma'(0.8)
        let spec = logistic_spec((0.0, 4.0));
        let s = spec
            .flow_sensitivity(&[0.4], 0.0, 2.0, &[0.5], 1e-4)
            .unwrap();
        let expected = 2.0 * sigma(0.8) * (1.0 - sigma(0.8));
        assert!(
            (s.d_param[(0, 0)] - expected).abs() < 1e-4,
            "dp {} vs {expected}",
            s.d_param[(0, 0)]
        );
        let ratio = s.param_richardson_ratio.unwrap();
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }

    #[test]
    fn group_law_autonomous() {
        let field = logistic_field(0.3, (-2.0, 2.0));
        let report = group_flow_consistency(&field, 0.0, 0.0, 4, 128, 1e-11).unwrap();
        assert_eq!(report.max_discrepancy, 0.0);
        let report = group_flow_consistency(&field, 0.5, 0.5, 8, 1024, 1e-11).unwrap();
        assert!(report.max_discrepancy < 1e-6, "{}", report.max_discrepancy);
        let report = group_flow_consistency(&field, 1.0, -1.0, 8, 1024, 1e-11).unwrap();
        assert!(report.max_discrepancy < 1e-6, "{}", report.max_discrepancy);
    }

    #[test]
    fn group_law_rejects_time_dependent() {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        let field = Arc::new(
            BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::parse("sin(t)").unwrap()],
                Weight::SlackProduct,
                (0.0, 1.0),
            )
            .unwrap(),
        );
        assert!(group_flow_consistency(&field, 0.3, 0.3, 4, 128, 1e-9).is_err());
    }
}
