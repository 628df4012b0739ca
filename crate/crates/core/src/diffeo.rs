//! Group elements `phi = id + gamma` with `gamma` vanishing on the
//! boundary: evaluation, the global chart test, composition, and pointwise
//! inversion by the contraction `x <- y - gamma(x)`.
//!
//! Elements are extensional: an evaluator and Jacobian for the displacement
//! plus certificates (`Lip(gamma)`, Jacobian margin). Flow-generated
//! elements re-solve their Picard problem lazily per query point.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::contraction::{curve_problem, picard_solve};
use crate::error::{Error, Result};
use crate::fields::{BoundaryVanishingField, LieAlgebraCurve};
use crate::geometry::ConvexBody;
use crate::linalg::{dist, dot, invert as invert_matrix, norm, operator_norm, sub};
use crate::numdiff::central_jacobian;

const BOUNDARY_VALIDATION_SAMPLES: usize = 64;
const APPLY_SLACK_TOL: f64 = 1e-9;
const DEFAULT_FLOW_GRID: usize = 1024;
const DEFAULT_FLOW_TOL: f64 = 1e-11;
const PICARD_MAX_ITER: usize = 400;

/// How the displacement of an element is realized.
#[derive(Clone)]
enum Gamma {
    Zero,
    /// Analytic: a boundary-vanishing field frozen at one time.
    Field {
        field: Arc<BoundaryVanishingField>,
        t: f64,
    },
    /// Flow of a Lie-algebra curve up to time `t in [0,1]`.
    Flow {
        curve: Arc<LieAlgebraCurve>,
        t: f64,
        grid: usize,
        tol: f64,
    },
    Compose {
        outer: Arc<Diffeo>,
        inner: Arc<Diffeo>,
    },
    Inverse {
        inner: Arc<Diffeo>,
        tol: f64,
    },
}

/// A boundary-fixing near-identity map of `K`.
#[derive(Clone)]
pub struct Diffeo {
    body: Arc<ConvexBody>,
    gamma: Gamma,
    lip_gamma: f64,
}

impl std::fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Diffeo")
            .field("provenance", &self.provenance())
            .field("lip_gamma", &self.lip_gamma)
            .finish()
    }
}

impl Diffeo {
    pub fn identity(body: Arc<ConvexBody>) -> Self {
        Diffeo {
            body,
            gamma: Gamma::Zero,
            lip_gamma: 0.0,
        }
    }

    /// Analytic element `x + f(t0, x)`. The field's certified seminorm
    /// becomes the `Lip(gamma)` certificate; boundary vanishing is
    /// validated on samples.
    pub fn from_field(field: Arc<BoundaryVanishingField>, t: f64) -> Result<Self> {
        let lip = field.theta_bound();
        let element = Diffeo {
            body: field.body().clone(),
            gamma: Gamma::Field { field, t },
            lip_gamma: lip,
        };
        element.validate_boundary_fixed()?;
        Ok(element)
    }

    /// Flow element `x -> y_{gamma,x}(t)` with the Gronwall-style
    /// heuristic certificate `Lip(gamma) <= e^theta - 1` (re-validated by
    /// sampling in the chart test).
    pub fn from_flow(curve: Arc<LieAlgebraCurve>, t: f64, grid: usize, tol: f64) -> Result<Self> {
        if !(-1e-12..=1.0 + 1e-12).contains(&t) {
            return Err(Error::OutOfDomain(format!("flow time {t} outside [0,1]")));
        }
        let theta_t = curve.theta() * t.clamp(0.0, 1.0);
        Ok(Diffeo {
            body: curve.body().clone(),
            gamma: Gamma::Flow {
                curve,
                t,
                grid,
                tol,
            },
            lip_gamma: theta_t.exp() - 1.0,
        })
    }

    pub fn from_flow_default(curve: Arc<LieAlgebraCurve>, t: f64) -> Result<Self> {
        Self::from_flow(curve, t, DEFAULT_FLOW_GRID, DEFAULT_FLOW_TOL)
    }

    /// Composition `outer . inner` (apply `inner` first).
    pub fn compose(outer: &Diffeo, inner: &Diffeo) -> Result<Diffeo> {
        if outer.body != inner.body {
            return Err(Error::BodyMismatch);
        }
        let lip = outer.lip_gamma * (1.0 + inner.lip_gamma) + inner.lip_gamma;
        Ok(Diffeo {
            body: outer.body.clone(),
            gamma: Gamma::Compose {
                outer: Arc::new(outer.clone()),
                inner: Arc::new(inner.clone()),
            },
            lip_gamma: lip,
        })
    }

    /// Lazy inverse; requires the Lipschitz injectivity certificate.
    pub fn invert(&self, tol: f64) -> Result<Diffeo> {
        if !(self.lip_gamma < 1.0) {
            return Err(Error::NoCertificate {
                lip: self.lip_gamma,
            });
        }
        Ok(Diffeo {
            body: self.body.clone(),
            gamma: Gamma::Inverse {
                inner: Arc::new(self.clone()),
                tol,
            },
            lip_gamma: self.lip_gamma / (1.0 - self.lip_gamma),
        })
    }

    pub fn body(&self) -> &Arc<ConvexBody> {
        &self.body
    }

    pub fn lip_gamma(&self) -> f64 {
        self.lip_gamma
    }

    pub fn provenance(&self) -> &'static str {
        match &self.gamma {
            Gamma::Zero => "identity",
            Gamma::Field { .. } => "analytic",
            Gamma::Flow { .. } => "flow",
            Gamma::Compose { .. } => "compose",
            Gamma::Inverse { .. } => "inverse",
        }
    }

    fn validate_boundary_fixed(&self) -> Result<()> {
        for x in self.body.sample_boundary(BOUNDARY_VALIDATION_SAMPLES, 0) {
            let g = self.gamma(&x)?;
            if g.iter().any(|c| *c != 0.0) {
                return Err(Error::FieldRejected(format!(
                    "displacement does not vanish at boundary sample {x:?}"
                )));
            }
        }
        Ok(())
    }

    /// The displacement `gamma(x) = phi(x) - x`.
    pub fn gamma(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.gamma {
            Gamma::Zero => Ok(vec![0.0; self.body.dim()]),
            Gamma::Field { field, t } => field.eval(*t, x),
            Gamma::Flow {
                curve,
                t,
                grid,
                tol,
            } => flow_gamma(curve, *t, *grid, *tol, x),
            Gamma::Compose { outer, inner } => {
                let gi = inner.gamma(x)?;
                let mid = clamp_into(&self.body, add_clamped(x, &gi))?;
                let go = outer.gamma(&mid)?;
                Ok(gi.iter().zip(&go).map(|(a, b)| a + b).collect())
            }
            Gamma::Inverse { inner, tol } => {
                let pre = inner.invert_at(x, *tol)?;
                Ok(sub(&pre, x))
            }
        }
    }

    /// Spatial Jacobian of the displacement at an interior point.
    pub fn jacobian_gamma(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.body.dim();
        match &self.gamma {
            Gamma::Zero => Ok(DMatrix::zeros(n, n)),
            Gamma::Field { field, t } => field.jacobian(*t, x),
            Gamma::Flow { .. } => {
                let d = self.body.distance_to_boundary(x)?;
                if d == 0.0 {
                    return Err(Error::OutOfDomain(
                        "displacement Jacobian needs an interior point".into(),
                    ));
                }
                let h = (1e-4 * (1.0 + norm(x))).min(0.25 * d);
                central_jacobian(|y| self.gamma(y), x, h)
            }
            Gamma::Compose { outer, inner } => {
                let ji = inner.jacobian_gamma(x)?;
                let gi = inner.gamma(x)?;
                let mid = clamp_into(&self.body, add_clamped(x, &gi))?;
                let jo = outer.jacobian_gamma(&mid)?;
                let id = DMatrix::identity(n, n);
                Ok(&jo * (&id + &ji) + ji)
            }
            Gamma::Inverse { inner, tol } => {
                let pre = inner.invert_at(x, *tol)?;
                let ji = inner.jacobian_gamma(&pre)?;
                let a = DMatrix::identity(n, n) + ji;
                Ok(invert_matrix(&a)? - DMatrix::identity(n, n))
            }
        }
    }

    /// `phi(x) = x + gamma(x)`, asserted to land in `K` (1e-9 slack).
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.body.contains(x)? {
            return Err(Error::OutsideBody { slack: 0.0 });
        }
        let g = self.gamma(x)?;
        let y = add_clamped(x, &g);
        match self.body.contains(&y)? {
            true => Ok(y),
            false => {
                let excess = escape_distance(&self.body, &y);
                if excess <= APPLY_SLACK_TOL * (1.0 + norm(&y)) {
                    Ok(y)
                } else {
                    Err(Error::ImageEscapes { excess })
                }
            }
        }
    }

    /// Jacobian of the full map `phi`.
    pub fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.body.dim();
        Ok(DMatrix::identity(n, n) + self.jacobian_gamma(x)?)
    }

    /// Solve `phi(x) = y` by the contraction `x <- y - gamma(x)`. Boundary
    /// points return immediately. The result satisfies
    /// `||x + gamma(x) - y|| <= tol`.
    pub fn invert_at(&self, y: &[f64], tol: f64) -> Result<Vec<f64>> {
        let (x, _) = self.invert_at_counted(y, tol)?;
        Ok(x)
    }

    /// As [`invert_at`](Self::invert_at), also reporting the iteration
    /// count.
    pub fn invert_at_counted(&self, y: &[f64], tol: f64) -> Result<(Vec<f64>, usize)> {
        let theta = self.lip_gamma;
        if !(theta < 1.0) {
            return Err(Error::NoCertificate { lip: theta });
        }
        if !self.body.contains(y)? {
            return Err(Error::OutsideBody { slack: 0.0 });
        }
        if self.body.distance_to_boundary(y)? == 0.0 {
            return Ok((y.to_vec(), 0));
        }
        let max_iter = if theta <= 0.0 {
            2
        } else {
            (2.0 * (tol.ln() / theta.ln()).ceil().max(1.0)) as usize + 16
        };
        let mut x = y.to_vec();
        let mut last_step = f64::INFINITY;
        for k in 1..=max_iter {
            let g = self.gamma(&x)?;
            let raw: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b).collect();
            last_step = dist(&raw, &x);
            x = clamp_into(&self.body, raw)?;
            if last_step <= tol {
                return Ok((x, k));
            }
        }
        Err(Error::MaxIterExceeded {
            max_iter,
            last_step,
            ratio: theta,
        })
    }

    /// The chart conditions: boundary vanishing, invertible Jacobian on an
    /// interior grid, interior point staying interior, and an injectivity
    /// certificate.
    pub fn chart_membership(&self, grid: usize, x0: Option<&[f64]>) -> Result<ChartReport> {
        let interior = self.body.sample_interior(grid.max(2), 0);
        let boundary = self
            .body
            .sample_boundary(grid.clamp(2, 256), 0);

        let mut boundary_ok = true;
        for b in &boundary {
            if self.gamma(b)?.iter().any(|c| *c != 0.0) {
                boundary_ok = false;
                break;
            }
        }

        let mut jac_margin = f64::INFINITY;
        let mut lip_est = 0.0_f64;
        for x in &interior {
            let j = self.jacobian_gamma(x)?;
            let full = DMatrix::identity(j.nrows(), j.ncols()) + &j;
            jac_margin = jac_margin.min(full.determinant());
            lip_est = lip_est.max(operator_norm(&j));
        }
        lip_est *= 1.05;
        let jacobian_ok = boundary_ok && jac_margin > 0.0;

        let x0 = x0
            .map(|p| p.to_vec())
            .unwrap_or_else(|| self.body.interior_point().to_vec());
        let y0 = add_clamped(&x0, &self.gamma(&x0)?);
        let interior_point_ok = self
            .body
            .distance_to_boundary(&y0)
            .map_or(false, |d| d > 0.0);

        let injectivity = if !boundary_ok {
            InjectivityCertificate::Failed
        } else if lip_est < 1.0 {
            InjectivityCertificate::LipschitzCertified
        } else {
            // pairwise collision scan on the grid images
            let mut images = Vec::with_capacity(interior.len());
            for x in &interior {
                images.push(add_clamped(x, &self.gamma(x)?));
            }
            let mut collision = false;
            'outer: for (i, a) in images.iter().enumerate() {
                for b in &images[i + 1..] {
                    if dist(a, b) < 1e-12 * (1.0 + norm(a)) {
                        collision = true;
                        break 'outer;
                    }
                }
            }
            if collision {
                InjectivityCertificate::Failed
            } else {
                InjectivityCertificate::GridHeuristic
            }
        };

        Ok(ChartReport {
            boundary_ok,
            jacobian_ok,
            jacobian_margin: jac_margin,
            interior_point_ok,
            injectivity,
            lip_estimate: lip_est,
        })
    }

    /// All three chart conditions hold with the Lipschitz certificate.
    pub fn chart_certified(&self, grid: usize) -> Result<bool> {
        let report = self.chart_membership(grid, None)?;
        Ok(report.jacobian_ok
            && report.interior_point_ok
            && matches!(
                report.injectivity,
                InjectivityCertificate::LipschitzCertified
            ))
    }
}

/// Injectivity evidence recorded by the chart test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InjectivityCertificate {
    /// `Lip(gamma) < 1` so `phi` is bi-Lipschitz, hence injective.
    LipschitzCertified,
    /// Only a pairwise collision scan passed.
    GridHeuristic,
    Failed,
}

/// Outcome of the chart conditions.
#[derive(Debug, Clone, Serialize)]
pub struct ChartReport {
    pub boundary_ok: bool,
    pub jacobian_ok: bool,
    /// Minimum of `det(I + gamma'(x))` over the grid.
    pub jacobian_margin: f64,
    pub interior_point_ok: bool,
    pub injectivity: InjectivityCertificate,
    /// Sampled `Lip(gamma)` estimate (inflated by 5%).
    pub lip_estimate: f64,
}

/// A family `z -> phi_z` of certified elements with a uniform Lipschitz
/// certificate in the state, supporting parametric inversion `g(z, y) =
/// phi_z^{-1}(y)` and its derivatives.
pub struct ParametricDiffeoFamily {
    builder: Box<dyn Fn(&[f64]) -> Result<Diffeo> + Send + Sync>,
    param_dim: usize,
}

impl ParametricDiffeoFamily {
    pub fn new<F>(param_dim: usize, builder: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Diffeo> + Send + Sync + 'static,
    {
        ParametricDiffeoFamily {
            builder: Box::new(builder),
            param_dim,
        }
    }

    pub fn element(&self, z: &[f64]) -> Result<Diffeo> {
        if z.len() != self.param_dim {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim,
                got: z.len(),
            });
        }
        (self.builder)(z)
    }

    /// `g(z, y) = phi_z^{-1}(y)` by freezing the element.
    pub fn inverse_at(&self, z: &[f64], y: &[f64], tol: f64) -> Result<Vec<f64>> {
        self.element(z)?.invert_at(y, tol)
    }

    /// Derivatives of `g`: `D_y g = A^{-1}` and `D_z g = -A^{-1} D_z f`
    /// with `A = phi_z'(g(z,y))` and `D_z f` by central differences over
    /// the parameter.
    pub fn inverse_sensitivity(
        &self,
        z: &[f64],
        y: &[f64],
        tol: f64,
        h: f64,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let phi = self.element(z)?;
        let x_star = phi.invert_at(y, tol)?;
        let a = phi.jacobian(&x_star)?;
        let a_inv = invert_matrix(&a)?;
        let hz = h * (1.0 + norm(z));
        let dzf = central_jacobian(
            |q| self.element(q)?.apply(&x_star),
            z,
            hz,
        )?;
        let dzg = -&a_inv * dzf;
        Ok((dzg, a_inv))
    }
}

fn flow_gamma(
    curve: &LieAlgebraCurve,
    t: f64,
    grid: usize,
    tol: f64,
    x: &[f64],
) -> Result<Vec<f64>> {
    let d = curve.body().distance_to_boundary(x)?;
    if d == 0.0 || t == 0.0 {
        return Ok(vec![0.0; curve.body().dim()]);
    }
    let sub_curve = curve.subcurve(t.clamp(0.0, 1.0))?;
    let problem = curve_problem(&sub_curve, x)?;
    let result = picard_solve(&problem, grid, tol, PICARD_MAX_ITER)?;
    Ok(sub(result.final_state(), x))
}

fn add_clamped(x: &[f64], g: &[f64]) -> Vec<f64> {
    x.iter().zip(g).map(|(a, b)| a + b).collect()
}

fn escape_distance(body: &ConvexBody, y: &[f64]) -> f64 {
    match body {
        ConvexBody::Ball { center, radius } => (dist(y, center) - radius).max(0.0),
        ConvexBody::HPolytope {
            normals,
            offsets,
            normal_norms,
            ..
        } => normals
            .iter()
            .zip(offsets)
            .zip(normal_norms)
            .map(|((a, &b), &na)| ((dot(a, y) - b) / na).max(0.0))
            .fold(0.0, f64::max),
    }
}

/// Pull a point with roundoff-scale constraint violations back into `K`;
/// errors when the violation is beyond the apply tolerance.
fn clamp_into(body: &ConvexBody, mut y: Vec<f64>) -> Result<Vec<f64>> {
    if body.contains(&y)? {
        return Ok(y);
    }
    let excess = escape_distance(body, &y);
    if excess > APPLY_SLACK_TOL * (1.0 + norm(&y)) {
        return Err(Error::ImageEscapes { excess });
    }
    for _ in 0..16 {
        match body {
            ConvexBody::Ball { center, radius } => {
                let r = dist(&y, center);
                let s = (radius / r) * (1.0 - f64::EPSILON);
                for (yi, ci) in y.iter_mut().zip(center) {
                    *yi = ci + s * (*yi - ci);
                }
            }
            ConvexBody::HPolytope {
                normals,
                offsets,
                normal_norms,
                ..
            } => {
                for ((a, &b), &na) in normals.iter().zip(offsets).zip(normal_norms) {
                    let slack = b - dot(a, &y);
                    if slack < 0.0 {
                        let push = (-slack) / (na * na) * (1.0 + 1e-12);
                        for (yi, ai) in y.iter_mut().zip(a) {
                            *yi += push * ai;
                        }
                    }
                }
            }
        }
        if body.contains(&y)? {
            return Ok(y);
        }
    }
    Err(Error::ImageEscapes {
        excess: escape_distance(body, &y),
    })
}
