//! Time-dependent vector fields on `K` vanishing on the boundary, with
//! sampled Lipschitz certificates.
//!
//! A field is a base map `g(t,x)` given componentwise by [`ScalarExpr`]
//! trees, multiplied by a weight that vanishes *exactly* on the boundary:
//! the product of facet slacks (polynomial, not flat) or `exp(-alpha/d(x))`
//! (flat). With no weight, boundary vanishing of the base itself is
//! validated at construction.
//!
//! Certificates are sampled suprema inflated by 5%; everything downstream
//! is stated "given the certificate".

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{EvalContext, ScalarExpr};
use crate::geometry::ConvexBody;
use crate::linalg::{dist, dot, norm, operator_norm};
use crate::numdiff::central_jacobian;

/// Boundary-vanishing weight applied to the base expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// Product of normalized facet slacks (ball: `(r - ||x-c||)/r`).
    SlackProduct,
    /// `exp(-alpha / d(x))`, flat on the boundary.
    FlatExp { alpha: f64 },
    /// No weight; the base must vanish on boundary samples by itself.
    None,
}

/// Sampling parameters for the Lipschitz certificate.
const CERT_T_SAMPLES: usize = 5;
const CERT_X_SAMPLES: usize = 200;
const CERT_SEED: u64 = 0;
const CERT_INFLATION: f64 = 1.05;
const BOUNDARY_CHECK_SAMPLES: usize = 128;

/// A time-dependent vector field `f(t,x)` with `f(t,.)|_{boundary} = 0`
/// and a certified bound on `sup_t Lip(f(t,.))`.
#[derive(Debug, Clone)]
pub struct BoundaryVanishingField {
    body: Arc<ConvexBody>,
    base: Vec<ScalarExpr>,
    weight: Weight,
    params: Vec<f64>,
    theta_bound: f64,
    time_interval: (f64, f64),
}

impl BoundaryVanishingField {
    /// Build and certify a field. Rejects dimension mismatches, unbound
    /// parameters, and (for `Weight::None`) bases that fail to vanish on
    /// boundary samples.
    pub fn new(
        body: Arc<ConvexBody>,
        base: Vec<ScalarExpr>,
        weight: Weight,
        time_interval: (f64, f64),
    ) -> Result<Self> {
        Self::with_params(body, base, weight, time_interval, Vec::new())
    }

    /// As [`new`](Self::new) with parameter values bound into the
    /// expressions.
    pub fn with_params(
        body: Arc<ConvexBody>,
        base: Vec<ScalarExpr>,
        weight: Weight,
        time_interval: (f64, f64),
        params: Vec<f64>,
    ) -> Result<Self> {
        let n = body.dim();
        if base.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: base.len(),
            });
        }
        if !(time_interval.0 < time_interval.1) {
            return Err(Error::FieldRejected(format!(
                "time interval [{}, {}] is degenerate",
                time_interval.0, time_interval.1
            )));
        }
        for (i, g) in base.iter().enumerate() {
            if g.coord_arity() > n {
                return Err(Error::FieldRejected(format!(
                    "component {} uses coordinate x{} beyond dimension {}",
                    i + 1,
                    g.coord_arity(),
                    n
                )));
            }
            if g.param_arity() > params.len() {
                return Err(Error::FieldRejected(format!(
                    "component {} uses parameter p{} but only {} value(s) bound",
                    i + 1,
                    g.param_arity(),
                    params.len()
                )));
            }
        }
        if let Weight::FlatExp { alpha } = weight {
            if !(alpha > 0.0) {
                return Err(Error::FieldRejected("flat weight needs alpha > 0".into()));
            }
        }
        let mut field = BoundaryVanishingField {
            body,
            base,
            weight,
            params,
            theta_bound: f64::INFINITY,
            time_interval,
        };
        if field.weight == Weight::None {
            field.validate_boundary_vanishing()?;
        }
        field.theta_bound = field.lipschitz_seminorm(CERT_T_SAMPLES, CERT_X_SAMPLES, CERT_SEED)?;
        Ok(field)
    }

    fn validate_boundary_vanishing(&self) -> Result<()> {
        let (ta, tb) = self.time_interval;
        for k in 0..CERT_T_SAMPLES {
            let t = ta + (tb - ta) * k as f64 / (CERT_T_SAMPLES - 1) as f64;
            for x in self.body.sample_boundary(BOUNDARY_CHECK_SAMPLES, CERT_SEED) {
                let v = self.eval(t, &x)?;
                if v.iter().any(|c| *c != 0.0) {
                    return Err(Error::FieldRejected(format!(
                        "base does not vanish at boundary sample {x:?} (t = {t})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn body(&self) -> &Arc<ConvexBody> {
        &self.body
    }

    pub fn dim(&self) -> usize {
        self.body.dim()
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn time_interval(&self) -> (f64, f64) {
        self.time_interval
    }

    /// Certified `sup_t Lip(f(t,.))` (sampled, inflated by 5%).
    pub fn theta_bound(&self) -> f64 {
        self.theta_bound
    }

    pub(crate) fn base(&self) -> &[ScalarExpr] {
        &self.base
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (ta, tb) = self.time_interval;
        let slop = 1e-12 * (1.0 + ta.abs() + tb.abs());
        if t < ta - slop || t > tb + slop {
            return Err(Error::OutOfDomain(format!(
                "t = {t} outside time interval [{ta}, {tb}]"
            )));
        }
        Ok(())
    }

    /// Weight factor `w(x)`; exactly zero on the boundary for the weighted
    /// variants.
    pub fn weight_value(&self, x: &[f64]) -> Result<f64> {
        match (&self.weight, self.body.as_ref()) {
            (Weight::None, _) => Ok(1.0),
            (Weight::SlackProduct, ConvexBody::Ball { center, radius }) => {
                Ok((radius - dist(x, center)) / radius)
            }
            (
                Weight::SlackProduct,
                ConvexBody::HPolytope {
                    normals,
                    offsets,
                    normal_norms,
                    ..
                },
            ) => {
                let mut w = 1.0;
                for ((a, &b), &na) in normals.iter().zip(offsets).zip(normal_norms) {
                    w *= (b - dot(a, x)) / na;
                }
                Ok(w)
            }
            (Weight::FlatExp { alpha }, _) => {
                let d = self.body.distance_to_boundary(x)?;
                if d == 0.0 {
                    Ok(0.0)
                } else {
                    Ok((-alpha / d).exp())
                }
            }
        }
    }

    /// Evaluate `f(t,x) = g(t,x) * w(x)`.
    pub fn eval(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.check_time(t)?;
        if !self.body.contains(x)? {
            let slack = match self.body.distance_to_boundary(x) {
                Err(Error::OutsideBody { slack }) => slack,
                _ => 0.0,
            };
            return Err(Error::OutsideBody { slack });
        }
        let w = self.weight_value(x)?;
        let ctx = EvalContext {
            t,
            x,
            p: &self.params,
        };
        let mut out = Vec::with_capacity(self.base.len());
        for g in &self.base {
            let v = g.eval(&ctx)? * w;
            if !v.is_finite() {
                return Err(Error::Eval(format!("non-finite field value at {x:?}")));
            }
            out.push(v);
        }
        Ok(out)
    }

    /// Spatial Jacobian of `f(t,.)` at an interior point, by central
    /// differences with step adapted to the boundary distance.
    pub fn jacobian(&self, t: f64, x: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.body.distance_to_boundary(x)?;
        if d == 0.0 {
            return Err(Error::OutOfDomain(
                "spatial Jacobian needs an interior point".into(),
            ));
        }
        let h = (1e-6_f64.max(1e-3 * d)).min(0.5 * d);
        central_jacobian(|y| self.eval(t, y), x, h)
    }

    /// Sampled Lipschitz seminorm `sup_{t,x} ||f'(t,x)||_op`, inflated by
    /// the 5% safety factor. This value certifies `theta_bound`.
    pub fn lipschitz_seminorm(
        &self,
        t_samples: usize,
        x_samples: usize,
        seed: u64,
    ) -> Result<f64> {
        if t_samples < 2 || x_samples < 2 {
            return Err(Error::OutOfDomain("need at least 2 samples per axis".into()));
        }
        let (ta, tb) = self.time_interval;
        let xs = self.body.sample_interior(x_samples, seed);
        let mut sup = 0.0_f64;
        for k in 0..t_samples {
            let t = ta + (tb - ta) * k as f64 / (t_samples - 1) as f64;
            for x in &xs {
                let j = self.jacobian(t, x)?;
                sup = sup.max(operator_norm(&j));
            }
        }
        Ok(sup * CERT_INFLATION)
    }

    /// Re-certify `theta_bound` with explicit sampling parameters.
    pub fn certify(&mut self, t_samples: usize, x_samples: usize, seed: u64) -> Result<f64> {
        self.theta_bound = self.lipschitz_seminorm(t_samples, x_samples, seed)?;
        Ok(self.theta_bound)
    }

    /// Check `||f(t,x)|| <= theta_bound * d(x)` on samples.
    pub fn verify_pointwise_bound(&self, t: f64, samples: usize) -> Result<PointwiseBoundReport> {
        let mut max_ratio = 0.0_f64;
        let mut worst = None;
        let mut points = self.body.sample_interior(samples, CERT_SEED);
        points.extend(
            self.body
                .sample_boundary(samples.min(BOUNDARY_CHECK_SAMPLES), CERT_SEED),
        );
        for x in points {
            let d = self.body.distance_to_boundary(&x)?;
            let f = norm(&self.eval(t, &x)?);
            let ratio = if f == 0.0 {
                0.0
            } else if d == 0.0 {
                f64::INFINITY
            } else {
                f / (self.theta_bound * d)
            };
            if ratio > max_ratio {
                max_ratio = ratio;
                worst = Some(x);
            }
        }
        Ok(PointwiseBoundReport {
            theta: self.theta_bound,
            max_ratio,
            pass: max_ratio <= 1.0,
            worst_point: worst,
        })
    }
}

/// Result of [`BoundaryVanishingField::verify_pointwise_bound`].
#[derive(Debug, Clone, Serialize)]
pub struct PointwiseBoundReport {
    pub theta: f64,
    pub max_ratio: f64,
    pub pass: bool,
    pub worst_point: Option<Vec<f64>>,
}

/// A field with free parameters `p1..pm`, bound per point of the parameter
/// box.
#[derive(Debug, Clone)]
pub struct ParametricFieldFamily {
    body: Arc<ConvexBody>,
    base: Vec<ScalarExpr>,
    weight: Weight,
    time_interval: (f64, f64),
    param_dim: usize,
}

impl ParametricFieldFamily {
    pub fn new(
        body: Arc<ConvexBody>,
        base: Vec<ScalarExpr>,
        weight: Weight,
        time_interval: (f64, f64),
    ) -> Result<Self> {
        let param_dim = base.iter().map(|g| g.param_arity()).max().unwrap_or(0);
        let n = body.dim();
        if base.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: base.len(),
            });
        }
        Ok(ParametricFieldFamily {
            body,
            base,
            weight,
            time_interval,
            param_dim,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn body(&self) -> &Arc<ConvexBody> {
        &self.body
    }

    pub fn time_interval(&self) -> (f64, f64) {
        self.time_interval
    }

    /// Freeze the parameters, producing a certified field.
    pub fn bind(&self, p: &[f64]) -> Result<BoundaryVanishingField> {
        if p.len() < self.param_dim {
            return Err(Error::OutOfDomain(format!(
                "family needs {} parameter(s), got {}",
                self.param_dim,
                p.len()
            )));
        }
        BoundaryVanishingField::with_params(
            self.body.clone(),
            self.base.clone(),
            self.weight.clone(),
            self.time_interval,
            p.to_vec(),
        )
    }
}

/// A continuous curve of Lie-algebra elements over `tau in [0,1]`, obtained
/// from a field over a time window `[t0, t1]` by the exact reparametrization
/// `gamma(tau) = (t1 - t0) f(t0 + tau (t1 - t0), .)`. The window may run
/// backwards (`t1 < t0`).
#[derive(Debug, Clone)]
pub struct LieAlgebraCurve {
    field: Arc<BoundaryVanishingField>,
    window: (f64, f64),
    theta: f64,
}

impl LieAlgebraCurve {
    /// Curve over the field's full time interval.
    pub fn new(field: Arc<BoundaryVanishingField>) -> Result<Self> {
        let (ta, tb) = field.time_interval();
        Self::over_window(field, ta, tb)
    }

    /// Curve over an explicit window inside the field's interval. The
    /// certified `theta = |t1 - t0| * theta_bound` must not exceed 1/3.
    pub fn over_window(field: Arc<BoundaryVanishingField>, t0: f64, t1: f64) -> Result<Self> {
        let (ta, tb) = field.time_interval();
        let slop = 1e-12 * (1.0 + ta.abs() + tb.abs());
        for t in [t0, t1] {
            if t < ta - slop || t > tb + slop {
                return Err(Error::OutOfDomain(format!(
                    "window endpoint {t} outside field interval [{ta}, {tb}]"
                )));
            }
        }
        let theta = (t1 - t0).abs() * field.theta_bound();
        if theta > 1.0 / 3.0 {
            return Err(Error::BadCertificate(format!(
                "theta = {theta:.6} exceeds 1/3; split the window into panels"
            )));
        }
        Ok(LieAlgebraCurve {
            field,
            window: (t0, t1),
            theta,
        })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn body(&self) -> &Arc<ConvexBody> {
        self.field.body()
    }

    pub fn field(&self) -> &Arc<BoundaryVanishingField> {
        &self.field
    }

    pub fn window(&self) -> (f64, f64) {
        self.window
    }

    /// Evaluate `gamma(tau)(x)` for `tau in [0,1]`.
    pub fn eval(&self, tau: f64, x: &[f64]) -> Result<Vec<f64>> {
        if !(-1e-12..=1.0 + 1e-12).contains(&tau) {
            return Err(Error::OutOfDomain(format!("tau = {tau} outside [0,1]")));
        }
        let (t0, t1) = self.window;
        let delta = t1 - t0;
        let v = self.field.eval(t0 + tau * delta, x)?;
        Ok(v.into_iter().map(|c| c * delta).collect())
    }

    /// The curve restricted to `[0, s]`, rescaled back to `[0,1]`.
    pub fn subcurve(&self, s: f64) -> Result<LieAlgebraCurve> {
        if !(-1e-12..=1.0 + 1e-12).contains(&s) {
            return Err(Error::OutOfDomain(format!("s = {s} outside [0,1]")));
        }
        let (t0, t1) = self.window;
        Self::over_window(self.field.clone(), t0, t0 + s * (t1 - t0))
    }

    /// Whether the underlying field is autonomous.
    pub fn autonomous(&self) -> bool {
        !self.field.base.iter().any(|g| g.depends_on_time())
    }
}

/// JSON descriptor of a field, the on-disk form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldDescriptor {
    pub base: Vec<String>,
    pub weight: Option<WeightDescriptor>,
    pub time: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum WeightDescriptor {
    Slack,
    Flat { alpha: f64 },
}

impl FieldDescriptor {
    pub fn weight(&self) -> Weight {
        match &self.weight {
            None => Weight::None,
            Some(WeightDescriptor::Slack) => Weight::SlackProduct,
            Some(WeightDescriptor::Flat { alpha }) => Weight::FlatExp { alpha: *alpha },
        }
    }

    pub fn parse_base(&self) -> Result<Vec<ScalarExpr>> {
        self.base.iter().map(|s| ScalarExpr::parse(s)).collect()
    }

    /// Instantiate over a body. Fields with free parameters should go
    /// through [`to_family`](Self::to_family) instead.
    pub fn to_field(&self, body: Arc<ConvexBody>) -> Result<BoundaryVanishingField> {
        BoundaryVanishingField::new(body, self.parse_base()?, self.weight(), self.time)
    }

    pub fn to_family(&self, body: Arc<ConvexBody>) -> Result<ParametricFieldFamily> {
        ParametricFieldFamily::new(body, self.parse_base()?, self.weight(), self.time)
    }
}
