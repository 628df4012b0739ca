//! Self-check suites: each module's invariants plus the end-to-end
//! criteria, runnable from the CLI (`verify <suite>`) and from the
//! acceptance test target. All sampling is seeded; check values are
//! deterministic.

use std::sync::Arc;

use nalgebra::DMatrix;
use num::{BigInt, BigRational};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contraction::{
    curve_problem, linear_family_inverse_derivative, picard_solve, ContractionFamily, SENS_STEP,
};
use crate::diffeo::{Diffeo, InjectivityCertificate, ParametricDiffeoFamily};
use crate::error::{Error, Result};
use crate::evolution::{evol_r, evolve, field_flow, group_flow_consistency, ParametricFlowSpec};
use crate::expr::ScalarExpr;
use crate::fields::{BoundaryVanishingField, LieAlgebraCurve, ParametricFieldFamily, Weight};
use crate::geometry::ConvexBody;
use crate::jets::{
    diff_o_membership, taylor_extract, BoundaryOrderSpec, JetOrder, JetPoly,
};
use crate::linalg::dist;
use crate::numdiff::central_jacobian;

/// Named check with its observed value and threshold.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Geometry,
    Fields,
    Contraction,
    Diffeo,
    Jets,
    Evolution,
    All,
}

impl std::str::FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometry" => Ok(Suite::Geometry),
            "fields" => Ok(Suite::Fields),
            "contraction" => Ok(Suite::Contraction),
            "diffeo" => Ok(Suite::Diffeo),
            "jets" => Ok(Suite::Jets),
            "evolution" => Ok(Suite::Evolution),
            "all" => Ok(Suite::All),
            other => Err(Error::OutOfDomain(format!("unknown suite `{other}`"))),
        }
    }
}

/// Run one suite (or all six).
pub fn run_suite(suite: Suite) -> Vec<SuiteReport> {
    match suite {
        Suite::Geometry => vec![geometry_suite()],
        Suite::Fields => vec![fields_suite()],
        Suite::Contraction => vec![contraction_suite()],
        Suite::Diffeo => vec![diffeo_suite()],
        Suite::Jets => vec![jets_suite()],
        Suite::Evolution => vec![evolution_suite()],
        Suite::All => vec![
            geometry_suite(),
            fields_suite(),
            contraction_suite(),
            diffeo_suite(),
            jets_suite(),
            evolution_suite(),
        ],
    }
}

fn finish(suite: &str, checks: Vec<CheckResult>) -> SuiteReport {
    let passed = checks.iter().all(|c| c.passed);
    SuiteReport {
        suite: suite.to_string(),
        passed,
        checks,
    }
}

fn check<F>(name: &str, f: F) -> CheckResult
where
    F: FnOnce() -> Result<(bool, Option<f64>, Option<f64>, String)>,
{
    match f() {
        Ok((passed, value, threshold, detail)) => CheckResult {
            name: name.to_string(),
            passed,
            value,
            threshold,
            detail,
        },
        Err(e) => CheckResult {
            name: name.to_string(),
            passed: false,
            value: None,
            threshold: None,
            detail: format!("error: {e}"),
        },
    }
}

fn sigma(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

// ---------------------------------------------------------------------
// randomized inputs (all seeded)
// ---------------------------------------------------------------------

fn unit_interval() -> Arc<ConvexBody> {
    Arc::new(ConvexBody::interval(0.0, 1.0).expect("valid interval"))
}

fn unit_square() -> Arc<ConvexBody> {
    Arc::new(ConvexBody::box_body(&[0.0, 0.0], &[1.0, 1.0]).expect("valid box"))
}

fn unit_ball2() -> Arc<ConvexBody> {
    Arc::new(ConvexBody::ball(vec![0.0, 0.0], 1.0).expect("valid ball"))
}

/// Low-degree polynomial base expression with coefficients from the rng,
/// optionally modulated in time by `1 + 0.3 sin t`.
fn random_base_expr(rng: &mut ChaCha8Rng, n: usize, time_dep: bool) -> ScalarExpr {
    let mut expr = ScalarExpr::constant(rng.gen_range(-1.0..1.0));
    for j in 0..n {
        let linear = ScalarExpr::Mul(
            Box::new(ScalarExpr::constant(rng.gen_range(-1.0..1.0))),
            Box::new(ScalarExpr::Coord(j)),
        );
        expr = ScalarExpr::Add(Box::new(expr), Box::new(linear));
    }
    if n >= 2 {
        let cross = ScalarExpr::Mul(
            Box::new(ScalarExpr::constant(rng.gen_range(-1.0..1.0))),
            Box::new(ScalarExpr::Mul(
                Box::new(ScalarExpr::Coord(0)),
                Box::new(ScalarExpr::Coord(1)),
            )),
        );
        expr = ScalarExpr::Add(Box::new(expr), Box::new(cross));
    }
    if time_dep {
        let modulation = ScalarExpr::Add(
            Box::new(ScalarExpr::constant(1.0)),
            Box::new(ScalarExpr::Mul(
                Box::new(ScalarExpr::constant(0.3)),
                Box::new(ScalarExpr::Sin(Box::new(ScalarExpr::Time))),
            )),
        );
        expr = ScalarExpr::Mul(Box::new(expr), Box::new(modulation));
    }
    expr
}

/// Random slack-product field rescaled so the certified seminorm is at most
/// `target_theta`.
fn random_certified_field(
    body: &Arc<ConvexBody>,
    seed: u64,
    target_theta: f64,
    time_dep: bool,
) -> Result<Arc<BoundaryVanishingField>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = body.dim();
    let base: Vec<ScalarExpr> = (0..n).map(|_| random_base_expr(&mut rng, n, time_dep)).collect();
    let field = BoundaryVanishingField::new(
        body.clone(),
        base.clone(),
        Weight::SlackProduct,
        (0.0, 1.0),
    )?;
    let theta = field.theta_bound();
    if theta <= target_theta {
        return Ok(Arc::new(field));
    }
    let scale = target_theta / theta;
    let scaled: Vec<ScalarExpr> = base
        .into_iter()
        .map(|g| ScalarExpr::Mul(Box::new(ScalarExpr::constant(scale)), Box::new(g)))
        .collect();
    Ok(Arc::new(BoundaryVanishingField::new(
        body.clone(),
        scaled,
        Weight::SlackProduct,
        (0.0, 1.0),
    )?))
}

fn random_certified_element(
    body: &Arc<ConvexBody>,
    seed: u64,
    target_lip: f64,
) -> Result<Diffeo> {
    let field = random_certified_field(body, seed, target_lip, false)?;
    Diffeo::from_field(field, 0.0)
}

fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn random_rational_jet(rng: &mut ChaCha8Rng, n: usize, k: usize) -> JetPoly<BigRational> {
    let mut p = JetPoly::<BigRational>::identity(n, k).expect("valid shape");
    // shake the linear part around the identity to keep it invertible
    for i in 0..n {
        for j in 0..n {
            let mut alpha = vec![0usize; n];
            alpha[j] = 1;
            let c = if i == j {
                rat(1, 1) + rat(rng.gen_range(-3i64..=3), 10)
            } else {
                rat(rng.gen_range(-2i64..=2), 10)
            };
            p.set_coeff(i, &alpha, c).expect("valid slot");
        }
    }
    // a handful of sparse higher-order terms
    for _ in 0..rng.gen_range(1..=5) {
        let i = rng.gen_range(0..n);
        let mut alpha = vec![0usize; n];
        let deg = rng.gen_range(2..=k.max(2)).min(k);
        for _ in 0..deg {
            alpha[rng.gen_range(0..n)] += 1;
        }
        let c = rat(rng.gen_range(-9i64..=9), rng.gen_range(1i64..=9));
        p.set_coeff(i, &alpha, c).expect("valid slot");
    }
    p
}

// ---------------------------------------------------------------------
// acceptance criteria
// ---------------------------------------------------------------------

/// Logistic flows against the closed form, with per-case runtime bound.
pub fn criterion_logistic_oracle() -> CheckResult {
    check("1 logistic flows match the closed form", || {
        let body = unit_interval();
        let family = ParametricFieldFamily::new(
            body,
            vec![ScalarExpr::parse("p1").expect("parses")],
            Weight::SlackProduct,
            (0.0, 4.0),
        )?;
        let spec = ParametricFlowSpec::new(family, vec![(0.0, 1.0)], 2048, 1e-11)?;
        let mut worst = 0.0_f64;
        let mut slowest = 0.0_f64;
        for c in [0.1, 0.3] {
            for t in [0.5, 1.0, 2.0] {
                let start = std::time::Instant::now();
                let y = spec.flow_map(&[c], 0.0, t, &[0.5])?;
                slowest = slowest.max(start.elapsed().as_secs_f64());
                worst = worst.max((y[0] - sigma(c * t)).abs());
            }
        }
        let passed = worst < 1e-6 && slowest < 1.0;
        // wall time stays out of the detail string so reports are
        // byte-identical across runs
        Ok((
            passed,
            Some(worst),
            Some(1e-6),
            format!(
                "max error {worst:.3e}; per-case runtime within the 1 s budget: {}",
                slowest < 1.0
            ),
        ))
    })
}

/// Picard trajectories of random certified curves stay in the
/// half-boundary-distance ball.
pub fn criterion_confinement() -> CheckResult {
    check("2 confinement in the half-distance ball", || {
        let mut worst = 0.0_f64;
        let mut cases = 0usize;
        for (bi, body) in [unit_square(), unit_ball2()].iter().enumerate() {
            for s in 0..25u64 {
                let seed = 1000 + 50 * bi as u64 + s;
                let field = random_certified_field(body, seed, 0.33, s % 2 == 0)?;
                let curve = LieAlgebraCurve::new(field)?;
                for x0 in body.sample_interior(3, seed ^ 0xABCD) {
                    if body.distance_to_boundary(&x0)? == 0.0 {
                        continue;
                    }
                    let problem = curve_problem(&curve, &x0)?;
                    let solved = picard_solve(&problem, 1024, 1e-10, 400)?;
                    worst = worst.max(solved.confinement_violation);
                    cases += 1;
                }
            }
        }
        Ok((
            worst <= 1e-9,
            Some(worst),
            Some(1e-9),
            format!("{cases} trajectories, max violation {worst:.3e}"),
        ))
    })
}

/// Flows, compositions, and inverses fix boundary samples bitwise.
pub fn criterion_boundary_fixing() -> CheckResult {
    check("3 boundary samples fixed bitwise", || {
        let mut checked = 0usize;
        for body in [unit_interval(), unit_square()] {
            let field = random_certified_field(&body, 77, 0.3, false)?;
            let curve = Arc::new(LieAlgebraCurve::new(field.clone())?);
            let flow = Diffeo::from_flow(curve, 1.0, 256, 1e-10)?;
            let analytic = Diffeo::from_field(field, 0.0)?;
            let composed = Diffeo::compose(&flow, &analytic)?;
            let inverse = analytic.invert(1e-10)?;
            for b in body.sample_boundary(1000, 99) {
                for phi in [&flow, &analytic, &composed, &inverse] {
                    let y = phi.apply(&b)?;
                    if y != b {
                        return Ok((
                            false,
                            None,
                            None,
                            format!("{} moved boundary point {b:?}", phi.provenance()),
                        ));
                    }
                    checked += 1;
                }
            }
        }
        Ok((true, Some(checked as f64), None, format!("{checked} exact fixes")))
    })
}

/// Group axioms on random certified elements.
pub fn criterion_group_axioms() -> CheckResult {
    check("4 group axioms on random elements", || {
        let mut worst = 0.0_f64;
        let bodies = [unit_interval(), unit_square()];
        for i in 0..20u64 {
            let body = &bodies[(i % 2) as usize];
            let phi = random_certified_element(body, 2000 + 3 * i, 0.28)?;
            let inv = phi.invert(1e-10)?;
            let left = Diffeo::compose(&inv, &phi)?;
            let right = Diffeo::compose(&phi, &inv)?;
            for x in body.sample_interior(200, 4000 + i) {
                worst = worst.max(dist(&left.apply(&x)?, &x));
                worst = worst.max(dist(&right.apply(&x)?, &x));
            }
            // associativity of three small elements
            let a = random_certified_element(body, 5000 + 3 * i, 0.15)?;
            let b = random_certified_element(body, 5001 + 3 * i, 0.15)?;
            let c = random_certified_element(body, 5002 + 3 * i, 0.15)?;
            let ab_c = Diffeo::compose(&Diffeo::compose(&a, &b)?, &c)?;
            let a_bc = Diffeo::compose(&a, &Diffeo::compose(&b, &c)?)?;
            for x in body.sample_interior(50, 6000 + i) {
                worst = worst.max(dist(&ab_c.apply(&x)?, &a_bc.apply(&x)?));
            }
        }
        Ok((
            worst <= 1e-8,
            Some(worst),
            Some(1e-8),
            format!("max identity/associativity defect {worst:.3e}"),
        ))
    })
}

/// Trajectories from points near a boundary point stay within
/// `(3/2) ||x1 - x0||` of it.
pub fn criterion_boundary_continuity() -> CheckResult {
    check("5 boundary continuity bound", || {
        let body = unit_square();
        let field = random_certified_field(&body, 321, 0.33, true)?;
        let curve = LieAlgebraCurve::new(field)?;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let boundary = body.sample_boundary(10, 31);
        let mut worst_ratio = 0.0_f64;
        let mut count = 0;
        let mut attempts = 0;
        while count < 100 && attempts < 10_000 {
            attempts += 1;
            let x0 = &boundary[attempts % boundary.len()];
            let scale = 10f64.powf(rng.gen_range(-3.0..-1.0));
            let x1: Vec<f64> = x0
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    (v + scale * rng.gen_range(-1.0..1.0) + scale * 0.5 * (0.5 - x0[j]))
                        .clamp(0.0, 1.0)
                })
                .collect();
            if body.distance_to_boundary(&x1).map_or(true, |d| d == 0.0) {
                continue;
            }
            let gap = dist(&x1, x0);
            let problem = curve_problem(&curve, &x1)?;
            let solved = picard_solve(&problem, 512, 1e-11, 400)?;
            let sup: f64 = solved
                .states
                .iter()
                .map(|y| dist(y, x0))
                .fold(0.0, f64::max);
            worst_ratio = worst_ratio.max((sup - 1e-8) / gap);
            count += 1;
        }
        Ok((
            worst_ratio <= 1.5,
            Some(worst_ratio),
            Some(1.5),
            format!("{count} nearby starts, worst sup ratio {worst_ratio:.4}"),
        ))
    })
}

/// Sensitivities against independent differences and the closed form.
pub fn criterion_sensitivities() -> CheckResult {
    check("6 sensitivity formulas match differences", || {
        // fixed-point sensitivities on the module examples
        let sine = ContractionFamily::new(1, 1, 0.5, |p: &[f64], x: &[f64]| {
            Ok(vec![0.5 * p[0].sin() + 0.5 * x[0]])
        })?;
        let geo = ContractionFamily::new(1, 1, 0.9, |p: &[f64], x: &[f64]| {
            Ok(vec![0.9 * x[0] + p[0]])
        })?;
        let mut worst_rel = 0.0_f64;
        for (family, p) in [(&sine, 0.7), (&geo, 1.0)] {
            let x = family.fixed_point(&[p], &[0.0], 1e-13, 1000)?;
            let s = family.fixed_point_sensitivity(&[p], &x, SENS_STEP)?;
            let h = 1e-5;
            let xp = family.fixed_point(&[p + h], &[0.0], 1e-13, 1000)?;
            let xm = family.fixed_point(&[p - h], &[0.0], 1e-13, 1000)?;
            let fd = (xp[0] - xm[0]) / (2.0 * h);
            worst_rel = worst_rel.max((s[(0, 0)] - fd).abs() / fd.abs());
        }
        // parameter-free map: zero sensitivity
        let frozen = ContractionFamily::new(1, 1, 0.5, |_p: &[f64], x: &[f64]| {
            Ok(vec![0.5 * x[0]])
        })?;
        let s = frozen.fixed_point_sensitivity(&[0.3], &[0.0], SENS_STEP)?;
        worst_rel = worst_rel.max(s[(0, 0)].abs());
        // linear inverse derivative
        let a = |p: &[f64]| Ok(DMatrix::from_element(1, 1, 1.0 + p[0]));
        let v = linear_family_inverse_derivative(a, &[0.0], &[1.0], &[1.0], 1e-6)?;
        let lin_rel = (v[0] + 1.0).abs();
        // flow parameter derivative against the logistic closed form
        let body = unit_interval();
        let family = ParametricFieldFamily::new(
            body,
            vec![ScalarExpr::parse("p1").expect("parses")],
            Weight::SlackProduct,
            (0.0, 4.0),
        )?;
        let spec = ParametricFlowSpec::new(family, vec![(0.0, 1.0)], 2048, 1e-11)?;
        let sens = spec.flow_sensitivity(&[0.4], 0.0, 2.0, &[0.5], 1e-4)?;
        let expected = 2.0 * sigma(0.8) * (1.0 - sigma(0.8));
        let flow_err = (sens.d_param[(0, 0)] - expected).abs();
        let passed = worst_rel < 1e-5 && lin_rel < 1e-6 && flow_err < 1e-4;
        Ok((
            passed,
            Some(worst_rel.max(flow_err)),
            Some(1e-4),
            format!(
                "fixed-point rel {worst_rel:.3e}, linear {lin_rel:.3e}, flow dp {flow_err:.3e}"
            ),
        ))
    })
}

/// Exact monoid/group laws on randomized rational jets.
pub fn criterion_jet_algebra() -> CheckResult {
    check("7 exact jet algebra (associativity, identity, inverse laws) on 500 random jets", || {
        let mut rng = ChaCha8Rng::seed_from_u64(4242);
        let mut checked = 0usize;
        for case in 0..500 {
            let n = 1 + (case % 3);
            let k = 2 + (case % 3);
            let p = random_rational_jet(&mut rng, n, k);
            let q = random_rational_jet(&mut rng, n, k);
            let r = random_rational_jet(&mut rng, n, k);
            let id = JetPoly::<BigRational>::identity(n, k)?;
            let assoc_l = p.compose(&q)?.compose(&r)?;
            let assoc_r = p.compose(&q.compose(&r)?)?;
            if assoc_l != assoc_r {
                return Ok((false, None, None, format!("associativity broke at case {case}")));
            }
            if p.compose(&id)? != p || id.compose(&p)? != p {
                return Ok((false, None, None, format!("identity law broke at case {case}")));
            }
            if p.is_unit() {
                let inv = p.invert()?;
                if p.compose(&inv)? != id || inv.compose(&p)? != id {
                    return Ok((false, None, None, format!("inverse law broke at case {case}")));
                }
            }
            checked += 1;
        }
        // pinned inversion formula: (x + a x^2)^{-1} = x - a x^2 + 2 a^2 x^3
        let a = rat(2, 7);
        let mut p = JetPoly::<BigRational>::identity(1, 3)?;
        p.set_coeff(0, &[2], a.clone())?;
        let inv = p.invert()?;
        let formula_ok = inv.coeff(0, &[1]) == rat(1, 1)
            && inv.coeff(0, &[2]) == -a.clone()
            && inv.coeff(0, &[3]) == rat(2, 1) * a.clone() * a.clone();
        Ok((
            formula_ok,
            Some(checked as f64),
            Some(500.0),
            format!("{checked} randomized cases, pinned inverse {formula_ok}"),
        ))
    })
}

/// Jets of a composition equal the truncated composition of jets.
pub fn criterion_jet_homomorphism() -> CheckResult {
    check("8 jet of composition vs composed jets", || {
        let body = unit_square();
        let points = [
            vec![0.5, 0.0],
            vec![1.0, 0.5],
            vec![0.5, 1.0],
            vec![0.0, 0.5],
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.25, 0.0],
            vec![0.0, 0.75],
            vec![1.0, 0.25],
            vec![0.75, 1.0],
        ];
        let mut worst = 0.0_f64;
        let h = 1.5e-3;
        for (i, x0) in points.iter().enumerate() {
            let outer = random_certified_element(&body, 7000 + 2 * i as u64, 0.2)?;
            let inner = random_certified_element(&body, 7001 + 2 * i as u64, 0.2)?;
            let composed = Diffeo::compose(&outer, &inner)?;
            let j_comp = taylor_extract(&composed, x0, 2, h)?.jet;
            let j_outer = taylor_extract(&outer, x0, 2, h)?.jet;
            let j_inner = taylor_extract(&inner, x0, 2, h)?.jet;
            let expected = j_outer.compose(&j_inner)?;
            worst = worst.max(j_comp.max_coeff_distance(&expected)?);
        }
        Ok((
            worst <= 1e-3,
            Some(worst),
            Some(1e-3),
            format!("max coefficient gap {worst:.3e} over 10 pairs"),
        ))
    })
}

/// Central-difference flow-equation residual, halving as the snapshot
/// count doubles.
pub fn criterion_logderiv() -> CheckResult {
    check("9 right logarithmic derivative residual", || {
        let body = unit_interval();
        let field = Arc::new(BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(0.3)],
            Weight::SlackProduct,
            (0.0, 1.0),
        )?);
        let curve = Arc::new(LieAlgebraCurve::new(field)?);
        let coarse = evolve(&curve, 64, 2048, 1e-12)?.logderiv_residual;
        let fine = evolve(&curve, 128, 2048, 1e-12)?.logderiv_residual;
        let ratio = coarse / fine;
        let passed = coarse < 1e-4 && (3.5..=4.5).contains(&ratio);
        Ok((
            passed,
            Some(coarse),
            Some(1e-4),
            format!("residual {coarse:.3e} at M=64, ratio {ratio:.2} when M doubles"),
        ))
    })
}

/// Forward-then-backward flows return to the start.
pub fn criterion_reversibility() -> CheckResult {
    check("10 forward-backward flows return", || {
        let mut rng = ChaCha8Rng::seed_from_u64(31337);
        let mut worst = 0.0_f64;
        let square = unit_square();
        let interval = unit_interval();
        for case in 0..50 {
            let body: &Arc<ConvexBody> = if case % 2 == 0 { &interval } else { &square };
            let field = random_certified_field(body, 8800 + case, 0.5, case % 4 == 1)?;
            let t0 = rng.gen_range(-1.0..1.0);
            let t1 = rng.gen_range(-1.0..1.0);
            let x0 = loop {
                let candidate = body.sample_interior(2, 9900 + case)[1].clone();
                if body.distance_to_boundary(&candidate)? > 1e-6 {
                    break candidate;
                }
            };
            // rebuild the random field over the wider interval
            let field = BoundaryVanishingField::new(
                body.clone(),
                field_base_clone(&field),
                Weight::SlackProduct,
                (-2.0, 2.0),
            )?;
            let field = Arc::new(field);
            let fwd = field_flow(&field, t0, t1, &x0, 1024, 1e-11)?;
            let back = field_flow(&field, t1, t0, &fwd, 1024, 1e-11)?;
            worst = worst.max(dist(&back, &x0));
        }
        Ok((
            worst <= 1e-6,
            Some(worst),
            Some(1e-6),
            format!("max return gap {worst:.3e} over 50 cases"),
        ))
    })
}

/// Flat-weighted flow elements agree with the identity to order 3 at the
/// boundary; slack-product elements already fail at order 1.
pub fn criterion_flat_detection() -> CheckResult {
    check("11 flat elements detected, slack elements rejected", || {
        let body = unit_interval();
        let flat_field = Arc::new(BoundaryVanishingField::new(
            body.clone(),
            vec![ScalarExpr::constant(0.5)],
            Weight::FlatExp { alpha: 1.0 },
            (0.0, 1.0),
        )?);
        let curve = Arc::new(LieAlgebraCurve::new(flat_field)?);
        let flow = Diffeo::from_flow(curve, 1.0, 512, 1e-12)?;
        let spec = BoundaryOrderSpec {
            assignments: vec![
                (vec![0.0], JetOrder::Finite(3)),
                (vec![1.0], JetOrder::Finite(3)),
            ],
        };
        let flat_report = diff_o_membership(&flow, &spec, 3, 1e-3, 1e-2)?;

        let slack_field = Arc::new(BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(0.2)],
            Weight::SlackProduct,
            (0.0, 1.0),
        )?);
        let slack = Diffeo::from_field(slack_field, 0.0)?;
        let first_order = BoundaryOrderSpec {
            assignments: vec![(vec![0.0], JetOrder::Finite(1))],
        };
        let slack_report = diff_o_membership(&slack, &first_order, 3, 1e-3, 1e-2)?;
        let passed = flat_report.pass && !slack_report.pass;
        let flat_dev = flat_report
            .points
            .iter()
            .map(|p| p.max_deviation)
            .fold(0.0, f64::max);
        Ok((
            passed,
            Some(flat_dev),
            Some(1e-3),
            format!(
                "flat flow deviation {flat_dev:.3e}; slack deviation {:.3e} (must fail)",
                slack_report.points[0].max_deviation
            ),
        ))
    })
}

/// Runs criteria 1..11 and finishes with the timed full self-check.
pub fn acceptance() -> Vec<CheckResult> {
    let mut checks = vec![
        criterion_logistic_oracle(),
        criterion_confinement(),
        criterion_boundary_fixing(),
        criterion_group_axioms(),
        criterion_boundary_continuity(),
        criterion_sensitivities(),
        criterion_jet_algebra(),
        criterion_jet_homomorphism(),
        criterion_logderiv(),
        criterion_reversibility(),
        criterion_flat_detection(),
    ];
    let start = std::time::Instant::now();
    let reports = run_suite(Suite::All);
    let elapsed = start.elapsed().as_secs_f64();
    let all_pass = reports.iter().all(|r| r.passed);
    checks.push(CheckResult {
        name: "12 full self-check under five minutes".into(),
        passed: elapsed < 300.0 && all_pass,
        value: Some(elapsed),
        threshold: Some(300.0),
        detail: format!(
            "verify all took {elapsed:.1} s, suites {}",
            if all_pass { "passed" } else { "FAILED" }
        ),
    });
    checks
}

fn field_base_clone(field: &Arc<BoundaryVanishingField>) -> Vec<ScalarExpr> {
    field.base().to_vec()
}

// ---------------------------------------------------------------------
// per-module suites
// ---------------------------------------------------------------------

fn geometry_suite() -> SuiteReport {
    let mut checks = Vec::new();
    checks.push(check("membership and distance examples", || {
        let square = unit_square();
        let ok = square.contains(&[0.5, 0.5])?
            && square.contains(&[1.0, 0.3])?
            && !square.contains(&[1.1, 0.3])?
            && (square.distance_to_boundary(&[0.3, 0.5])? - 0.3).abs() < 1e-15;
        let simplex = ConvexBody::simplex(2)?;
        let ok = ok && (simplex.distance_to_boundary(&[0.25, 0.25])? - 0.25).abs() < 1e-15;
        Ok((ok, None, None, String::new()))
    }));
    checks.push(check("boundary samples have exactly zero distance", || {
        let mut checked = 0;
        for body in [
            unit_square(),
            unit_ball2(),
            Arc::new(ConvexBody::simplex(3)?),
        ] {
            for p in body.sample_boundary(1000, 5) {
                if body.distance_to_boundary(&p)? != 0.0 {
                    return Ok((false, None, None, format!("nonzero at {p:?}")));
                }
                checked += 1;
            }
        }
        Ok((true, Some(checked as f64), None, String::new()))
    }));
    checks.push(check("distance is 1-Lipschitz and midpoint-concave", || {
        for body in [unit_square(), unit_ball2()] {
            let pts = body.sample_interior(50, 11);
            for (i, x) in pts.iter().enumerate() {
                for y in &pts[i + 1..] {
                    let dx = body.distance_to_boundary(x)?;
                    let dy = body.distance_to_boundary(y)?;
                    if (dx - dy).abs() > dist(x, y) + 1e-12 {
                        return Ok((false, None, None, "Lipschitz bound broke".into()));
                    }
                    let mid: Vec<f64> = x.iter().zip(y).map(|(a, b)| 0.5 * (a + b)).collect();
                    if body.distance_to_boundary(&mid)? < 0.5 * (dx + dy) - 1e-12 {
                        return Ok((false, None, None, "concavity broke".into()));
                    }
                }
            }
        }
        Ok((true, None, None, String::new()))
    }));
    checks.push(check("distance agrees with dense boundary sampling", || {
        let ball = unit_ball2();
        let boundary = ball.sample_boundary(10_000, 23);
        let mut worst = 0.0_f64;
        for x in ball.sample_interior(20, 29) {
            let d = ball.distance_to_boundary(&x)?;
            let brute = boundary
                .iter()
                .map(|b| dist(&x, b))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max((d - brute).abs());
        }
        let ball_ok = worst < 2e-3;
        let cube = Arc::new(ConvexBody::box_body(&[0.0; 3], &[1.0; 3])?);
        let boundary = cube.sample_boundary(10_000, 23);
        let mut worst_poly = 0.0_f64;
        for x in cube.sample_interior(20, 29) {
            let d = cube.distance_to_boundary(&x)?;
            if d < 0.1 {
                continue;
            }
            let brute = boundary
                .iter()
                .map(|b| dist(&x, b))
                .fold(f64::INFINITY, f64::min);
            worst_poly = worst_poly.max((d - brute).abs());
        }
        Ok((
            ball_ok && worst_poly < 1e-2,
            Some(worst.max(worst_poly)),
            Some(1e-2),
            format!("ball gap {worst:.2e}, cube gap {worst_poly:.2e}"),
        ))
    }));
    finish("geometry", checks)
}

fn fields_suite() -> SuiteReport {
    let mut checks = Vec::new();
    checks.push(check("weighted fields vanish exactly on the boundary", || {
        let mut checked = 0;
        for body in [unit_square(), unit_ball2()] {
            let slack = random_certified_field(&body, 51, 0.5, true)?;
            let flat = BoundaryVanishingField::new(
                body.clone(),
                vec![ScalarExpr::constant(0.4), ScalarExpr::constant(-0.2)],
                Weight::FlatExp { alpha: 0.7 },
                (0.0, 1.0),
            )?;
            for k in 0..5 {
                let t = k as f64 / 4.0;
                for b in body.sample_boundary(1000, 53) {
                    for f in [slack.as_ref(), &flat] {
                        if f.eval(t, &b)?.iter().any(|c| *c != 0.0) {
                            return Ok((false, None, None, format!("nonzero at {b:?}")));
                        }
                        checked += 1;
                    }
                }
            }
        }
        Ok((true, Some(checked as f64), None, String::new()))
    }));
    checks.push(check("pointwise bound by theta times distance", || {
        let mut worst = 0.0_f64;
        for body in [unit_square(), unit_ball2()] {
            let field = random_certified_field(&body, 61, 0.4, false)?;
            let report = field.verify_pointwise_bound(0.5, 400)?;
            worst = worst.max(report.max_ratio);
            if !report.pass {
                return Ok((
                    false,
                    Some(report.max_ratio),
                    Some(1.0),
                    format!("bound broke at {:?}", report.worst_point),
                ));
            }
        }
        Ok((true, Some(worst), Some(1.0), String::new()))
    }));
    checks.push(check("parser round-trips its canonical form", || {
        let corpus = [
            "x1 * (1 - x1)",
            "sin(t) + x2^2",
            "0.3 * x1 * (1 - x1)",
            "p1 * x1",
            "exp(-1 / x1)",
            "x1^2^3",
            "-(x1 + x2)",
            "1 / (1 + exp(-x1))",
        ];
        for src in corpus {
            let tree = ScalarExpr::parse(src)?;
            if ScalarExpr::parse(&tree.pretty())? != tree {
                return Ok((false, None, None, format!("round trip failed: `{src}`")));
            }
        }
        Ok((true, None, None, String::new()))
    }));
    checks.push(check("field Jacobians converge at second order", || {
        let body = unit_interval();
        let field = BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::parse("sin(x1)").expect("parses")],
            Weight::SlackProduct,
            (0.0, 1.0),
        )?;
        let x = 0.3_f64;
        let exact = x.cos() * x * (1.0 - x) + x.sin() * (1.0 - 2.0 * x);
        let fd_err = |h: f64| -> Result<f64> {
            let fp = field.eval(0.0, &[x + h])?[0];
            let fm = field.eval(0.0, &[x - h])?[0];
            Ok(((fp - fm) / (2.0 * h) - exact).abs())
        };
        let ratio = fd_err(1e-3)? / fd_err(5e-4)?;
        Ok((
            (3.0..5.0).contains(&ratio),
            Some(ratio),
            Some(4.0),
            format!("error ratio {ratio:.2} under step halving"),
        ))
    }));
    finish("fields", checks)
}

fn contraction_suite() -> SuiteReport {
    let mut checks = Vec::new();
    checks.push(check("logistic Picard solution matches closed form", || {
        let body = unit_interval();
        let field = Arc::new(BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(0.3)],
            Weight::SlackProduct,
            (0.0, 1.0),
        )?);
        let curve = LieAlgebraCurve::new(field)?;
        let problem = curve_problem(&curve, &[0.5])?;
        let solved = picard_solve(&problem, 2048, 1e-10, 400)?;
        let err = (solved.final_state()[0] - sigma(0.3)).abs();
        let contraction_ok = solved.contraction_ratio <= problem.lip() + 1e-2;
        Ok((
            err < 1e-6 && contraction_ok && solved.confinement_ok,
            Some(err),
            Some(1e-6),
            format!(
                "error {err:.3e}, contraction ratio {:.3}",
                solved.contraction_ratio
            ),
        ))
    }));
    checks.push(check("solution error scales with the grid squared", || {
        let body = unit_interval();
        let field = Arc::new(BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(0.3)],
            Weight::SlackProduct,
            (0.0, 1.0),
        )?);
        let curve = LieAlgebraCurve::new(field)?;
        let problem = curve_problem(&curve, &[0.5])?;
        let err = |n: usize| -> Result<f64> {
            let r = picard_solve(&problem, n, 1e-13, 400)?;
            Ok((r.final_state()[0] - sigma(0.3)).abs())
        };
        let (e1, e2, e3) = (err(256)?, err(512)?, err(1024)?);
        let (r1, r2) = (e1 / e2, e2 / e3);
        let ok = (3.2..=4.8).contains(&r1) && (3.2..=4.8).contains(&r2);
        Ok((ok, Some(r1), Some(4.0), format!("ratios {r1:.2}, {r2:.2}")))
    }));
    checks.push(criterion_confinement());
    checks.push(check("fixed points match analytic solutions", || {
        let sine = ContractionFamily::new(1, 1, 0.5, |p: &[f64], x: &[f64]| {
            Ok(vec![0.5 * p[0].sin() + 0.5 * x[0]])
        })?;
        let x = sine.fixed_point(&[0.7], &[0.0], 1e-10, 400)?;
        let e1 = (x[0] - 0.7_f64.sin()).abs();
        let geo = ContractionFamily::new(1, 1, 0.9, |p: &[f64], x: &[f64]| {
            Ok(vec![0.9 * x[0] + p[0]])
        })?;
        let x = geo.fixed_point(&[1.0], &[0.0], 1e-9, 1000)?;
        let e2 = (x[0] - 10.0).abs();
        // two initial guesses agree within 2 tol
        let a = sine.fixed_point(&[0.7], &[-0.9], 1e-9, 400)?;
        let b = sine.fixed_point(&[0.7], &[0.9], 1e-9, 400)?;
        let gap = dist(&a, &b);
        Ok((
            e1 < 1e-9 && e2 < 1e-8 && gap <= 2e-9,
            Some(e1.max(e2)),
            Some(1e-8),
            format!("errors {e1:.2e}, {e2:.2e}; uniqueness gap {gap:.2e}"),
        ))
    }));
    checks.push(criterion_sensitivities());
    checks.push(check("divergence converts bad certificates to errors", || {
        let lying = ContractionFamily::new(0, 1, 0.9, |_p: &[f64], x: &[f64]| {
            Ok(vec![1.1 * x[0] + 1.0])
        })?;
        match lying.fixed_point(&[], &[1.0], 1e-12, 10_000) {
            Err(Error::Diverged { .. }) => Ok((true, None, None, String::new())),
            other => Ok((false, None, None, format!("expected divergence, got {other:?}"))),
        }
    }));
    finish("contraction", checks)
}

fn diffeo_suite() -> SuiteReport {
    let mut checks = Vec::new();
    checks.push(criterion_group_axioms());
    checks.push(check("chart conditions on the worked examples", || {
        let body = unit_interval();
        let id = Diffeo::identity(body.clone());
        let r = id.chart_membership(50, None)?;
        let id_ok = r.jacobian_ok
            && r.interior_point_ok
            && r.injectivity == InjectivityCertificate::LipschitzCertified;
        let small = Diffeo::from_field(
            Arc::new(BoundaryVanishingField::new(
                body.clone(),
                vec![ScalarExpr::constant(0.3)],
                Weight::SlackProduct,
                (0.0, 1.0),
            )?),
            0.0,
        )?;
        let r = small.chart_membership(100, None)?;
        let small_ok =
            r.jacobian_ok && r.injectivity == InjectivityCertificate::LipschitzCertified;
        let folding = Diffeo::from_field(
            Arc::new(BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::constant(-3.0)],
                Weight::SlackProduct,
                (0.0, 1.0),
            )?),
            0.0,
        )?;
        let r = folding.chart_membership(100, None)?;
        let folding_caught = !r.jacobian_ok;
        Ok((
            id_ok && small_ok && folding_caught,
            Some(r.jacobian_margin),
            Some(0.0),
            format!("folding margin {:.3}", r.jacobian_margin),
        ))
    }));
    checks.push(check("bi-Lipschitz bounds on sampled pairs", || {
        let body = unit_square();
        let phi = random_certified_element(&body, 303, 0.3)?;
        let theta = phi.lip_gamma();
        let pts = body.sample_interior(40, 305);
        for (i, x) in pts.iter().enumerate() {
            for y in &pts[i + 1..] {
                let lhs = dist(&phi.apply(x)?, &phi.apply(y)?);
                let d = dist(x, y);
                if lhs < (1.0 - theta) * d - 1e-12 || lhs > (1.0 + theta) * d + 1e-12 {
                    return Ok((false, Some(lhs / d), None, "bound broke".into()));
                }
            }
        }
        Ok((true, Some(theta), Some(1.0), String::new()))
    }));
    checks.push(check("inversion against the quadratic formula", || {
        let c = 0.2;
        let body = unit_interval();
        let phi = Diffeo::from_field(
            Arc::new(BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::constant(c)],
                Weight::SlackProduct,
                (0.0, 1.0),
            )?),
            0.0,
        )?;
        let tol = 1e-8_f64;
        let bound = (tol.ln() / phi.lip_gamma().ln()).ceil() as usize + 2;
        let mut worst = 0.0_f64;
        let mut max_iters = 0usize;
        for y in phi.body().sample_interior(50, 307) {
            let (x, iters) = phi.invert_at_counted(&y, tol)?;
            max_iters = max_iters.max(iters);
            let expected =
                ((1.0 + c) - ((1.0 + c) * (1.0 + c) - 4.0 * c * y[0]).sqrt()) / (2.0 * c);
            worst = worst.max((x[0] - expected).abs());
        }
        Ok((
            worst < 1e-7 && max_iters <= bound,
            Some(worst),
            Some(1e-7),
            format!("max error {worst:.2e}, iterations {max_iters} <= {bound}"),
        ))
    }));
    checks.push(check("composition Jacobian matches differences", || {
        let body = unit_square();
        let outer = random_certified_element(&body, 311, 0.25)?;
        let inner = random_certified_element(&body, 313, 0.25)?;
        let composed = Diffeo::compose(&outer, &inner)?;
        let mut worst = 0.0_f64;
        for x in body.sample_interior(20, 317) {
            if body.distance_to_boundary(&x)? < 1e-3 {
                continue;
            }
            let analytic = composed.jacobian(&x)?;
            let fd = central_jacobian(|p| composed.apply(p), &x, 1e-6)?;
            let rel = (&analytic - &fd).norm() / fd.norm();
            worst = worst.max(rel);
        }
        Ok((worst < 1e-5, Some(worst), Some(1e-5), String::new()))
    }));
    checks.push(check("parametric inversion and its derivatives", || {
        let body = unit_interval();
        let family_body = body.clone();
        let family = ParametricDiffeoFamily::new(1, move |z: &[f64]| {
            let field = Arc::new(BoundaryVanishingField::new(
                family_body.clone(),
                vec![ScalarExpr::constant(z[0])],
                Weight::SlackProduct,
                (0.0, 1.0),
            )?);
            Diffeo::from_field(field, 0.0)
        });
        let g = family.inverse_at(&[0.2], &[0.55], 1e-12)?;
        let point_err = (g[0] - 0.5).abs();
        let (dzg, dyg) = family.inverse_sensitivity(&[0.2], &[0.55], 1e-12, 1e-5)?;
        let dy_err = (dyg[(0, 0)] - 1.0).abs();
        let h = 1e-5;
        let gp = family.inverse_at(&[0.2 + h], &[0.55], 1e-13)?;
        let gm = family.inverse_at(&[0.2 - h], &[0.55], 1e-13)?;
        let fd = (gp[0] - gm[0]) / (2.0 * h);
        let dz_err = (dzg[(0, 0)] - fd).abs() / fd.abs().max(1.0);
        let ok = point_err < 1e-10 && dy_err < 1e-6 && dz_err < 1e-5;
        Ok((
            ok,
            Some(point_err.max(dy_err).max(dz_err)),
            Some(1e-5),
            format!("point {point_err:.2e}, dy {dy_err:.2e}, dz rel {dz_err:.2e}"),
        ))
    }));
    finish("diffeo", checks)
}

fn jets_suite() -> SuiteReport {
    let mut checks = Vec::new();
    checks.push(criterion_jet_algebra());
    checks.push(check("projection commutes with composition", || {
        let mut rng = ChaCha8Rng::seed_from_u64(515);
        for _ in 0..50 {
            let p = random_rational_jet(&mut rng, 2, 4);
            let q = random_rational_jet(&mut rng, 2, 4);
            for k2 in 1..=3 {
                let lhs = p.compose(&q)?.project(k2)?;
                let rhs = p.project(k2)?.compose(&q.project(k2)?)?;
                if lhs != rhs {
                    return Ok((false, None, None, format!("broke at k' = {k2}")));
                }
            }
        }
        Ok((true, None, None, String::new()))
    }));
    checks.push(check("jet extraction on analytic examples", || {
        let body = unit_interval();
        let phi = Diffeo::from_field(
            Arc::new(BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::constant(0.2)],
                Weight::SlackProduct,
                (0.0, 1.0),
            )?),
            0.0,
        )?;
        let left = taylor_extract(&phi, &[0.0], 2, 1e-2)?;
        let e1 = (left.jet.coeff(0, &[1]) - 1.2).abs();
        let e2 = (left.jet.coeff(0, &[2]) + 0.2).abs();
        let right = taylor_extract(&phi, &[1.0], 2, 1e-2)?;
        let e3 = (right.jet.coeff(0, &[1]) - 0.8).abs();
        let e4 = (right.jet.coeff(0, &[2]) + 0.2).abs();
        let worst = e1.max(e2).max(e3).max(e4);
        Ok((worst < 1e-4, Some(worst), Some(1e-4), String::new()))
    }));
    checks.push(criterion_jet_homomorphism());
    checks.push(criterion_flat_detection());
    finish("jets", checks)
}

fn evolution_suite() -> SuiteReport {
    let mut checks = Vec::new();
    checks.push(criterion_logistic_oracle());
    checks.push(criterion_boundary_fixing());
    checks.push(criterion_boundary_continuity());
    checks.push(criterion_logderiv());
    checks.push(criterion_reversibility());
    checks.push(check("autonomous flows satisfy the group law", || {
        let body = unit_interval();
        let field = Arc::new(BoundaryVanishingField::new(
            body,
            vec![ScalarExpr::constant(0.3)],
            Weight::SlackProduct,
            (-2.0, 2.0),
        )?);
        let half = group_flow_consistency(&field, 0.5, 0.5, 8, 1024, 1e-11)?;
        let reverse = group_flow_consistency(&field, 1.0, -1.0, 8, 1024, 1e-11)?;
        let worst = half.max_discrepancy.max(reverse.max_discrepancy);
        Ok((worst < 1e-6, Some(worst), Some(1e-6), String::new()))
    }));
    checks.push(check("time-one flows admit the global chart", || {
        let body = unit_square();
        let field = random_certified_field(&body, 909, 0.33, true)?;
        let curve = Arc::new(LieAlgebraCurve::new(field)?);
        let phi = evol_r(&curve, 512, 1e-11)?;
        let certified = phi.chart_certified(30)?;
        Ok((
            certified,
            Some(phi.lip_gamma()),
            Some(1.0),
            format!("heuristic Lip certificate {:.3}", phi.lip_gamma()),
        ))
    }));
    checks.push(check("flow sensitivities converge at second order", || {
        let body = unit_interval();
        let family = ParametricFieldFamily::new(
            body,
            vec![ScalarExpr::parse("p1").expect("parses")],
            Weight::SlackProduct,
            (0.0, 4.0),
        )?;
        let spec = ParametricFlowSpec::new(family, vec![(0.0, 1.0)], 1024, 1e-12)?;
        let sens = spec.flow_sensitivity(&[0.4], 0.0, 2.0, &[0.5], 2e-3)?;
        let rp = sens.param_richardson_ratio.unwrap_or(f64::NAN);
        let rx = sens.x0_richardson_ratio.unwrap_or(f64::NAN);
        // finite differences of the flow in the time arguments
        let fd_t = |h: f64| -> Result<f64> {
            let a = spec.flow_map(&[0.4], 0.0, 2.0 + h, &[0.5])?[0];
            let b = spec.flow_map(&[0.4], 0.0, 2.0 - h, &[0.5])?[0];
            Ok((a - b) / (2.0 * h))
        };
        let (d1, d2, d4) = (fd_t(2e-3)?, fd_t(1e-3)?, fd_t(5e-4)?);
        let rt = (d1 - d2).abs() / (d2 - d4).abs();
        let ok = (3.5..=4.5).contains(&rp) && (3.5..=4.5).contains(&rx) && (3.5..=4.5).contains(&rt);
        Ok((
            ok,
            Some(rp),
            Some(4.0),
            format!("Richardson ratios p {rp:.2}, x0 {rx:.2}, t {rt:.2}"),
        ))
    }));
    finish("evolution", checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_suite_passes() {
        let report = geometry_suite();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn fields_suite_passes() {
        let report = fields_suite();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn suite_names_parse() {
        for name in ["geometry", "fields", "contraction", "diffeo", "jets", "evolution", "all"] {
            assert!(name.parse::<Suite>().is_ok());
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}
