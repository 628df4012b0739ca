//! The truncated polynomial monoid under composition: polynomial maps
//! `R^n -> R^n` with terms of degree 1..k and no constant term, composed
//! and then truncated at degree `k`. Units are the jets with invertible
//! linear part; inversion runs order by order.
//!
//! Two coefficient modes: exact rationals ([`num::BigRational`]) for the
//! algebraic laws, and `f64` for jets extracted from group elements by
//! finite differences.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num::{BigInt, BigRational, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::diffeo::Diffeo;
use crate::error::{Error, Result};
use crate::geometry::ConvexBody;
use crate::linalg::{dot, norm};

/// Coefficient arithmetic used by [`JetPoly`].
pub trait JetScalar:
    Clone
    + PartialEq
    + std::fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    fn is_zero(&self) -> bool;
    /// Pivot quality for elimination; any positive value is acceptable for
    /// exact scalars.
    fn pivot_score(&self) -> f64;
    /// Whether a determinant of this size counts as invertible.
    fn det_invertible(&self) -> bool;
}

impl JetScalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn pivot_score(&self) -> f64 {
        self.abs()
    }
    fn det_invertible(&self) -> bool {
        self.abs() > 1e-12
    }
}

impl JetScalar for BigRational {
    fn zero() -> Self {
        num::Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn is_zero(&self) -> bool {
        num::Zero::is_zero(self)
    }
    fn pivot_score(&self) -> f64 {
        if num::Zero::is_zero(self) {
            0.0
        } else {
            1.0
        }
    }
    fn det_invertible(&self) -> bool {
        !num::Zero::is_zero(self)
    }
}

type MultiIndex = Vec<u8>;

fn degree(alpha: &[u8]) -> usize {
    alpha.iter().map(|&e| e as usize).sum()
}

/// A polynomial map `R^n -> R^n` with terms of degrees `1..=k` and no
/// constant term; zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct JetPoly<T> {
    n: usize,
    k: usize,
    comps: Vec<BTreeMap<MultiIndex, T>>,
}

impl<T: JetScalar> JetPoly<T> {
    /// The zero map (not a unit).
    pub fn zero_map(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::JetMismatch("need n >= 1 and k >= 1".into()));
        }
        Ok(JetPoly {
            n,
            k,
            comps: vec![BTreeMap::new(); n],
        })
    }

    /// The identity jet.
    pub fn identity(n: usize, k: usize) -> Result<Self> {
        let mut p = Self::zero_map(n, k)?;
        for i in 0..n {
            let mut alpha = vec![0u8; n];
            alpha[i] = 1;
            p.comps[i].insert(alpha, T::one());
        }
        Ok(p)
    }

    /// Jet with the given linear part and nothing else.
    pub fn from_linear(a: &[Vec<T>], k: usize) -> Result<Self> {
        let n = a.len();
        let mut p = Self::zero_map(n, k)?;
        for (i, row) in a.iter().enumerate() {
            if row.len() != n {
                return Err(Error::JetMismatch("linear part must be square".into()));
            }
            for (j, c) in row.iter().enumerate() {
                if !c.is_zero() {
                    let mut alpha = vec![0u8; n];
                    alpha[j] = 1;
                    p.comps[i].insert(alpha, c.clone());
                }
            }
        }
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.k
    }

    pub fn set_coeff(&mut self, i: usize, alpha: &[usize], c: T) -> Result<()> {
        if i >= self.n || alpha.len() != self.n {
            return Err(Error::JetMismatch(format!(
                "coefficient slot ({i}, {alpha:?}) out of range for n = {}",
                self.n
            )));
        }
        let deg: usize = alpha.iter().sum();
        if deg == 0 || deg > self.k {
            return Err(Error::JetMismatch(format!(
                "multi-index degree {deg} outside 1..={}",
                self.k
            )));
        }
        let key: MultiIndex = alpha.iter().map(|&e| e as u8).collect();
        if c.is_zero() {
            self.comps[i].remove(&key);
        } else {
            self.comps[i].insert(key, c);
        }
        Ok(())
    }

    pub fn coeff(&self, i: usize, alpha: &[usize]) -> T {
        let key: MultiIndex = alpha.iter().map(|&e| e as u8).collect();
        self.comps
            .get(i)
            .and_then(|m| m.get(&key))
            .cloned()
            .unwrap_or_else(T::zero)
    }

    pub fn terms(&self) -> impl Iterator<Item = (usize, &MultiIndex, &T)> {
        self.comps
            .iter()
            .enumerate()
            .flat_map(|(i, m)| m.iter().map(move |(a, c)| (i, a, c)))
    }

    /// Matrix of degree-1 coefficients.
    pub fn linear_part(&self) -> Vec<Vec<T>> {
        let mut a = vec![vec![T::zero(); self.n]; self.n];
        for (i, row) in a.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                let mut alpha = vec![0u8; self.n];
                alpha[j] = 1;
                if let Some(c) = self.comps[i].get(&alpha) {
                    *slot = c.clone();
                }
            }
        }
        a
    }

    /// Truncated composition `self . other`, the order-k Taylor polynomial
    /// of the composite.
    pub fn compose(&self, other: &JetPoly<T>) -> Result<JetPoly<T>> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::JetMismatch(format!(
                "cannot compose (n={}, k={}) with (n={}, k={})",
                self.n, self.k, other.n, other.k
            )));
        }
        let k = self.k;
        // power cache per input coordinate of `other`
        let mut powers: Vec<Vec<Option<ScalarPoly<T>>>> = vec![vec![None; k + 1]; self.n];
        let mut out = JetPoly::zero_map(self.n, k)?;
        for (i, terms) in self.comps.iter().enumerate() {
            let mut acc: ScalarPoly<T> = BTreeMap::new();
            for (alpha, c) in terms {
                let mut prod: ScalarPoly<T> = constant_poly(T::one(), self.n);
                for (j, &e) in alpha.iter().enumerate() {
                    if e == 0 {
                        continue;
                    }
                    let pw = power_of(&mut powers, &other.comps, j, e as usize, k, self.n);
                    prod = mul_trunc(&prod, &pw, k);
                    if prod.is_empty() {
                        break;
                    }
                }
                for (beta, v) in prod {
                    add_term(&mut acc, beta, v * c.clone());
                }
            }
            for (beta, v) in acc {
                debug_assert!(degree(&beta) >= 1, "constant term leaked into a jet");
                if !v.is_zero() {
                    out.comps[i].insert(beta, v);
                }
            }
        }
        Ok(out)
    }

    /// Whether the linear part is invertible.
    pub fn is_unit(&self) -> bool {
        match field_inverse(&self.linear_part()) {
            Some((_, det)) => det.det_invertible(),
            None => false,
        }
    }

    /// Compositional inverse of a unit, computed order by order: the linear
    /// part is inverted exactly, then each degree is corrected from the
    /// defect of `self . q - id`.
    pub fn invert(&self) -> Result<JetPoly<T>> {
        let (a_inv, det) = field_inverse(&self.linear_part()).ok_or(Error::NonUnitJet)?;
        if !det.det_invertible() {
            return Err(Error::NonUnitJet);
        }
        let mut q = JetPoly::from_linear(&a_inv, self.k)?;
        for j in 2..=self.k {
            let r = self.compose(&q)?;
            // degree-j defect of r against the identity (degree-1 part of r
            // is exactly id by construction of q1)
            let mut defects: Vec<Vec<(MultiIndex, T)>> = vec![Vec::new(); self.n];
            for (i, terms) in r.comps.iter().enumerate() {
                for (alpha, c) in terms {
                    if degree(alpha) == j {
                        defects[i].push((alpha.clone(), c.clone()));
                    }
                }
            }
            // q_j -= A^{-1} defect_j
            for i in 0..self.n {
                for (m, defect) in defects.iter().enumerate() {
                    let w = a_inv[i][m].clone();
                    if w.is_zero() {
                        continue;
                    }
                    for (alpha, c) in defect {
                        let cur = q.comps[i].get(alpha).cloned().unwrap_or_else(T::zero);
                        let next = cur - w.clone() * c.clone();
                        if next.is_zero() {
                            q.comps[i].remove(alpha);
                        } else {
                            q.comps[i].insert(alpha.clone(), next);
                        }
                    }
                }
            }
        }
        Ok(q)
    }

    /// Project to a lower order `k2 <= k`.
    pub fn project(&self, k2: usize) -> Result<JetPoly<T>> {
        if k2 == 0 || k2 > self.k {
            return Err(Error::JetMismatch(format!(
                "projection order {k2} outside 1..={}",
                self.k
            )));
        }
        let mut out = JetPoly::zero_map(self.n, k2)?;
        for (i, terms) in self.comps.iter().enumerate() {
            for (alpha, c) in terms {
                if degree(alpha) <= k2 {
                    out.comps[i].insert(alpha.clone(), c.clone());
                }
            }
        }
        Ok(out)
    }
}

impl JetPoly<BigRational> {
    pub fn to_f64(&self) -> JetPoly<f64> {
        let mut out = JetPoly::<f64>::zero_map(self.n, self.k).expect("valid shape");
        for (i, terms) in self.comps.iter().enumerate() {
            for (alpha, c) in terms {
                let v = c.to_f64().unwrap_or(f64::NAN);
                if v != 0.0 {
                    out.comps[i].insert(alpha.clone(), v);
                }
            }
        }
        out
    }
}

impl JetPoly<f64> {
    /// Max absolute coefficient difference against another f64 jet.
    pub fn max_coeff_distance(&self, other: &JetPoly<f64>) -> Result<f64> {
        if self.n != other.n || self.k != other.k {
            return Err(Error::JetMismatch("shape mismatch in comparison".into()));
        }
        let mut dist = 0.0_f64;
        for i in 0..self.n {
            let keys: std::collections::BTreeSet<_> = self.comps[i]
                .keys()
                .chain(other.comps[i].keys())
                .cloned()
                .collect();
            for key in keys {
                let a = self.comps[i].get(&key).copied().unwrap_or(0.0);
                let b = other.comps[i].get(&key).copied().unwrap_or(0.0);
                dist = dist.max((a - b).abs());
            }
        }
        Ok(dist)
    }

    /// Max absolute coefficient distance to the identity jet.
    pub fn distance_to_identity(&self) -> f64 {
        let id = JetPoly::<f64>::identity(self.n, self.k).expect("valid shape");
        self.max_coeff_distance(&id).expect("same shape")
    }
}

type ScalarPoly<T> = BTreeMap<MultiIndex, T>;

fn constant_poly<T: JetScalar>(c: T, n: usize) -> ScalarPoly<T> {
    let mut p = BTreeMap::new();
    p.insert(vec![0u8; n], c);
    p
}

fn add_term<T: JetScalar>(acc: &mut ScalarPoly<T>, key: MultiIndex, v: T) {
    if v.is_zero() {
        return;
    }
    match acc.remove(&key) {
        None => {
            acc.insert(key, v);
        }
        Some(old) => {
            let s = old + v;
            if !s.is_zero() {
                acc.insert(key, s);
            }
        }
    }
}

fn mul_trunc<T: JetScalar>(a: &ScalarPoly<T>, b: &ScalarPoly<T>, k: usize) -> ScalarPoly<T> {
    let mut out = BTreeMap::new();
    for (alpha, ca) in a {
        let da = degree(alpha);
        for (beta, cb) in b {
            if da + degree(beta) > k {
                continue;
            }
            let key: MultiIndex = alpha.iter().zip(beta).map(|(x, y)| x + y).collect();
            add_term(&mut out, key, ca.clone() * cb.clone());
        }
    }
    out
}

fn power_of<T: JetScalar>(
    cache: &mut [Vec<Option<ScalarPoly<T>>>],
    comps: &[ScalarPoly<T>],
    j: usize,
    e: usize,
    k: usize,
    n: usize,
) -> ScalarPoly<T> {
    if let Some(p) = &cache[j][e] {
        return p.clone();
    }
    let p = if e == 0 {
        constant_poly(T::one(), n)
    } else {
        let lower = power_of(cache, comps, j, e - 1, k, n);
        mul_trunc(&lower, &comps[j], k)
    };
    cache[j][e] = Some(p.clone());
    p
}

/// Gauss-Jordan inverse over the coefficient field; returns the inverse and
/// the determinant, or `None` when a pivot cannot be found.
fn field_inverse<T: JetScalar>(a: &[Vec<T>]) -> Option<(Vec<Vec<T>>, T)> {
    let n = a.len();
    let mut m: Vec<Vec<T>> = a.to_vec();
    let mut inv: Vec<Vec<T>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let mut det = T::one();
    for col in 0..n {
        let pivot_row = (col..n).max_by(|&r1, &r2| {
            m[r1][col]
                .pivot_score()
                .partial_cmp(&m[r2][col].pivot_score())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[pivot_row][col].is_zero() {
            return None;
        }
        if pivot_row != col {
            m.swap(pivot_row, col);
            inv.swap(pivot_row, col);
            det = -det;
        }
        let pivot = m[col][col].clone();
        det = det * pivot.clone();
        for j in 0..n {
            m[col][j] = m[col][j].clone() / pivot.clone();
            inv[col][j] = inv[col][j].clone() / pivot.clone();
        }
        for row in 0..n {
            if row == col || m[row][col].is_zero() {
                continue;
            }
            let factor = m[row][col].clone();
            for j in 0..n {
                m[row][j] = m[row][j].clone() - factor.clone() * m[col][j].clone();
                inv[row][j] = inv[row][j].clone() - factor.clone() * inv[col][j].clone();
            }
        }
    }
    Some((inv, det))
}

/// Prescribed jet orders at boundary points; `Infinite` is clipped to the
/// working cap with an annotation.
#[derive(Debug, Clone)]
pub enum JetOrder {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone)]
pub struct BoundaryOrderSpec {
    pub assignments: Vec<(Vec<f64>, JetOrder)>,
}

/// Extracted Taylor data of `phi - x0` around `x0`.
#[derive(Debug, Clone)]
pub struct TaylorJet {
    /// Terms of degree 1..k in the shifted coordinate `u = x - x0`.
    pub jet: JetPoly<f64>,
    /// `phi(x0) - x0`; zero at fixed points.
    pub constant: Vec<f64>,
    /// Per-total-degree agreement between the `h` and `h/2` stencils
    /// (index 0 is the constant term).
    pub accuracy: Vec<f64>,
    /// Set when `x0` sits in a narrow polytope corner (inward cone
    /// half-angle below 10 degrees), where ambient-coordinate stencils
    /// lose accuracy.
    pub low_confidence_corner: bool,
}

/// Estimate the order-k Taylor polynomial of `phi - x0` at `x0 in K` by
/// (one-sided where necessary) finite differences on a tensor stencil with
/// base step `h`; coefficients come from the `h/2` stencil and the
/// accuracy report compares the two.
pub fn taylor_extract(phi: &Diffeo, x0: &[f64], k: usize, h: f64) -> Result<TaylorJet> {
    if k == 0 || k > 4 {
        return Err(Error::OutOfDomain(
            "jet extraction supports orders 1..=4 in double mode".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::OutOfDomain("step must be positive".into()));
    }
    let body = phi.body().clone();
    let coarse = extract_once(phi, &body, x0, k, h)?;
    let fine = extract_once(phi, &body, x0, k, h / 2.0)?;
    let mut accuracy = vec![0.0_f64; k + 1];
    accuracy[0] = coarse
        .0
        .iter()
        .zip(&fine.0)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    for (alpha, vs) in &fine.1 {
        let deg = degree(alpha);
        let coarse_vs = coarse.1.get(alpha);
        for (c, f) in vs.iter().enumerate().map(|(ci, fv)| {
            (
                coarse_vs.map(|w| w[ci]).unwrap_or(0.0),
                *fv,
            )
        }) {
            accuracy[deg] = accuracy[deg].max((c - f).abs());
        }
    }
    let n = body.dim();
    let mut jet = JetPoly::<f64>::zero_map(n, k)?;
    for (alpha, vs) in fine.1 {
        let alpha_usize: Vec<usize> = alpha.iter().map(|&e| e as usize).collect();
        for (i, v) in vs.iter().enumerate() {
            if *v != 0.0 {
                jet.set_coeff(i, &alpha_usize, *v)?;
            }
        }
    }
    Ok(TaylorJet {
        jet,
        constant: fine.0,
        accuracy,
        low_confidence_corner: narrow_corner(&body, x0),
    })
}

type CoeffTable = BTreeMap<MultiIndex, Vec<f64>>;

fn extract_once(
    phi: &Diffeo,
    body: &Arc<ConvexBody>,
    x0: &[f64],
    k: usize,
    h: f64,
) -> Result<(Vec<f64>, CoeffTable)> {
    let n = body.dim();
    let nodes = k + 1;
    // per-axis integer node offsets (in units of h)
    let mut axis_nodes: Vec<Vec<i64>> = Vec::with_capacity(n);
    for a in 0..n {
        let centered: Vec<i64> = (0..=k as i64)
            .map(|m| m - (k as i64) / 2)
            .collect();
        let right: Vec<i64> = (0..=k as i64).collect();
        let left: Vec<i64> = (0..=k as i64).map(|m| -m).rev().collect();
        let fits = |set: &[i64]| {
            set.iter().all(|&m| {
                let mut p = x0.to_vec();
                p[a] += m as f64 * h;
                body.contains(&p).unwrap_or(false)
            })
        };
        let chosen = [centered, right, left]
            .into_iter()
            .find(|set| fits(set))
            .ok_or_else(|| Error::StencilExitsBody {
                point: x0.to_vec(),
            })?;
        axis_nodes.push(chosen);
    }
    // tensor evaluation
    let total = nodes.pow(n as u32);
    let strides: Vec<usize> = (0..n).map(|a| nodes.pow(a as u32)).collect();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(total);
    for flat in 0..total {
        let mut p = x0.to_vec();
        for a in 0..n {
            let m = (flat / strides[a]) % nodes;
            p[a] += axis_nodes[a][m] as f64 * h;
        }
        if !body.contains(&p)? {
            return Err(Error::StencilExitsBody { point: p });
        }
        let image = phi.apply(&p)?;
        values.push(image.iter().zip(x0).map(|(y, x)| y - x).collect());
    }
    // per-axis Vandermonde solves in normalized coordinates sigma = offset/h
    for a in 0..n {
        let mut v = DMatrix::zeros(nodes, nodes);
        for (m, &node) in axis_nodes[a].iter().enumerate() {
            let sigma = node as f64;
            let mut pw = 1.0;
            for j in 0..nodes {
                v[(m, j)] = pw;
                pw *= sigma;
            }
        }
        let v_inv = v.try_inverse().ok_or_else(|| {
            Error::SingularMatrix("degenerate interpolation stencil".into())
        })?;
        for base in 0..total {
            if (base / strides[a]) % nodes != 0 {
                continue;
            }
            for comp in 0..n {
                let line: Vec<f64> = (0..nodes)
                    .map(|m| values[base + m * strides[a]][comp])
                    .collect();
                for m in 0..nodes {
                    let mut acc = 0.0;
                    for (j, lv) in line.iter().enumerate() {
                        acc += v_inv[(m, j)] * lv;
                    }
                    values[base + m * strides[a]][comp] = acc;
                }
            }
        }
    }
    // collect coefficients of total degree <= k; rescale from sigma to x
    let mut constant = vec![0.0; n];
    let mut table: CoeffTable = BTreeMap::new();
    for flat in 0..total {
        let alpha: MultiIndex = (0..n)
            .map(|a| ((flat / strides[a]) % nodes) as u8)
            .collect();
        let deg = degree(&alpha);
        if deg == 0 {
            constant = values[flat].clone();
            continue;
        }
        if deg > k {
            continue;
        }
        let scale = h.powi(deg as i32);
        let coeffs: Vec<f64> = values[flat].iter().map(|v| v / scale).collect();
        table.insert(alpha, coeffs);
    }
    Ok((constant, table))
}

/// Narrow-corner heuristic: two active facets whose normals open by more
/// than 160 degrees leave an inward cone of half-angle below 10 degrees.
fn narrow_corner(body: &ConvexBody, x0: &[f64]) -> bool {
    if let ConvexBody::HPolytope {
        normals,
        offsets,
        normal_norms,
        ..
    } = body
    {
        let active: Vec<usize> = normals
            .iter()
            .zip(offsets)
            .enumerate()
            .filter(|(_, (a, &b))| b - dot(a, x0) == 0.0)
            .map(|(i, _)| i)
            .collect();
        for (idx, &i) in active.iter().enumerate() {
            for &j in &active[idx + 1..] {
                let cosine =
                    dot(&normals[i], &normals[j]) / (normal_norms[i] * normal_norms[j]);
                if cosine < (160.0_f64).to_radians().cos() {
                    return true;
                }
            }
        }
    }
    false
}

/// Per-point outcome of the boundary-order membership test.
#[derive(Debug, Clone, Serialize)]
pub struct MembershipPointReport {
    pub x0: Vec<f64>,
    pub order_checked: usize,
    /// True when an infinite prescribed order was clipped to the cap:
    /// verified to the cap only.
    pub clipped: bool,
    pub max_deviation: f64,
    pub pass: bool,
    pub low_confidence_corner: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MembershipReport {
    pub k_cap: usize,
    pub tol: f64,
    pub points: Vec<MembershipPointReport>,
    pub pass: bool,
}

/// Check `f_{x0,k}(phi) = id` for each prescribed boundary point and order
/// (clipped to `k_cap`), using jets extracted with base step `h`.
pub fn diff_o_membership(
    phi: &Diffeo,
    spec: &BoundaryOrderSpec,
    k_cap: usize,
    tol: f64,
    h: f64,
) -> Result<MembershipReport> {
    let mut points = Vec::with_capacity(spec.assignments.len());
    let mut all_pass = true;
    for (x0, order) in &spec.assignments {
        let (k_eff, clipped) = match order {
            JetOrder::Finite(o) => (*o.min(&k_cap), *o > k_cap),
            JetOrder::Infinite => (k_cap, true),
        };
        if k_eff == 0 {
            points.push(MembershipPointReport {
                x0: x0.clone(),
                order_checked: 0,
                clipped,
                max_deviation: 0.0,
                pass: true,
                low_confidence_corner: narrow_corner(phi.body(), x0),
            });
            continue;
        }
        let extraction = taylor_extract(phi, x0, k_eff, h)?;
        let deviation = extraction
            .jet
            .distance_to_identity()
            .max(norm(&extraction.constant));
        let pass = deviation <= tol;
        all_pass &= pass;
        points.push(MembershipPointReport {
            x0: x0.clone(),
            order_checked: k_eff,
            clipped,
            max_deviation: deviation,
            pass,
            low_confidence_corner: extraction.low_confidence_corner,
        });
    }
    Ok(MembershipReport {
        k_cap,
        tol,
        points,
        pass: all_pass,
    })
}

/// On-disk form of a jet: `{i, alpha, value}` for doubles and
/// `{i, alpha, num, den}` (decimal strings) for rationals; `i` is the
/// 1-based output component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JetDescriptor {
    pub n: usize,
    pub k: usize,
    pub mode: String,
    pub terms: Vec<JetTerm>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JetTerm {
    pub i: usize,
    pub alpha: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub den: Option<String>,
}

impl JetDescriptor {
    pub fn from_rational(p: &JetPoly<BigRational>) -> Self {
        let terms = p
            .terms()
            .map(|(i, alpha, c)| JetTerm {
                i: i + 1,
                alpha: alpha.iter().map(|&e| e as usize).collect(),
                value: None,
                num: Some(c.numer().to_string()),
                den: Some(c.denom().to_string()),
            })
            .collect();
        JetDescriptor {
            n: p.dim(),
            k: p.order(),
            mode: "rational".into(),
            terms,
        }
    }

    pub fn from_double(p: &JetPoly<f64>) -> Self {
        let terms = p
            .terms()
            .map(|(i, alpha, c)| JetTerm {
                i: i + 1,
                alpha: alpha.iter().map(|&e| e as usize).collect(),
                value: Some(*c),
                num: None,
                den: None,
            })
            .collect();
        JetDescriptor {
            n: p.dim(),
            k: p.order(),
            mode: "double".into(),
            terms,
        }
    }

    pub fn to_rational(&self) -> Result<JetPoly<BigRational>> {
        if self.mode != "rational" {
            return Err(Error::JetMismatch(format!(
                "expected rational mode, found `{}`",
                self.mode
            )));
        }
        let mut p = JetPoly::<BigRational>::zero_map(self.n, self.k)?;
        for term in &self.terms {
            let num: BigInt = term
                .num
                .as_deref()
                .ok_or_else(|| Error::JetMismatch("rational term missing num".into()))?
                .parse()
                .map_err(|_| Error::JetMismatch("bad numerator".into()))?;
            let den: BigInt = term
                .den
                .as_deref()
                .ok_or_else(|| Error::JetMismatch("rational term missing den".into()))?
                .parse()
                .map_err(|_| Error::JetMismatch("bad denominator".into()))?;
            if den.is_zero() {
                return Err(Error::JetMismatch("zero denominator".into()));
            }
            if term.i == 0 || term.i > self.n {
                return Err(Error::JetMismatch(format!("component {} out of range", term.i)));
            }
            p.set_coeff(term.i - 1, &term.alpha, BigRational::new(num, den))?;
        }
        Ok(p)
    }

    pub fn to_double(&self) -> Result<JetPoly<f64>> {
        if self.mode != "double" {
            return Err(Error::JetMismatch(format!(
                "expected double mode, found `{}`",
                self.mode
            )));
        }
        let mut p = JetPoly::<f64>::zero_map(self.n, self.k)?;
        for term in &self.terms {
            let v = term
                .value
                .ok_or_else(|| Error::JetMismatch("double term missing value".into()))?;
            if term.i == 0 || term.i > self.n {
                return Err(Error::JetMismatch(format!("component {} out of range", term.i)));
            }
            p.set_coeff(term.i - 1, &term.alpha, v)?;
        }
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ScalarExpr;
    use crate::fields::{BoundaryVanishingField, Weight};
    use num::FromPrimitive;

    fn rat(num: i64, den: i64) -> BigRational {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    /// 1D jet `x + a x^2 (+ b x^3)` over the rationals.
    fn jet_1d(k: usize, a: BigRational, b: Option<BigRational>) -> JetPoly<BigRational> {
        let mut p = JetPoly::identity(1, k).unwrap();
        p.set_coeff(0, &[2], a).unwrap();
        if let Some(b) = b {
            p.set_coeff(0, &[3], b).unwrap();
        }
        p
    }

    #[test]
    fn compose_truncates_cross_term() {
        // (x + a x^2) . (x + b x^2) = x + (a+b) x^2 at order 2
        let p = jet_1d(2, rat(1, 3), None);
        let q = jet_1d(2, rat(1, 5), None);
        let c = p.compose(&q).unwrap();
        assert_eq!(c.coeff(0, &[1]), rat(1, 1));
        assert_eq!(c.coeff(0, &[2]), rat(8, 15));
    }

    #[test]
    fn compose_order_three_cross_term() {
        // at order 3 the cross term 2ab x^3 survives
        let a = rat(1, 3);
        let b = rat(1, 5);
        let p = jet_1d(3, a.clone(), None);
        let q = jet_1d(3, b.clone(), None);
        let c = p.compose(&q).unwrap();
        assert_eq!(c.coeff(0, &[2]), a.clone() + b.clone());
        assert_eq!(c.coeff(0, &[3]), rat(2, 1) * a * b);
    }

    #[test]
    fn identity_is_neutral() {
        let p = jet_1d(3, rat(2, 7), Some(rat(-1, 4)));
        let id = JetPoly::identity(1, 3).unwrap();
        assert_eq!(p.compose(&id).unwrap(), p);
        assert_eq!(id.compose(&p).unwrap(), p);
    }

    #[test]
    fn unit_detection() {
        let id = JetPoly::<f64>::identity(2, 2).unwrap();
        assert!(id.is_unit());
        let mut singular = JetPoly::<f64>::zero_map(2, 2).unwrap();
        singular.set_coeff(0, &[1, 0], 1.0).unwrap();
        // second row zero linear part
        singular.set_coeff(1, &[0, 2], 5.0).unwrap();
        assert!(!singular.is_unit());
        let mut p = JetPoly::<f64>::zero_map(1, 3).unwrap();
        p.set_coeff(0, &[1], 2.0).unwrap();
        p.set_coeff(0, &[3], 5.0).unwrap();
        assert!(p.is_unit());
    }

    #[test]
    fn invert_order_two() {
        let a = rat(1, 3);
        let p = jet_1d(2, a.clone(), None);
        let q = p.invert().unwrap();
        assert_eq!(q.coeff(0, &[1]), rat(1, 1));
        assert_eq!(q.coeff(0, &[2]), -a);
    }

    #[test]
    fn invert_order_three() {
        // (x + a x^2)^{-1} = x - a x^2 + 2 a^2 x^3
        let a = rat(1, 3);
        let p = jet_1d(3, a.clone(), None);
        let q = p.invert().unwrap();
        assert_eq!(q.coeff(0, &[2]), -a.clone());
        assert_eq!(q.coeff(0, &[3]), rat(2, 1) * a.clone() * a.clone());
        let id = JetPoly::identity(1, 3).unwrap();
        assert_eq!(p.compose(&q).unwrap(), id);
        assert_eq!(q.compose(&p).unwrap(), id);
    }

    #[test]
    fn invert_identity_and_nonunit() {
        let id = JetPoly::<BigRational>::identity(2, 3).unwrap();
        assert_eq!(id.invert().unwrap(), id);
        let z = JetPoly::<BigRational>::zero_map(2, 3).unwrap();
        assert!(matches!(z.invert(), Err(Error::NonUnitJet)));
    }

    #[test]
    fn projection_commutes_with_composition() {
        let mut p = JetPoly::<BigRational>::identity(2, 4).unwrap();
        p.set_coeff(0, &[1, 1], rat(1, 2)).unwrap();
        p.set_coeff(1, &[0, 3], rat(-2, 3)).unwrap();
        p.set_coeff(0, &[2, 2], rat(5, 7)).unwrap();
        let mut q = JetPoly::<BigRational>::identity(2, 4).unwrap();
        q.set_coeff(1, &[2, 0], rat(3, 4)).unwrap();
        q.set_coeff(0, &[1, 2], rat(-1, 6)).unwrap();
        for k2 in 1..=3 {
            let lhs = p.compose(&q).unwrap().project(k2).unwrap();
            let rhs = p
                .project(k2)
                .unwrap()
                .compose(&q.project(k2).unwrap())
                .unwrap();
            assert_eq!(lhs, rhs, "k2 = {k2}");
        }
    }

    #[test]
    fn descriptor_round_trip_rational() {
        let p = jet_1d(3, rat(1, 3), Some(rat(-7, 2)));
        let d = JetDescriptor::from_rational(&p);
        let json = serde_json::to_string(&d).unwrap();
        let back: JetDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_rational().unwrap(), p);
    }

    #[test]
    fn descriptor_round_trip_double() {
        let mut p = JetPoly::<f64>::identity(2, 2).unwrap();
        p.set_coeff(1, &[1, 1], 0.25).unwrap();
        let d = JetDescriptor::from_double(&p);
        let json = serde_json::to_string(&d).unwrap();
        let back: JetDescriptor = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_double().unwrap(), p);
    }

    fn slack_element(c: f64) -> Diffeo {
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
        Diffeo::from_field(field, 0.0).unwrap()
    }

    #[test]
    fn extract_identity_jet() {
        let body = Arc::new(ConvexBody::box_body(&[0.0, 0.0], &[1.0, 1.0]).unwrap());
        let id = Diffeo::identity(body);
        for x0 in [[0.5, 0.5], [0.0, 0.0], [1.0, 0.3]] {
            let t = taylor_extract(&id, &x0, 2, 1e-2).unwrap();
            let expected = JetPoly::<f64>::identity(2, 2).unwrap();
            assert!(
                t.jet.max_coeff_distance(&expected).unwrap() < 1e-6,
                "at {x0:?}"
            );
            assert!(norm(&t.constant) < 1e-12);
        }
    }

    #[test]
    fn extract_slack_element_at_left_boundary() {
        // phi = x + 0.2 x(1-x) = 1.2 x - 0.2 x^2
        let phi = slack_element(0.2);
        let t = taylor_extract(&phi, &[0.0], 2, 1e-2).unwrap();
        assert!((t.jet.coeff(0, &[1]) - 1.2).abs() < 1e-4);
        assert!((t.jet.coeff(0, &[2]) + 0.2).abs() < 1e-4);
        assert!(norm(&t.constant) < 1e-12);
    }

    #[test]
    fn extract_slack_element_at_right_boundary() {
        // in u = x - 1: phi(1+u) - 1 = 0.8 u - 0.2 u^2
        let phi = slack_element(0.2);
        let t = taylor_extract(&phi, &[1.0], 2, 1e-2).unwrap();
        assert!((t.jet.coeff(0, &[1]) - 0.8).abs() < 1e-4, "{}", t.jet.coeff(0, &[1]));
        assert!((t.jet.coeff(0, &[2]) + 0.2).abs() < 1e-4);
    }

    #[test]
    fn stencil_exit_detected_at_narrow_corner() {
        let body = Arc::new(ConvexBody::simplex(2).unwrap());
        let id = Diffeo::identity(body);
        // at the vertex (1, 0) the inward cone excludes the tensor stencil
        let r = taylor_extract(&id, &[1.0, 0.0], 2, 1e-2);
        assert!(matches!(r, Err(Error::StencilExitsBody { .. })));
    }

    #[test]
    fn membership_identity_passes_any_spec() {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        let id = Diffeo::identity(body);
        let spec = BoundaryOrderSpec {
            assignments: vec![
                (vec![0.0], JetOrder::Finite(2)),
                (vec![1.0], JetOrder::Infinite),
            ],
        };
        let report = diff_o_membership(&id, &spec, 3, 1e-6, 1e-2).unwrap();
        assert!(report.pass);
        assert!(report.points[1].clipped);
        assert_eq!(report.points[1].order_checked, 3);
    }

    #[test]
    fn membership_slack_element_fails_first_order() {
        // linear part at 0 is 1 + c
        let phi = slack_element(0.2);
        let spec = BoundaryOrderSpec {
            assignments: vec![(vec![0.0], JetOrder::Finite(1))],
        };
        let report = diff_o_membership(&phi, &spec, 3, 1e-3, 1e-2).unwrap();
        assert!(!report.pass);
        assert!((report.points[0].max_deviation - 0.2).abs() < 1e-3);
    }

    #[test]
    fn membership_flat_element_passes() {
        let body = Arc::new(ConvexBody::interval(0.0, 1.0).unwrap());
        let field = Arc::new(
            BoundaryVanishingField::new(
                body,
                vec![ScalarExpr::constant(0.5)],
                Weight::FlatExp { alpha: 1.0 },
                (0.0, 1.0),
            )
            .unwrap(),
        );
        let phi = Diffeo::from_field(field, 0.0).unwrap();
        let spec = BoundaryOrderSpec {
            assignments: vec![
                (vec![0.0], JetOrder::Finite(3)),
                (vec![1.0], JetOrder::Finite(3)),
            ],
        };
        let report = diff_o_membership(&phi, &spec, 3, 1e-3, 1e-2).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn rational_from_f64_helper_available() {
        // guards the num feature wiring used by random jet generation
        assert_eq!(BigRational::from_i64(3).unwrap(), rat(3, 1));
    }

    mod laws {
        use super::*;
        use proptest::prelude::*;

        fn arb_rational() -> impl Strategy<Value = BigRational> {
            (-9i64..=9, 1i64..=9).prop_map(|(n, d)| rat(n, d))
        }

        fn arb_jet(n: usize, k: usize) -> impl Strategy<Value = JetPoly<BigRational>> {
            let slots: Vec<Vec<usize>> = multi_indices(n, k);
            let len = slots.len();
            (
                proptest::collection::vec(arb_rational(), n * 2),
                proptest::collection::vec((0..n, 0..len, arb_rational()), 0..6),
            )
                .prop_map(move |(lin, sparse)| {
                    let mut p = JetPoly::<BigRational>::identity(n, k).unwrap();
                    // randomize the linear part around the identity
                    for i in 0..n {
                        let mut alpha = vec![0usize; n];
                        alpha[i] = 1;
                        p.set_coeff(
                            i,
                            &alpha,
                            rat(1, 1) + lin[i].clone() * rat(1, 10),
                        )
                        .unwrap();
                    }
                    for (i, slot, c) in sparse {
                        p.set_coeff(i, &slots[slot], c).unwrap();
                    }
                    p
                })
        }

        fn multi_indices(n: usize, k: usize) -> Vec<Vec<usize>> {
            let mut out = Vec::new();
            let mut cur = vec![0usize; n];
            loop {
                let deg: usize = cur.iter().sum();
                if (1..=k).contains(&deg) {
                    out.push(cur.clone());
                }
                // odometer over exponents bounded by k
                let mut pos = 0;
                loop {
                    if pos == n {
                        return out;
                    }
                    cur[pos] += 1;
                    if cur[pos] > k {
                        cur[pos] = 0;
                        pos += 1;
                    } else {
                        break;
                    }
                }
            }
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(60))]

            #[test]
            fn associativity_exact(
                p in arb_jet(2, 3),
                q in arb_jet(2, 3),
                r in arb_jet(2, 3),
            ) {
                let lhs = p.compose(&q).unwrap().compose(&r).unwrap();
                let rhs = p.compose(&q.compose(&r).unwrap()).unwrap();
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn identity_laws_exact(p in arb_jet(3, 2)) {
                let id = JetPoly::identity(3, 2).unwrap();
                prop_assert_eq!(p.compose(&id).unwrap(), p.clone());
                prop_assert_eq!(id.compose(&p).unwrap(), p);
            }

            #[test]
            fn inverse_laws_exact(p in arb_jet(2, 4)) {
                prop_assume!(p.is_unit());
                let q = p.invert().unwrap();
                let id = JetPoly::identity(2, 4).unwrap();
                prop_assert_eq!(p.compose(&q).unwrap(), id.clone());
                prop_assert_eq!(q.compose(&p).unwrap(), id);
            }
        }
    }
}
