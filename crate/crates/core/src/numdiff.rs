//! Central finite differences for Jacobians, with step control and a
//! Richardson self-consistency diagnostic.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::norm;

/// Step proportional to the argument scale, `base * (1 + ||v||)`.
pub fn scaled_step(base: f64, v: &[f64]) -> f64 {
    base * (1.0 + norm(v))
}

/// Jacobian of `f` at `x` by central differences with per-coordinate step
/// `h`. The output dimension is taken from the first evaluation.
pub fn central_jacobian<F>(f: F, x: &[f64], h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let n = x.len();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut n_out = 0;
    for j in 0..n {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[j] += h;
        xm[j] -= h;
        let fp = f(&xp)?;
        let fm = f(&xm)?;
        n_out = fp.len();
        columns.push(
            fp.iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    let mut m = DMatrix::zeros(n_out, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

/// Ratio `||d_h - d_h2|| / ||d_h2 - d_h4||`; approaches 4 for a second-order
/// scheme as the step halves.
pub fn richardson_ratio(d_h: &DMatrix<f64>, d_h2: &DMatrix<f64>, d_h4: &DMatrix<f64>) -> f64 {
    let num = (d_h - d_h2).norm();
    let den = (d_h2 - d_h4).norm();
    if den == 0.0 {
        if num == 0.0 {
            4.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_of_quadratic() {
        let f = |x: &[f64]| Ok(vec![x[0] * x[0] + x[1], 3.0 * x[1]]);
        let j = central_jacobian(f, &[2.0, 1.0], 1e-5).unwrap();
        assert!((j[(0, 0)] - 4.0).abs() < 1e-9);
        assert!((j[(0, 1)] - 1.0).abs() < 1e-9);
        assert!((j[(1, 0)]).abs() < 1e-9);
        assert!((j[(1, 1)] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn richardson_ratio_near_four_for_smooth_map() {
        let f = |x: &[f64]| Ok(vec![(x[0]).sin() * (x[0]).exp()]);
        let x = [0.7];
        let d1 = central_jacobian(f, &x, 1e-2).unwrap();
        let d2 = central_jacobian(f, &x, 5e-3).unwrap();
        let d4 = central_jacobian(f, &x, 2.5e-3).unwrap();
        let r = richardson_ratio(&d1, &d2, &d4);
        assert!(r > 3.5 && r < 4.5, "ratio {r}");
    }
}
