//! Gauss-Legendre product rules on axis-aligned boxes. These serve as the
//! independent normalization oracle for the low-dimensional model checks;
//! nothing in the fitting paths depends on them.

use crate::error::{Error, Result};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1],
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2, "rule needs at least two points");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence: evaluates P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Fixed-order product quadrature of `f` over the box `lo[k] <= x[k] <= hi[k]`.
pub fn integrate_box<F>(f: &F, lo: &[f64], hi: &[f64], order: usize) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let dim = lo.len();
    assert_eq!(dim, hi.len());
    assert!(dim >= 1, "dimension must be positive");
    let (nodes, weights) = gauss_legendre(order);
    let mut scaled_nodes = vec![vec![0.0; order]; dim];
    let mut scaled_weights = vec![vec![0.0; order]; dim];
    for k in 0..dim {
        let half = 0.5 * (hi[k] - lo[k]);
        let mid = 0.5 * (hi[k] + lo[k]);
        for q in 0..order {
            scaled_nodes[k][q] = mid + half * nodes[q];
            scaled_weights[k][q] = half * weights[q];
        }
    }
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let mut total = 0.0;
    let mut comp = 0.0; // Neumaier compensation
    'outer: loop {
        let mut w = 1.0;
        for k in 0..dim {
            x[k] = scaled_nodes[k][idx[k]];
            w *= scaled_weights[k][idx[k]];
        }
        let term = w * f(&x);
        let t = total + term;
        comp += if total.abs() >= term.abs() { (total - t) + term } else { (term - t) + total };
        total = t;
        for k in 0..dim {
            idx[k] += 1;
            if idx[k] < order {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    total + comp
}

/// Product quadrature with order refinement until two consecutive orders
/// agree to `rel_tol`. Returns the finer estimate.
pub fn integrate_box_adaptive<F>(f: &F, lo: &[f64], hi: &[f64], rel_tol: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let orders: [usize; 5] = [24, 32, 48, 64, 96];
    let mut prev = integrate_box(f, lo, hi, orders[0]);
    for &ord in &orders[1..] {
        let cur = integrate_box(f, lo, hi, ord);
        let scale = cur.abs().max(1e-300);
        if ((cur - prev) / scale).abs() < rel_tol {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::numerical(format!(
        "quadrature did not converge to relative tolerance {rel_tol:.1e}"
    )))
}

/// 1D integral over [lo, hi] split into equal panels, each integrated
/// adaptively. Wide intervals around narrow peaks need this: a single
/// global rule cannot resolve a feature much smaller than the interval.
pub fn integrate_interval<F>(
    f: &F,
    lo: f64,
    hi: f64,
    n_panels: usize,
    rel_tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    assert!(n_panels >= 1 && hi > lo);
    let width = (hi - lo) / n_panels as f64;
    let g = |u: &[f64]| f(u[0]);
    let mut total = 0.0;
    let mut comp = 0.0;
    for k in 0..n_panels {
        let a = lo + k as f64 * width;
        let b = if k + 1 == n_panels { hi } else { a + width };
        let part = integrate_box_adaptive(&g, &[a], &[b], rel_tol)?;
        let t = total + part;
        comp += if total.abs() >= part.abs() { (total - t) + part } else { (part - t) + total };
        total = t;
    }
    Ok(total + comp)
}
