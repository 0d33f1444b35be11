//! Principal matrix logarithm by complex Schur decomposition and inverse
//! scaling and squaring.

use nalgebra::Schur;

use crate::error::{Error, Result};
use crate::operator::{Mat, Operator, C64, ZERO};

/// Eigenvalues closer than this to the closed negative real axis are
/// rejected.
pub const BRANCH_MARGIN: f64 = 1e-6;
const SQRT_TARGET: f64 = 0.25;
const MAX_SQRTS: usize = 64;
const QUAD_NODES: usize = 10;

/// Gauss-Legendre nodes and weights on `[0, 1]`.
fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        // Chebyshev-like initial guess, then Newton on P_m.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (1.0 - x), 0.5 * w));
    }
    out
}

/// Principal square root of an upper triangular matrix.
fn sqrt_upper(t: &Mat) -> Mat {
    let n = t.nrows();
    let mut u = Mat::zeros(n, n);
    for i in 0..n {
        u[(i, i)] = t[(i, i)].sqrt();
    }
    for d in 1..n {
        for i in 0..n - d {
            let j = i + d;
            let mut s = t[(i, j)];
            for k in i + 1..j {
                s -= u[(i, k)] * u[(k, j)];
            }
            u[(i, j)] = s / (u[(i, i)] + u[(j, j)]);
        }
    }
    u
}

fn one_norm(a: &Mat) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `log(I + x)` for upper triangular `x` with small norm, as the quadrature
/// of `int_0^1 x (I + s x)^{-1} ds`.
fn log1p_upper(x: &Mat) -> Result<Mat> {
    let n = x.nrows();
    let id = Mat::identity(n, n);
    let mut acc = Mat::zeros(n, n);
    for (s, w) in gauss_legendre(QUAD_NODES) {
        let m = &id + x * C64::new(s, 0.0);
        let sol = m
            .solve_upper_triangular(x)
            .ok_or_else(|| Error::InvalidArgument("singular quadrature system".into()))?;
        acc += sol * C64::new(w, 0.0);
    }
    Ok(acc)
}

/// Principal logarithm of `a`. Fails with `BranchCut` when an eigenvalue
/// lies within [`BRANCH_MARGIN`] of the closed negative real axis.
pub fn logm(a: &Operator) -> Result<Operator> {
    let n = a.dim();
    let (q, mut t) = Schur::new(a.matrix().clone()).unpack();
    for i in 0..n {
        let z = t[(i, i)];
        let near = if z.re <= 0.0 { z.im.abs() } else { z.norm() };
        if near < BRANCH_MARGIN {
            return Err(Error::BranchCut {
                re: z.re,
                im: z.im,
                margin: BRANCH_MARGIN,
            });
        }
    }
    // Clear the strictly lower part left by the decomposition.
    for j in 0..n {
        for i in j + 1..n {
            t[(i, j)] = ZERO;
        }
    }
    let id = Mat::identity(n, n);
    let mut s = 0;
    while one_norm(&(&t - &id)) > SQRT_TARGET {
        if s == MAX_SQRTS {
            return Err(Error::InvalidArgument("square roots did not converge".into()));
        }
        t = sqrt_upper(&t);
        s += 1;
    }
    let l = log1p_upper(&(&t - &id))? * C64::new(2f64.powi(s as i32), 0.0);
    let out = &q * l * q.adjoint();
    Ok(Operator::from_mat(out, a.basis_label()))
}
