//! Matrix exponential by scaling and squaring (Higham 2005).

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::operator::{Mat, C64};

/// Exponents above this count are treated as scaling overflow.
pub const MAX_SQUARINGS: i32 = 30;

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068),
];
const THETA_13: f64 = 5.371920351148152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const B9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub(crate) fn one_norm(a: &Mat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn r(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Odd/even parts `(U, V)` of the degree-`m` Pade numerator for m <= 9.
fn pade_low(a: &Mat, b: &[f64]) -> (Mat, Mat) {
    let n = a.nrows();
    let id = Mat::identity(n, n);
    let a2 = a * a;
    let mut pows = vec![id, a2.clone()];
    while 2 * pows.len() < b.len() {
        let next = pows.last().unwrap() * &a2;
        pows.push(next);
    }
    let mut u = Mat::zeros(n, n);
    let mut v = Mat::zeros(n, n);
    for (k, p) in pows.iter().enumerate() {
        u += p * r(b[2 * k + 1]);
        v += p * r(b[2 * k]);
    }
    (a * u, v)
}

fn pade13(a: &Mat) -> (Mat, Mat) {
    let n = a.nrows();
    let b = &B13;
    let id = Mat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * (&a6 * r(b[13]) + &a4 * r(b[11]) + &a2 * r(b[9]));
    let u = a * (inner_u + &a6 * r(b[7]) + &a4 * r(b[5]) + &a2 * r(b[3]) + &id * r(b[1]));
    let inner_v = &a6 * (&a6 * r(b[12]) + &a4 * r(b[10]) + &a2 * r(b[8]));
    let v = inner_v + &a6 * r(b[6]) + &a4 * r(b[4]) + &a2 * r(b[2]) + id * r(b[0]);
    (u, v)
}

/// `exp(a)` for a general complex square matrix.
pub fn expm(a: &Mat) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::ExpOverflow { norm });
    }
    if norm == 0.0 {
        return Ok(Mat::identity(n, n));
    }
    for &(m, theta) in &THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            let (u, v) = pade_low(a, b);
            return solve_pade(u, v);
        }
    }
    let s = ((norm / THETA_13).log2().ceil() as i32).max(0);
    if s > MAX_SQUARINGS {
        return Err(Error::ExpOverflow { norm });
    }
    let scaled = a * r(2f64.powi(-s));
    let (u, v) = pade13(&scaled);
    let mut e = solve_pade(u, v)?;
    for _ in 0..s {
        e = &e * &e;
    }
    Ok(e)
}

fn solve_pade(u: Mat, v: Mat) -> Result<Mat> {
    let num = &v + &u;
    let den = v - u;
    den.lu()
        .solve(&num)
        .ok_or_else(|| Error::InvalidArgument("singular Pade denominator".into()))
}

/// `exp(scalar * h)` for Hermitian `h` through its eigendecomposition.
pub fn expm_hermitian(h: &Mat, scalar: C64) -> Mat {
    let eig = SymmetricEigen::new(h.clone());
    let d = Mat::from_diagonal(&eig.eigenvalues.map(|l| (scalar * l).exp()));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}
