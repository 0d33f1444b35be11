//! Dense complex operators and the structural predicates used to check
//! symmetry, banded coupling and conjugation compatibility at finite
//! dimension.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm;

pub type C64 = Complex64;
pub type Mat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative floor below which an off-diagonal block counts as uncoupled.
pub const BLOCK_TOL: f64 = 1e-13;

/// A square complex matrix together with a short label naming its basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorJson", into = "OperatorJson")]
pub struct Operator {
    mat: Mat,
    basis_label: String,
}

impl Operator {
    pub fn new(mat: Mat, basis_label: impl Into<String>) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                left: mat.nrows(),
                right: mat.ncols(),
            });
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidArgument("non-finite operator entry".into()));
        }
        Ok(Self {
            mat,
            basis_label: basis_label.into(),
        })
    }

    /// Wraps a matrix the caller knows to be square and finite.
    pub(crate) fn from_mat(mat: Mat, basis_label: &str) -> Self {
        debug_assert_eq!(mat.nrows(), mat.ncols());
        Self {
            mat,
            basis_label: basis_label.to_string(),
        }
    }

    pub fn zeros(dim: usize, basis_label: &str) -> Self {
        Self::from_mat(Mat::zeros(dim, dim), basis_label)
    }

    pub fn identity(dim: usize, basis_label: &str) -> Self {
        Self::from_mat(Mat::identity(dim, dim), basis_label)
    }

    /// Builds an operator from real row-major entries.
    pub fn from_real_rows(rows: &[&[f64]], basis_label: &str) -> Result<Self> {
        let dim = rows.len();
        let mut mat = Mat::zeros(dim, dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                mat[(i, j)] = C64::new(x, 0.0);
            }
        }
        Self::new(mat, basis_label)
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn basis_label(&self) -> &str {
        &self.basis_label
    }

    pub fn matrix(&self) -> &Mat {
        &self.mat
    }

    pub fn into_matrix(self) -> Mat {
        self.mat
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.mat.norm()
    }

    pub fn scale(&self, s: C64) -> Operator {
        Self::from_mat(&self.mat * s, &self.basis_label)
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        check_dims(self, other)?;
        Ok(Self::from_mat(&self.mat + &other.mat, &self.basis_label))
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        check_dims(self, other)?;
        Ok(Self::from_mat(&self.mat - &other.mat, &self.basis_label))
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        check_dims(self, other)?;
        Ok(Self::from_mat(&self.mat * &other.mat, &self.basis_label))
    }

    /// Leading `n x n` block.
    pub fn leading_block(&self, n: usize) -> Operator {
        let n = n.min(self.dim());
        Self::from_mat(self.mat.view((0, 0), (n, n)).into_owned(), &self.basis_label)
    }

    pub fn apply(&self, v: &nalgebra::DVector<C64>) -> nalgebra::DVector<C64> {
        &self.mat * v
    }
}

fn check_dims(a: &Operator, b: &Operator) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    Ok(())
}

/// Conjugate transpose.
pub fn adjoint(a: &Operator) -> Operator {
    Operator::from_mat(a.mat.adjoint(), &a.basis_label)
}

/// `ab - ba`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    check_dims(a, b)?;
    Ok(Operator::from_mat(
        &a.mat * &b.mat - &b.mat * &a.mat,
        &a.basis_label,
    ))
}

/// `exp(scalar * a)` by scaling and squaring with a diagonal Pade approximant.
pub fn matexp(a: &Operator, scalar: C64) -> Result<Operator> {
    let m = &a.mat * scalar;
    let e = match expm::expm(&m) {
        Ok(e) => e,
        Err(Error::ExpOverflow { .. }) if hermiticity_defect(a) <= 1e-14 * a.frobenius_norm() => {
            expm::expm_hermitian(&a.mat, scalar)
        }
        Err(e) => return Err(e),
    };
    Ok(Operator::from_mat(e, &a.basis_label))
}

/// `||a - a^dagger||_F`.
pub fn hermiticity_defect(a: &Operator) -> f64 {
    (&a.mat - a.mat.adjoint()).norm()
}

/// `||U^dagger U - 1||_F`.
pub fn unitarity_defect(u: &Operator) -> f64 {
    let n = u.dim();
    (u.mat.adjoint() * &u.mat - Mat::identity(n, n)).norm()
}

/// Contiguous blocks of basis indices standing in for spectral projections
/// of the reference Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPartition {
    pub block_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<(f64, f64)>>,
}

impl BlockPartition {
    pub fn new(block_sizes: Vec<usize>) -> Result<Self> {
        if block_sizes.contains(&0) {
            return Err(Error::InvalidArgument("empty block in partition".into()));
        }
        Ok(Self {
            block_sizes,
            labels: None,
        })
    }

    pub fn unit(dim: usize) -> Self {
        Self {
            block_sizes: vec![1; dim],
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<(f64, f64)>) -> Result<Self> {
        if labels.len() != self.block_sizes.len() {
            return Err(Error::InvalidArgument(
                "one label interval per block required".into(),
            ));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.block_sizes.iter().sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.block_sizes.len() + 1);
        let mut acc = 0;
        out.push(0);
        for s in &self.block_sizes {
            acc += s;
            out.push(acc);
        }
        out
    }
}

/// Smallest `K` such that all blocks `(i, j)` with `|i - j| > K` are below
/// the relative block tolerance.
pub fn bandwidth(a: &Operator, part: &BlockPartition) -> Result<usize> {
    if part.dim() != a.dim() {
        return Err(Error::InconsistentPartition {
            sum: part.dim(),
            dim: a.dim(),
        });
    }
    let floor = BLOCK_TOL * a.frobenius_norm();
    let off = part.offsets();
    let nb = part.block_sizes.len();
    let mut k = 0;
    for bi in 0..nb {
        for bj in 0..nb {
            let sep = bi.abs_diff(bj);
            if sep <= k {
                continue;
            }
            let block = a.mat.view(
                (off[bi], off[bj]),
                (part.block_sizes[bi], part.block_sizes[bj]),
            );
            if block.norm() > floor {
                k = sep;
            }
        }
    }
    Ok(k)
}

/// Antiunitary involution `(J psi)_i = phase_i * conj(psi_{perm(i)})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conjugation {
    pub permutation: Vec<usize>,
    pub phases: Vec<C64>,
}

impl Conjugation {
    pub fn new(permutation: Vec<usize>, phases: Vec<C64>) -> Result<Self> {
        if permutation.len() != phases.len() {
            return Err(Error::DimensionMismatch {
                left: permutation.len(),
                right: phases.len(),
            });
        }
        let n = permutation.len();
        for i in 0..n {
            let p = permutation[i];
            if p >= n || permutation[p] != i {
                return Err(Error::InvalidConjugation { index: i });
            }
            // J must be antiunitary, and J^2 = 1 requires
            // phase_i * conj(phase_{perm(i)}) = 1.
            if (phases[i].norm() - 1.0).abs() > 1e-14
                || (phases[i] * phases[p].conj() - ONE).norm() > 1e-14
            {
                return Err(Error::InvalidConjugation { index: i });
            }
        }
        Ok(Self {
            permutation,
            phases,
        })
    }

    /// Plain entrywise complex conjugation.
    pub fn plain(dim: usize) -> Self {
        Self {
            permutation: (0..dim).collect(),
            phases: vec![ONE; dim],
        }
    }

    /// Entrywise conjugation followed by a diagonal sign pattern.
    pub fn signed(signs: &[f64]) -> Self {
        Self {
            permutation: (0..signs.len()).collect(),
            phases: signs.iter().map(|&s| C64::new(s, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.permutation.len()
    }

    pub fn apply_vector(&self, v: &nalgebra::DVector<C64>) -> nalgebra::DVector<C64> {
        nalgebra::DVector::from_fn(v.len(), |i, _| {
            self.phases[i] * v[self.permutation[i]].conj()
        })
    }

    /// The linear operator `J A J`.
    pub fn sandwich(&self, a: &Mat) -> Mat {
        let n = self.dim();
        let p = &self.permutation;
        Mat::from_fn(n, n, |i, m| {
            self.phases[i] * a[(p[i], p[m])].conj() * self.phases[p[m]].conj()
        })
    }
}

/// `||J a J - a||_F`.
pub fn conjugation_defect(a: &Operator, j: &Conjugation) -> Result<f64> {
    if j.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: j.dim(),
        });
    }
    Ok((j.sandwich(&a.mat) - &a.mat).norm())
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    dim: usize,
    basis_label: String,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl From<Operator> for OperatorJson {
    fn from(op: Operator) -> Self {
        let dim = op.dim();
        let mut re = Vec::with_capacity(dim * dim);
        let mut im = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                let z = op.mat[(i, j)];
                re.push(z.re);
                im.push(z.im);
            }
        }
        Self {
            dim,
            basis_label: op.basis_label,
            re,
            im,
        }
    }
}

impl TryFrom<OperatorJson> for Operator {
    type Error = Error;

    fn try_from(js: OperatorJson) -> Result<Self> {
        let n = js.dim;
        if js.re.len() != n * n || js.im.len() != n * n {
            return Err(Error::DimensionMismatch {
                left: n * n,
                right: js.re.len().max(js.im.len()),
            });
        }
        let mat = Mat::from_fn(n, n, |i, j| C64::new(js.re[i * n + j], js.im[i * n + j]));
        Operator::new(mat, js.basis_label)
    }
}

/// Truncated bosonic annihilation operator on `n` Fock levels.
pub fn annihilation(n: usize) -> Mat {
    let mut a = Mat::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = C64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Truncated number operator on `n` Fock levels.
pub fn number(n: usize) -> Mat {
    Mat::from_diagonal(&nalgebra::DVector::from_fn(n, |k, _| C64::new(k as f64, 0.0)))
}

/// `acc += alpha * x`, in place.
pub(crate) fn axpy(acc: &mut Mat, alpha: C64, x: &Mat) {
    acc.zip_apply(x, |y, v| *y += alpha * v);
}
