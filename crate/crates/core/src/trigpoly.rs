//! Exact algebra of operator-valued functions `sum_{p,n} t^p e^{i 2 pi n t} A_{p,n}`.
//!
//! Products, antiderivatives from zero, period averages and oscillation
//! parts are all computed in closed form, so no quadrature error enters the
//! effective-Hamiltonian constructions.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Mat, Operator, C64, ONE, ZERO};

/// Terms whose Frobenius norm falls below this fraction of the largest term
/// are dropped.
pub const PRUNE_REL: f64 = 1e-15;

/// `e^{i 2 pi n t}` with the argument reduced modulo one first, so integer
/// times give exactly one.
pub fn phase(n: i32, t: f64) -> C64 {
    if n == 0 {
        return ONE;
    }
    let x = (n as f64 * t).rem_euclid(1.0);
    let (s, c) = (TAU * x).sin_cos();
    C64::new(c, s)
}

/// A 1-periodic operator-valued function given by finitely many Fourier modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierOp {
    dim: usize,
    basis_label: String,
    modes: BTreeMap<i32, Operator>,
}

impl FourierOp {
    pub fn new(dim: usize, basis_label: &str) -> Self {
        Self {
            dim,
            basis_label: basis_label.to_string(),
            modes: BTreeMap::new(),
        }
    }

    pub fn constant(op: Operator) -> Self {
        let mut f = Self::new(op.dim(), op.basis_label());
        f.modes.insert(0, op);
        f
    }

    /// Adds `op` to mode `n`.
    pub fn add_mode(&mut self, n: i32, op: Operator) -> Result<()> {
        if op.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: op.dim(),
            });
        }
        let entry = self
            .modes
            .entry(n)
            .or_insert_with(|| Operator::zeros(op.dim(), op.basis_label()));
        *entry = entry.add(&op)?;
        Ok(())
    }

    pub fn with_mode(mut self, n: i32, op: Operator) -> Result<Self> {
        self.add_mode(n, op)?;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_label(&self) -> &str {
        &self.basis_label
    }

    pub fn modes(&self) -> impl Iterator<Item = (i32, &Operator)> {
        self.modes.iter().map(|(&n, op)| (n, op))
    }

    pub fn mode(&self, n: i32) -> Option<&Operator> {
        self.modes.get(&n)
    }

    pub fn max_mode(&self) -> usize {
        self.modes.keys().map(|n| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    /// Largest mode norm, used as the scale for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.modes.values().map(|m| m.frobenius_norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, t: f64) -> Operator {
        let mut acc = Mat::zeros(self.dim, self.dim);
        for (&n, op) in &self.modes {
            acc += op.matrix() * phase(n, t);
        }
        Operator::from_mat(acc, &self.basis_label)
    }

    /// True when `H_{-n} = H_n^dagger` for every mode, i.e. `H(t)` is
    /// Hermitian for all real `t`.
    pub fn hermitian_flag(&self) -> bool {
        let tol = 1e-14 * self.scale().max(1.0);
        let zero = Mat::zeros(self.dim, self.dim);
        let keys: Vec<i32> = self.modes.keys().copied().collect();
        keys.iter().all(|&n| {
            let a = self.modes[&n].matrix();
            let b = self.modes.get(&-n).map(|o| o.matrix()).unwrap_or(&zero);
            (a - b.adjoint()).norm() <= tol
        })
    }

    /// Multiplies every mode by `s`.
    pub fn scaled(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            basis_label: self.basis_label.clone(),
            modes: self.modes.iter().map(|(&n, m)| (n, m.scale(s))).collect(),
        }
    }
}

/// Hard limits on term growth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermCaps {
    pub max_mode: usize,
    pub max_poly_degree: usize,
}

impl Default for TermCaps {
    fn default() -> Self {
        Self {
            max_mode: 64,
            max_poly_degree: 16,
        }
    }
}

/// `sum_{p,n} t^p e^{i 2 pi n t} A_{p,n}` with finitely many terms keyed by
/// `(p, n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrigPolyOp {
    dim: usize,
    basis_label: String,
    caps: TermCaps,
    terms: BTreeMap<(u32, i32), Mat>,
}

impl TrigPolyOp {
    pub fn zero(dim: usize, basis_label: &str) -> Self {
        Self {
            dim,
            basis_label: basis_label.to_string(),
            caps: TermCaps::default(),
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(op: &Operator) -> Self {
        Self::monomial(0, 0, op.matrix().clone(), op.basis_label())
    }

    pub fn identity(dim: usize, basis_label: &str) -> Self {
        Self::monomial(0, 0, Mat::identity(dim, dim), basis_label)
    }

    /// The single term `t^p e^{i 2 pi n t} a`.
    pub fn monomial(p: u32, n: i32, a: Mat, basis_label: &str) -> Self {
        let mut f = Self::zero(a.nrows(), basis_label);
        f.terms.insert((p, n), a);
        f.prune();
        f
    }

    pub fn from_fourier(h: &FourierOp) -> Self {
        let mut f = Self::zero(h.dim(), h.basis_label());
        for (n, op) in h.modes() {
            f.terms.insert((0, n), op.matrix().clone());
        }
        f.prune();
        f
    }

    pub fn with_caps(mut self, caps: TermCaps) -> Self {
        self.caps = caps;
        self
    }

    pub fn caps(&self) -> TermCaps {
        self.caps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_label(&self) -> &str {
        &self.basis_label
    }

    pub fn terms(&self) -> impl Iterator<Item = ((u32, i32), &Mat)> {
        self.terms.iter().map(|(&k, m)| (k, m))
    }

    pub fn term(&self, p: u32, n: i32) -> Option<&Mat> {
        self.terms.get(&(p, n))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn max_poly_degree(&self) -> usize {
        self.terms.keys().map(|&(p, _)| p as usize).max().unwrap_or(0)
    }

    pub fn max_mode(&self) -> usize {
        self.terms
            .keys()
            .map(|&(_, n)| n.unsigned_abs() as usize)
            .max()
            .unwrap_or(0)
    }

    /// Sum of term norms; an upper bound for `sup_{t in [0,1]} ||f(t)||_F`.
    pub fn term_norm_sum(&self) -> f64 {
        self.terms.values().map(|m| m.norm()).sum()
    }

    fn prune(&mut self) {
        let largest = self.terms.values().map(|m| m.norm()).fold(0.0, f64::max);
        let floor = PRUNE_REL * largest;
        self.terms.retain(|_, m| {
            let nm = m.norm();
            nm > floor && nm > 0.0
        });
    }

    fn check_caps(&self) -> Result<()> {
        let n = self.max_mode();
        if n > self.caps.max_mode {
            return Err(Error::TermGrowth {
                what: "Fourier mode",
                value: n,
                cap: self.caps.max_mode,
            });
        }
        let p = self.max_poly_degree();
        if p > self.caps.max_poly_degree {
            return Err(Error::TermGrowth {
                what: "polynomial degree",
                value: p,
                cap: self.caps.max_poly_degree,
            });
        }
        Ok(())
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }

    fn joined_caps(&self, other: &Self) -> TermCaps {
        TermCaps {
            max_mode: self.caps.max_mode.min(other.caps.max_mode),
            max_poly_degree: self.caps.max_poly_degree.min(other.caps.max_poly_degree),
        }
    }

    fn accumulate(&mut self, key: (u32, i32), m: &Mat, s: C64) {
        match self.terms.get_mut(&key) {
            Some(acc) => crate::operator::axpy(acc, s, m),
            None => {
                self.terms.insert(key, m * s);
            }
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, ONE)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, -ONE)
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: C64) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone();
        out.caps = self.joined_caps(other);
        for (&k, m) in &other.terms {
            out.accumulate(k, m, s);
        }
        out.prune();
        Ok(out)
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for m in out.terms.values_mut() {
            *m *= s;
        }
        out.prune();
        out
    }

    /// Pointwise product `t -> f(t) g(t)`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = Self::zero(self.dim, &self.basis_label);
        out.caps = self.joined_caps(other);
        for (&(p1, n1), a) in &self.terms {
            for (&(p2, n2), b) in &other.terms {
                let key = (p1 + p2, n1 + n2);
                match out.terms.get_mut(&key) {
                    Some(acc) => acc.gemm(ONE, a, b, ONE),
                    None => {
                        out.terms.insert(key, a * b);
                    }
                }
            }
        }
        out.prune();
        out.check_caps()?;
        Ok(out)
    }

    /// `c f(t)` for a constant operator `c`.
    pub fn left_mul(&self, c: &Mat) -> Result<Self> {
        if c.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: c.nrows(),
            });
        }
        let mut out = self.clone();
        for m in out.terms.values_mut() {
            *m = c * &*m;
        }
        out.prune();
        Ok(out)
    }

    /// `f(t) c` for a constant operator `c`.
    pub fn right_mul(&self, c: &Mat) -> Result<Self> {
        if c.nrows() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: c.nrows(),
            });
        }
        let mut out = self.clone();
        for m in out.terms.values_mut() {
            *m = &*m * c;
        }
        out.prune();
        Ok(out)
    }

    /// Pointwise commutator `[f(t), g(t)]`.
    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// `F(t) = int_0^t f(s) ds` in closed form.
    ///
    /// For `n != 0`, an antiderivative of `s^p e^{i w s}` with `w = 2 pi n` is
    /// `e^{i w s} sum_{m=0}^p (-1)^m p!/(p-m)! s^{p-m} / (i w)^{m+1}`; its value
    /// at `s = 0` is subtracted as a constant term.
    pub fn integrate_from_zero(&self) -> Result<Self> {
        let mut out = Self::zero(self.dim, &self.basis_label);
        out.caps = self.caps;
        for (&(p, n), a) in &self.terms {
            if n == 0 {
                out.accumulate((p + 1, 0), a, C64::new(1.0 / (p as f64 + 1.0), 0.0));
                continue;
            }
            let iw = C64::new(0.0, TAU * n as f64);
            let mut coeff = ONE / iw;
            for m in 0..=p {
                out.accumulate((p - m, n), a, coeff);
                if m == p {
                    out.accumulate((0, 0), a, -coeff);
                }
                // next: multiply by -(p - m) / (i w)
                coeff *= -C64::new((p - m) as f64, 0.0) / iw;
            }
        }
        out.prune();
        out.check_caps()?;
        Ok(out)
    }

    /// `int_0^1 f(t) dt` in closed form.
    pub fn average(&self) -> Operator {
        let mut acc = Mat::zeros(self.dim, self.dim);
        for (&(p, n), a) in &self.terms {
            if n == 0 {
                crate::operator::axpy(&mut acc, C64::new(1.0 / (p as f64 + 1.0), 0.0), a);
                continue;
            }
            // sum over m < p of the antiderivative coefficients at s = 1;
            // the m = p piece cancels against the value at s = 0.
            let iw = C64::new(0.0, TAU * n as f64);
            let mut coeff = ONE / iw;
            let mut total = ZERO;
            for m in 0..p {
                total += coeff;
                coeff *= -C64::new((p - m) as f64, 0.0) / iw;
            }
            if total != ZERO {
                crate::operator::axpy(&mut acc, total, a);
            }
        }
        Operator::from_mat(acc, &self.basis_label)
    }

    /// Oscillation part `f - average(f)`.
    pub fn osc(&self) -> Self {
        let avg = self.average();
        let mut out = self.clone();
        out.accumulate((0, 0), avg.matrix(), -ONE);
        if out.terms.keys().all(|&(p, _)| p == 0) {
            // For purely periodic input the constant mode is exactly the
            // average; drop it so no round-off secular term survives.
            out.terms.remove(&(0, 0));
        }
        out.prune();
        out
    }

    pub fn eval(&self, t: f64) -> Operator {
        let mut acc = Mat::zeros(self.dim, self.dim);
        for (&(p, n), a) in &self.terms {
            let w = phase(n, t) * t.powi(p as i32);
            crate::operator::axpy(&mut acc, w, a);
        }
        Operator::from_mat(acc, &self.basis_label)
    }
}
