//! Floquet-Magnus expansion: the Omega recursion with Bernoulli numbers and
//! the extraction of the period-independent coefficients `H_FM^[l]`.

use std::collections::HashMap;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::{Mat, Operator, C64, I};
use crate::trigpoly::{FourierOp, TrigPolyOp};

pub const MAX_BERNOULLI: usize = 32;
pub const MAX_OMEGA: usize = 8;
pub const MAX_FM_ORDER: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeriesKind {
    #[serde(rename = "FM")]
    Fm,
    #[serde(rename = "EFF")]
    Eff,
}

/// Coefficients `H^[0..=L]` of a period polynomial `H(T) = sum_l T^l H^[l]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveSeries {
    pub kind: SeriesKind,
    pub order: usize,
    pub coeffs: Vec<Operator>,
}

impl EffectiveSeries {
    pub fn new(kind: SeriesKind, coeffs: Vec<Operator>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::InvalidArgument("series needs at least H^[0]".into()));
        };
        let dim = first.dim();
        if let Some(bad) = coeffs.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: dim,
                right: bad.dim(),
            });
        }
        Ok(Self {
            kind,
            order: coeffs.len() - 1,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].dim()
    }

    /// `sum_l T^l H^[l]`.
    pub fn assemble(&self, period: f64) -> Operator {
        let mut acc = Mat::zeros(self.dim(), self.dim());
        let mut tp = 1.0;
        for c in &self.coeffs {
            crate::operator::axpy(&mut acc, C64::new(tp, 0.0), c.matrix());
            tp *= period;
        }
        Operator::from_mat(acc, self.coeffs[0].basis_label())
    }

    /// The same series cut down to order `order`.
    pub fn truncated(&self, order: usize) -> Self {
        let n = (order + 1).min(self.coeffs.len());
        Self {
            kind: self.kind,
            order: n - 1,
            coeffs: self.coeffs[..n].to_vec(),
        }
    }
}

/// Bernoulli number `B_j` with `B_1 = -1/2`, in exact rational arithmetic.
pub fn bernoulli(j: usize) -> Result<Ratio<i128>> {
    if j > MAX_BERNOULLI {
        return Err(Error::OrderOutOfRange {
            order: j,
            max: MAX_BERNOULLI,
        });
    }
    // sum_{k=0}^{m} C(m+1, k) B_k = 0 for m >= 1.
    let mut b: Vec<Ratio<i128>> = vec![Ratio::from_integer(1)];
    for m in 1..=j {
        let mut binom: i128 = 1; // C(m+1, 0)
        let mut acc = Ratio::zero();
        for (k, bk) in b.iter().enumerate() {
            acc += *bk * binom;
            binom = binom * (m as i128 + 1 - k as i128) / (k as i128 + 1);
        }
        // binom now equals C(m+1, m) = m + 1
        b.push(-acc / binom);
    }
    Ok(b[j])
}

/// Sign applied to the odd Bernoulli term of the Omega recursion.
///
/// The recursion is written for `Omega_1 = i int H`, the negative of the
/// usual Magnus generator of `U' = -i H U`; with that orientation the
/// single-commutator term must enter with `-B_1 = +1/2` for the truncation
/// to reproduce the one-period propagator. `Flipped` is the opposite choice
/// and exists only so tests can show that it fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OddSign {
    #[default]
    Matched,
    Flipped,
}

impl OddSign {
    fn weight(self, j: usize) -> Result<f64> {
        let b = bernoulli(j)?;
        let mut w = b.to_f64().unwrap_or(0.0) / factorial(j);
        if j % 2 == 1 && self == OddSign::Matched {
            w = -w;
        }
        Ok(w)
    }
}

fn factorial(j: usize) -> f64 {
    (1..=j).map(|k| k as f64).product()
}

/// All compositions of `total` into `parts` positive integers, in
/// lexicographic order.
pub fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn go(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 0 {
            if total == 0 {
                out.push(prefix.clone());
            }
            return;
        }
        if total < parts {
            return;
        }
        for first in 1..=(total - (parts - 1)) {
            prefix.push(first);
            go(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(total, parts, &mut Vec::new(), &mut out);
    out
}

/// Period-stripped Magnus terms `Omega_1..Omega_count` of the 1-periodic `h`
/// with upper limit `t` in units of the period.
pub fn omega_terms(h: &FourierOp, count: usize) -> Result<Vec<TrigPolyOp>> {
    omega_terms_with(h, count, OddSign::default())
}

pub fn omega_terms_with(h: &FourierOp, count: usize, sign: OddSign) -> Result<Vec<TrigPolyOp>> {
    if count == 0 || count > MAX_OMEGA {
        return Err(Error::OrderOutOfRange {
            order: count,
            max: MAX_OMEGA,
        });
    }
    let ih = TrigPolyOp::from_fourier(h).scale(I);
    let mut omegas = vec![ih.integrate_from_zero()?];
    // nested[k_1..k_j] = ad_{Omega_{k_1}} ... ad_{Omega_{k_j}} (iH)
    let mut nested: HashMap<Vec<usize>, TrigPolyOp> = HashMap::new();
    for l in 2..=count {
        let mut integrand = TrigPolyOp::zero(h.dim(), h.basis_label());
        for j in 1..l {
            let w = sign.weight(j)?;
            if w == 0.0 {
                continue;
            }
            for comp in compositions(l - 1, j) {
                let term = nested_ad(&comp, &omegas, &ih, &mut nested)?;
                integrand = integrand.add_scaled(&term, C64::new(w, 0.0))?;
            }
        }
        omegas.push(integrand.integrate_from_zero()?);
    }
    Ok(omegas)
}

fn nested_ad(
    comp: &[usize],
    omegas: &[TrigPolyOp],
    ih: &TrigPolyOp,
    memo: &mut HashMap<Vec<usize>, TrigPolyOp>,
) -> Result<TrigPolyOp> {
    if comp.is_empty() {
        return Ok(ih.clone());
    }
    if let Some(hit) = memo.get(comp) {
        return Ok(hit.clone());
    }
    let inner = nested_ad(&comp[1..], omegas, ih, memo)?;
    let out = omegas[comp[0] - 1].commutator(&inner)?;
    memo.insert(comp.to_vec(), out.clone());
    Ok(out)
}

/// `H_FM^[l] = -i Omega_{l+1}(1)` for `l = 0..=order`.
pub fn fm_coefficients(h: &FourierOp, order: usize) -> Result<EffectiveSeries> {
    fm_coefficients_with(h, order, OddSign::default())
}

pub fn fm_coefficients_with(h: &FourierOp, order: usize, sign: OddSign) -> Result<EffectiveSeries> {
    if order > MAX_FM_ORDER {
        return Err(Error::OrderOutOfRange {
            order,
            max: MAX_FM_ORDER,
        });
    }
    let omegas = omega_terms_with(h, order + 1, sign)?;
    let coeffs = omegas.iter().map(|om| om.eval(1.0).scale(-I)).collect();
    EffectiveSeries::new(SeriesKind::Fm, coeffs)
}
