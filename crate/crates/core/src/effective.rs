//! The recursive integration-by-parts construction of effective Hamiltonians.
//!
//! For a level `L` (the order of the effective Hamiltonian `H_eff,L` that
//! enters the relative action), the iterated actions `S_{j,L}(tT)` are
//! polynomials in `T` with 1-periodic coefficient functions
//! `S_{j,L}^[k](t)`, `j <= k <= j(L+1)`. Those coefficients, and the `T`
//! coefficients of the averaged relative actions `<K(S_{j,L})>`, determine
//! `H_eff^[l]` order by order.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::magnus::{EffectiveSeries, SeriesKind};
use crate::operator::{Mat, Operator, C64, I, ONE};
use crate::trigpoly::{FourierOp, TrigPolyOp};

pub const MAX_EFF_ORDER: usize = 6;

/// `t -> h1 a(t) - a(t) h2(t)`.
pub fn k_action(h1_const: &Mat, h2: &TrigPolyOp, a: &TrigPolyOp) -> Result<TrigPolyOp> {
    a.left_mul(h1_const)?.sub(&a.mul(h2)?)
}

/// Index set `N_{L,j,k}`: pairs `(sigma, sigma')` with
/// `j <= sigma <= j(L+1)`, `1 <= sigma' <= L` and `sigma + sigma' + 1 = k`.
pub fn index_set(level: usize, j: usize, k: usize) -> Vec<(usize, usize)> {
    (1..=level)
        .filter_map(|sp| {
            let s = k.checked_sub(sp + 1)?;
            (s >= j && s <= j * (level + 1)).then_some((s, sp))
        })
        .collect()
}

/// `(-i)^j`.
pub fn neg_i_pow(j: usize) -> C64 {
    match j % 4 {
        0 => ONE,
        1 => -I,
        2 => -ONE,
        _ => I,
    }
}

/// Coefficient functions `S_{j,L}^[k](t)` for one level `L`.
#[derive(Debug, Clone)]
pub struct SCoeffTable {
    level: usize,
    /// `H_eff^[0..=level]`.
    heff: Vec<Mat>,
    h: TrigPolyOp,
    /// `rows[j][k]`, present for `j <= k <= j(level+1)`.
    rows: Vec<BTreeMap<usize, TrigPolyOp>>,
}

impl SCoeffTable {
    /// Starts a table with the base row `S_0 = 1`. `heff` must hold at least
    /// `H_eff^[0..=level]`.
    pub fn new(h: &FourierOp, heff: &[Operator], level: usize) -> Result<Self> {
        if heff.len() < level + 1 {
            return Err(Error::MissingCoefficient(format!(
                "H_eff^[{}] needed for level {level}",
                heff.len()
            )));
        }
        let base = BTreeMap::from([(0, TrigPolyOp::identity(h.dim(), h.basis_label()))]);
        Ok(Self {
            level,
            heff: heff[..=level].iter().map(|o| o.matrix().clone()).collect(),
            h: TrigPolyOp::from_fourier(h),
            rows: vec![base],
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Number of populated rows `j = 0..rows()`.
    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    /// `S_{j,L}^[k]`; `None` outside the band `j <= k <= j(L+1)` or for rows
    /// not yet built.
    pub fn entry(&self, j: usize, k: usize) -> Option<&TrigPolyOp> {
        self.rows.get(j)?.get(&k)
    }

    pub fn entries(&self) -> impl Iterator<Item = ((usize, usize), &TrigPolyOp)> {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(j, row)| row.iter().map(move |(&k, f)| ((j, k), f)))
    }

    fn k0(&self, a: &TrigPolyOp) -> Result<TrigPolyOp> {
        k_action(&self.heff[0], &self.h, a)
    }

    /// `sum_{N_{L,j,k}} H_eff^[sigma'] S_j^[sigma]`.
    fn correction(&self, j: usize, k: usize) -> Result<TrigPolyOp> {
        let mut acc = TrigPolyOp::zero(self.h.dim(), self.h.basis_label());
        for (s, sp) in index_set(self.level, j, k) {
            if let Some(f) = self.entry(j, s) {
                acc = acc.add(&f.left_mul(&self.heff[sp])?)?;
            }
        }
        Ok(acc)
    }

    fn row_entry(&self, j: usize, k: usize) -> Result<TrigPolyOp> {
        self.entry(j, k)
            .cloned()
            .ok_or_else(|| Error::MissingCoefficient(format!("S_{{{j},{}}}^[{k}]", self.level)))
    }

    /// Builds rows up to and including `j_max`.
    pub fn extend_to(&mut self, j_max: usize) -> Result<()> {
        let lp1 = self.level + 1;
        while self.rows.len() <= j_max {
            let j = self.rows.len() - 1;
            let mut row = BTreeMap::new();
            for k in (j + 1)..=((j + 1) * lp1) {
                let integrand = if k == j + 1 {
                    self.k0(&self.row_entry(j, j)?)?
                } else if k <= j * lp1 + 1 {
                    self.k0(&self.row_entry(j, k - 1)?)?
                        .add(&self.correction(j, k)?)?
                } else {
                    self.correction(j, k)?
                };
                row.insert(k, integrand.osc().integrate_from_zero()?);
            }
            self.rows.push(row);
        }
        Ok(())
    }

    /// `T` coefficients of `<K_{.,L}(S_{j,L})>_T` for `j <= k <= j(L+1)+L`.
    pub fn avg_ks_coefficients(&self, j: usize) -> Result<BTreeMap<usize, Operator>> {
        if j >= self.rows.len() {
            return Err(Error::MissingCoefficient(format!(
                "row {j} of level {} not built",
                self.level
            )));
        }
        let lp1 = self.level + 1;
        let mut out = BTreeMap::new();
        for k in j..=(j * lp1 + self.level) {
            let f = if k == j {
                self.k0(&self.row_entry(j, j)?)?
            } else if k <= j * lp1 {
                self.k0(&self.row_entry(j, k)?)?
                    .add(&self.correction(j, k + 1)?)?
            } else {
                self.correction(j, k + 1)?
            };
            out.insert(k, f.average());
        }
        Ok(out)
    }
}

/// Standalone table for level `level` with rows `0..=level+1`.
pub fn s_coefficients(h: &FourierOp, heff: &EffectiveSeries, level: usize) -> Result<SCoeffTable> {
    let mut table = SCoeffTable::new(h, &heff.coeffs, level)?;
    table.extend_to(level + 1)?;
    Ok(table)
}

/// Memoized construction of `H_eff^[0..]` over increasing order.
#[derive(Debug, Clone)]
pub struct EffBuilder {
    h: FourierOp,
    coeffs: Vec<Operator>,
    tables: BTreeMap<usize, SCoeffTable>,
}

impl EffBuilder {
    pub fn new(h: &FourierOp) -> Self {
        let avg = TrigPolyOp::from_fourier(h).average();
        Self {
            h: h.clone(),
            coeffs: vec![avg],
            tables: BTreeMap::new(),
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Operator] {
        &self.coeffs
    }

    fn table(&mut self, level: usize, j: usize) -> Result<&SCoeffTable> {
        if !self.tables.contains_key(&level) {
            let t = SCoeffTable::new(&self.h, &self.coeffs, level)?;
            self.tables.insert(level, t);
        }
        let t = self.tables.get_mut(&level).expect("inserted above");
        t.extend_to(j)?;
        Ok(t)
    }

    /// `-sum_{j=1}^{l} (-i)^j Tcoeff_l <K_{.,L-j}(S_{j,L-j})>` for a target
    /// order `L >= l`, built from the tables at levels `L - j`.
    pub fn coefficient_via_level(&mut self, l: usize, target: usize) -> Result<Operator> {
        if l == 0 {
            return Ok(self.coeffs[0].clone());
        }
        if target < l || target > self.order() + 1 {
            return Err(Error::InvalidArgument(format!(
                "coefficient {l} at order {target} with {} known",
                self.order()
            )));
        }
        let dim = self.h.dim();
        let mut acc = Mat::zeros(dim, dim);
        for j in 1..=l {
            let avg = self.table(target - j, j)?.avg_ks_coefficients(j)?;
            if let Some(c) = avg.get(&l) {
                crate::operator::axpy(&mut acc, -neg_i_pow(j), c.matrix());
            }
        }
        Ok(Operator::from_mat(acc, self.h.basis_label()))
    }

    /// Extends the known coefficients up to `order`.
    pub fn extend_to(&mut self, order: usize) -> Result<()> {
        while self.order() < order {
            let l = self.order() + 1;
            let c = self.coefficient_via_level(l, l)?;
            self.coeffs.push(c);
        }
        Ok(())
    }

    pub fn series(&self, order: usize) -> Result<EffectiveSeries> {
        if order > self.order() {
            return Err(Error::MissingCoefficient(format!("H_eff^[{order}]")));
        }
        EffectiveSeries::new(SeriesKind::Eff, self.coeffs[..=order].to_vec())
    }
}

/// `H_eff^[0..=order]` of the integration-by-parts construction.
pub fn heff_coefficients(h: &FourierOp, order: usize) -> Result<EffectiveSeries> {
    if order > MAX_EFF_ORDER {
        return Err(Error::OrderOutOfRange {
            order,
            max: MAX_EFF_ORDER,
        });
    }
    let mut b = EffBuilder::new(h);
    b.extend_to(order)?;
    b.series(order)
}

/// `T` coefficients of `sum_{j=0}^{L} (-i)^j <K_{.,L}(S_{j,L})>` for the
/// series `heff` of order `L`. Orders `0..=L` vanish for the true effective
/// Hamiltonian.
pub fn defect_polynomial(h: &FourierOp, heff: &EffectiveSeries) -> Result<BTreeMap<usize, Operator>> {
    let level = heff.order;
    let mut table = SCoeffTable::new(h, &heff.coeffs, level)?;
    table.extend_to(level)?;
    let dim = h.dim();
    let mut acc: BTreeMap<usize, Mat> = BTreeMap::new();
    for j in 0..=level {
        for (k, c) in table.avg_ks_coefficients(j)? {
            let slot = acc.entry(k).or_insert_with(|| Mat::zeros(dim, dim));
            crate::operator::axpy(slot, neg_i_pow(j), c.matrix());
        }
    }
    Ok(acc
        .into_iter()
        .map(|(k, m)| (k, Operator::from_mat(m, h.basis_label())))
        .collect())
}
