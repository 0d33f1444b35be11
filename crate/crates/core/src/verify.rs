//! Experiments: coefficient comparison, error-scaling scans with log-log
//! fits, the monodromy-log oracle and the property suite.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effective::{defect_polynomial, heff_coefficients, s_coefficients, EffBuilder};
use crate::error::{Error, Result};
use crate::logm::logm;
use crate::magnus::{fm_coefficients, EffectiveSeries};
use crate::models::{Model, ModelSpec};
use crate::operator::{bandwidth, conjugation_defect, hermiticity_defect, Mat, Operator, C64};
use crate::propagate::{effective_propagator, MonodromyCache, PropagatorConfig};

/// Points with error at or below `FLOOR_FACTOR * tol` are excluded from fits.
/// After `q` periods the reference itself is only good to about `q * tol`,
/// so propagation scans use `FLOOR_FACTOR * tol * |q|`.
pub const FLOOR_FACTOR: f64 = 100.0;

/// `||a[l] - b[l]||_F / max(1, ||a[l]||_F, ||b[l]||_F)` per order, optionally restricted
/// to the leading `interior` block. Symmetric in `a` and `b`.
pub fn compare_series(a: &EffectiveSeries, b: &EffectiveSeries, interior: Option<usize>) -> Result<Vec<f64>> {
    if a.order != b.order {
        return Err(Error::InvalidArgument(format!(
            "orders differ: {} vs {}",
            a.order, b.order
        )));
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let n = interior.unwrap_or(a.dim()).min(a.dim());
    Ok(a.coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| {
            let (x, y) = (x.leading_block(n), y.leading_block(n));
            let scale = x.frobenius_norm().max(y.frobenius_norm()).max(1.0);
            (x.matrix() - y.matrix()).norm() / scale
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least-squares line through `(ln x, ln y)`. Needs two distinct abscissae.
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<Fit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(Fit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScanMode {
    Strobo,
    Horizon,
    Oracle,
}

impl ScanMode {
    pub fn target_slope(self, order: usize) -> f64 {
        match self {
            ScanMode::Strobo => order as f64 + 2.0,
            ScanMode::Horizon => 1.0,
            ScanMode::Oracle => order as f64 + 1.0,
        }
    }

    pub fn window(self) -> f64 {
        match self {
            ScanMode::Horizon => 0.5,
            _ => 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    #[serde(rename = "T")]
    pub period: f64,
    pub q: i64,
    pub error: f64,
    pub floored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub model: ModelSpec,
    pub mode: ScanMode,
    #[serde(rename = "L")]
    pub order: usize,
    pub points: Vec<ScanPoint>,
    pub fitted_slope: Option<f64>,
    pub fitted_intercept: Option<f64>,
    pub r_squared: Option<f64>,
    /// True when at least one point sits at the numerical floor.
    pub floor_flagged: bool,
    pub floor: f64,
    pub target_slope: f64,
    pub window: f64,
    /// Points skipped with a reason, e.g. a branch-cut violation.
    pub diagnostics: Vec<String>,
}

impl ScalingReport {
    fn new(model: &ModelSpec, mode: ScanMode, order: usize, mut points: Vec<ScanPoint>, floor: f64, diagnostics: Vec<String>) -> Self {
        points.sort_by(|a, b| a.period.total_cmp(&b.period));
        let usable: Vec<(f64, f64)> = points
            .iter()
            .filter(|p| !p.floored)
            .map(|p| (p.period, p.error))
            .collect();
        let fit = fit_loglog(&usable);
        Self {
            model: model.clone(),
            mode,
            order,
            floor_flagged: points.iter().any(|p| p.floored),
            points,
            fitted_slope: fit.map(|f| f.slope),
            fitted_intercept: fit.map(|f| f.intercept),
            r_squared: fit.map(|f| f.r_squared),
            floor,
            target_slope: mode.target_slope(order),
            window: mode.window(),
            diagnostics,
        }
    }

    pub fn non_floored(&self) -> usize {
        self.points.iter().filter(|p| !p.floored).count()
    }

    /// Slope within the window, or every point at the floor.
    pub fn passed(&self) -> bool {
        match self.fitted_slope {
            Some(s) => (s - self.target_slope).abs() <= self.window,
            None => !self.points.is_empty() && self.non_floored() == 0,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    /// Columns `model,L,T,q,error,floor_flag`, then `slope`, `intercept`
    /// and `r2` footer rows with the value in the second column.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
        w.write_record(["model", "L", "T", "q", "error", "floor_flag"]).map_err(io)?;
        for p in &self.points {
            w.write_record([
                self.model.name().to_string(),
                self.order.to_string(),
                format!("{:e}", p.period),
                p.q.to_string(),
                format!("{:e}", p.error),
                p.floored.to_string(),
            ])
            .map_err(io)?;
        }
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_else(|| "NA".into());
        for (k, v) in [
            ("slope", self.fitted_slope),
            ("intercept", self.fitted_intercept),
            ("r2", self.r_squared),
        ] {
            w.write_record([k.to_string(), fmt(v), String::new(), String::new(), String::new(), String::new()])
                .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))
    }
}

/// Geometric grid `start * factor^k`, `k = 0..count`.
pub fn geometric_grid(start: f64, factor: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start * factor.powi(k as i32)).collect()
}

/// `q(T) = ceil(c T^{-L-1})`, so that `t = q T` is about `c T^{-L}`.
pub fn horizon_steps(period: f64, order: usize, c: f64) -> i64 {
    (c * period.powi(-(order as i32) - 1)).ceil().max(1.0) as i64
}

/// Runs scans for one model, sharing one-period propagators across orders.
#[derive(Debug)]
pub struct Scanner {
    model: Model,
    cache: MonodromyCache,
}

impl Scanner {
    pub fn new(model: Model, cfg: PropagatorConfig) -> Result<Self> {
        cfg.validate()?;
        let cache = MonodromyCache::new(&model.h, cfg);
        Ok(Self { model, cache })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    fn floor(&self) -> f64 {
        FLOOR_FACTOR * self.cache.config().tol
    }

    fn check_grid(grid: &[f64]) -> Result<()> {
        if grid.len() < 2 || grid.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "period grid needs at least two positive entries".into(),
            ));
        }
        Ok(())
    }

    fn distance(&self, a: &Operator, b: &Operator, state: Option<&DVector<C64>>) -> f64 {
        let d = a.matrix() - b.matrix();
        match state {
            Some(psi) => (d * psi).norm(),
            None => d.norm(),
        }
    }

    fn propagation_scan(
        &self,
        mode: ScanMode,
        series: &EffectiveSeries,
        grid: &[f64],
        q_of: impl Fn(f64) -> i64 + Sync,
        state: Option<&DVector<C64>>,
    ) -> Result<ScalingReport> {
        Self::check_grid(grid)?;
        let floor = self.floor();
        let points = grid
            .par_iter()
            .map(|&t| {
                let q = q_of(t);
                let exact = self.cache.stroboscopic(t, q)?;
                let eff = effective_propagator(series, t, q as f64 * t)?;
                let error = self.distance(&eff, &exact, state);
                Ok(ScanPoint {
                    period: t,
                    q,
                    error,
                    floored: error <= floor * q.unsigned_abs().max(1) as f64,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ScalingReport::new(&self.model.spec, mode, series.order, points, floor, Vec::new()))
    }

    /// Error of `exp(-i q T H(T))` against the stroboscopic propagator.
    pub fn stroboscopic_scan(&self, series: &EffectiveSeries, grid: &[f64], q: i64, state: Option<&DVector<C64>>) -> Result<ScalingReport> {
        self.propagation_scan(ScanMode::Strobo, series, grid, |_| q, state)
    }

    /// As [`Self::stroboscopic_scan`] at `q(T) = ceil(c T^{-L-1})`.
    pub fn long_horizon_scan(&self, series: &EffectiveSeries, grid: &[f64], c: f64, state: Option<&DVector<C64>>) -> Result<ScalingReport> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidArgument("horizon constant must be positive".into()));
        }
        let order = series.order;
        self.propagation_scan(ScanMode::Horizon, series, grid, |t| horizon_steps(t, order, c), state)
    }

    /// `||H(T) - (i/T) Log U(T)||_F` with the principal logarithm.
    pub fn monodromy_log_oracle(&self, series: &EffectiveSeries, grid: &[f64]) -> Result<ScalingReport> {
        Self::check_grid(grid)?;
        let floor = self.floor();
        let results = grid
            .par_iter()
            .map(|&t| {
                let u = self.cache.monodromy(t)?;
                match logm(&u) {
                    Ok(l) => {
                        let exact = l.scale(C64::new(0.0, 1.0 / t));
                        let error = series.assemble(t).sub(&exact)?.frobenius_norm();
                        Ok(Ok(ScanPoint {
                            period: t,
                            q: 1,
                            error,
                            floored: error <= floor,
                        }))
                    }
                    Err(Error::BranchCut { re, im, margin }) => Ok(Err(format!(
                        "T={t:e}: eigenvalue {re:e}{im:+e}i within {margin:e} of the branch cut; skipped"
                    ))),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut points = Vec::new();
        let mut diagnostics = Vec::new();
        for r in results {
            match r {
                Ok(p) => points.push(p),
                Err(d) => diagnostics.push(d),
            }
        }
        Ok(ScalingReport::new(&self.model.spec, ScanMode::Oracle, series.order, points, floor, diagnostics))
    }
}

/// Deliberate corruptions used to show that the suite detects errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mutation {
    #[default]
    None,
    /// Negates the highest nonzero correction `H^[l]`, `l >= 1`.
    FlipSign,
    /// Adds a non-Hermitian perturbation to `H^[0]`.
    BreakHermiticity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub model: ModelSpec,
    #[serde(rename = "L")]
    pub order: usize,
    pub mutation: Mutation,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl PropertyReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))
    }

    /// Plain-text table, one check per line.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$}  {:>10}  {:>10}  verdict\n", "check", "value", "threshold");
        for c in &self.checks {
            out += &format!(
                "{:<width$}  {:>10.3e}  {:>10.3e}  {}\n",
                c.name,
                c.value,
                c.threshold,
                if c.passed { "pass" } else { "FAIL" }
            );
        }
        out
    }
}

pub const HERMITICITY_TOL: f64 = 1e-11;
pub const CONJUGATION_TOL: f64 = 1e-11;
pub const DEFECT_TOL: f64 = 1e-11;
pub const S_ENDPOINT_TOL: f64 = 1e-13;
pub const LEVEL_TOL: f64 = 1e-11;
pub const DUAL_TOL: f64 = 1e-9;

fn rel(value: f64, scale: f64) -> f64 {
    if value == 0.0 {
        0.0
    } else {
        value / scale.max(f64::MIN_POSITIVE)
    }
}

/// Applies `mutation` to `series` in place.
pub fn apply_mutation(series: &mut EffectiveSeries, mutation: Mutation) {
    match mutation {
        Mutation::None => {}
        Mutation::FlipSign => {
            let target = (1..=series.order)
                .rev()
                .find(|&l| series.coeffs[l].frobenius_norm() > 0.0)
                .unwrap_or(0);
            series.coeffs[target] = series.coeffs[target].scale(C64::new(-1.0, 0.0));
        }
        Mutation::BreakHermiticity => {
            let c = &series.coeffs[0];
            let n = c.dim();
            let mut m = c.matrix().clone();
            let eps = 1e-6 * c.frobenius_norm().max(1.0);
            m[(0, n - 1)] += C64::new(0.0, eps);
            if n == 1 {
                m[(0, 0)] += C64::new(0.0, eps);
            }
            series.coeffs[0] = Operator::from_mat(m, c.basis_label());
        }
    }
}

/// Runs every structural check on the effective series of `model` at order
/// `order`. Failures are report entries, not errors.
pub fn property_suite(model: &Model, order: usize, mutation: Mutation) -> Result<PropertyReport> {
    let h = &model.h;
    let mut checks = Vec::new();
    let mut push = |name: String, value: f64, threshold: f64| {
        checks.push(Check {
            passed: value <= threshold,
            name,
            value,
            threshold,
        });
    };
    let scale = h.scale().max(1.0);

    let herm_h = h
        .modes()
        .map(|(n, op)| {
            let partner = h.mode(-n).map(|o| o.matrix().adjoint()).unwrap_or_else(|| Mat::zeros(h.dim(), h.dim()));
            (op.matrix() - partner).norm()
        })
        .fold(0.0, f64::max);
    push("generator hermitian pairs".into(), rel(herm_h, scale), HERMITICITY_TOL);

    let mut eff = heff_coefficients(h, order)?;
    apply_mutation(&mut eff, mutation);
    let fm = fm_coefficients(h, order)?;

    for (tag, series) in [("EFF", &eff), ("FM", &fm)] {
        for (l, c) in series.coeffs.iter().enumerate() {
            let norm = c.frobenius_norm();
            push(format!("{tag} H^[{l}] hermiticity"), rel(hermiticity_defect(c), norm), HERMITICITY_TOL);
            if let Some(j) = &model.conjugation {
                push(
                    format!("{tag} H^[{l}] conjugation"),
                    rel(conjugation_defect(c, j)?, norm),
                    CONJUGATION_TOL,
                );
            }
            let k = bandwidth(c, &model.partition)?;
            push(
                format!("{tag} H^[{l}] bandwidth"),
                k as f64,
                ((l + 1) * model.bandwidth) as f64,
            );
        }
    }

    let d = compare_series(&eff, &fm, Some(model.interior))?;
    push("EFF vs FM interior distance".into(), d.iter().copied().fold(0.0, f64::max), DUAL_TOL);

    let defect = defect_polynomial(h, &eff)?;
    for k in 0..=order {
        let v = defect.get(&k).map(|o| o.frobenius_norm()).unwrap_or(0.0);
        push(format!("defect polynomial order {k}"), rel(v, scale), DEFECT_TOL);
    }

    let table = s_coefficients(h, &eff, order)?;
    let mut endpoint = 0.0f64;
    for ((j, _), f) in table.entries() {
        if j == 0 {
            continue;
        }
        let s = f.term_norm_sum().max(1.0);
        for t in [0.0, 1.0] {
            endpoint = endpoint.max(f.eval(t).frobenius_norm() / s);
        }
    }
    push("S coefficients at t in {0, 1}".into(), endpoint, S_ENDPOINT_TOL);

    if order >= 2 {
        let mut b = EffBuilder::new(h);
        b.extend_to(order)?;
        let mut worst = 0.0f64;
        for l in 1..order {
            let again = b.coefficient_via_level(l, order)?;
            let v = again.sub(&b.coeffs()[l])?.frobenius_norm();
            worst = worst.max(rel(v, b.coeffs()[l].frobenius_norm().max(1.0)));
        }
        push("lower orders independent of level".into(), worst, LEVEL_TOL);
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(PropertyReport {
        model: model.spec.clone(),
        order,
        mutation,
        checks,
        passed,
    })
}
