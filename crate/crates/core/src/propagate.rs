//! Reference propagators for `H^(T)(t) = H(t/T)` and for the autonomous
//! effective dynamics.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expm::expm;
use crate::magnus::EffectiveSeries;
use crate::operator::{adjoint, matexp, Mat, Operator, C64, I};
use crate::trigpoly::FourierOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Two-exponential commutator-free Magnus step, fourth order.
    #[default]
    Cf4,
    /// `exp(-i h H(midpoint))`, second order.
    MidpointExp,
}

impl Method {
    pub fn order(self) -> i32 {
        match self {
            Method::Cf4 => 4,
            Method::MidpointExp => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropagatorConfig {
    pub method: Method,
    pub base_steps_per_period: usize,
    pub tol: f64,
    pub max_halvings: u32,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        Self {
            method: Method::Cf4,
            base_steps_per_period: 16,
            tol: 1e-12,
            max_halvings: 14,
        }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol >= 1e-13) {
            return Err(Error::InvalidArgument(format!("tol {} below 1e-13", self.tol)));
        }
        if self.base_steps_per_period < 8 {
            return Err(Error::InvalidArgument(format!(
                "base_steps_per_period {} below 8",
                self.base_steps_per_period
            )));
        }
        if self.max_halvings == 0 {
            return Err(Error::InvalidArgument("max_halvings must be positive".into()));
        }
        Ok(())
    }
}

const SQRT3_6: f64 = 0.288_675_134_594_812_9; // sqrt(3)/6
const CF4_A1: f64 = 0.25 - SQRT3_6;
const CF4_A2: f64 = 0.25 + SQRT3_6;

/// Fixed-step propagation over `[t0, t1]` with `n` steps.
pub(crate) fn fixed_steps(h: &FourierOp, period: f64, t0: f64, t1: f64, n: usize, method: Method) -> Result<Mat> {
    let dim = h.dim();
    let step = (t1 - t0) / n as f64;
    let at = |t: f64| h.eval(t / period).into_matrix();
    let mut u = Mat::identity(dim, dim);
    let minus_ih = -I * step;
    for k in 0..n {
        let start = t0 + k as f64 * step;
        let stage = match method {
            Method::MidpointExp => expm(&(at(start + 0.5 * step) * minus_ih))?,
            Method::Cf4 => {
                let h1 = at(start + (0.5 - SQRT3_6) * step);
                let h2 = at(start + (0.5 + SQRT3_6) * step);
                let (w1, w2) = (minus_ih * CF4_A1, minus_ih * CF4_A2);
                let first = expm(&(&h1 * w2 + &h2 * w1))?;
                let second = expm(&(&h1 * w1 + &h2 * w2))?;
                second * first
            }
        };
        u = stage * u;
    }
    Ok(u)
}

/// `U^(T)(t1, t0)` to Frobenius accuracy `cfg.tol`.
///
/// Both methods are time-symmetric, so the step-doubling pair `U_n, U_2n`
/// extrapolates to `U_2n + (U_2n - U_n)/(2^p - 1)` with two extra orders.
/// The step count doubles until successive extrapolants agree to `tol`.
/// Roundoff grows with the step count, so once their difference stops
/// shrinking further halvings cannot help and the call fails early.
pub fn reference_propagator(h: &FourierOp, period: f64, t1: f64, t0: f64, cfg: &PropagatorConfig) -> Result<Operator> {
    if !(period > 0.0) || !period.is_finite() {
        return Err(Error::InvalidArgument(format!("period {period} must be positive")));
    }
    cfg.validate()?;
    if t1 == t0 {
        return Ok(Operator::identity(h.dim(), h.basis_label()));
    }
    let periods = ((t1 - t0).abs() / period).max(1e-300);
    let mut n = ((cfg.base_steps_per_period as f64 * periods).ceil() as usize).max(1);
    let gain = C64::new(1.0 / (2f64.powi(cfg.method.order()) - 1.0), 0.0);
    let mut coarse = fixed_steps(h, period, t0, t1, n, cfg.method)?;
    let mut previous: Option<Mat> = None;
    let mut last = f64::INFINITY;
    for halving in 1..=cfg.max_halvings {
        n *= 2;
        let fine = fixed_steps(h, period, t0, t1, n, cfg.method)?;
        let extrapolated = &fine + (&fine - &coarse) * gain;
        if let Some(prev) = &previous {
            let d = (&extrapolated - prev).norm();
            if d <= cfg.tol {
                return Ok(Operator::from_mat(extrapolated, h.basis_label()));
            }
            if d >= 0.5 * last && d < 1e4 * cfg.tol {
                return Err(Error::ToleranceNotReached {
                    tol: cfg.tol,
                    halvings: halving,
                    last: d,
                });
            }
            last = d;
        }
        previous = Some(extrapolated);
        coarse = fine;
    }
    Err(Error::ToleranceNotReached {
        tol: cfg.tol,
        halvings: cfg.max_halvings,
        last,
    })
}

/// `u^q` by binary powering; `q < 0` uses `u^dagger`.
pub fn unitary_power(u: &Operator, q: i64) -> Operator {
    let base = if q < 0 { adjoint(u) } else { u.clone() };
    let mut e = q.unsigned_abs();
    let mut acc = Mat::identity(u.dim(), u.dim());
    let mut sq = base.into_matrix();
    while e > 0 {
        if e & 1 == 1 {
            acc = &acc * &sq;
        }
        e >>= 1;
        if e > 0 {
            sq = &sq * &sq;
        }
    }
    Operator::from_mat(acc, u.basis_label())
}

/// `U^(T)(qT, 0) = U^(T)(T, 0)^q`.
pub fn stroboscopic(h: &FourierOp, period: f64, q: i64, cfg: &PropagatorConfig) -> Result<Operator> {
    if q == 0 {
        return Ok(Operator::identity(h.dim(), h.basis_label()));
    }
    let m = reference_propagator(h, period, period, 0.0, cfg)?;
    Ok(unitary_power(&m, q))
}

/// One-period propagators of a fixed generator, cached by period so scans
/// at several orders share the integration work.
#[derive(Debug)]
pub struct MonodromyCache {
    h: FourierOp,
    cfg: PropagatorConfig,
    cache: Mutex<BTreeMap<u64, Operator>>,
}

impl MonodromyCache {
    pub fn new(h: &FourierOp, cfg: PropagatorConfig) -> Self {
        Self {
            h: h.clone(),
            cfg,
            cache: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn generator(&self) -> &FourierOp {
        &self.h
    }

    pub fn config(&self) -> &PropagatorConfig {
        &self.cfg
    }

    pub fn monodromy(&self, period: f64) -> Result<Operator> {
        let key = period.to_bits();
        if let Some(m) = self.cache.lock().expect("cache poisoned").get(&key) {
            return Ok(m.clone());
        }
        let m = reference_propagator(&self.h, period, period, 0.0, &self.cfg)?;
        self.cache
            .lock()
            .expect("cache poisoned")
            .insert(key, m.clone());
        Ok(m)
    }

    pub fn stroboscopic(&self, period: f64, q: i64) -> Result<Operator> {
        if q == 0 {
            return Ok(Operator::identity(self.h.dim(), self.h.basis_label()));
        }
        Ok(unitary_power(&self.monodromy(period)?, q))
    }
}

/// `exp(-i t H)` with `H` the Hermitian part of `sum_l T^l coeffs[l]`.
pub fn effective_propagator(series: &EffectiveSeries, period: f64, t: f64) -> Result<Operator> {
    let h = series.assemble(period);
    let herm = (h.matrix() + h.matrix().adjoint()) * C64::new(0.5, 0.0);
    matexp(&Operator::from_mat(herm, h.basis_label()), C64::new(0.0, -t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{annihilation, number, unitarity_defect};
    use crate::magnus::SeriesKind;
    use std::f64::consts::PI;

    fn driven_ho(dim: usize) -> FourierOp {
        let a = annihilation(dim);
        let x = &a + a.adjoint();
        let h0 = number(dim) + Mat::identity(dim, dim) * C64::new(0.5, 0.0);
        FourierOp::constant(Operator::from_mat(h0, "fock"))
            .with_mode(1, Operator::from_mat(&x * C64::new(0.0, -0.5), "fock"))
            .unwrap()
            .with_mode(-1, Operator::from_mat(&x * C64::new(0.0, 0.5), "fock"))
            .unwrap()
    }

    fn cfg() -> PropagatorConfig {
        PropagatorConfig::default()
    }

    fn diff(a: &Operator, b: &Operator) -> f64 {
        a.sub(b).unwrap().frobenius_norm()
    }

    #[test]
    fn config_bounds() {
        assert!(PropagatorConfig { tol: 1e-14, ..cfg() }.validate().is_err());
        assert!(PropagatorConfig { base_steps_per_period: 4, ..cfg() }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    #[test]
    fn autonomous_case_is_an_exponential() {
        let a = Operator::from_mat(number(5) + annihilation(5) + annihilation(5).adjoint(), "fock");
        let h = FourierOp::constant(a.clone());
        let u = reference_propagator(&h, 0.3, 1.1, 0.2, &cfg()).unwrap();
        let want = matexp(&a, C64::new(0.0, -0.9)).unwrap();
        assert!(diff(&u, &want) < 1e-12);
    }

    #[test]
    fn equal_times_give_identity() {
        let h = driven_ho(6);
        let u = reference_propagator(&h, 0.1, 0.4, 0.4, &cfg()).unwrap();
        assert_eq!(u, Operator::identity(6, "fock"));
    }

    #[test]
    fn method_orders() {
        // Halving the step reduces the step-doubling difference by 2^p.
        let h = driven_ho(6);
        for method in [Method::Cf4, Method::MidpointExp] {
            let u: Vec<Mat> = [8, 16, 32]
                .iter()
                .map(|&n| fixed_steps(&h, 1.0, 0.0, 1.0, n, method).unwrap())
                .collect();
            let ratio = (&u[0] - &u[1]).norm() / (&u[1] - &u[2]).norm();
            let p = ratio.log2();
            assert!((p - method.order() as f64).abs() < 0.3, "{method:?} order {p}");
        }
    }

    #[test]
    fn extrapolation_gains_two_orders() {
        let h = driven_ho(6);
        for method in [Method::Cf4, Method::MidpointExp] {
            let u: Vec<Mat> = [8, 16, 32, 64]
                .iter()
                .map(|&n| fixed_steps(&h, 1.0, 0.0, 1.0, n, method).unwrap())
                .collect();
            let g = C64::new(1.0 / (2f64.powi(method.order()) - 1.0), 0.0);
            let r: Vec<Mat> = (1..4).map(|k| &u[k] + (&u[k] - &u[k - 1]) * g).collect();
            let p = ((&r[0] - &r[1]).norm() / (&r[1] - &r[2]).norm()).log2();
            assert!((p - (method.order() + 2) as f64).abs() < 0.4, "{method:?} order {p}");
        }
    }

    #[test]
    fn methods_agree_and_stay_unitary() {
        let h = driven_ho(8);
        let a = reference_propagator(&h, 0.5, 0.5, 0.0, &cfg()).unwrap();
        let mid = PropagatorConfig {
            method: Method::MidpointExp,
            max_halvings: 20,
            tol: 1e-10,
            ..cfg()
        };
        let b = reference_propagator(&h, 0.5, 0.5, 0.0, &mid).unwrap();
        assert!(diff(&a, &b) < 1e-9);
        assert!(unitarity_defect(&a) <= 10.0 * cfg().tol);
    }

    #[test]
    fn tolerance_not_reached_is_reported() {
        let h = driven_ho(8);
        let c = PropagatorConfig { max_halvings: 1, base_steps_per_period: 8, ..cfg() };
        assert!(matches!(
            reference_propagator(&h, 2.0, 2.0, 0.0, &c),
            Err(Error::ToleranceNotReached { .. })
        ));
    }

    #[test]
    fn stroboscopic_matches_direct_integration() {
        let h = driven_ho(8);
        let c = cfg();
        let period = 0.2;
        assert_eq!(stroboscopic(&h, period, 0, &c).unwrap(), Operator::identity(8, "fock"));
        let one = stroboscopic(&h, period, 1, &c).unwrap();
        let m = reference_propagator(&h, period, period, 0.0, &c).unwrap();
        assert_eq!(one, m);
        let two = stroboscopic(&h, period, 2, &c).unwrap();
        let direct = reference_propagator(&h, period, 2.0 * period, 0.0, &c).unwrap();
        assert!(diff(&two, &direct) <= 20.0 * c.tol);
        let back = stroboscopic(&h, period, -2, &c).unwrap();
        assert!(diff(&back.mul(&two).unwrap(), &Operator::identity(8, "fock")) < 1e-12);
    }

    #[test]
    fn composition_and_periodicity() {
        let h = driven_ho(8);
        // over more than a period the roundoff floor sits near 1e-12
        let c = PropagatorConfig { tol: 1e-11, ..cfg() };
        let period = 0.3;
        let u20 = reference_propagator(&h, period, 0.5, 0.0, &c).unwrap();
        let u21 = reference_propagator(&h, period, 0.5, 0.17, &c).unwrap();
        let u10 = reference_propagator(&h, period, 0.17, 0.0, &c).unwrap();
        assert!(diff(&u20, &u21.mul(&u10).unwrap()) <= 10.0 * c.tol);
        let shifted = reference_propagator(&h, period, 0.5 + period, period, &c).unwrap();
        assert!(diff(&u20, &shifted) <= 10.0 * c.tol);
    }

    #[test]
    fn monodromy_cache_is_consistent() {
        let h = driven_ho(6);
        let cache = MonodromyCache::new(&h, cfg());
        let a = cache.stroboscopic(0.1, 3).unwrap();
        let b = stroboscopic(&h, 0.1, 3, &cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(cache.stroboscopic(0.1, 3).unwrap(), a);
    }

    #[test]
    fn effective_propagator_basics() {
        let dim = 6;
        let avg = Operator::from_mat(number(dim) * C64::new(0.7, 0.0), "fock");
        let s = EffectiveSeries::new(SeriesKind::Eff, vec![avg.clone()]).unwrap();
        assert!(diff(&effective_propagator(&s, 0.1, 0.0).unwrap(), &Operator::identity(dim, "fock")) < 1e-15);
        let h = FourierOp::constant(avg);
        let want = reference_propagator(&h, 0.1, 0.4, 0.0, &cfg()).unwrap();
        let got = effective_propagator(&s, 0.1, 0.4).unwrap();
        assert!(diff(&got, &want) < 1e-12);
    }

    #[test]
    fn driven_oscillator_third_order_exponential() {
        let dim = 12;
        let a = annihilation(dim);
        let p = (&a - a.adjoint()) * I;
        let h0 = number(dim) + Mat::identity(dim, dim) * C64::new(0.5, 0.0);
        let coeffs = vec![
            h0,
            &p * C64::new(1.0 / (2.0 * PI), 0.0),
            Mat::identity(dim, dim) * C64::new(3.0 / (8.0 * PI * PI), 0.0),
            &p * C64::new(1.0 / (8.0 * PI.powi(3)), 0.0),
        ];
        let s = EffectiveSeries::new(
            SeriesKind::Eff,
            coeffs.iter().map(|m| Operator::from_mat(m.clone(), "fock")).collect(),
        )
        .unwrap();
        let period = 0.05;
        let mut total = Mat::zeros(dim, dim);
        let mut tp = 1.0;
        for c in &coeffs {
            total += c * C64::new(tp, 0.0);
            tp *= period;
        }
        let want = crate::expm::expm_hermitian(&total, C64::new(0.0, -period));
        let got = effective_propagator(&s, period, period).unwrap();
        assert!((got.matrix() - want).norm() < 1e-12);
        assert!(unitarity_defect(&got) < 1e-12 * dim as f64);
    }
}
