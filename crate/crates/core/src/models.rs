//! Model builders: the quantum Rabi model in the interaction picture, the
//! periodically driven harmonic oscillator, and seeded random banded
//! generators.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::operator::{annihilation, number, BlockPartition, Conjugation, Mat, Operator, C64, ONE};
use crate::trigpoly::FourierOp;

pub const MIN_FOCK_DIM: usize = 8;
pub const MAX_RANDOM_DIM: usize = 64;
/// Fock levels kept clear of the truncation edge when comparing
/// coefficients.
pub const EDGE_MARGIN: usize = 8;

fn default_fock_dim() -> usize {
    24
}

fn default_amplitude() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Single-mode Rabi model with period `T = pi/omega`. The builder emits
    /// the 1-periodic generator, so `omega` only fixes the natural period.
    Rabi {
        g: f64,
        #[serde(default)]
        delta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        omega: Option<f64>,
        #[serde(default = "default_fock_dim")]
        fock_dim: usize,
    },
    /// `omega (N + 1/2) + f(t)(a + a^dagger)` with `f = sum_n c_n sin(2 pi n t)`.
    DrivenHo {
        omega: f64,
        sine_coeffs: Vec<f64>,
        #[serde(default = "default_fock_dim")]
        fock_dim: usize,
    },
    RandomBanded {
        dim: usize,
        bandwidth: usize,
        num_modes: usize,
        seed: u64,
        /// Entries are drawn uniformly from `[-amplitude, amplitude]`.
        #[serde(default = "default_amplitude")]
        amplitude: f64,
        /// Real modes, which makes plain conjugation compatible.
        #[serde(default)]
        real: bool,
    },
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Rabi { .. } => "rabi",
            ModelSpec::DrivenHo { .. } => "driven_ho",
            ModelSpec::RandomBanded { .. } => "random_banded",
        }
    }

    /// Replaces the seed of a random model; other variants are unchanged.
    pub fn with_seed(mut self, new_seed: u64) -> Self {
        if let ModelSpec::RandomBanded { seed, .. } = &mut self {
            *seed = new_seed;
        }
        self
    }

    pub fn build(&self) -> Result<Model> {
        match self {
            ModelSpec::Rabi { g, delta, omega, fock_dim } => build_rabi(*g, *delta, *omega, *fock_dim),
            ModelSpec::DrivenHo { omega, sine_coeffs, fock_dim } => build_driven_ho(*omega, sine_coeffs, *fock_dim),
            ModelSpec::RandomBanded { dim, bandwidth, num_modes, seed, amplitude, real } => {
                build_random_banded(*dim, *bandwidth, *num_modes, *seed, *amplitude, *real)
            }
        }
    }
}

/// A built model with the structure the checks need.
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub h: FourierOp,
    pub partition: BlockPartition,
    pub conjugation: Option<Conjugation>,
    /// Block bandwidth `K` of `H(t)` under `partition`.
    pub bandwidth: usize,
    /// Leading basis indices unaffected by truncation at the orders used.
    pub interior: usize,
    /// Low-energy test state for vector-norm scans.
    pub state: Option<DVector<C64>>,
}

fn check_fock_dim(fock_dim: usize) -> Result<()> {
    if fock_dim < MIN_FOCK_DIM {
        return Err(Error::InvalidArgument(format!(
            "fock_dim {fock_dim} below {MIN_FOCK_DIM}"
        )));
    }
    Ok(())
}

fn interior_levels(fock_dim: usize) -> usize {
    fock_dim - EDGE_MARGIN.min(fock_dim / 2)
}

fn check_finite(name: &str, x: f64) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::InvalidArgument(format!("{name} must be finite")));
    }
    Ok(())
}

/// Excitation ordering of spin⊗Fock states: `|down,0>`, then
/// `|down,i>, |up,i-1>` for `i = 1..fock_dim-1`, then `|up,fock_dim-1>`.
/// Block `i` holds the states with `i` excitations, so each block is an
/// eigenspace of `pi(sigma_z/2 + N)` and the blocks are contiguous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RabiBasis {
    pub fock_dim: usize,
}

impl RabiBasis {
    pub const LABEL: &'static str = "spin⊗fock/excitation";

    pub fn dim(&self) -> usize {
        2 * self.fock_dim
    }

    /// Basis index of `|up,n>` or `|down,n>`.
    pub fn index(&self, up: bool, n: usize) -> usize {
        assert!(n < self.fock_dim, "Fock level {n} out of range");
        match (up, n) {
            (false, 0) => 0,
            (false, n) => 2 * n - 1,
            (true, n) if n + 1 == self.fock_dim => 2 * n + 1,
            (true, n) => 2 * n + 2,
        }
    }

    /// Excitation-number blocks `1, 2, ..., 2, 1`.
    pub fn partition(&self) -> BlockPartition {
        let fd = self.fock_dim;
        let mut sizes = vec![1];
        sizes.extend(std::iter::repeat_n(2, fd - 1));
        sizes.push(1);
        let labels = (0..=fd)
            .map(|i| {
                let e = PI * (i as f64 - 0.5);
                (e, e)
            })
            .collect();
        BlockPartition::new(sizes)
            .and_then(|p| p.with_labels(labels))
            .expect("block sizes are positive and labelled")
    }

    /// Matrix of `s ⊗ f` with `s` a 2×2 spin matrix in the `(down, up)`
    /// basis and `f` a Fock-space matrix.
    pub fn kron(&self, s: [[f64; 2]; 2], f: &Mat) -> Mat {
        let d = self.dim();
        let mut out = Mat::zeros(d, d);
        for (a, row) in s.iter().enumerate() {
            for (b, &sv) in row.iter().enumerate() {
                if sv == 0.0 {
                    continue;
                }
                for m in 0..self.fock_dim {
                    for n in 0..self.fock_dim {
                        let fv = f[(m, n)];
                        if fv != C64::new(0.0, 0.0) {
                            out[(self.index(a == 1, m), self.index(b == 1, n))] += fv * sv;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Spin matrices in the `(down, up)` ordering.
pub mod spin {
    pub const PLUS: [[f64; 2]; 2] = [[0.0, 0.0], [1.0, 0.0]];
    pub const MINUS: [[f64; 2]; 2] = [[0.0, 1.0], [0.0, 0.0]];
    pub const Z: [[f64; 2]; 2] = [[-1.0, 0.0], [0.0, 1.0]];
    pub const DOWN: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 0.0]];
    pub const ID: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];
}

pub fn build_rabi(g: f64, delta: f64, omega: Option<f64>, fock_dim: usize) -> Result<Model> {
    check_fock_dim(fock_dim)?;
    check_finite("g", g)?;
    check_finite("delta", delta)?;
    if let Some(w) = omega {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::InvalidArgument("omega must be positive".into()));
        }
    }
    let basis = RabiBasis { fock_dim };
    let a = annihilation(fock_dim);
    let ad = a.adjoint();
    let id = Mat::identity(fock_dim, fock_dim);
    let gc = C64::new(g, 0.0);
    let h0 = (basis.kron(spin::MINUS, &ad) + basis.kron(spin::PLUS, &a)) * gc
        + basis.kron(spin::Z, &id) * C64::new(0.5 * delta, 0.0);
    let hp = basis.kron(spin::PLUS, &ad) * gc;
    let hm = basis.kron(spin::MINUS, &a) * gc;
    let label = RabiBasis::LABEL;
    let h = FourierOp::constant(Operator::from_mat(h0, label))
        .with_mode(1, Operator::from_mat(hp, label))?
        .with_mode(-1, Operator::from_mat(hm, label))?;
    let mut state = DVector::zeros(basis.dim());
    state[basis.index(false, 0)] = ONE;
    Ok(Model {
        spec: ModelSpec::Rabi { g, delta, omega, fock_dim },
        h,
        partition: basis.partition(),
        conjugation: Some(Conjugation::plain(basis.dim())),
        bandwidth: 2,
        interior: 2 * interior_levels(fock_dim),
        state: Some(state),
    })
}

pub fn build_driven_ho(omega: f64, sine_coeffs: &[f64], fock_dim: usize) -> Result<Model> {
    check_fock_dim(fock_dim)?;
    check_finite("omega", omega)?;
    for &c in sine_coeffs {
        check_finite("sine coefficient", c)?;
    }
    let a = annihilation(fock_dim);
    let x = &a + a.adjoint();
    let h0 = (number(fock_dim) + Mat::identity(fock_dim, fock_dim) * C64::new(0.5, 0.0))
        * C64::new(omega, 0.0);
    let mut h = FourierOp::constant(Operator::from_mat(h0, "fock"));
    for (k, &amp) in sine_coeffs.iter().enumerate() {
        if amp == 0.0 {
            continue;
        }
        let n = k as i32 + 1;
        // amp sin(2 pi n t) = -(i amp/2) e^{i 2 pi n t} + (i amp/2) e^{-i 2 pi n t}
        h.add_mode(n, Operator::from_mat(&x * C64::new(0.0, -0.5 * amp), "fock"))?;
        h.add_mode(-n, Operator::from_mat(&x * C64::new(0.0, 0.5 * amp), "fock"))?;
    }
    let signs: Vec<f64> = (0..fock_dim).map(|n| if n % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let mut state = DVector::zeros(fock_dim);
    state[0] = ONE;
    let labels = (0..fock_dim)
        .map(|n| {
            let e = omega * (n as f64 + 0.5);
            (e, e)
        })
        .collect();
    Ok(Model {
        spec: ModelSpec::DrivenHo {
            omega,
            sine_coeffs: sine_coeffs.to_vec(),
            fock_dim,
        },
        h,
        partition: BlockPartition::unit(fock_dim).with_labels(labels)?,
        conjugation: Some(Conjugation::signed(&signs)),
        bandwidth: 1,
        interior: interior_levels(fock_dim),
        state: Some(state),
    })
}

pub fn build_random_banded(
    dim: usize,
    bandwidth: usize,
    num_modes: usize,
    seed: u64,
    amplitude: f64,
    real: bool,
) -> Result<Model> {
    if dim == 0 || dim > MAX_RANDOM_DIM {
        return Err(Error::InvalidArgument(format!(
            "dim {dim} outside 1..={MAX_RANDOM_DIM}"
        )));
    }
    if !(amplitude > 0.0) || !amplitude.is_finite() {
        return Err(Error::InvalidArgument("amplitude must be positive".into()));
    }
    if num_modes > 64 {
        return Err(Error::InvalidArgument(format!("num_modes {num_modes} above 64")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut m = Mat::zeros(dim, dim);
        for i in 0..dim {
            for j in i.saturating_sub(bandwidth)..(i + bandwidth + 1).min(dim) {
                let re = rng.random_range(-amplitude..=amplitude);
                let im = rng.random_range(-amplitude..=amplitude);
                m[(i, j)] = C64::new(re, if real { 0.0 } else { im });
            }
        }
        m
    };
    let label = "random";
    let a0 = draw(&mut rng);
    let h0 = (&a0 + a0.adjoint()) * C64::new(0.5, 0.0);
    let mut h = FourierOp::constant(Operator::from_mat(h0, label));
    for n in 1..=num_modes as i32 {
        let m = draw(&mut rng);
        h.add_mode(-n, Operator::from_mat(m.adjoint(), label))?;
        h.add_mode(n, Operator::from_mat(m, label))?;
    }
    Ok(Model {
        spec: ModelSpec::RandomBanded {
            dim,
            bandwidth,
            num_modes,
            seed,
            amplitude,
            real,
        },
        h,
        partition: BlockPartition::unit(dim),
        conjugation: real.then(|| Conjugation::plain(dim)),
        bandwidth,
        interior: dim,
        state: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effective::heff_coefficients;
    use crate::operator::{bandwidth, conjugation_defect, hermiticity_defect};
    use crate::propagate::Method;

    fn rabi(g: f64, delta: f64, fd: usize) -> Model {
        build_rabi(g, delta, None, fd).unwrap()
    }

    #[test]
    fn rabi_basis_is_a_bijection() {
        let b = RabiBasis { fock_dim: 9 };
        let mut seen = vec![false; b.dim()];
        for up in [false, true] {
            for n in 0..9 {
                let k = b.index(up, n);
                assert!(!seen[k]);
                seen[k] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        assert_eq!(b.partition().dim(), b.dim());
        assert_eq!(b.index(false, 1), 1);
        assert_eq!(b.index(true, 0), 2);
        assert_eq!(b.index(true, 8), 17);
    }

    #[test]
    fn rabi_blocks_are_reference_eigenspaces() {
        // pi(sigma_z/2 + N) is constant on each excitation block.
        let b = RabiBasis { fock_dim: 10 };
        let h_ref = (b.kron(spin::Z, &Mat::identity(10, 10)) * C64::new(0.5, 0.0)
            + b.kron(spin::ID, &number(10)))
            * C64::new(PI, 0.0);
        let labels = b.partition().labels.unwrap();
        let mut k = 0;
        for (size, (lo, _)) in b.partition().block_sizes.iter().zip(labels) {
            for _ in 0..*size {
                assert!((h_ref[(k, k)].re - lo).abs() < 1e-12);
                k += 1;
            }
        }
        assert!((h_ref.clone() - Mat::from_diagonal(&h_ref.diagonal())).norm() == 0.0);
    }

    #[test]
    fn rabi_without_coupling_has_no_corrections() {
        let m = rabi(0.0, 0.8, 8);
        assert_eq!(m.h.modes().filter(|(_, op)| op.frobenius_norm() > 0.0).count(), 1);
        let heff = heff_coefficients(&m.h, 2).unwrap();
        assert!(heff.coeffs[1..].iter().all(|c| c.frobenius_norm() == 0.0));
    }

    #[test]
    fn rabi_average_is_jaynes_cummings() {
        let m = rabi(0.7, 0.0, 10);
        let b = RabiBasis { fock_dim: 10 };
        let a = annihilation(10);
        let jc = (b.kron(spin::MINUS, &a.adjoint()) + b.kron(spin::PLUS, &a)) * C64::new(0.7, 0.0);
        assert_eq!(m.h.mode(0).unwrap().matrix(), &jc);
        // JC conserves excitations: block diagonal.
        assert_eq!(bandwidth(m.h.mode(0).unwrap(), &m.partition).unwrap(), 0);
    }

    #[test]
    fn rabi_coupling_bandwidth_is_two() {
        let m = rabi(1.0, 0.3, 12);
        for (_, op) in m.h.modes() {
            assert!(bandwidth(op, &m.partition).unwrap() <= 2);
        }
        assert_eq!(bandwidth(m.h.mode(1).unwrap(), &m.partition).unwrap(), 2);
    }

    #[test]
    fn rabi_first_order_is_bloch_siegert() {
        // T H^[1] = (g^2/2 omega)(sigma_z N - sigma_- sigma_+ - sigma_z (a^2 + a^+2))
        // with omega = pi/T.
        let (g, fd) = (0.8, 14);
        let m = rabi(g, 0.0, fd);
        let b = RabiBasis { fock_dim: fd };
        let a = annihilation(fd);
        let a2 = &a * &a;
        let want = (b.kron(spin::Z, &number(fd)) - b.kron(spin::DOWN, &Mat::identity(fd, fd))
            - b.kron(spin::Z, &(&a2 + a2.adjoint())))
            * C64::new(g * g / (2.0 * PI), 0.0);
        let heff = heff_coefficients(&m.h, 1).unwrap();
        let n = m.interior;
        let d = (heff.coeffs[1].leading_block(n).matrix() - want.view((0, 0), (n, n))).norm();
        assert!(d < 1e-12, "{d}");
    }

    #[test]
    fn rabi_self_convergence() {
        // CF4 differences shrink by 2^4 per doubling; 1e-10 needs 256 vs
        // 512 steps per period at T = 0.1.
        let m = rabi(1.0, 0.0, 16);
        let u = |n| {
            let mat = crate::propagate::fixed_steps(&m.h, 0.1, 0.0, 0.1, n, Method::Cf4).unwrap();
            Operator::from_mat(mat, RabiBasis::LABEL)
        };
        let (u32_, u64_, u128_) = (u(32), u(64), u(128));
        let d1 = u32_.sub(&u64_).unwrap().frobenius_norm();
        let d2 = u64_.sub(&u128_).unwrap().frobenius_norm();
        assert!(((d1 / d2).log2() - 4.0).abs() < 0.2);
        assert!(u(256).sub(&u(512)).unwrap().frobenius_norm() <= 1e-10);
    }

    #[test]
    fn driven_ho_modes() {
        let m = build_driven_ho(1.0, &[1.0], 10).unwrap();
        let keys: Vec<i32> = m.h.modes().map(|(n, _)| n).collect();
        assert_eq!(keys, vec![-1, 0, 1]);
        let a = annihilation(10);
        let x = &a + a.adjoint();
        assert_eq!(m.h.mode(1).unwrap().matrix(), &(&x * C64::new(0.0, -0.5)));
        assert_eq!(m.h.mode(-1).unwrap().matrix(), &(&x * C64::new(0.0, 0.5)));
        let avg = number(10) + Mat::identity(10, 10) * C64::new(0.5, 0.0);
        assert_eq!(m.h.mode(0).unwrap().matrix(), &avg);
        // f(0.25) = 1
        let want = &avg + &x;
        assert!((m.h.eval(0.25).into_matrix() - want).norm() < 1e-14);
    }

    #[test]
    fn undriven_oscillator_is_autonomous() {
        let m = build_driven_ho(1.3, &[0.0, 0.0], 8).unwrap();
        assert_eq!(m.h.max_mode(), 0);
        let heff = heff_coefficients(&m.h, 3).unwrap();
        assert!(heff.coeffs[1..].iter().all(|c| c.frobenius_norm() == 0.0));
    }

    #[test]
    fn fock_dim_lower_bound() {
        assert!(build_driven_ho(1.0, &[1.0], 7).is_err());
        assert!(build_rabi(1.0, 0.0, None, 4).is_err());
        assert!(build_random_banded(65, 1, 1, 0, 1.0, false).is_err());
    }

    #[test]
    fn random_banded_constant_case() {
        let m = build_random_banded(6, 0, 0, 3, 1.0, false).unwrap();
        assert_eq!(m.h.max_mode(), 0);
        let h0 = m.h.mode(0).unwrap();
        assert_eq!(hermiticity_defect(h0), 0.0);
        assert_eq!(bandwidth(h0, &m.partition).unwrap(), 0);
    }

    #[test]
    fn random_banded_is_deterministic() {
        let spec = ModelSpec::RandomBanded {
            dim: 8,
            bandwidth: 2,
            num_modes: 2,
            seed: 42,
            amplitude: 1.0,
            real: false,
        };
        let a = serde_json::to_string(&spec.build().unwrap().h).unwrap();
        let b = serde_json::to_string(&spec.build().unwrap().h).unwrap();
        assert_eq!(a, b);
        let c = serde_json::to_string(&spec.clone().with_seed(43).build().unwrap().h).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn all_models_are_hermitian() {
        let models = [
            rabi(1.0, 0.4, 8),
            build_driven_ho(0.9, &[1.0, -0.3], 8).unwrap(),
            build_random_banded(8, 2, 3, 42, 1.0, false).unwrap(),
        ];
        for m in &models {
            assert!(m.h.hermitian_flag());
            assert!(hermiticity_defect(&m.h.eval(0.37)) <= 1e-13);
            for (_, op) in m.h.modes() {
                assert!(bandwidth(op, &m.partition).unwrap() <= m.bandwidth);
            }
        }
    }

    #[test]
    fn conjugation_compatibility() {
        let models = [
            rabi(1.0, 0.0, 8),
            rabi(1.0, 0.5, 8),
            build_driven_ho(1.0, &[1.0, 0.5], 8).unwrap(),
            build_random_banded(8, 1, 2, 7, 1.0, true).unwrap(),
        ];
        for m in &models {
            let j = m.conjugation.as_ref().unwrap();
            for (_, op) in m.h.modes() {
                assert!(conjugation_defect(op, j).unwrap() <= 1e-14);
            }
            // equivalently J H(t) J = H(-t)
            let lhs = j.sandwich(m.h.eval(0.3).matrix());
            assert!((lhs - m.h.eval(-0.3).into_matrix()).norm() <= 1e-14);
        }
        assert!(build_random_banded(8, 1, 2, 7, 1.0, false).unwrap().conjugation.is_none());
    }

    #[test]
    fn model_spec_serde_roundtrip() {
        let s: ModelSpec = toml::from_str("variant = \"rabi\"\ng = 1.0\n").unwrap();
        assert_eq!(
            s,
            ModelSpec::Rabi {
                g: 1.0,
                delta: 0.0,
                omega: None,
                fock_dim: 24
            }
        );
        let j: ModelSpec = serde_json::from_str(
            r#"{"variant":"driven_ho","omega":1.0,"sine_coeffs":[1.0],"fock_dim":40}"#,
        )
        .unwrap();
        assert_eq!(j.name(), "driven_ho");
        assert!(serde_json::from_str::<ModelSpec>(r#"{"variant":"rabi","g":1,"bogus":2}"#).is_err());
    }
}
