//! Acceptance run: one PASS/FAIL line per criterion, with timings.
//!
//! Runs without the test harness so the lines always reach stdout.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use floquet_forge::effective::heff_coefficients;
use floquet_forge::magnus::fm_coefficients;
use floquet_forge::models::{build_driven_ho, build_rabi, spin, ModelSpec, RabiBasis};
use floquet_forge::operator::{annihilation, number, Mat, Operator, C64};
use floquet_forge::propagate::PropagatorConfig;
use floquet_forge::verify::{compare_series, geometric_grid, property_suite, Mutation, ScalingReport, Scanner};

struct Outcome {
    id: usize,
    passed: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

impl Outcome {
    fn ok(&self) -> bool {
        self.passed && self.elapsed <= self.budget
    }

    fn line(&self) -> String {
        format!(
            "criterion {}: {}  {}  [{:.2?} of {:?}]",
            self.id,
            if self.ok() { "PASS" } else { "FAIL" },
            self.detail,
            self.elapsed,
            self.budget
        )
    }
}

/// Serialized artifacts of one run, compared byte for byte across runs.
type Artifacts = Vec<(String, String)>;

fn timed(id: usize, budget_s: u64, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (passed, detail) = f();
    Outcome {
        id,
        passed,
        detail,
        elapsed: start.elapsed(),
        budget: Duration::from_secs(budget_s),
    }
}

fn interior_diff(got: &Operator, want: &Mat, n: usize) -> f64 {
    (got.leading_block(n).matrix() - want.view((0, 0), (n, n))).norm()
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap()
}

fn dual_construction(out: &mut Artifacts) -> (bool, String) {
    let spec = ModelSpec::RandomBanded {
        dim: 16,
        bandwidth: 2,
        num_modes: 2,
        seed: 42,
        amplitude: 1.0,
        real: false,
    };
    let m = spec.build().unwrap();
    let eff = heff_coefficients(&m.h, 4).unwrap();
    let fm = fm_coefficients(&m.h, 4).unwrap();
    let d = compare_series(&eff, &fm, None).unwrap();
    let worst = d.iter().cloned().fold(0.0, f64::max);
    out.push(("c1 eff".into(), json(&eff)));
    out.push(("c1 fm".into(), json(&fm)));
    (worst <= 1e-10, format!("max relative distance {worst:.2e} <= 1e-10"))
}

fn oscillator_closed_forms(out: &mut Artifacts) -> (bool, String) {
    let m = build_driven_ho(1.0, &[1.0], 40).unwrap();
    let n = 32;
    assert!(m.interior >= n);
    let heff = heff_coefficients(&m.h, 3).unwrap();
    let a = annihilation(40);
    let p = (&a - a.adjoint()) * C64::new(0.0, 1.0);
    let want = [
        &p * C64::new(1.0 / (2.0 * PI), 0.0),
        Mat::identity(40, 40) * C64::new(3.0 / (8.0 * PI * PI), 0.0),
        &p * C64::new(1.0 / (8.0 * PI.powi(3)), 0.0),
    ];
    let errs: Vec<f64> = (1..=3).map(|l| interior_diff(&heff.coeffs[l], &want[l - 1], n)).collect();
    out.push(("c2 heff".into(), json(&heff)));
    (
        errs.iter().all(|e| *e <= 1e-9),
        format!("H^[1..3] errors {:.1e} {:.1e} {:.1e} <= 1e-9", errs[0], errs[1], errs[2]),
    )
}

fn rabi_closed_forms(out: &mut Artifacts) -> (bool, String) {
    let (g, fd) = (1.0, 40);
    let m = build_rabi(g, 0.0, None, fd).unwrap();
    let n = m.interior;
    let heff = heff_coefficients(&m.h, 1).unwrap();
    let b = RabiBasis { fock_dim: fd };
    let a = annihilation(fd);
    let a2 = &a * &a;
    let jc = (b.kron(spin::MINUS, &a.adjoint()) + b.kron(spin::PLUS, &a)) * C64::new(g, 0.0);
    // omega = pi/T, so T H^[1] carries g^2/(2 omega) = T g^2/(2 pi).
    let bs = (b.kron(spin::Z, &number(fd))
        - b.kron(spin::DOWN, &Mat::identity(fd, fd))
        - b.kron(spin::Z, &(&a2 + a2.adjoint())))
        * C64::new(g * g / (2.0 * PI), 0.0);
    let e0 = interior_diff(&heff.coeffs[0], &jc, n);
    let e1 = interior_diff(&heff.coeffs[1], &bs, n);
    out.push(("c3 heff".into(), json(&heff)));
    (
        e0 <= 1e-11 && e1 <= 1e-9,
        format!("H^[0] {e0:.1e} <= 1e-11, H^[1] {e1:.1e} <= 1e-9 on {n} interior states"),
    )
}

fn scan_artifacts(out: &mut Artifacts, tag: &str, r: &ScalingReport) {
    out.push((format!("{tag} csv"), r.to_csv().unwrap()));
    out.push((format!("{tag} json"), r.to_json().unwrap()));
}

fn slope_text(r: &ScalingReport) -> String {
    r.fitted_slope.map(|s| format!("{s:.3}")).unwrap_or_else(|| "NA".into())
}

fn stroboscopic_orders(out: &mut Artifacts) -> (bool, String) {
    let grid = geometric_grid(0.2, 0.5, 7);
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, m) in [
        ("ho", build_driven_ho(1.0, &[1.0], 24).unwrap()),
        ("rabi", build_rabi(1.0, 0.0, None, 24).unwrap()),
    ] {
        let heff = heff_coefficients(&m.h, 2).unwrap();
        let state = m.state.clone();
        let scanner = Scanner::new(m, PropagatorConfig::default()).unwrap();
        for l in 0..=2 {
            let r = scanner.stroboscopic_scan(&heff.truncated(l), &grid, 1, state.as_ref()).unwrap();
            ok &= r.passed() && r.fitted_slope.is_some() && r.non_floored() >= 4;
            parts.push(format!("{name} L={l} {} ({} pts)", slope_text(&r), r.non_floored()));
            scan_artifacts(out, &format!("c4 {name} L={l}"), &r);
        }
    }
    (ok, format!("slopes vs L+2 +- 0.4: {}", parts.join(", ")))
}

const HORIZON_GRID: [f64; 5] = [0.05, 0.07, 0.1, 0.14, 0.2];

fn horizon_scan(delta: f64) -> ScalingReport {
    let m = build_rabi(1.0, delta, None, 24).unwrap();
    let heff = heff_coefficients(&m.h, 1).unwrap();
    let state = m.state.clone();
    let scanner = Scanner::new(m, PropagatorConfig::default()).unwrap();
    scanner.long_horizon_scan(&heff, &HORIZON_GRID, 1.0, state.as_ref()).unwrap()
}

fn long_horizon(out: &mut Artifacts) -> (bool, String) {
    // Generic detuning. At delta = 0 the test state is annihilated by the
    // Jaynes-Cummings average and the O(T) bound is not attained; that run
    // is reported separately below.
    let r = horizon_scan(1.0);
    scan_artifacts(out, "c5", &r);
    (
        r.passed() && r.fitted_slope.is_some(),
        format!("delta=1 slope {} vs 1 +- 0.5 (q = ceil(T^-2))", slope_text(&r)),
    )
}

fn oracle(out: &mut Artifacts) -> (bool, String) {
    let spec = ModelSpec::RandomBanded {
        dim: 8,
        bandwidth: 1,
        num_modes: 2,
        seed: 42,
        amplitude: 1.0,
        real: false,
    };
    let m = spec.build().unwrap();
    let fm = fm_coefficients(&m.h, 2).unwrap();
    let scanner = Scanner::new(m, PropagatorConfig::default()).unwrap();
    let grid = geometric_grid(0.2, 0.5, 7);
    let mut ok = true;
    let mut parts = Vec::new();
    for l in 0..=2 {
        let r = scanner.monodromy_log_oracle(&fm.truncated(l), &grid).unwrap();
        ok &= r.passed() && r.fitted_slope.is_some();
        parts.push(format!("L={l} {}", slope_text(&r)));
        scan_artifacts(out, &format!("c6 L={l}"), &r);
    }
    (ok, format!("slopes vs L+1 +- 0.4: {}", parts.join(", ")))
}

fn property_suites(out: &mut Artifacts) -> (bool, String) {
    let specs = [
        ModelSpec::Rabi {
            g: 1.0,
            delta: 0.0,
            omega: None,
            fock_dim: 24,
        },
        ModelSpec::DrivenHo {
            omega: 1.0,
            sine_coeffs: vec![1.0],
            fock_dim: 24,
        },
        ModelSpec::RandomBanded {
            dim: 16,
            bandwidth: 2,
            num_modes: 2,
            seed: 42,
            amplitude: 1.0,
            real: true,
        },
    ];
    let mut failed = Vec::new();
    let mut count = 0;
    for spec in &specs {
        let m = spec.build().unwrap();
        for l in 0..=3 {
            let r = property_suite(&m, l, Mutation::None).unwrap();
            count += r.checks.len();
            failed.extend(r.checks.iter().filter(|c| !c.passed).map(|c| format!("{} L={l} {}", spec.name(), c.name)));
            out.push((format!("c7 {} L={l}", spec.name()), r.to_json().unwrap()));
        }
    }
    (
        failed.is_empty(),
        if failed.is_empty() {
            format!("{count} checks over 3 models, L = 0..3")
        } else {
            format!("failed: {}", failed.join("; "))
        },
    )
}

fn run_all(out: &mut Artifacts) -> Vec<Outcome> {
    vec![
        timed(1, 5, || dual_construction(out)),
        timed(2, 10, || oscillator_closed_forms(out)),
        timed(3, 10, || rabi_closed_forms(out)),
        timed(4, 300, || stroboscopic_orders(out)),
        timed(5, 300, || long_horizon(out)),
        timed(6, 120, || oracle(out)),
        timed(7, 60, || property_suites(out)),
    ]
}

fn main() {
    let mut first = Artifacts::new();
    let mut outcomes = run_all(&mut first);

    let mut second = Artifacts::new();
    let start = Instant::now();
    run_all(&mut second);
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a != b)
        .map(|(a, _)| a.0.as_str())
        .collect();
    let same = first.len() == second.len() && differing.is_empty();
    outcomes.push(Outcome {
        id: 8,
        passed: same,
        detail: if same {
            format!("{} CSV/JSON artifacts byte-identical across two runs", first.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
        elapsed: start.elapsed(),
        budget: Duration::from_secs(600),
    });

    for o in &outcomes {
        println!("{}", o.line());
    }
    let zero = horizon_scan(0.0);
    println!(
        "info: long horizon at delta=0 gives slope {} (faster than the O(T) bound)",
        slope_text(&zero)
    );

    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.ok()).map(|o| o.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all {} criteria pass", outcomes.len());
}
