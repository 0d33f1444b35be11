//! Batch front-end: `floquet-forge <heff|fm|compare|scan|check>`.
//!
//! Exit codes are a stable contract: 0 pass, 1 check failure, 2 config
//! error, 3 computation error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::effective::{heff_coefficients, MAX_EFF_ORDER};
use crate::error::Error;
use crate::magnus::{fm_coefficients, EffectiveSeries};
use crate::models::{Model, ModelSpec};
use crate::propagate::PropagatorConfig;
use crate::verify::{
    apply_mutation, compare_series, geometric_grid, property_suite, Mutation, ScalingReport, ScanMode, Scanner,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "floquet-forge", version, about = "Effective Hamiltonians for time-periodic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config, or JSON when the extension is `.json`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `scan.mode`.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    /// Overrides the seed of a random model.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Recursive construction, written as JSON.
    Heff,
    /// Floquet-Magnus construction, written as JSON.
    Fm,
    /// Per-order distance between the two constructions.
    Compare,
    /// Error scaling scan against reference dynamics.
    Scan,
    /// Structural property suite.
    Check,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Strobo,
    Horizon,
    Oracle,
}

impl From<ModeArg> for ScanMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Strobo => ScanMode::Strobo,
            ModeArg::Horizon => ScanMode::Horizon,
            ModeArg::Oracle => ScanMode::Oracle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub mode: ScanMode,
    pub t_start: f64,
    pub t_factor: f64,
    pub t_count: usize,
    /// Periods per stroboscopic point.
    pub q: i64,
    /// Horizon constant `c` in `q(T) = ceil(c T^{-L-1})`.
    pub horizon_c: f64,
    pub plot: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            mode: ScanMode::Strobo,
            t_start: 0.2,
            t_factor: 0.5,
            t_count: 7,
            q: 1,
            horizon_c: 1.0,
            plot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub threshold: f64,
    /// Negates the highest correction of the recursive series first.
    pub corrupt_sign: bool,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-9,
            corrupt_sign: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub inject_hermiticity_violation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub order: usize,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub check: CheckConfig,
}

impl RunConfig {
    /// TOML unless the extension is `.json`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, String> {
        let cfg: RunConfig = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(text).map_err(|e| e.to_string())?
        } else {
            toml::from_str(text).map_err(|e| e.to_string())?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.order > MAX_EFF_ORDER {
            return Err(format!("order {} exceeds {MAX_EFF_ORDER}", self.order));
        }
        let s = &self.scan;
        if s.t_count < 2 {
            return Err(format!("scan.t_count {} below 2", s.t_count));
        }
        if !(s.t_factor > 0.0 && s.t_factor < 1.0) {
            return Err(format!("scan.t_factor {} outside (0, 1)", s.t_factor));
        }
        if !(s.t_start > 0.0 && s.t_start.is_finite()) {
            return Err(format!("scan.t_start {} must be positive", s.t_start));
        }
        if s.q == 0 {
            return Err("scan.q must be nonzero".into());
        }
        if !(s.horizon_c > 0.0 && s.horizon_c.is_finite()) {
            return Err(format!("scan.horizon_c {} must be positive", s.horizon_c));
        }
        if !(self.compare.threshold > 0.0) {
            return Err(format!("compare.threshold {} must be positive", self.compare.threshold));
        }
        self.propagator.validate().map_err(|e| e.to_string())
    }
}

/// A failed run, already classified by exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn config_err(message: impl Into<String>) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message: message.into(),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: EXIT_COMPUTE,
            message: e.to_string(),
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: EXIT_COMPUTE,
        message: e.to_string(),
    })
}

/// Loads the config and applies the command-line overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli.config.as_ref().ok_or_else(|| config_err("--config is required"))?;
    let text = fs::read_to_string(path).map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text, path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    if let Some(seed) = cli.seed {
        cfg.model = cfg.model.with_seed(seed);
    }
    if let Some(mode) = cli.mode {
        cfg.scan.mode = mode.into();
    }
    Ok(cfg)
}

fn build_model(cfg: &RunConfig) -> Result<Model, Failure> {
    // Parameter errors in the model block are config errors.
    cfg.model.build().map_err(|e| config_err(format!("model: {e}")))
}

fn print_norms(series: &EffectiveSeries) {
    for (l, c) in series.coeffs.iter().enumerate() {
        println!("H^[{l}]  {:.6e}", c.frobenius_norm());
    }
}

fn cmd_series(cfg: &RunConfig, out: &Path, fm: bool) -> Result<i32, Failure> {
    let model = build_model(cfg)?;
    let (series, name) = if fm {
        (fm_coefficients(&model.h, cfg.order)?, "fm.json")
    } else {
        (heff_coefficients(&model.h, cfg.order)?, "heff.json")
    };
    let path = write_file(out, name, &to_json(&series)?)?;
    print_norms(&series);
    println!("wrote {}", path.display());
    Ok(EXIT_PASS)
}

fn cmd_compare(cfg: &RunConfig, out: &Path) -> Result<i32, Failure> {
    let model = build_model(cfg)?;
    let mut eff = heff_coefficients(&model.h, cfg.order)?;
    if cfg.compare.corrupt_sign {
        apply_mutation(&mut eff, Mutation::FlipSign);
    }
    let fm = fm_coefficients(&model.h, cfg.order)?;
    let dist = compare_series(&eff, &fm, Some(model.interior))?;
    let threshold = cfg.compare.threshold;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rows = vec![["model", "L", "l", "distance", "threshold", "pass"].map(String::from)];
    for (l, d) in dist.iter().enumerate() {
        rows.push([
            cfg.model.name().to_string(),
            cfg.order.to_string(),
            l.to_string(),
            format!("{d:e}"),
            format!("{threshold:e}"),
            (*d <= threshold).to_string(),
        ]);
    }
    for r in &rows {
        w.write_record(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let path = write_file(out, "compare.csv", &text)?;
    let passed = dist.iter().all(|d| *d <= threshold);
    for (l, d) in dist.iter().enumerate() {
        println!("l={l}  {d:.3e}  {}", if *d <= threshold { "pass" } else { "FAIL" });
    }
    println!("wrote {}", path.display());
    Ok(if passed { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

/// Runs one scan as configured. Shared by the CLI and the tests.
pub fn run_scan(cfg: &RunConfig) -> crate::Result<ScalingReport> {
    let model = cfg.model.build()?;
    let series = heff_coefficients(&model.h, cfg.order)?;
    let grid = geometric_grid(cfg.scan.t_start, cfg.scan.t_factor, cfg.scan.t_count);
    let state = model.state.clone();
    let scanner = Scanner::new(model, cfg.propagator)?;
    match cfg.scan.mode {
        ScanMode::Strobo => scanner.stroboscopic_scan(&series, &grid, cfg.scan.q, state.as_ref()),
        ScanMode::Horizon => scanner.long_horizon_scan(&series, &grid, cfg.scan.horizon_c, state.as_ref()),
        ScanMode::Oracle => scanner.monodromy_log_oracle(&series, &grid),
    }
}

fn mode_name(mode: ScanMode) -> &'static str {
    match mode {
        ScanMode::Strobo => "strobo",
        ScanMode::Horizon => "horizon",
        ScanMode::Oracle => "oracle",
    }
}

fn cmd_scan(cfg: &RunConfig, out: &Path) -> Result<i32, Failure> {
    build_model(cfg)?;
    let report = run_scan(cfg)?;
    let stem = format!("scan_{}", mode_name(report.mode));
    let csv_path = write_file(out, &format!("{stem}.csv"), &report.to_csv()?)?;
    write_file(out, &format!("{stem}.json"), &report.to_json()?)?;
    if cfg.scan.plot {
        write_file(out, &format!("{stem}.svg"), &svg_plot(&report))?;
    }
    for p in &report.points {
        println!(
            "T={:.4e}  q={}  error={:.3e}{}",
            p.period,
            p.q,
            p.error,
            if p.floored { "  (floor)" } else { "" }
        );
    }
    for d in &report.diagnostics {
        println!("note: {d}");
    }
    match report.fitted_slope {
        Some(s) => println!(
            "slope {s:.3} (target {} +- {})  {}",
            report.target_slope,
            report.window,
            if report.passed() { "pass" } else { "FAIL" }
        ),
        None => println!("slope NA: fewer than two points above the floor"),
    }
    if report.floor_flagged {
        println!(
            "FLOOR: {} of {} points at the numerical floor {:.1e}",
            report.points.len() - report.non_floored(),
            report.points.len(),
            report.floor
        );
    }
    println!("wrote {}", csv_path.display());
    Ok(if report.passed() { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn cmd_check(cfg: &RunConfig, out: &Path) -> Result<i32, Failure> {
    let model = build_model(cfg)?;
    let mutation = if cfg.check.inject_hermiticity_violation {
        Mutation::BreakHermiticity
    } else {
        Mutation::None
    };
    let report = property_suite(&model, cfg.order, mutation)?;
    print!("{}", report.table());
    let path = write_file(out, "check.json", &report.to_json()?)?;
    println!("{}", if report.passed { "all checks pass" } else { "checks FAILED" });
    println!("wrote {}", path.display());
    Ok(if report.passed { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

/// Caps the worker pool from `FF_THREADS`. Ignored if the pool exists.
fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("FF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| config_err(format!("FF_THREADS={v:?} is not a positive integer")))?;
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn run(cli: &Cli) -> Result<i32, Failure> {
    init_threads()?;
    let cfg = load_config(cli)?;
    match cli.command {
        Command::Heff => cmd_series(&cfg, &cli.out, false),
        Command::Fm => cmd_series(&cfg, &cli.out, true),
        Command::Compare => cmd_compare(&cfg, &cli.out),
        Command::Scan => cmd_scan(&cfg, &cli.out),
        Command::Check => cmd_check(&cfg, &cli.out),
    }
}

/// Parses `args` and runs; returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

const W: f64 = 640.0;
const H: f64 = 440.0;
const PAD: f64 = 60.0;

/// Log-log plot of a scan: points, fitted line and the target-slope guide
/// through the fit's centroid.
pub fn svg_plot(r: &ScalingReport) -> String {
    let pts: Vec<(f64, f64, bool)> = r
        .points
        .iter()
        .filter(|p| p.period > 0.0 && p.error > 0.0)
        .map(|p| (p.period.log10(), p.error.log10(), p.floored))
        .collect();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    if pts.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}">no data</text></svg>"#, W / 2.0, H / 2.0);
        return s;
    }
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, _) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = (x0.floor(), x1.ceil().max(x0.floor() + 1.0));
    let (y0, y1) = (y0.floor(), y1.ceil().max(y0.floor() + 1.0));
    let px = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let _ = writeln!(
        s,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for d in x0 as i32..=x1 as i32 {
        let x = px(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.1}" y1="{PAD}" x2="{x:.1}" y2="{:.1}" stroke="#ddd"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{d}</text>"##,
            H - PAD,
            H - PAD + 18.0
        );
    }
    for d in y0 as i32..=y1 as i32 {
        let y = py(d as f64);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#ddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            W - PAD,
            PAD - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">T</text>"#, W / 2.0, H - 14.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{} L={} error</text>"#,
        W / 2.0,
        PAD - 20.0,
        mode_name(r.mode),
        r.order
    );

    let segment = |s: &mut String, slope: f64, intercept: f64, style: &str| {
        let (ya, yb) = (intercept + slope * x0, intercept + slope * x1);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" {style}/>"#,
            px(x0),
            py(ya),
            px(x1),
            py(yb)
        );
    };
    let _ = writeln!(s, r#"<clipPath id="plot"><rect x="{PAD}" y="{PAD}" width="{}" height="{}"/></clipPath><g clip-path="url(#plot)">"#, W - 2.0 * PAD, H - 2.0 * PAD);
    if let (Some(m), Some(b)) = (r.fitted_slope, r.fitted_intercept) {
        segment(&mut s, m, b, r#"stroke="steelblue" stroke-width="1.5""#);
        let used: Vec<_> = pts.iter().filter(|p| !p.2).collect();
        let cx = used.iter().map(|p| p.0).sum::<f64>() / used.len() as f64;
        let cy = m * cx + b;
        segment(&mut s, r.target_slope, cy - r.target_slope * cx, r#"stroke="gray" stroke-dasharray="6 4""#);
    }
    let _ = writeln!(s, "</g>");
    for &(x, y, floored) in &pts {
        let fill = if floored { "white" } else { "black" };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="4" fill="{fill}" stroke="black"/>"#,
            px(x),
            py(y)
        );
    }
    let slope = r.fitted_slope.map(|m| format!("{m:.3}")).unwrap_or_else(|| "NA".into());
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">slope {slope}, target {}{}</text>"#,
        PAD + 8.0,
        PAD + 16.0,
        r.target_slope,
        if r.floor_flagged { ", floor reached" } else { "" }
    );
    s.push_str("</svg>\n");
    s
}
