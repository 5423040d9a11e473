//! Run configuration, subcommand dispatch and result emission for the
//! `swapmech` binary.
//!
//! Configs are TOML. `units` is mandatory and applies to every frequency in
//! the document; `hertz` values are multiplied by 2π on load, so a parsed
//! [`RunConfig`] always holds angular frequencies. Unknown keys are rejected.
//!
//! CSV output uses fixed column orders, LF line endings and `{:.16e}` for
//! every float (17 significant digits):
//!
//! | subcommand           | columns                                                           |
//! |----------------------|-------------------------------------------------------------------|
//! | `gate-time`          | `n,s,lambda_prime,t,t_seconds`                                    |
//! | `simulate-effective` | `tau,re_b1,im_b1,re_b2,im_b2,p_g1f2,p_f1g2`                       |
//! | `simulate-full`      | `tau,t,p_g1f2,p_f1g2,p_<basis label>...,photon_number`            |
//! | `sweep`              | `value,lambda_prime,t,fidelity`                                   |
//! | `compare`            | `label,max_abs_deviation`                                         |
//!
//! `feasibility` prints a flat `key = value` table to stdout; its primary
//! artifact is the report as JSON.

use std::{
    f64::consts::TAU,
    fs,
    io::Write,
    path::{ Path, PathBuf },
};
use clap::{ Parser, Subcommand };
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{ Deserialize, Serialize };
use thiserror::Error;
use crate::{
    dynamics::{
        self, atom_cavity_observables, full_model_simulate, integrate_effective_damped,
        integrate_tdse, solve_effective_closed_form, uniform_grid, IntegratorConfig,
        PopulationSeries, TrajectoryRecord,
    },
    error::SwapError,
    gate::{ self, enumerate_swap_times, swap_time, FeasibilityReport },
    model::{
        atom_product_state, build_hamiltonian, AtomicLevels, CouplingOrder,
        OscillatorMode, Stage, SystemParams, LEVEL_F, LEVEL_G,
    },
    reduction::coefficients,
};

/// Environment variable holding the sweep worker count.
pub const THREADS_ENV: &str = "SWAPMECH_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("unknown config key(s): {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("{path}: {message}")]
    Io { path: String, message: String },

    #[error("numerical failure: {0}")]
    Numerical(SwapError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => 3,
            _ => 2,
        }
    }

    fn key(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Config { key: key.into(), reason: reason.into() }
    }

    fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        Self::Io { path: path.display().to_string(), message: err.to_string() }
    }
}

/// Attach `section` to the key of a parameter error; numerical errors pass
/// through.
fn lift(section: &str) -> impl Fn(SwapError) -> CliError + '_ {
    move |e| match e {
        e if e.is_numerical() => CliError::Numerical(e),
        SwapError::InvalidParameter { key, reason } => CliError::key(format!("{section}.{key}"), reason),
        other => CliError::key(section, other.to_string()),
    }
}

/* config document ***********************************************************/

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    Angular,
    Hertz,
}

/// A real number or `{ re = .., im = .. }`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ComplexValue {
    Real(f64),
    Parts { re: f64, im: f64 },
}

impl ComplexValue {
    pub fn value(self) -> C64 {
        match self {
            Self::Real(re) => C64::new(re, 0.0),
            Self::Parts { re, im } => C64::new(re, im),
        }
    }

    fn scaled(self, k: f64) -> Self {
        match self {
            Self::Real(re) => Self::Real(re * k),
            Self::Parts { re, im } => Self::Parts { re: re * k, im: im * k },
        }
    }
}

/// Physical parameters. `g` sets both atom-cavity couplings; `xi` sets
/// `delta1 = delta2 = delta - xi`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<ComplexValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<ComplexValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g1: Option<ComplexValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g2: Option<ComplexValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gprime: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity_cutoff: Option<usize>,
    /// Fock cutoff of a quantum oscillator; classical when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillator_cutoff: Option<usize>,
    /// Oscillator mass in kg.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_eg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_fg: Option<f64>,
}

fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::key(format!("params.{key}"), "required"))
}

impl ParamsSection {
    fn to_angular(&mut self) {
        for c in [&mut self.omega, &mut self.g, &mut self.g1, &mut self.g2] {
            *c = c.map(|v| v.scaled(TAU));
        }
        for r in [
            &mut self.delta, &mut self.delta1, &mut self.delta2, &mut self.xi,
            &mut self.gprime, &mut self.omega_m, &mut self.epsilon, &mut self.gamma,
            &mut self.omega_eg, &mut self.omega_fg,
        ] {
            *r = r.map(|v| v * TAU);
        }
    }

    pub fn order(&self) -> Result<CouplingOrder, CliError> {
        CouplingOrder::from_exponent(required(self.n, "n")?).map_err(lift("params"))
    }

    /// Build and validate [`SystemParams`].
    pub fn resolve(&self) -> Result<SystemParams, CliError> {
        let (g1, g2) = match (self.g, self.g1, self.g2) {
            (Some(g), None, None) => (g.value(), g.value()),
            (None, Some(a), Some(b)) => (a.value(), b.value()),
            (Some(_), _, _) => return Err(CliError::key("params.g", "conflicts with g1/g2")),
            (None, _, _) => return Err(CliError::key("params.g", "required (or both g1 and g2)")),
        };
        let delta = required(self.delta, "delta")?;
        let (delta1, delta2) = match (self.xi, self.delta1, self.delta2) {
            (Some(xi), None, None) => (delta - xi, delta - xi),
            (None, Some(a), Some(b)) => (a, b),
            (Some(_), _, _) => return Err(CliError::key("params.xi", "conflicts with delta1/delta2")),
            (None, _, _) => return Err(CliError::key("params.xi", "required (or both delta1 and delta2)")),
        };
        let atomic_levels = match (self.omega_eg, self.omega_fg) {
            (Some(omega_eg), Some(omega_fg)) => Some(AtomicLevels { omega_eg, omega_fg }),
            (None, None) => None,
            _ => return Err(CliError::key("params.omega_eg", "omega_eg and omega_fg go together")),
        };
        let base = SystemParams::default();
        let p = SystemParams {
            omega: required(self.omega, "omega")?.value(),
            g1,
            g2,
            delta,
            delta1,
            delta2,
            gprime: required(self.gprime, "gprime")?,
            order: self.order()?,
            omega_m: required(self.omega_m, "omega_m")?,
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            x0: self.x0.unwrap_or(base.x0),
            gamma: self.gamma.unwrap_or(base.gamma),
            cavity_cutoff: self.cavity_cutoff.unwrap_or(base.cavity_cutoff),
            oscillator: match self.oscillator_cutoff {
                Some(cutoff) => OscillatorMode::Quantum { cutoff },
                None => OscillatorMode::Classical,
            },
            mass: self.mass,
            atomic_levels,
        };
        p.validate().map_err(lift("params"))?;
        Ok(p)
    }
}

fn default_s_max() -> u32 { 2 }

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateSection {
    /// Coupling order; falls back to `params.n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    /// Given directly, or derived from `params` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
    #[serde(default = "default_s_max")]
    pub s_max: u32,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EffectiveMethod {
    ClosedForm,
    Ode,
}

fn default_samples() -> usize { 200 }
fn default_steps() -> usize { IntegratorConfig::default().steps_per_fastest_period }
fn default_drift() -> f64 { IntegratorConfig::default().max_norm_drift }
fn default_cutoff_tol() -> f64 { IntegratorConfig::default().cutoff_tolerance }
fn default_initial() -> String { "g1f2".into() }
fn default_method() -> EffectiveMethod { EffectiveMethod::ClosedForm }
fn default_stage() -> String { Stage::H2.name().into() }

/// Time span is in units of 1/ω_m.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationSection {
    #[serde(default)]
    pub tau_start: f64,
    pub tau_end: f64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_steps")]
    pub steps_per_fastest_period: usize,
    #[serde(default = "default_drift")]
    pub max_norm_drift: f64,
    #[serde(default = "default_cutoff_tol")]
    pub cutoff_tolerance: f64,
    /// `g1f2` or `f1g2`.
    #[serde(default = "default_initial")]
    pub initial: String,
    /// Effective-model solver.
    #[serde(default = "default_method")]
    pub method: EffectiveMethod,
    /// Full-model stage: `cm`, `h1`, `h2` or `h3`.
    #[serde(default = "default_stage")]
    pub stage: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_prime: Option<f64>,
}

impl SimulationSection {
    pub fn integrator(&self) -> IntegratorConfig {
        IntegratorConfig {
            steps_per_fastest_period: self.steps_per_fastest_period,
            sample_stride: 1,
            samples: Some(self.samples),
            max_norm_drift: self.max_norm_drift,
            cutoff_tolerance: self.cutoff_tolerance,
        }
    }

    fn initial_levels(&self) -> Result<(usize, usize), CliError> {
        match self.initial.as_str() {
            "g1f2" => Ok((LEVEL_G, LEVEL_F)),
            "f1g2" => Ok((LEVEL_F, LEVEL_G)),
            other => Err(CliError::key("simulation.initial", format!("expected g1f2 or f1g2, got `{other}`"))),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

/// Parameters a sweep may vary.
pub const SWEEP_PARAMETERS: [&str; 8] =
    ["lambda_prime", "omega", "g", "delta", "xi", "gprime", "omega_m", "x0"];
const FREQUENCY_SWEEPS: [&str; 6] = ["omega", "g", "delta", "xi", "gprime", "omega_m"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    pub parameter: String,
    /// Linear grid including both ends.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Explicit grid; exclusive with `grid`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<i64>,
    #[serde(default)]
    pub s: u32,
}

impl SweepSection {
    pub fn points(&self) -> Vec<f64> {
        match (&self.grid, &self.values) {
            (Some(g), _) => (0..g.points)
                .map(|k| {
                    if k + 1 == g.points { g.stop }
                    else { g.start + (g.stop - g.start) * k as f64 / (g.points - 1) as f64 }
                })
                .collect(),
            (None, Some(v)) => v.clone(),
            (None, None) => Vec::new(),
        }
    }
}

/// Two CSV trajectories with a `tau` column and `p_*` population columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareSection {
    pub a: PathBuf,
    pub b: PathBuf,
    /// Population labels without the `p_` prefix; all shared when empty.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    /// Primary artifact; stdout when absent. `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub units: Units,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ParamsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<GateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |k| k + 1) + 1;
    (line, column)
}

/// Dotted key path without the `?` markers serde_ignored adds for options.
fn key_path(p: &serde_ignored::Path) -> String {
    p.to_string().split('.').filter(|s| *s != "?").collect::<Vec<_>>().join(".")
}

/// Parse without rejecting unknown keys; the ignored key paths are returned
/// alongside.
pub fn parse_config_lenient(text: &str) -> Result<(RunConfig, Vec<String>), CliError> {
    let mut ignored = Vec::new();
    let de = toml::Deserializer::new(text);
    let mut cfg: RunConfig = serde_ignored::deserialize(de, |p| ignored.push(key_path(&p)))
        .map_err(|e: toml::de::Error| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            CliError::Parse { line, column, message: e.message().to_string() }
        })?;
    if cfg.units == Units::Hertz {
        if let Some(p) = cfg.params.as_mut() {
            p.to_angular();
        }
        if let Some(sw) = cfg.sweep.as_mut() {
            if FREQUENCY_SWEEPS.contains(&sw.parameter.as_str()) {
                if let Some(g) = sw.grid.as_mut() {
                    g.start *= TAU;
                    g.stop *= TAU;
                }
                if let Some(v) = sw.values.as_mut() {
                    v.iter_mut().for_each(|x| *x *= TAU);
                }
            }
        }
        cfg.units = Units::Angular;
    }
    cfg.validate()?;
    Ok((cfg, ignored))
}

/// Parse and validate a TOML config, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let (cfg, ignored) = parse_config_lenient(text)?;
    if !ignored.is_empty() {
        return Err(CliError::UnknownKeys(ignored));
    }
    Ok(cfg)
}

impl RunConfig {
    /// Normalized TOML: angular units, defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let Some(p) = &self.params {
            p.resolve()?;
        }
        if let Some(g) = &self.gate {
            if let Some(n) = g.n {
                CouplingOrder::from_exponent(n).map_err(lift("gate"))?;
            }
            if let Some(lp) = g.lambda_prime {
                if !(lp.is_finite() && lp > 0.0) {
                    return Err(CliError::key("gate.lambda_prime", "must be finite and > 0"));
                }
            }
        }
        if let Some(s) = &self.simulation {
            if !(s.tau_start.is_finite() && s.tau_end.is_finite() && s.tau_end > s.tau_start) {
                return Err(CliError::key("simulation.tau_end", "need finite tau_start < tau_end"));
            }
            s.integrator().validate().map_err(lift("simulation"))?;
            s.initial_levels()?;
            let stage: Stage = s.stage.parse().map_err(|_| {
                CliError::key("simulation.stage", format!("unknown stage `{}`", s.stage))
            })?;
            if !matches!(stage, Stage::Cm | Stage::H1 | Stage::H2 | Stage::H3) {
                return Err(CliError::key("simulation.stage", "full-model runs support cm, h1, h2, h3"));
            }
            if let Some(n) = s.n {
                CouplingOrder::from_exponent(n).map_err(lift("simulation"))?;
            }
            if let Some(lp) = s.lambda_prime {
                if !(lp.is_finite() && lp >= 0.0) {
                    return Err(CliError::key("simulation.lambda_prime", "must be finite and >= 0"));
                }
            }
        }
        if let Some(sw) = &self.sweep {
            if !SWEEP_PARAMETERS.contains(&sw.parameter.as_str()) {
                return Err(CliError::key(
                    "sweep.parameter",
                    format!("expected one of {}", SWEEP_PARAMETERS.join(", ")),
                ));
            }
            match (&sw.grid, &sw.values) {
                (Some(_), Some(_)) => return Err(CliError::key("sweep.values", "conflicts with sweep.grid")),
                (None, None) => return Err(CliError::key("sweep.grid", "required (or sweep.values)")),
                (Some(g), None) if g.points < 2 => return Err(CliError::key("sweep.grid.points", "must be >= 2")),
                (None, Some(v)) if v.is_empty() => return Err(CliError::key("sweep.values", "must not be empty")),
                _ => {}
            }
            if sw.points().iter().any(|x| !x.is_finite()) {
                return Err(CliError::key("sweep.grid", "values must be finite"));
            }
            if let Some(n) = sw.n {
                CouplingOrder::from_exponent(n).map_err(lift("sweep"))?;
            }
            if sw.parameter != "lambda_prime" && self.params.is_none() {
                return Err(CliError::key("params", format!("required to sweep `{}`", sw.parameter)));
            }
        }
        Ok(())
    }

    fn params(&self) -> Result<SystemParams, CliError> {
        self.params.as_ref()
            .ok_or_else(|| CliError::key("params", "required by this subcommand"))?
            .resolve()
    }

    /// Coupling order from `section.n`, else `params.n`.
    fn order(&self, local: Option<i64>, section: &str) -> Result<CouplingOrder, CliError> {
        match (local, &self.params) {
            (Some(n), _) => CouplingOrder::from_exponent(n).map_err(lift(section)),
            (None, Some(p)) => p.order(),
            (None, None) => Err(CliError::key(format!("{section}.n"), "required when params are absent")),
        }
    }

    /// `λ′` from `section.lambda_prime`, else derived from `params`.
    fn lambda_prime(&self, local: Option<f64>, section: &str) -> Result<f64, CliError> {
        match local {
            Some(lp) => Ok(lp),
            None if self.params.is_some() => Ok(coefficients(&self.params()?).map_err(lift("params"))?.lambda_prime),
            None => Err(CliError::key(format!("{section}.lambda_prime"), "required when params are absent")),
        }
    }

    fn simulation(&self) -> Result<&SimulationSection, CliError> {
        self.simulation.as_ref().ok_or_else(|| CliError::key("simulation", "required by this subcommand"))
    }
}

/* subcommands ***************************************************************/

#[derive(Copy, Clone, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Coupling strengths, gate times and feasibility ratios.
    Feasibility,
    /// Swap times over branches s = 0..=s_max.
    GateTime,
    /// Effective two-level exchange dynamics.
    SimulateEffective,
    /// Atom-cavity dynamics with a classical oscillator drive.
    SimulateFull,
    /// One gate summary per grid point.
    Sweep,
    /// Maximum population deviation between two trajectory files.
    Compare,
}

#[derive(Debug, Parser)]
#[command(name = "swapmech", version, about = "Oscillator-mediated two-atom SWAP gate tools")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output path for the primary artifact (overrides `output.path`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Reject unknown config keys (the default).
    #[arg(long, global = true)]
    pub strict: bool,
}

/// In-memory results of one subcommand.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Artifacts {
    /// CSV text, or the JSON report for `feasibility`.
    pub primary: String,
    /// Human-readable summary, always written to stdout.
    pub table: Option<String>,
    /// Diagnostics for stderr.
    pub notes: Vec<String>,
}

fn fmt_f(x: f64) -> String { format!("{x:.16e}") }

fn csv_text(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn strings(xs: &[&str]) -> Vec<String> { xs.iter().map(|s| s.to_string()).collect() }

/// Execute `cmd`; relative paths in the config resolve against `base`.
pub fn run_subcommand(cmd: Command, cfg: &RunConfig, base: &Path) -> Result<Artifacts, CliError> {
    match cmd {
        Command::Feasibility => run_feasibility(cfg),
        Command::GateTime => run_gate_time(cfg),
        Command::SimulateEffective => run_effective(cfg),
        Command::SimulateFull => run_full(cfg),
        Command::Sweep => run_sweep(cfg),
        Command::Compare => run_compare(cfg, base),
    }
}

/// Flat `key = value` lines for a feasibility report.
pub fn feasibility_table(r: &FeasibilityReport) -> String {
    let mut lines = vec![
        format!("n = {}", r.n),
        format!("x_zpf_m = {}", fmt_f(r.x_zpf)),
        format!("t_q_kelvin = {}", fmt_f(r.t_q)),
        format!("lambda = {}", fmt_f(r.lambda)),
        format!("lambda_prime = {}", fmt_f(r.lambda_prime)),
        format!("lambda_per_gprime = {}", fmt_f(r.lambda_per_gprime)),
    ];
    for g in &r.gate_times {
        lines.push(format!("gate_time.s{}.t = {}", g.s, fmt_f(g.t)));
        if let Some(ts) = g.t_seconds {
            lines.push(format!("gate_time.s{}.t_seconds = {}", g.s, fmt_f(ts)));
        }
    }
    lines.push(format!(
        "decay_margin_ratio = {}",
        r.decay_margin_ratio.map_or("none".to_string(), fmt_f)
    ));
    for c in &r.hierarchy.checks {
        lines.push(format!("hierarchy.{}.ratio = {}", c.name, fmt_f(c.ratio)));
        lines.push(format!("hierarchy.{}.flag = {}", c.name, c.flag));
    }
    lines.push(format!("hierarchy.overall = {}", r.hierarchy.overall()));
    lines.join("\n") + "\n"
}

fn run_feasibility(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let params = cfg.params()?;
    let s_max = cfg.gate.as_ref().map_or(default_s_max(), |g| g.s_max);
    let report = gate::feasibility_with(&params, s_max).map_err(lift("params"))?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    Ok(Artifacts { primary: json, table: Some(feasibility_table(&report)), notes: Vec::new() })
}

fn run_gate_time(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let gate = cfg.gate.as_ref();
    let order = cfg.order(gate.and_then(|g| g.n), "gate")?;
    let lp = cfg.lambda_prime(gate.and_then(|g| g.lambda_prime), "gate")?;
    let s_max = gate.map_or(default_s_max(), |g| g.s_max);
    // surfaces no-solution for the first branch
    swap_time(order, lp, 0).map_err(lift("gate"))?;
    let omega_m = cfg.params.as_ref().and_then(|p| p.omega_m);
    let rows: Vec<Vec<String>> = enumerate_swap_times(order, lp, s_max)
        .map_err(lift("gate"))?
        .into_iter()
        .map(|g| {
            let g = match omega_m { Some(w) => g.with_frequency(w), None => g };
            vec![
                g.n.to_string(),
                g.s.to_string(),
                fmt_f(lp),
                fmt_f(g.t),
                g.t_seconds.map(fmt_f).unwrap_or_default(),
            ]
        })
        .collect();
    let header = strings(&["n", "s", "lambda_prime", "t", "t_seconds"]);
    Ok(Artifacts { primary: csv_text(&header, &rows), ..Default::default() })
}

fn run_effective(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let sim = cfg.simulation()?;
    let order = cfg.order(sim.n, "simulation")?;
    let lp = cfg.lambda_prime(sim.lambda_prime, "simulation")?;
    let b0 = match sim.initial_levels()? {
        (LEVEL_G, _) => [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        _ => [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
    };
    let traj: TrajectoryRecord = match sim.method {
        EffectiveMethod::ClosedForm => {
            let taus = uniform_grid(sim.tau_start, sim.tau_end, sim.samples);
            solve_effective_closed_form(lp, order, b0, &taus).map_err(lift("simulation"))?
        }
        EffectiveMethod::Ode => {
            let gamma = match &cfg.params {
                Some(_) => { let p = cfg.params()?; p.gamma / p.omega_m }
                None => 0.0,
            };
            integrate_effective_damped(lp, order, gamma, b0, (sim.tau_start, sim.tau_end), &sim.integrator())
                .map_err(lift("simulation"))?
        }
    };
    let rows: Vec<Vec<String>> = traj.states.iter().zip(traj.times()).map(|(s, &tau)| {
        let (b1, b2) = (s.amplitude(0), s.amplitude(1));
        vec![
            fmt_f(tau), fmt_f(b1.re), fmt_f(b1.im), fmt_f(b2.re), fmt_f(b2.im),
            fmt_f(b1.norm_sqr()), fmt_f(b2.norm_sqr()),
        ]
    }).collect();
    let header = strings(&["tau", "re_b1", "im_b1", "re_b2", "im_b2", "p_g1f2", "p_f1g2"]);
    let notes = vec![format!("norm_drift = {}", fmt_f(traj.norm_drift))];
    Ok(Artifacts { primary: csv_text(&header, &rows), table: None, notes })
}

fn run_full(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let sim = cfg.simulation()?;
    let params = cfg.params()?;
    let stage: Stage = sim.stage.parse().map_err(|_| CliError::key("simulation.stage", "unknown stage"))?;
    let span = (sim.tau_start / params.omega_m, sim.tau_end / params.omega_m);
    let icfg = sim.integrator();
    let (l1, l2) = sim.initial_levels()?;
    let mut notes = Vec::new();
    let (traj, qubit, photons) = if stage == Stage::H2 {
        let space = build_hamiltonian(Stage::H2, &params).map_err(lift("params"))?.space().clone();
        let psi0 = atom_product_state(&space, l1, l2).map_err(lift("simulation"))?;
        let run = full_model_simulate(&params, &psi0, span, &icfg).map_err(lift("simulation"))?;
        notes.push(format!("cutoff_shift = {}", fmt_f(run.cutoff_shift)));
        notes.push(format!("photon_rate_max = {}", fmt_f(run.photon_rate_max)));
        notes.push(format!("hierarchy = {}", run.hierarchy.overall()));
        (run.trajectory, run.qubit, run.photon_number)
    } else {
        let h = build_hamiltonian(stage, &params).map_err(lift("params"))?;
        let psi0 = atom_product_state(h.space(), l1, l2).map_err(lift("simulation"))?;
        let traj = integrate_tdse(&h, &psi0, span, &icfg).map_err(lift("simulation"))?;
        let (qubit, photons) = atom_cavity_observables(&traj).map_err(lift("simulation"))?;
        (traj, qubit, photons)
    };
    notes.push(format!("norm_drift = {}", fmt_f(traj.norm_drift)));

    let pops = &traj.populations;
    let mut header = strings(&["tau", "t", "p_g1f2", "p_f1g2"]);
    header.extend(pops.labels.iter().map(|l| format!("p_{l}")));
    header.push("photon_number".into());
    let rows: Vec<Vec<String>> = (0..pops.times.len()).map(|k| {
        let t = pops.times[k];
        let mut r = vec![fmt_f(t * params.omega_m), fmt_f(t), fmt_f(qubit.values[0][k]), fmt_f(qubit.values[1][k])];
        r.extend(pops.values.iter().map(|v| fmt_f(v[k])));
        r.push(fmt_f(photons[k]));
        r
    }).collect();
    Ok(Artifacts { primary: csv_text(&header, &rows), table: None, notes })
}

/// Worker count from [`THREADS_ENV`]; rayon's default when unset.
fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().ok().filter(|&n| n > 0).map(Some)
            .ok_or_else(|| CliError::key(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

fn sweep_point(cfg: &RunConfig, sw: &SweepSection, order: CouplingOrder, icfg: &IntegratorConfig, value: f64)
    -> Result<Vec<String>, CliError>
{
    let lp = if sw.parameter == "lambda_prime" {
        value
    } else {
        let mut p = cfg.params.clone().expect("validated");
        match sw.parameter.as_str() {
            "omega" => p.omega = Some(ComplexValue::Real(value)),
            "g" => { p.g = Some(ComplexValue::Real(value)); p.g1 = None; p.g2 = None; }
            "delta" => p.delta = Some(value),
            "xi" => { p.xi = Some(value); p.delta1 = None; p.delta2 = None; }
            "gprime" => p.gprime = Some(value),
            "omega_m" => p.omega_m = Some(value),
            "x0" => p.x0 = Some(value),
            other => unreachable!("validated sweep parameter {other}"),
        }
        coefficients(&p.resolve()?).map_err(lift("params"))?.lambda_prime
    };
    let (t, fidelity) = match swap_time(order, lp, sw.s) {
        Ok(sol) => {
            let one = C64::new(1.0, 0.0);
            let zero = C64::new(0.0, 0.0);
            let traj = dynamics::integrate_effective_ode(lp, order, [one, zero], (0.0, sol.t), icfg)
                .map_err(lift("simulation"))?;
            let f = gate::swap_fidelity(&traj.populations, "g1f2", "f1g2", sol.t).map_err(lift("sweep"))?;
            (sol.t, f)
        }
        Err(SwapError::NoSolution(_)) => (f64::NAN, f64::NAN),
        Err(e) => return Err(lift("sweep")(e)),
    };
    Ok(vec![fmt_f(value), fmt_f(lp), fmt_f(t), fmt_f(fidelity)])
}

fn run_sweep(cfg: &RunConfig) -> Result<Artifacts, CliError> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| CliError::key("sweep", "required by this subcommand"))?;
    let order = cfg.order(sw.n, "sweep")?;
    let icfg = IntegratorConfig {
        samples: Some(1),
        ..cfg.simulation.as_ref().map(|s| s.integrator()).unwrap_or_default()
    };
    let points = sw.points();
    let work = || -> Vec<Result<Vec<String>, CliError>> {
        points.par_iter().map(|&v| sweep_point(cfg, sw, order, &icfg, v)).collect()
    };
    let results = match thread_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()
            .map_err(|e| CliError::key(THREADS_ENV, e.to_string()))?
            .install(work),
        None => work(),
    };
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let header = strings(&["value", "lambda_prime", "t", "fidelity"]);
    Ok(Artifacts { primary: csv_text(&header, &rows), ..Default::default() })
}

/// Read a CSV trajectory: the `tau` column and every `p_*` column.
pub fn read_population_csv(path: &Path) -> Result<PopulationSeries, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::io(path, e))?;
    let header = r.headers().map_err(|e| CliError::io(path, e))?.clone();
    let tau = header.iter().position(|h| h == "tau")
        .ok_or_else(|| CliError::io(path, "missing `tau` column"))?;
    let cols: Vec<(usize, String)> = header.iter().enumerate()
        .filter_map(|(k, h)| h.strip_prefix("p_").map(|l| (k, l.to_string())))
        .collect();
    let mut times = Vec::new();
    let mut values = vec![Vec::new(); cols.len()];
    for rec in r.records() {
        let rec = rec.map_err(|e| CliError::io(path, e))?;
        let row = times.len() + 1;
        let num = |k: usize| -> Result<f64, CliError> {
            rec.get(k).unwrap_or("").parse::<f64>()
                .map_err(|e| CliError::io(path, format!("row {row}: {e}")))
        };
        times.push(num(tau)?);
        for (j, (k, _)) in cols.iter().enumerate() {
            values[j].push(num(*k)?);
        }
    }
    if times.is_empty() {
        return Err(CliError::io(path, "no rows"));
    }
    Ok(PopulationSeries { times, labels: cols.into_iter().map(|(_, l)| l).collect(), values })
}

fn run_compare(cfg: &RunConfig, base: &Path) -> Result<Artifacts, CliError> {
    let c = cfg.compare.as_ref().ok_or_else(|| CliError::key("compare", "required by this subcommand"))?;
    let a = read_population_csv(&base.join(&c.a))?;
    let b = read_population_csv(&base.join(&c.b))?;
    let labels: Vec<String> = if c.labels.is_empty() {
        a.labels.iter().filter(|l| b.labels.contains(l)).cloned().collect()
    } else {
        c.labels.clone()
    };
    if labels.is_empty() {
        return Err(CliError::key("compare.labels", "the two files share no population columns"));
    }
    let mut rows = Vec::new();
    let mut overall: f64 = 0.0;
    for l in &labels {
        let d = dynamics::compare_trajectories(&a, &b, &[l.as_str()]).map_err(lift("compare"))?;
        overall = overall.max(d);
        rows.push(vec![l.clone(), fmt_f(d)]);
    }
    rows.push(vec!["all".into(), fmt_f(overall)]);
    let header = strings(&["label", "max_abs_deviation"]);
    Ok(Artifacts { primary: csv_text(&header, &rows), ..Default::default() })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn execute(cli: &Cli) -> Result<Artifacts, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::key("--config", "required"))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let cfg = parse_config(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let art = run_subcommand(cli.command, &cfg, base)?;

    let out_path = cli.out.clone().or(cfg.output.as_ref().and_then(|o| o.path.clone()));
    let stdout_err = |e: std::io::Error| CliError::io(Path::new("<stdout>"), e);
    let mut stdout = std::io::stdout().lock();
    if let Some(table) = &art.table {
        stdout.write_all(table.as_bytes()).map_err(stdout_err)?;
    }
    match &out_path {
        Some(p) => write_file(p, &art.primary)?,
        None => stdout.write_all(art.primary.as_bytes()).map_err(stdout_err)?,
    }
    Ok(art)
}

/// Run the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    match execute(&cli) {
        Ok(art) => {
            for n in &art.notes {
                eprintln!("{n}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
