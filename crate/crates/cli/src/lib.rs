//! Command-line front end: loads or generates fields, runs one check and
//! writes a JSON report plus CSV tables.
//!
//! Exit codes: 0 when every check passes, 1 on a violation, 2 on bad input.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod source;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rhoblo::grid::{write_field, GridField};
use serde_json::{json, Value};

pub use config::ExperimentConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

const COMMON_KEYS: [&str; 4] = ["seed", "grid", "window", "d"];

#[derive(Parser, Debug)]
#[command(
    name = "rhoblo",
    version,
    about = "Critical radius, BLO/BMO seminorms and adapted weight checks on grids"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Flat `key = value` file; command-line flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for report.json, CSV tables and fields.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cells per axis.
    #[arg(long, global = true, value_name = "N")]
    pub grid: Option<usize>,
    /// Half-width of the box `[-A, A]^d`.
    #[arg(long, global = true, value_name = "A")]
    pub window: Option<f64>,
    /// What goes to stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Extra config entry, repeatable.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Critical radius field of a potential and its comparison constants.
    Rho,
    /// One seminorm of a function over a cube or ball family.
    Seminorm,
    /// Adapted weight constant.
    Weight,
    /// Stopping-time decomposition of a normalized function.
    Cz,
    /// Distribution tail against the exponential bound.
    Jn,
    /// One theorem-level check.
    Check {
        #[arg(long, value_enum)]
        theorem: Theorem,
    },
    /// Write a synthetic field.
    Generate,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem {
    #[value(name = "6.1")]
    ApCubes,
    #[value(name = "6.2")]
    ApqCubes,
    #[value(name = "6.3")]
    ApBalls,
    #[value(name = "6.4")]
    ApqBalls,
    #[value(name = "cor")]
    Corollary,
    #[value(name = "5.3")]
    TailCampanato,
    #[value(name = "5.4")]
    TailBlo,
    #[value(name = "4.6")]
    Pointwise,
}

impl Theorem {
    pub fn label(self) -> &'static str {
        match self {
            Theorem::ApCubes => "6.1",
            Theorem::ApqCubes => "6.2",
            Theorem::ApBalls => "6.3",
            Theorem::ApqBalls => "6.4",
            Theorem::Corollary => "cor",
            Theorem::TailCampanato => "5.3",
            Theorem::TailBlo => "5.4",
            Theorem::Pointwise => "4.6",
        }
    }
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Rho => "rho",
            Command::Seminorm => "seminorm",
            Command::Weight => "weight",
            Command::Cz => "cz",
            Command::Jn => "jn",
            Command::Check { .. } => "check",
            Command::Generate => "generate",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// What a command produced.
pub struct Output {
    pub results: Value,
    /// `(file name, contents)`; the first CSV is the primary table.
    pub tables: Vec<(String, String)>,
    pub fields: Vec<(String, GridField<f64>)>,
    pub passed: bool,
}

impl Cli {
    pub fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("--set expects KEY=VALUE, got `{kv}`");
            };
            cfg.set(k, v.trim());
        }
        if let Some(s) = self.seed {
            cfg.set("seed", s.to_string());
        }
        if let Some(n) = self.grid {
            cfg.set("grid", n.to_string());
        }
        if let Some(a) = self.window {
            cfg.set("window", a.to_string());
        }
        Ok(cfg)
    }
}

/// The full report: tool, version, command, effective parameters, results.
pub fn envelope(cmd: Command, cfg: &ExperimentConfig, out: &Output) -> Value {
    let mut name = cmd.name().to_string();
    if let Command::Check { theorem } = cmd {
        let _ = write!(name, " {}", theorem.label());
    }
    json!({
        "tool": "rhoblo",
        "version": VERSION,
        "command": name,
        "params": cfg.resolved(),
        "passed": out.passed,
        "results": out.results,
    })
}

fn write_outputs(dir: &Path, report: &Value, out: &Output) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(report)? + "\n")?;
    for (name, body) in &out.tables {
        std::fs::write(dir.join(name), body)?;
    }
    for (name, field) in &out.fields {
        write_field(dir.join(format!("{name}.rsf")), field)?;
    }
    Ok(())
}

/// Runs the command; `Ok(true)` when every check passed.
pub fn run(cli: &Cli, stdout: &mut impl std::io::Write) -> Result<bool> {
    let cfg = cli.config()?;
    let out = commands::dispatch(cli.command, &cfg)?;
    // common flags may be irrelevant to a command
    let unused: Vec<String> = cfg
        .unused()
        .into_iter()
        .filter(|k| !COMMON_KEYS.contains(&k.as_str()))
        .collect();
    if !unused.is_empty() {
        bail!(
            "unknown config keys for `{}`: {}",
            cli.command.name(),
            unused.join(", ")
        );
    }
    let report = envelope(cli.command, &cfg, &out);
    if let Some(dir) = &cli.out {
        write_outputs(dir, &report, &out)?;
    }
    match cli.format {
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&report)?)?,
        Format::Csv => {
            if let Some((_, body)) = out.tables.iter().find(|(n, _)| n.ends_with(".csv")) {
                write!(stdout, "{body}")?;
            }
        }
    }
    Ok(out.passed)
}
