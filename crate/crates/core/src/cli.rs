//! Command-line front end: `fit`, `predict`, `simulate` and `bootstrap`.
//!
//! Exit codes: 0 success, 1 input or model error, 2 the EM did not converge
//! (outputs are still written from the last iterate).

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::config::{read_json, RunConfig};
use crate::data::Dataset;
use crate::em::{fit_model, FitResult};
use crate::error::{Error, Result};
use crate::predict::{predict_curves, CurveSet, PredictionProfile, Predictor};
use crate::simulation::{run_study, ScenarioConfig, StudyReport};
use crate::variance::{
    bootstrap_covariance, ci_for_cif, cif_delta, coefficient_table, information_blocks, BootstrapOptions,
    BootstrapSummary, CoefRow,
};

/// Version of every JSON document written by the CLI.
pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

const DEFAULT_HORIZONS: [f64; 5] = [1.0, 2.0, 5.0, 7.0, 10.0];

#[derive(Debug, Parser)]
#[command(name = "vmcf", version, about = "Competing-risks mixture cure models by vertical modeling")]
pub struct Cli {
    /// Cap on worker threads for simulation and bootstrap.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write the fit JSON plus a coefficient table.
    Fit(FitArgs),
    /// Evaluate survival and cumulative incidence curves from a fit JSON.
    Predict(PredictArgs),
    /// Run a Monte Carlo study.
    Simulate(SimulateArgs),
    /// Bootstrap standard errors and percentile intervals.
    Bootstrap(BootstrapArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run configuration (data schema and model).
    #[arg(long)]
    pub config: PathBuf,
    /// Fit JSON; the table is also written next to it with a `.txt` suffix.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit JSON written by `fit`.
    #[arg(long)]
    pub fit: PathBuf,
    /// Profile JSON: `{"covariates": {...}, "horizons": [...]}`.
    #[arg(long)]
    pub profile: PathBuf,
    /// Comma-separated horizons; overrides the profile's list.
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    /// Original data; adds delta-method intervals for the conditional incidences.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study configuration JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Report JSON; the three CSV tables are written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Functional {
    /// Incidence, latency and free relative-hazard coefficients.
    Coefficients,
    /// Cure probability and conditional and population incidences of a profile.
    Cif,
}

#[derive(Debug, Args)]
pub struct BootstrapArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: PathBuf,
    /// Number of replicates.
    #[arg(long = "replicates", short = 'B')]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = Functional::Coefficients)]
    pub functional: Functional,
    /// Profile JSON, required for `--functional cif`.
    #[arg(long)]
    pub profile: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub horizons: Option<Vec<f64>>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Document written by `fit` and read by `predict`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub config: RunConfig,
    pub data: String,
    pub converged: bool,
    pub coefficients: Vec<CoefRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub fit: FitResult,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateOutput {
    pub schema_version: u32,
    pub report: StudyReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapOutput {
    pub schema_version: u32,
    pub config: RunConfig,
    pub data: String,
    pub functional: Functional,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<PredictionProfile>,
    pub seed: u64,
    pub names: Vec<String>,
    pub summary: BootstrapSummary,
}

/// Parses `args` (program name first), runs the command and returns the
/// exit code. Messages go to standard error.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_INPUT
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32> {
    match cli.threads {
        Some(t) if t >= 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        Some(_) => Err(Error::InvalidArgument("--threads must be at least 1".into())),
        None => dispatch(cli.command),
    }
}

fn dispatch(command: Command) -> Result<i32> {
    match command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Bootstrap(a) => cmd_bootstrap(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map_or_else(|| "out".into(), |s| s.to_string_lossy().into_owned());
    path.with_file_name(format!("{stem}{suffix}"))
}

fn fmt_estimate(estimate: f64, se: Option<f64>) -> String {
    match se {
        Some(s) => format!("{estimate:.2} ({s:.2})"),
        None => format!("{estimate:.2}"),
    }
}

/// Aligned text table, one block per model component.
pub fn format_coefficients(rows: &[CoefRow], fit: &FitResult) -> String {
    let width = rows.iter().map(|r| r.name.chars().count()).max().unwrap_or(4).max(4);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} fit: {} iterations, converged = {}, log L = {:.4} (L1 {:.4}, L2 {:.4})",
        match fit.mode() {
            crate::em::Mode::Vm => "VM",
            crate::em::Mode::Vmcf => "VMCF",
        },
        fit.iterations,
        fit.converged,
        fit.loglik.total,
        fit.loglik.l1,
        fit.loglik.l2
    );
    let mut current = "";
    for r in rows {
        if r.component != current {
            current = &r.component;
            let _ = writeln!(out, "\n[{current}]");
        }
        let _ = writeln!(out, "  {:<width$}  {}", r.name, fmt_estimate(r.estimate, r.se));
    }
    out
}

pub fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let config = RunConfig::load(&a.config)?;
    let dataset = config.load_data(&a.data)?;
    let fit = fit_model(&dataset, &config.model)?;
    let (coefficients, note) = coefficient_table(&fit, &dataset)?;
    let table = format_coefficients(&coefficients, &fit);
    print!("{table}");
    if let Some(n) = &note {
        eprintln!("note: {n}");
    }
    if let Some(out) = &a.out {
        let doc = FitOutput {
            schema_version: SCHEMA_VERSION,
            config: config.clone(),
            data: a.data.display().to_string(),
            converged: fit.converged,
            coefficients,
            note,
            fit,
        };
        write_json(out, &doc)?;
        let txt = sibling(out, ".txt");
        std::fs::write(&txt, &table).map_err(|e| Error::Io {
            path: txt.display().to_string(),
            source: e,
        })?;
        return Ok(exit_for(doc.converged));
    }
    Ok(exit_for(fit.converged))
}

fn exit_for(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        eprintln!("warning: EM did not converge; results are the last iterate");
        EXIT_NOT_CONVERGED
    }
}

/// Curves for a fitted model, with delta-method intervals on the
/// conditional incidences when the original data are supplied.
pub fn predict_with_intervals(
    fit: &FitResult,
    profile: &PredictionProfile,
    horizons: &[f64],
    dataset: Option<&Dataset>,
    level: f64,
) -> Result<CurveSet> {
    let pred = Predictor::new(fit, profile)?;
    let mut curves = predict_curves(&pred, horizons);
    if let Some(d) = dataset {
        let blocks = information_blocks(fit, d)?;
        for row in &mut curves.rows {
            let w = cif_delta(fit, &blocks, &pred.profile, row.time);
            row.cif_conditional_ci = Some(
                w.conditional
                    .iter()
                    .zip(&w.conditional_se)
                    .map(|(&e, &s)| ci_for_cif(e, s, level))
                    .collect(),
            );
        }
    }
    Ok(curves)
}

pub fn cmd_predict(a: &PredictArgs) -> Result<i32> {
    let doc: FitOutput = read_json(&a.fit)?;
    let profile: PredictionProfile = read_json(&a.profile)?;
    let horizons = match (&a.horizons, profile.horizons.is_empty()) {
        (Some(h), _) => h.clone(),
        (None, false) => profile.horizons.clone(),
        (None, true) => DEFAULT_HORIZONS.to_vec(),
    };
    if horizons.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
        return Err(Error::InvalidArgument("horizons must be finite and nonnegative".into()));
    }
    let dataset = a.data.as_deref().map(|p| doc.config.load_data(p)).transpose()?;
    let curves = predict_with_intervals(&doc.fit, &profile, &horizons, dataset.as_ref(), a.level)?;
    match &a.out {
        Some(p) => curves.write_csv(create(p)?)?,
        None => curves.write_csv(std::io::stdout().lock())?,
    }
    Ok(EXIT_OK)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let mut config: ScenarioConfig = read_json(&a.config)?;
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(l) = a.level {
        config.level = l;
    }
    let report = run_study(&config)?;
    report.write_table_conditional(create(&sibling(&a.out, "_table1.csv"))?)?;
    report.write_table_population(create(&sibling(&a.out, "_table2.csv"))?)?;
    report.write_table_coverage(create(&sibling(&a.out, "_table3.csv"))?)?;
    let failures = report.vmcf_failures + report.vm_failures;
    write_json(
        &a.out,
        &SimulateOutput {
            schema_version: SCHEMA_VERSION,
            report,
        },
    )?;
    if failures > 0 {
        eprintln!("warning: {failures} replication fits failed or did not converge and were excluded");
    }
    Ok(EXIT_OK)
}

/// Names and values of the coefficient functional.
pub fn coefficient_functional(fit: &FitResult) -> (Vec<String>, Vec<f64>) {
    let mut names = Vec::new();
    let mut values = Vec::new();
    for (n, b) in fit.incidence_names().into_iter().zip(&fit.beta) {
        names.push(format!("incidence:{n}"));
        values.push(*b);
    }
    for (n, g) in fit.spec.design.latency.iter().zip(&fit.gamma) {
        names.push(format!("latency:{n}"));
        values.push(*g);
    }
    let rh = &fit.relhaz;
    let mut labels = rh.basis.labels();
    labels.extend(rh.u_columns.iter().cloned());
    for j in 0..rh.num_causes - 1 {
        for (c, l) in labels.iter().enumerate() {
            names.push(format!("relhaz{}:{l}", j + 1));
            values.push(rh.fit.eta[(j, c)]);
        }
    }
    (names, values)
}

/// Names and values of the incidence functional of a profile.
pub fn cif_functional(
    fit: &FitResult,
    profile: &PredictionProfile,
    horizons: &[f64],
) -> Result<(Vec<String>, Vec<f64>)> {
    let pred = Predictor::new(fit, profile)?;
    let mut names = vec!["cure_probability".to_string()];
    let mut values = vec![pred.cure_probability()];
    for &t in horizons {
        for (kind, f) in [("conditional", pred.cif_conditional(t)), ("population", pred.cif_population(t))] {
            for (j, v) in f.into_iter().enumerate() {
                names.push(format!("cif{}_{kind}@{t}", j + 1));
                values.push(v);
            }
        }
    }
    Ok((names, values))
}

pub fn cmd_bootstrap(a: &BootstrapArgs) -> Result<i32> {
    if a.replicates == 0 {
        return Err(Error::InvalidArgument("B must be positive".into()));
    }
    let config = RunConfig::load(&a.config)?;
    let dataset = config.load_data(&a.data)?;
    let opts = BootstrapOptions {
        level: a.level,
        ..BootstrapOptions::new(a.replicates, a.seed)
    };
    let (names, summary, profile) = match a.functional {
        Functional::Coefficients => {
            let fit = fit_model(&dataset, &config.model)?;
            let (names, _) = coefficient_functional(&fit);
            let summary = bootstrap_covariance(&dataset, &config.model, opts, |f, _| {
                Ok(coefficient_functional(f).1)
            })?;
            (names, summary, None)
        }
        Functional::Cif => {
            let path = a
                .profile
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("--functional cif needs --profile".into()))?;
            let profile: PredictionProfile = read_json(path)?;
            let horizons = match &a.horizons {
                Some(h) => h.clone(),
                None if !profile.horizons.is_empty() => profile.horizons.clone(),
                None => DEFAULT_HORIZONS.to_vec(),
            };
            let fit = fit_model(&dataset, &config.model)?;
            let (names, _) = cif_functional(&fit, &profile, &horizons)?;
            let summary = bootstrap_covariance(&dataset, &config.model, opts, |f, _| {
                Ok(cif_functional(f, &profile, &horizons)?.1)
            })?;
            (names, summary, Some(profile))
        }
    };
    if let Some(w) = &summary.warning {
        eprintln!("warning: {w}");
    }
    write_json(
        &a.out,
        &BootstrapOutput {
            schema_version: SCHEMA_VERSION,
            config,
            data: a.data.display().to_string(),
            functional: a.functional,
            profile,
            seed: a.seed,
            names,
            summary,
        },
    )?;
    Ok(EXIT_OK)
}
