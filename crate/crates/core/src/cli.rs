//! Command-line front end. The binary parses arguments and maps errors to
//! exit codes; the commands themselves live here so tests can drive them.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::analysis::analyze;
use crate::approx::multiscaling_approx;
use crate::bar::{bar_residuals, theta_sweep, ETA_GRID};
use crate::error::{Error, Result};
use crate::experiments::{
    fig_convergence, fig_mlmc, fig_skew_compare, three_station_family, ConvergenceSpec, MlmcSweepSpec,
    SkewCompareSpec,
};
use crate::mlmc::{initial_means, replicate_ci, results_rows, InitKind, MlmcConfig, RESULTS_HEADER};
use crate::model::{ModelFile, ModelSource, SrbmModel};
use crate::report::{metadata_line, write_table};
use crate::sim::{stationary_estimate, Scheme, SimOptions, Simulator, StreamedPath};

/// Exit status for a library error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

#[derive(Debug, Parser)]
#[command(name = "srbm", version, about = "Reflecting Brownian motion in the orthant: analysis, simulation, BAR checks, MLMC")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Matrix classes, slackness, multi-scaling and skew-symmetric means.
    Analyze(AnalyzeArgs),
    /// One path to CSV plus a batch-means summary.
    Simulate(SimulateArgs),
    /// Replicated multilevel Monte Carlo estimate of the stationary mean.
    Mlmc(MlmcArgs),
    /// MGF-BAR residuals on a simulated path.
    BarCheck(BarCheckArgs),
    /// Desk-scale experiment sweeps.
    Experiment {
        #[command(subcommand)]
        which: Experiment,
    },
}

#[derive(Debug, Subcommand)]
pub enum Experiment {
    /// Relative error of the scaled mean against r on the tandem family.
    FigConvergence(ConvergenceArgs),
    /// Multi-scaling against skew-symmetric predictions on the feedback family.
    FigSkewCompare(SkewArgs),
    /// MLMC bias under different initial distributions.
    FigMlmc(FigMlmcArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// JSON model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Scale for a multiscale family.
    #[arg(long)]
    pub r: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Print JSON instead of the text report.
    #[arg(long)]
    pub json: bool,
    /// Also write `analysis.json` into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 1000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Discarded initial time; defaults to 20% of the horizon.
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// `origin`, `skew`, `multiscaling` (start at those means) or a comma list.
    #[arg(long, default_value = "origin")]
    pub init: String,
    #[arg(long, value_enum, default_value_t = Scheme::ProjectedEuler)]
    pub scheme: Scheme,
    /// Multiplier on the Brownian part; 0 gives the deterministic path.
    #[arg(long, default_value_t = 1.0)]
    pub noise_scale: f64,
    /// Keep every n-th state in `path.csv`.
    #[arg(long, default_value_t = 1)]
    pub every: usize,
}

#[derive(Debug, Args)]
pub struct MlmcArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Base horizon `T`; level `ℓ` runs to `(ℓ+1) T`.
    #[arg(long, default_value_t = 2000.0)]
    pub horizon: f64,
    /// Level-0 step; level `ℓ` uses `dt · γ^ℓ`.
    #[arg(long, default_value_t = 100.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
    /// Discarded fraction of each horizon.
    #[arg(long, default_value_t = 0.5)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 200)]
    pub paths: usize,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    #[arg(long, value_enum, default_value_t = InitKind::Multiscaling)]
    pub init: InitKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BarCheckArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 10_000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Discarded initial time; defaults to 20% of the horizon.
    #[arg(long)]
    pub burn_in: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Explicit θ as a comma list; repeatable. Defaults to a built-in sweep.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Vec<String>,
    #[arg(long, value_enum, default_value_t = Scheme::ProjectedEuler)]
    pub scheme: Scheme,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.25, 0.5, 0.75])]
    pub betas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.4, 0.3, 0.2, 0.1])]
    pub r_grid: Vec<f64>,
    /// Horizon factor: each cell runs to `horizon / r⁴`.
    #[arg(long, default_value_t = 3000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Discarded fraction of each horizon.
    #[arg(long, default_value_t = 0.2)]
    pub burn_in: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SkewArgs {
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
    /// Defaults to eight points spread over `(α, 1)`.
    #[arg(long, value_delimiter = ',')]
    pub r_grid: Vec<f64>,
    /// Horizon factor: each cell runs to `horizon / r⁴`.
    #[arg(long, default_value_t = 25_000.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// Discarded fraction of each horizon.
    #[arg(long, default_value_t = 0.2)]
    pub burn_in: f64,
    #[arg(long, value_enum, default_value_t = Scheme::BridgeMinimum)]
    pub scheme: Scheme,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FigMlmcArgs {
    /// Model file; defaults to the three-station network family.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    pub r: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
    pub levels: Vec<usize>,
    /// Base horizons; the highest-cost run serves as the reference.
    #[arg(long, value_delimiter = ',', default_values_t = [2000.0, 5000.0, 50_000.0])]
    pub horizon: Vec<f64>,
    /// Level-0 step.
    #[arg(long, default_value_t = 100.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.2)]
    pub gamma: f64,
    #[arg(long, default_value_t = 200)]
    pub paths: usize,
    #[arg(long, default_value_t = 10)]
    pub replications: usize,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = InitKind::ALL)]
    pub inits: Vec<InitKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Parses `args` (program name first) and runs the command.
pub fn run_from<I, T>(args: I) -> std::result::Result<String, CliFailure>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliFailure::Usage)?;
    run(&cli).map_err(CliFailure::Run)
}

#[derive(Debug)]
pub enum CliFailure {
    Usage(clap::Error),
    Run(Error),
}

impl CliFailure {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliFailure::Usage(e) => e.exit_code(),
            CliFailure::Run(e) => exit_code(e),
        }
    }
}

/// Runs a parsed command and returns the text for standard output.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Mlmc(a) => cmd_mlmc(a),
        Command::BarCheck(a) => cmd_bar_check(a),
        Command::Experiment { which } => match which {
            Experiment::FigConvergence(a) => cmd_fig_convergence(a),
            Experiment::FigSkewCompare(a) => cmd_fig_skew_compare(a),
            Experiment::FigMlmc(a) => cmd_fig_mlmc(a),
        },
    }
}

fn load_model(args: &ModelArgs) -> Result<(ModelSource, SrbmModel)> {
    let file = ModelFile::load(&args.model)?;
    let src = file.source()?;
    let model = src.resolve(args.r)?;
    Ok((src, model))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Parse(format!("bad number {t:?}: {e}"))))
        .collect()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<String> {
    let file = ModelFile::load(&a.model.model)?;
    let report = analyze(&file, a.model.r)?;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("analysis.json"), format!("{json}\n"))?;
    }
    Ok(if a.json { json + "\n" } else { report.to_string() })
}

#[derive(Serialize)]
struct SimulateConfig<'a> {
    model: ModelFile,
    horizon: f64,
    dt: f64,
    burn_in: Option<f64>,
    init: &'a [f64],
    scheme: Scheme,
    noise_scale: f64,
    every: usize,
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<String> {
    let (_, model) = load_model(&a.model)?;
    let init = match a.init.as_str() {
        "origin" => initial_means(&model, InitKind::Origin)?,
        "skew" => initial_means(&model, InitKind::Skew)?,
        "multiscaling" => initial_means(&model, InitKind::Multiscaling)?,
        s => parse_list(s)?,
    };
    let mut opts = SimOptions::new(a.horizon, a.dt).with_scheme(a.scheme);
    opts.noise_scale = a.noise_scale;
    let sim = Simulator::new(&model, opts)?;
    let path = sim.simulate(&init, a.seed)?;
    let est = stationary_estimate(&path, a.burn_in)?;

    let cfg = SimulateConfig {
        model: ModelFile::from_model(&model),
        horizon: a.horizon,
        dt: a.dt,
        burn_in: a.burn_in,
        init: &init,
        scheme: a.scheme,
        noise_scale: a.noise_scale,
        every: a.every,
    };
    let meta = metadata_line("simulate", a.seed, &cfg)?;
    path.write_csv_every(create(&a.out, "path.csv")?, &meta, a.every)?;
    let rows: Vec<Vec<String>> = (0..model.dim())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                est.means[i].to_string(),
                est.std_errors[i].to_string(),
                est.second_moments[i].to_string(),
                est.second_moment_std_errors[i].to_string(),
            ]
        })
        .collect();
    write_table(
        create(&a.out, "summary.csv")?,
        &meta,
        &["dim", "mean", "std_error", "second_moment", "second_moment_std_error"],
        &rows,
    )?;
    Ok(format!(
        "steps {}\nmean      ({})\nstd error ({})\n",
        path.n_steps,
        fmt_list(&est.means),
        fmt_list(&est.std_errors)
    ))
}

pub fn cmd_mlmc(a: &MlmcArgs) -> Result<String> {
    let (_, model) = load_model(&a.model)?;
    let mut cfg = MlmcConfig::new(a.levels, a.horizon, a.gamma, a.init);
    cfg.step_constant = a.dt;
    cfg.n_paths = a.paths;
    cfg.n_replications = a.replications;
    cfg.window_fraction = 1.0 - a.burn_in;
    cfg.seed = a.seed;
    let res = replicate_ci(&model, &cfg)?;
    let meta = metadata_line("mlmc", a.seed, &(ModelFile::from_model(&model), &cfg))?;
    write_table(create(&a.out, "mlmc.csv")?, &meta, &RESULTS_HEADER, &results_rows(std::slice::from_ref(&res)))?;
    Ok(format!(
        "cost {}\nestimate ({})\nci half-width ({})\n",
        res.cost,
        fmt_list(&res.mean),
        fmt_list(&res.ci_halfwidth)
    ))
}

#[derive(Serialize)]
struct BarCheckConfig<'a> {
    model: ModelFile,
    horizon: f64,
    dt: f64,
    burn_in: Option<f64>,
    thetas: &'a [Vec<f64>],
    scheme: Scheme,
}

pub fn cmd_bar_check(a: &BarCheckArgs) -> Result<String> {
    let (src, model) = load_model(&a.model)?;
    let d = model.dim();
    let thetas: Vec<Vec<f64>> = if !a.theta.is_empty() {
        a.theta.iter().map(|s| parse_list(s)).collect::<Result<_>>()?
    } else {
        match (&src, a.model.r) {
            (ModelSource::Family(f), Some(r)) => theta_sweep(&multiscaling_approx(f, r)?, false)?,
            _ => (0..d)
                .flat_map(|k| ETA_GRID.iter().map(move |&e| (0..d).map(|l| if l == k { e } else { 0.0 }).collect()))
                .collect(),
        }
    };
    let init = match (&src, a.model.r) {
        (ModelSource::Family(f), Some(r)) => multiscaling_approx(f, r)?.scaled_means,
        _ => vec![0.0; d],
    };
    let sim = Simulator::new(&model, SimOptions::new(a.horizon, a.dt).with_scheme(a.scheme))?;
    let path = StreamedPath {
        sim: &sim,
        init,
        seed: a.seed,
    };
    let reports = bar_residuals(&model, &path, &thetas, a.burn_in, true)?;

    let cfg = BarCheckConfig {
        model: ModelFile::from_model(&model),
        horizon: a.horizon,
        dt: a.dt,
        burn_in: a.burn_in,
        thetas: &thetas,
        scheme: a.scheme,
    };
    let meta = metadata_line("bar-check", a.seed, &cfg)?;
    let mut header: Vec<String> = (1..=d).map(|i| format!("theta_{i}")).collect();
    header.extend(["residual", "std_error", "threshold", "pass"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let mut row: Vec<String> = r.theta.iter().map(|t| t.to_string()).collect();
            row.extend([
                r.residual.to_string(),
                r.std_error.to_string(),
                r.threshold.to_string(),
                u8::from(r.pass).to_string(),
            ]);
            row
        })
        .collect();
    write_table(create(&a.out, "bar_check.csv")?, &meta, &header, &rows)?;
    let passed = reports.iter().filter(|r| r.pass).count();
    Ok(format!("{passed}/{} residuals within tolerance\n", reports.len()))
}

pub fn cmd_fig_convergence(a: &ConvergenceArgs) -> Result<String> {
    let spec = ConvergenceSpec {
        betas: a.betas.clone(),
        r_grid: a.r_grid.clone(),
        dt: a.dt,
        horizon_factor: a.horizon,
        burn_in_fraction: a.burn_in,
        seed: a.seed,
    };
    let report = fig_convergence(&spec)?;
    report.write_csv(create(&a.out, "fig_convergence.csv")?)?;
    report.write_slopes_csv(create(&a.out, "fig_convergence_slopes.csv")?)?;
    let mut text = String::new();
    for s in &report.slopes {
        let slope = s.slope.map_or("n/a".to_string(), |v| format!("{v:.4}"));
        text += &format!("beta {:<5} slope {slope} monotone {}\n", s.beta, s.monotone);
    }
    Ok(text)
}

pub fn cmd_fig_skew_compare(a: &SkewArgs) -> Result<String> {
    let mut spec = SkewCompareSpec::new(a.alpha, a.beta);
    if !a.r_grid.is_empty() {
        spec.r_grid = a.r_grid.clone();
    }
    spec.horizon_factor = a.horizon;
    spec.dt = a.dt;
    spec.burn_in_fraction = a.burn_in;
    spec.scheme = a.scheme;
    spec.seed = a.seed;
    let report = fig_skew_compare(&spec)?;
    report.write_csv(create(&a.out, "fig_skew_compare.csv")?)?;
    let mut text = String::from("r         simulated  multiscaling_err  skew_err\n");
    for row in &report.rows {
        text += &format!(
            "{:<9.4} {:<10.4} {:<17.4} {:.4}\n",
            row.r, row.simulated.value, row.multiscaling_error.value, row.skew_error.value
        );
    }
    Ok(text)
}

pub fn cmd_fig_mlmc(a: &FigMlmcArgs) -> Result<String> {
    let model = match &a.model {
        Some(path) => ModelFile::load(path)?.source()?.resolve(Some(a.r))?,
        None => three_station_family()?.make_model(a.r)?,
    };
    let spec = MlmcSweepSpec {
        inits: a.inits.clone(),
        levels: a.levels.clone(),
        base_horizons: a.horizon.clone(),
        gamma_base: a.gamma,
        n_paths: a.paths,
        n_replications: a.replications,
        step_constant: a.dt,
        seed: a.seed,
    };
    let report = fig_mlmc(&model, &spec)?;
    report.write_csv(create(&a.out, "fig_mlmc.csv")?)?;
    Ok(format!(
        "{} configurations\nreference ({})\n",
        report.results.len(),
        fmt_list(&report.reference)
    ))
}
