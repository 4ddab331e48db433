//! `refcurve`: fit, select, inspect and export LMS reference curves from the
//! command line.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "refcurve", version, about = "LMS reference curves: fit, select, inspect, export")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model and write it as a JSON model document.
    Fit(FitArgs),
    /// BIC grid search over the three degrees of freedom.
    Select(SelectArgs),
    /// k-fold cross-validation of one hyperparameter setting.
    Cv(CvArgs),
    /// Per-row residual z-scores, percentiles and outlier flags.
    Outliers(OutliersArgs),
    /// Percentile curves on a covariate grid as CSV.
    Curves(CurvesArgs),
    /// Long-format plotting table of curves and observations.
    Plotdata(PlotdataArgs),
    /// z-score of one measurement under a model.
    Zscore(ZscoreArgs),
    /// Convert between percentile and z-score.
    Convert(ConvertArgs),
    /// Draw a synthetic dataset from a model.
    Simulate(SimulateArgs),
    /// Recover L, M and S from a published percentile chart.
    Reverse(ReverseArgs),
    /// Pointwise difference between one percentile curve of two models.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Covariate column.
    #[arg(long)]
    x: String,
    /// Response column.
    #[arg(long)]
    y: String,
}

#[derive(Debug, Args)]
struct HpArgs {
    /// Extra degrees of freedom for M.
    #[arg(long, default_value_t = 1.0)]
    mdf: f64,
    /// Extra degrees of freedom for S.
    #[arg(long, default_value_t = 0.0)]
    sdf: f64,
    /// Extra degrees of freedom for L.
    #[arg(long, default_value_t = 0.0)]
    ldf: f64,
    /// Use an orthogonal polynomial of this degree for M instead of a P-spline.
    #[arg(long)]
    poly_m: Option<usize>,
    /// Polynomial degree for S.
    #[arg(long)]
    poly_s: Option<usize>,
    /// Polynomial degree for L.
    #[arg(long)]
    poly_l: Option<usize>,
}

#[derive(Debug, Args)]
struct FitOptionArgs {
    /// Maximum outer cycles.
    #[arg(long, default_value_t = 100)]
    max_cycles: usize,
    /// Convergence tolerance on the global deviance.
    #[arg(long, default_value_t = 1e-3)]
    gd_tol: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hp: HpArgs,
    #[command(flatten)]
    options: FitOptionArgs,
    /// Model document to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SelectArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Degrees-of-freedom range `lo:hi` applied to M, S and L.
    #[arg(long, default_value = "0:5")]
    range: String,
    /// Override the range for M.
    #[arg(long)]
    m_range: Option<String>,
    /// Override the range for S.
    #[arg(long)]
    s_range: Option<String>,
    /// Override the range for L.
    #[arg(long)]
    l_range: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    #[command(flatten)]
    options: FitOptionArgs,
    /// Ranked records CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    hp: HpArgs,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    options: FitOptionArgs,
}

#[derive(Debug, Args)]
struct OutliersArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Covariate column; defaults to the model's covariate label.
    #[arg(long)]
    x: Option<String>,
    /// Response column; defaults to the model's response label.
    #[arg(long)]
    y: Option<String>,
    /// Rows below this percentile are flagged.
    #[arg(long, default_value_t = 3.0)]
    lower: f64,
    /// Rows above this percentile are flagged.
    #[arg(long, default_value_t = 97.0)]
    upper: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Number of grid points.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    /// Grid start; defaults to the lower end of the training range.
    #[arg(long)]
    from: Option<f64>,
    /// Grid end; defaults to the upper end of the training range.
    #[arg(long)]
    to: Option<f64>,
    /// Comma-separated percentile levels.
    #[arg(long, value_delimiter = ',', default_values_t = refcurve::DEFAULT_PERCENTILES)]
    percentiles: Vec<f64>,
}

#[derive(Debug, Args)]
struct CurvesArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PlotdataArgs {
    #[arg(long)]
    model: PathBuf,
    /// Observations to include as `data` / `excluded` series.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    x: Option<String>,
    #[arg(long)]
    y: Option<String>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ZscoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    x: f64,
    #[arg(long, allow_hyphen_values = true)]
    y: f64,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ConvertArgs {
    /// Percentile in (0, 100); prints the z-score.
    #[arg(long)]
    percentile: Option<f64>,
    /// z-score; prints the percentile.
    #[arg(long, allow_hyphen_values = true)]
    zscore: Option<f64>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Draw covariates uniformly over the training range instead of resampling them.
    #[arg(long)]
    uniform: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReverseArgs {
    /// Chart CSV: `x,P3,P10,...`.
    #[arg(long)]
    chart: PathBuf,
    /// Post-smooth each parameter sequence with a P-spline of this edf.
    #[arg(long)]
    smooth_df: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    percentile: f64,
    /// Grid points over the union of both training ranges.
    #[arg(long, default_value_t = 200)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::Usage(e.kind().to_string(), e.to_string())),
    };
    if let Err(e) = configure_threads() {
        return fail(&e);
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code())
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("REFCURVE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage("invalid_env".into(), format!("REFCURVE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage("invalid_env".into(), e.to_string()))
}
