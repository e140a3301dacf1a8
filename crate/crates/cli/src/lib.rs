//! `koopman` command-line tool: snapshot generation, EDMD fits, consistency
//! analysis, the α sweep and the worst-case certificate.

pub mod sampling;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use koopman_core::consistency::DEFAULT_PROJECTION_GUARD;
use koopman_core::dynamics::{generate, DynamicalSystem};
use koopman_core::observables::cubic_example_dictionary;
use koopman_core::sweep::{DEFAULT_ALPHA_COUNT, DEFAULT_ALPHA_MAX, DEFAULT_ALPHA_MIN};
use koopman_core::{
    alpha_sweep, consistency_report, fit_forward_backward, log_grid, projection_difference_sprad,
    residual_error, ComputationPath, Dictionary, EdmdModel, FitOptions, SnapshotData,
};

/// Largest tolerated gap between two routes to the same quantity.
pub const CROSS_CHECK_TOL: f64 = 1e-6;

/// Slack allowed when comparing sampled RRMSE against the certified bound.
pub const SAMPLE_BOUND_SLACK: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] koopman_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("usage: {0}")]
    Usage(String),

    #[error("cross-check failed: {0}")]
    CrossCheck(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(_) | CliError::Io { .. } => 1,
            CliError::Usage(_) => 2,
            CliError::CrossCheck(_) => 3,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "koopman", version, about = "EDMD with forward-backward consistency analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output file (standard output when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Absolute singular-value threshold for the numerical rank.
    #[arg(long, global = true)]
    pub rank_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemKind {
    /// x⁺ = 0.5x
    Linear05,
    /// x⁺ = Σ c_k x^k, coefficients from --coeffs
    CustomPoly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PathArg {
    Orthonormalized,
    Direct,
}

impl From<PathArg> for ComputationPath {
    fn from(p: PathArg) -> Self {
        match p {
            PathArg::Orthonormalized => ComputationPath::Orthonormalized,
            PathArg::Direct => ComputationPath::Direct,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Snapshot CSV.
    #[arg(long)]
    pub data: PathBuf,

    /// Use only the first N snapshot pairs.
    #[arg(long)]
    pub head: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate snapshot pairs from a discrete-time system.
    Simulate {
        #[arg(long, value_enum)]
        system: SystemKind,
        /// Number of trajectories.
        #[arg(long, default_value_t = 500, value_parser = clap::value_parser!(u64).range(1..))]
        n_init: u64,
        /// Snapshot pairs per trajectory.
        #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
        steps: u64,
        /// Lower corner of the initial-condition box.
        #[arg(long, default_value_t = -2.0, allow_negative_numbers = true)]
        low: f64,
        /// Upper corner of the initial-condition box.
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        high: f64,
        /// Polynomial coefficients c0,c1,… for custom-poly.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        coeffs: Vec<f64>,
    },
    /// Fit forward and backward EDMD and print the model JSON.
    Edmd {
        #[command(flatten)]
        data: DataArgs,
        /// Dictionary JSON.
        #[arg(long)]
        dict: PathBuf,
    },
    /// Consistency index, worst-case certificate and residual errors.
    Consistency {
        #[command(flatten)]
        data: DataArgs,
        /// Dictionary JSON.
        #[arg(long)]
        dict: PathBuf,
        /// Also compute sprad(P_Y − P_X) from N × N projectors.
        #[arg(long)]
        cross_check: bool,
        /// Skip the cross-check above this many samples.
        #[arg(long, default_value_t = DEFAULT_PROJECTION_GUARD)]
        guard: usize,
        /// How the index is computed.
        #[arg(long, value_enum, default_value_t = PathArg::Orthonormalized)]
        path: PathArg,
    },
    /// Residual errors and √I_C across D_α = D·[[1,1],[0,α]].
    Sweep {
        #[command(flatten)]
        data: DataArgs,
        /// Two-function base dictionary (default [x, x³ − x²]).
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ALPHA_MIN)]
        alpha_min: f64,
        #[arg(long, default_value_t = DEFAULT_ALPHA_MAX)]
        alpha_max: f64,
        /// Number of log-spaced grid points.
        #[arg(long, default_value_t = DEFAULT_ALPHA_COUNT)]
        alpha_count: usize,
    },
    /// Function with the largest RRMSE, checked against random sampling.
    WorstCase {
        #[command(flatten)]
        data: DataArgs,
        /// Dictionary JSON.
        #[arg(long)]
        dict: PathBuf,
        /// Random unit coefficient vectors to try.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

fn load_data(args: &DataArgs) -> Result<SnapshotData> {
    let data = SnapshotData::load(&args.data)?;
    Ok(match args.head {
        Some(n) => data.head(n),
        None => data,
    })
}

fn fit(dict: &Dictionary, data: &SnapshotData, global: &GlobalArgs) -> Result<EdmdModel> {
    let opts = FitOptions {
        rank_tol: global.rank_tol,
    };
    Ok(fit_forward_backward(dict, &data.x, &data.y, opts)?)
}

fn emit(global: &GlobalArgs, text: &str, stdout: &mut dyn Write) -> Result<()> {
    match &global.out {
        Some(path) => write_file(path, text),
        None => stdout.write_all(text.as_bytes()).map_err(|e| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Runs one command. Results go to `--out` or `stdout`; diagnostics to `stderr`.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate {
            system,
            n_init,
            steps,
            low,
            high,
            coeffs,
        } => {
            let sys = match system {
                SystemKind::Linear05 => DynamicalSystem::linear_halving(),
                SystemKind::CustomPoly => {
                    if coeffs.is_empty() {
                        return Err(CliError::Usage("custom-poly requires --coeffs".into()));
                    }
                    DynamicalSystem::polynomial(coeffs.clone())?
                }
            };
            if low.is_nan() || high.is_nan() || low >= high {
                return Err(CliError::Usage("--low must be below --high".into()));
            }
            let data = generate(&sys, &[*low], &[*high], *n_init as usize, *steps as usize, g.seed)?;
            let summary = json!({
                "N": data.len(),
                "n": data.state_dim(),
                "seed": g.seed,
                "system": sys.name(),
                "steps": steps,
                "trajectories": n_init,
            });
            match &g.out {
                Some(path) => {
                    write_file(path, &data.to_csv())?;
                    stdout.write_all(to_json(&summary).as_bytes()).ok();
                }
                None => {
                    stdout.write_all(data.to_csv().as_bytes()).ok();
                    stderr.write_all(to_json(&summary).as_bytes()).ok();
                }
            }
            Ok(())
        }
        Command::Edmd { data, dict } => {
            let data = load_data(data)?;
            let dict = Dictionary::load(dict)?;
            let model = fit(&dict, &data, g)?;
            emit(g, &format!("{}\n", model.export().to_json()), stdout)
        }
        Command::Consistency {
            data,
            dict,
            cross_check,
            guard,
            path,
        } => {
            let data = load_data(data)?;
            let dict = Dictionary::load(dict)?;
            let model = fit(&dict, &data, g)?;
            let report = consistency_report(&model, (*path).into())?;
            let residual = residual_error(&model)?;

            let mut out = serde_json::to_value(report.to_json()).expect("serializable");
            let obj = out.as_object_mut().expect("report is an object");
            obj.insert("E".into(), json!(residual.absolute));
            obj.insert("E_rel".into(), json!(residual.relative));
            obj.insert("N".into(), json!(model.samples()));
            obj.insert("Nd".into(), json!(model.dim()));

            let mut failure = None;
            if *cross_check {
                let value = if model.samples() <= *guard {
                    let opts = FitOptions { rank_tol: g.rank_tol };
                    let sprad = projection_difference_sprad(model.dx(), model.dy(), *guard, opts)?;
                    let diff = (sprad - report.sqrt_index).abs();
                    if diff > CROSS_CHECK_TOL {
                        failure = Some(format!(
                            "sqrt(Ic) = {} but sprad(P_Y - P_X) = {sprad}",
                            report.sqrt_index
                        ));
                    }
                    json!({ "projectionSprad": sprad, "difference": diff })
                } else {
                    writeln!(stderr, "cross-check skipped: N = {} exceeds guard {}", model.samples(), guard).ok();
                    json!({ "skipped": format!("N = {} exceeds guard {}", model.samples(), guard) })
                };
                obj.insert("crossCheck".into(), value);
            }

            let text = match g.format {
                Some(Format::Csv) => format!(
                    "Ic,sqrtIc,E,E_rel,worstCaseRrmse\n{}\n",
                    [report.index, report.sqrt_index, residual.absolute, residual.relative, report.worst_case.rrmse]
                        .map(koopman_core::dynamics::format_f64)
                        .join(",")
                ),
                _ => to_json(&out),
            };
            emit(g, &text, stdout)?;
            match failure {
                Some(msg) => Err(CliError::CrossCheck(msg)),
                None => Ok(()),
            }
        }
        Command::Sweep {
            data,
            dict,
            alpha_min,
            alpha_max,
            alpha_count,
        } => {
            let data = load_data(data)?;
            let base = match dict {
                Some(p) => Dictionary::load(p)?,
                None => cubic_example_dictionary(),
            };
            let grid = log_grid(*alpha_min, *alpha_max, *alpha_count).map_err(|e| CliError::Usage(e.to_string()))?;
            let opts = FitOptions { rank_tol: g.rank_tol };
            let result = with_sweep_pool(|| alpha_sweep(&base, &data, &grid, opts))??;
            for p in result.points.iter().filter(|p| p.error.is_some()) {
                writeln!(stderr, "alpha = {}: {}", p.alpha, p.error.as_deref().unwrap_or_default()).ok();
            }
            let text = match g.format {
                Some(Format::Json) => to_json(&result),
                _ => result.to_csv(),
            };
            emit(g, &text, stdout)
        }
        Command::WorstCase { data, dict, samples } => {
            let data = load_data(data)?;
            let dict = Dictionary::load(dict)?;
            let model = fit(&dict, &data, g)?;
            let report = consistency_report(&model, ComputationPath::Orthonormalized)?;
            let sampled = sampling::sampled_max_rrmse(&model, *samples, g.seed);
            let out: Value = json!({
                "worstCaseV": report.worst_case.v,
                "worstCaseRrmse": report.worst_case.rrmse,
                "Ic": report.index,
                "sqrtIc": report.sqrt_index,
                "sampledMax": sampled,
                "samples": samples,
            });
            emit(g, &to_json(&out), stdout)?;
            if sampled > report.sqrt_index + SAMPLE_BOUND_SLACK {
                return Err(CliError::CrossCheck(format!(
                    "sampled RRMSE {sampled} exceeds certified {}",
                    report.sqrt_index
                )));
            }
            Ok(())
        }
    }
}

/// Runs `f` on a rayon pool capped by `KOOPMAN_THREADS` when set.
fn with_sweep_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match std::env::var("KOOPMAN_THREADS") {
        Ok(v) => {
            let threads: usize = v
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("KOOPMAN_THREADS must be a positive integer, got {v:?}")))?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            Ok(pool.install(f))
        }
        Err(_) => Ok(f()),
    }
}
