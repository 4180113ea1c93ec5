use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dsgso::balance::{sinkhorn_knopp, DEFAULT_MAX_ITER, DEFAULT_TOL};
use dsgso::birkhoff::{birkhoff_decompose, DEFAULT_ZERO_TOL};
use dsgso::bounds::{bounds_report, LocalMoments};
use dsgso::demo::{run_sensor_demo, FieldKind, SensorFieldConfig};
use dsgso::graph::{validate_weights, Graph};
use dsgso::io;
use dsgso::shift::{apply_filter, diffuse, FilterSpec, GraphSignal};
use dsgso::{DSOperator, Error, Result};

/// Tolerance used when loading an operator that should already be doubly stochastic.
const LOAD_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "dsgso", version, about = "Doubly stochastic graph shift operators")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,

    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Output format; each subcommand has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Mtx,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Field {
    Bumps,
    Gradient,
}

impl From<Field> for FieldKind {
    fn from(f: Field) -> FieldKind {
        match f {
            Field::Bumps => FieldKind::Bumps,
            Field::Gradient => FieldKind::Gradient,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Balance a nonnegative weight matrix (.mtx, or .csv edge list) with Sinkhorn-Knopp.
    Balance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
    },
    /// Apply the operator k times to a signal.
    Shift {
        #[arg(long)]
        op: PathBuf,
        #[arg(long)]
        signal: PathBuf,
        #[arg(long, default_value_t = 1)]
        k: usize,
    },
    /// Apply the polynomial filter Σ h_k S^k to a signal.
    Filter {
        #[arg(long)]
        op: PathBuf,
        /// Single-column CSV of h_0, h_1, ...
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long)]
        signal: PathBuf,
    },
    /// Decompose the operator into a convex combination of permutations.
    Birkhoff {
        #[arg(long)]
        op: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ZERO_TOL)]
        zero_tol: f64,
    },
    /// Bias, variance and power bounds at one vertex, with a Monte Carlo check.
    Bounds {
        #[arg(long)]
        op: PathBuf,
        #[arg(long)]
        vertex: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 0.0)]
        mu: f64,
        /// Monte Carlo trials; 0 skips the simulation.
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// Denoise a synthetic temperature field measured by scattered sensors.
    DemoSensors {
        #[arg(long, default_value_t = 64)]
        n_sensors: usize,
        #[arg(long, default_value_t = 2.0)]
        noise_sigma: f64,
        /// Kernel distance scale in km.
        #[arg(long, default_value_t = 13.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, value_enum, default_value_t = Field::Bumps)]
        field: Field,
    },
}

#[derive(Serialize)]
struct BalanceSummary {
    schema: u32,
    n: usize,
    nnz: usize,
    iterations: usize,
    residual: f64,
    row_scaling: Vec<f64>,
    col_scaling: Vec<f64>,
}

#[derive(Serialize)]
struct MatrixJson {
    n: usize,
    rows: Vec<Vec<f64>>,
}

fn emit(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| Error::Io {
                    path: PathBuf::from("<stdout>"),
                    source: e,
                })
        }
    }
}

fn unsupported(format: Format, what: &str) -> Error {
    let name = match format {
        Format::Csv => "csv",
        Format::Mtx => "mtx",
        Format::Json => "json",
    };
    Error::InvalidParameter(format!("--format {name} is not available for {what}"))
}

fn load_operator(path: &Path) -> Result<DSOperator> {
    DSOperator::from_matrix(io::read_weight_matrix(path)?, LOAD_TOL)
}

fn load_signal(path: &Path, n: usize) -> Result<GraphSignal> {
    let values = io::read_signal(path)?;
    if values.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{} has {} values but the operator has {n} vertices",
            path.display(),
            values.len()
        )));
    }
    Ok(GraphSignal::new(values))
}

fn signal_text(format: Option<Format>, y: &GraphSignal) -> Result<String> {
    match format.unwrap_or(Format::Csv) {
        Format::Csv => Ok(io::format_signal(y.values())),
        Format::Json => io::to_json(y),
        f => Err(unsupported(f, "signals")),
    }
}

fn run(cli: Cli) -> Result<()> {
    let output = cli.output.as_deref();
    match cli.command {
        Command::Balance { input, tol, max_iter } => {
            let w = io::read_weight_matrix(&input)?;
            let diag = validate_weights(&w);
            for issue in &diag.issues {
                log::warn!("{issue}");
            }
            let res = sinkhorn_knopp(&w, tol, max_iter)?;
            let op = &res.operator;
            log::info!(
                "balanced in {} iterations, residual {:e}",
                op.iterations_used(),
                op.tolerance_achieved()
            );
            let summary = BalanceSummary {
                schema: 1,
                n: op.n(),
                nnz: op.matrix().nnz(),
                iterations: op.iterations_used(),
                residual: op.tolerance_achieved(),
                row_scaling: res.row_scaling.clone(),
                col_scaling: res.col_scaling.clone(),
            };
            let text = match cli.format.unwrap_or(Format::Mtx) {
                Format::Mtx => io::format_matrix_market(op.matrix()),
                Format::Csv => io::format_edge_list(&Graph::from_weights(op.matrix().clone())?),
                Format::Json => io::to_json(&MatrixJson {
                    n: op.n(),
                    rows: op.matrix().to_rows(),
                })?,
            };
            emit(output, &text)?;
            let sidecar = io::to_json(&summary)?;
            match output {
                Some(path) => {
                    let mut name = path.as_os_str().to_owned();
                    name.push(".json");
                    emit(Some(Path::new(&name)), &sidecar)?;
                }
                None => eprint!("{sidecar}"),
            }
        }
        Command::Shift { op, signal, k } => {
            let s = load_operator(&op)?;
            let x = load_signal(&signal, s.n())?;
            let y = diffuse(&s, &x, k)?;
            emit(output, &signal_text(cli.format, &y)?)?;
        }
        Command::Filter { op, coeffs, signal } => {
            let s = load_operator(&op)?;
            let h = FilterSpec::new(io::read_signal(&coeffs)?)?;
            let x = load_signal(&signal, s.n())?;
            let y = apply_filter(&s, &h, &x)?;
            emit(output, &signal_text(cli.format, &y)?)?;
        }
        Command::Birkhoff { op, zero_tol } => {
            let s = load_operator(&op)?;
            let d = birkhoff_decompose(&s, zero_tol)?;
            log::info!(
                "{} permutations (limit {})",
                d.count(),
                dsgso::BirkhoffDecomposition::max_terms(s.n())
            );
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => emit(output, &io::to_json(&d)?)?,
                f => return Err(unsupported(f, "birkhoff")),
            }
        }
        Command::Bounds {
            op,
            vertex,
            sigma,
            rho,
            mu,
            trials,
        } => {
            let s = load_operator(&op)?;
            let moments = LocalMoments::new(mu, sigma, rho)?;
            let trials = (trials > 0).then_some(trials);
            let report = bounds_report(&s, vertex, moments, trials, cli.seed)?;
            match cli.format.unwrap_or(Format::Json) {
                Format::Json => emit(output, &io::to_json(&report)?)?,
                f => return Err(unsupported(f, "bounds")),
            }
        }
        Command::DemoSensors {
            n_sensors,
            noise_sigma,
            scale,
            threshold,
            k,
            field,
        } => {
            let config = SensorFieldConfig {
                n_sensors,
                noise_sigma,
                scale_km: scale,
                threshold,
                seed: cli.seed,
                shifts: k,
                field: field.into(),
            };
            let report = run_sensor_demo(&config)?;
            log::info!(
                "input {:.2} dB, output {:.2} dB, gain {:.2} dB",
                report.input_snr_db,
                report.output_snr_db,
                report.gain_db
            );
            let text = match cli.format.unwrap_or(Format::Json) {
                Format::Json => io::to_json(&report)?,
                Format::Csv => {
                    let mut out = String::from("id,lat,lon,alt,truth,noisy,denoised\n");
                    for v in &report.vertices {
                        out.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            v.id, v.lat, v.lon, v.alt, v.truth, v.noisy, v.denoised
                        ));
                    }
                    out
                }
                f => return Err(unsupported(f, "demo-sensors")),
            };
            emit(output, &text)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
