use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noisy_coreset::assumptions::{assess, AssumptionParams, DEFAULT_TRIM};
use noisy_coreset::coreset::{build_cn, build_cn_alpha_with, coreset_summary, CnAlphaParams, RadiusRule};
use noisy_coreset::rng::substream;
use noisy_coreset::{perturb, selftest, Algorithm, Dataset, NoiseFamily, PointSource};

use noisy_coreset_bench::data::{demo_blobs, load_csv, subsample, Schema};
use noisy_coreset_bench::emit::{emit, Format};
use noisy_coreset_bench::experiment::{
    noise_spec, run_beta_sweep, run_grid, ExperimentConfig, NoiseKind, SweepConfig, REFERENCE_EPS, REFERENCE_LEVELS,
};
use noisy_coreset_bench::{BenchError, Result};

/// Coresets of noisy datasets: experiment grid, beta sweep and diagnostics.
#[derive(Parser)]
#[command(name = "ncoreset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the (algorithm, eps, noise level) grid and emit one row per cell.
    Bench(BenchArgs),
    /// Err and Err_1 of the four-site grid as beta varies.
    Sweep(SweepArgs),
    /// Build a single coreset of a noisy copy and print its summary.
    Coreset(CoresetArgs),
    /// Report the stability and radius assumptions of a dataset.
    Check(CheckArgs),
    /// Run the built-in statistical self-checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct DataArgs {
    /// CSV path, or `synthetic:blobs`.
    #[arg(long, default_value = "synthetic:blobs")]
    dataset: String,
    /// Schema file listing `name kind` per column.
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Keep this many rows, drawn uniformly without replacement.
    #[arg(long)]
    subsample: Option<usize>,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct OutArgs {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv, jsonl or markdown.
    #[arg(long, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// i, ii or correlated.
    #[arg(long, default_value = "i")]
    noise_model: NoiseKind,
    #[arg(long, default_value = "gaussian")]
    family: NoiseFamily,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// cn, cnalpha, or both (comma separated).
    #[arg(long, value_delimiter = ',', default_value = "cn,cnalpha")]
    alg: Vec<Algorithm>,
    /// Use the theoretical filtering radius with this alpha.
    #[arg(long)]
    alpha: Option<f64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    #[arg(long, default_value_t = 2.0)]
    beta_lo: f64,
    #[arg(long, default_value_t = 3.0)]
    beta_hi: f64,
    #[arg(long, default_value_t = 0.05)]
    step: f64,
    #[arg(long, default_value_t = 1.0)]
    theta: f64,
    #[arg(long, default_value_t = 500)]
    candidates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args)]
struct CoresetArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "cnalpha")]
    alg: Algorithm,
    #[arg(long, default_value_t = 0.3)]
    eps: f64,
    #[arg(long, default_value = "i")]
    noise_model: NoiseKind,
    #[arg(long, default_value = "gaussian")]
    family: NoiseFamily,
    #[arg(long, default_value_t = 0.01)]
    level: f64,
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 2.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    level: f64,
    #[arg(long, default_value_t = DEFAULT_TRIM)]
    trim: f64,
}

fn load(args: &DataArgs) -> Result<Dataset<f64>> {
    let data = if args.dataset == "synthetic:blobs" {
        demo_blobs(20_000, 8, args.k.max(1), 10.0, args.seed)?
    } else {
        let schema = args.schema.as_deref().map(Schema::read).transpose()?;
        let (data, report) = load_csv(args.dataset.as_ref(), schema.as_ref())?;
        log::info!(
            "{}: {} rows read, {} dropped, d = {}",
            args.dataset,
            report.rows_read,
            report.rows_dropped,
            report.columns.len()
        );
        data
    };
    match args.subsample {
        Some(m) => subsample(&data, m, args.seed),
        None => Ok(data),
    }
}

fn radius_rule(alpha: Option<f64>) -> Result<RadiusRule> {
    match alpha {
        None => Ok(RadiusRule::Empirical),
        Some(a) if a > 1.0 => Ok(RadiusRule::Theoretical { alpha: a }),
        Some(a) => Err(BenchError::Config(format!("alpha must exceed 1, got {a}"))),
    }
}

fn write_out<R>(rows: &[R], out: &OutArgs) -> Result<()>
where
    R: serde::Serialize + noisy_coreset_bench::emit::TableRow,
{
    match &out.out {
        Some(path) => {
            let file = std::fs::File::create(path).map_err(|source| BenchError::Io {
                path: path.clone(),
                source,
            })?;
            emit(rows, out.format, std::io::BufWriter::new(file))
        }
        None => emit(rows, out.format, std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Bench(a) => {
            let data = load(&a.data)?;
            let config = ExperimentConfig {
                k: a.data.k,
                eps: a.eps.unwrap_or_else(|| REFERENCE_EPS.to_vec()),
                noise: a.noise_model,
                family: a.family,
                levels: a.levels.unwrap_or_else(|| REFERENCE_LEVELS.to_vec()),
                trials: a.trials,
                seed: a.data.seed,
                algorithms: a.alg,
                radius: radius_rule(a.alpha)?,
            };
            let rows = run_grid(&data, &config)?;
            write_out(&rows, &a.out)?;
            Ok(rows.iter().all(|r| r.error.is_none()))
        }
        Command::Sweep(a) => {
            let config = SweepConfig {
                n: a.n,
                beta_lo: a.beta_lo,
                beta_hi: a.beta_hi,
                step: a.step,
                theta: a.theta,
                candidates: a.candidates,
                k: 3,
                seed: a.seed,
            };
            write_out(&run_beta_sweep(&config)?, &a.out)?;
            Ok(true)
        }
        Command::Coreset(a) => {
            let data = load(&a.data)?;
            let d = data.dim();
            let cov = match a.noise_model {
                NoiseKind::Correlated => Some(noisy_coreset::Covariance::random(d, &mut substream(a.data.seed, &[3]))?),
                _ => None,
            };
            let spec = noise_spec(a.noise_model, a.family, a.level, cov.as_ref())?;
            let noisy = perturb(&data, &spec, &mut substream(a.data.seed, &[1]))?.noisy;
            let mut rng = substream(a.data.seed, &[2]);
            let (coreset, trace) = match a.alg {
                Algorithm::Cn => (build_cn(&noisy, a.eps, a.data.k, &mut rng)?, None),
                Algorithm::CnAlpha => {
                    let params = CnAlphaParams {
                        radius: radius_rule(a.alpha)?,
                        ..CnAlphaParams::new(a.eps, spec.expected_energy_per_point(d) / d as f64, a.data.k)
                    };
                    let (s, t) = build_cn_alpha_with(&noisy, &params, &mut rng)?;
                    (s, Some(t))
                }
            };
            let summary = coreset_summary(&coreset, trace.as_ref())?;
            let mut out = std::io::stdout().lock();
            let io = |source| BenchError::Io {
                path: "<stdout>".into(),
                source,
            };
            writeln!(out, "algorithm  {}", a.alg).map_err(io)?;
            writeln!(out, "n          {}", noisy.n()).map_err(io)?;
            writeln!(out, "size       {}", summary.size).map_err(io)?;
            writeln!(out, "weight     {:.3}", summary.total_weight).map_err(io)?;
            for c in &summary.clusters {
                writeln!(
                    out,
                    "cluster {:>3}  noisy {:>7}  kept {:>7}  sampled {:>5}  retention {:.3}  weight {:.1}",
                    c.cluster, c.noisy_size, c.filtered_size, c.sample_size, c.retention, c.weight_sum
                )
                .map_err(io)?;
            }
            Ok(true)
        }
        Command::Check(a) => {
            let data = load(&a.data)?;
            let report = assess(
                &data,
                &AssumptionParams {
                    k: a.data.k,
                    alpha: a.alpha,
                    noise_level: a.level,
                    trim: a.trim,
                    seed: a.data.seed,
                },
            )?;
            println!("gamma_hat               {:.4}", report.gamma_hat);
            println!(
                "stability threshold     {:.4}{}",
                report.gamma_threshold,
                if report.threshold_clamped { " (clamped)" } else { "" }
            );
            println!("stable                  {}", report.stable);
            println!("max radius ratio        {:.3}", report.max_radius_ratio);
            println!("trimmed max ratio       {:.3}", report.trimmed_max_radius_ratio);
            println!("limited outliers        {}", report.limited_outliers);
            println!("trimmed limited         {}", report.trimmed_limited_outliers);
            Ok(true)
        }
        Command::Selftest { seed } => {
            let outcomes = selftest::run_all(seed)?;
            for o in &outcomes {
                println!("{} {:<32} {}", if o.passed { "PASS" } else { "FAIL" }, o.name, o.detail);
            }
            Ok(outcomes.iter().all(|o| o.passed))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Some(threads) = std::env::var("NCORESET_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
    {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
