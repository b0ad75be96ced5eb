use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resflow::harness::{
    run_compile, run_complexity, run_convergence, run_shared, CompileSource, ExperimentConfig,
};
use resflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "resflow",
    version,
    about = "ReLU ResNet constructions for ODE flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Experiment config (flat `key = value` file)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overrides `out_dir` from the config
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Random seed, overrides `seed` from the config
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sup error of built ResNets against the reference flow, per n
    Convergence,
    /// Per-block network size as n grows
    Complexity,
    /// Compile a PWL function into a ReLU network and verify it
    Compile(CompileArgs),
    /// Weight-shared ResNets for a rhs frozen in time, per repetition k
    Shared,
}

#[derive(Args)]
struct CompileArgs {
    /// PWL function file (JSON)
    #[arg(long, conflicts_with = "function")]
    pwl: Option<PathBuf>,

    /// Built-in function to interpolate: zero, sin, cos, tanh, poly, const
    #[arg(long, required_unless_present = "pwl")]
    function: Option<String>,

    #[arg(long, default_value_t = 1)]
    dim: usize,

    /// Half-width of the interpolation cube
    #[arg(long, default_value_t = 1.0)]
    radius: f64,

    /// Target triangulation fineness
    #[arg(long, default_value_t = 0.25)]
    delta: f64,

    /// Coefficients for `poly` and `const`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coeffs: Vec<f64>,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |s| format!("{s:.4}"))
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Internal(e.to_string()))?;
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Convergence => {
            let report = run_convergence(&cfg)?;
            let last = report.rows.last().expect("n list is nonempty");
            println!(
                "convergence: {} n values, slope {}, sup error at n={} is {:e} (bound {:e}), wrote {}",
                report.rows.len(),
                fmt_opt(report.slope),
                last.n,
                last.sup_error,
                last.apriori_bound,
                cfg.out_dir.join("convergence.csv").display()
            );
        }
        Command::Complexity => {
            let rows = run_complexity(&cfg)?;
            let last = rows.last().expect("n list is nonempty");
            println!(
                "complexity: {} n values, block at n={} has {} neurons and depth {}, wrote {}",
                rows.len(),
                last.n,
                last.neurons,
                last.depth,
                cfg.out_dir.join("complexity.csv").display()
            );
        }
        Command::Compile(args) => {
            let source = match (args.pwl, args.function) {
                (Some(path), _) => CompileSource::PwlFile(path),
                (None, Some(name)) => CompileSource::Function {
                    name,
                    dim: args.dim,
                    radius: args.radius,
                    delta: args.delta,
                    coeffs: args.coeffs,
                },
                (None, None) => unreachable!("clap requires one source"),
            };
            let s = run_compile(&source, &cfg.out_dir, cfg.seed)?;
            println!(
                "compile: depth {}, {} neurons, max deviation {:e} over {} points, wrote {}",
                s.depth,
                s.neurons,
                s.max_deviation,
                s.samples,
                cfg.out_dir.join("network.json").display()
            );
        }
        Command::Shared => {
            let rows = run_shared(&cfg)?;
            let (first, last) = (&rows[0], &rows[rows.len() - 1]);
            println!(
                "shared: {} distinct parameter sets, sup error {:e} at k={} and {:e} at k={}, wrote {}",
                last.distinct_params,
                first.sup_error,
                first.k,
                last.sup_error,
                last.k,
                cfg.out_dir.join("shared.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
