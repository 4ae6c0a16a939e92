use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use randhorizon::estimators::{GridSpec, OccupancyHistogram};
use randhorizon::oracle::{run_suite, SuiteOptions};
use randhorizon::plot::{curve_svg, occupancy_svg, CurveKind, OccupancyTable};
use randhorizon::policy::checkpoint::Checkpoint;
use randhorizon::trainer::{lr_sweep, train_to_dir, ExperimentConfig, RunMetrics, TrainedPolicy, OUTPUT_ROOT_ENV};

/// Policy-gradient training for random-horizon control problems.
#[derive(Parser)]
#[command(name = "randhorizon", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one policy and write metrics, checkpoints and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train once per (learning rate, repeat) and write a summary table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated learning rates.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        lrs: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
    },
    /// Run the oracle and invariant checks.
    Verify {
        /// Monte Carlo sample size per check.
        #[arg(long, default_value_t = SuiteOptions::default().samples)]
        samples: usize,
        #[arg(long, default_value_t = SuiteOptions::default().seed)]
        seed: u64,
        /// Negate every Monte Carlo gradient (the suite should then fail).
        #[arg(long)]
        negate_gradients: bool,
    },
    /// Render a metrics or occupancy CSV as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample trajectories and write a state-occupancy CSV.
    Occupancy {
        #[arg(long)]
        config: PathBuf,
        /// Policy checkpoint (.json or .bin); defaults to the initial policy.
        #[arg(long, conflicts_with = "zero_policy")]
        checkpoint: Option<PathBuf>,
        /// Use the all-zero policy.
        #[arg(long)]
        zero_policy: bool,
        #[arg(long, default_value_t = 1000)]
        trajectories: usize,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum PlotKind {
    Return,
    #[value(name = "effective_lr", alias = "effective-lr")]
    EffectiveLr,
    Occupancy,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn config(message: impl ToString) -> Self {
        Self { code: 2, message: message.to_string() }
    }

    fn run(message: impl ToString) -> Self {
        Self { code: 1, message: message.to_string() }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    ExperimentConfig::from_path(path).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

fn output_root() -> Option<PathBuf> {
    std::env::var_os(OUTPUT_ROOT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::run(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| Failure::run(format!("{}: {e}", path.display())))
}

fn train(config: &Path) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    let dir = cfg.resolved_output_dir(output_root().as_deref());
    let out = train_to_dir(&cfg, &dir).map_err(Failure::run)?;
    let hit = out.metrics.rows.last().map_or(f64::NAN, |r| r.mean_hitting_time);
    println!(
        "{} iterations, final smoothed negative return {:.6e}, last mean hitting time {hit:.1}",
        out.metrics.len(),
        out.metrics.final_smoothed_negative_return().unwrap_or(f64::NAN),
    );
    println!("wrote {}", dir.display());
    Ok(())
}

fn sweep(config: &Path, lrs: &[f64], repeats: usize) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    for &lr in lrs {
        let mut c = cfg.clone();
        c.train.lr = lr;
        c.validate().map_err(Failure::config)?;
    }
    let root = cfg.resolved_output_dir(output_root().as_deref());
    let table = lr_sweep(&cfg, lrs, repeats, Some(&root)).map_err(Failure::config)?;
    write(&root.join("summary.csv"), table.to_csv())?;
    for c in &table.cells {
        match &c.error {
            None => println!(
                "lr {:e} repeat {}: final smoothed negative return {:.6e}",
                c.lr,
                c.repeat,
                c.final_neg_return.unwrap_or(f64::NAN)
            ),
            Some(e) => println!("lr {:e} repeat {}: failed after {} iterations: {e}", c.lr, c.repeat, c.iterations),
        }
    }
    if let Some(best) = table.best_lr() {
        println!("best lr {best:e}");
    }
    println!("wrote {}", root.join("summary.csv").display());
    if table.any_failed() {
        let n = table.cells.iter().filter(|c| !c.succeeded()).count();
        return Err(Failure::run(format!("{n} of {} sweep cells failed", table.cells.len())));
    }
    Ok(())
}

fn verify(opts: SuiteOptions) -> Result<(), Failure> {
    if opts.samples < 2 {
        return Err(Failure::config("--samples must be at least 2"));
    }
    let report = run_suite(&opts);
    println!("{report}");
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::run("verification failed"))
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::run(format!("{}: {e}", path.display())))
}

fn plot(input: &Path, kind: PlotKind, out: &Path) -> Result<(), Failure> {
    let text = read_text(input)?;
    let bad = |e: randhorizon::Error| Failure::run(format!("{}: {e}", input.display()));
    let svg = match kind {
        PlotKind::Occupancy => occupancy_svg(&OccupancyTable::from_csv(&text).map_err(bad)?),
        PlotKind::Return | PlotKind::EffectiveLr => {
            let metrics = RunMetrics::from_csv(&text).map_err(bad)?;
            let curve =
                if matches!(kind, PlotKind::Return) { CurveKind::NegativeReturn } else { CurveKind::EffectiveLr };
            curve_svg(&metrics, curve).map_err(bad)?
        }
    };
    write(out, svg)
}

fn occupancy(
    config: &Path,
    checkpoint: Option<&Path>,
    zero: bool,
    k: usize,
    bins: usize,
    out: &Path,
) -> Result<(), Failure> {
    let cfg = load_config(config)?;
    if k == 0 || bins == 0 {
        return Err(Failure::config("--trajectories and --bins must be positive"));
    }
    let policy = match checkpoint {
        None if zero => TrainedPolicy::zeros(&cfg).map_err(Failure::config)?,
        None => TrainedPolicy::init(&cfg).map_err(Failure::config)?,
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| Failure::run(format!("{}: {e}", path.display())))?;
            let ck = if path.extension().is_some_and(|e| e == "bin") {
                Checkpoint::from_bytes(&bytes)
            } else {
                std::str::from_utf8(&bytes)
                    .map_err(|e| randhorizon::Error::Parse(e.to_string()))
                    .and_then(Checkpoint::from_json)
            };
            let ck = ck.map_err(|e| Failure::run(format!("{}: {e}", path.display())))?;
            if ck.layer_dims != cfg.layer_dims() || ck.kind != cfg.policy.kind {
                return Err(Failure::config(format!("{} does not match the configured policy", path.display())));
            }
            TrainedPolicy::from_checkpoint(&ck).map_err(Failure::run)?
        }
    };
    let env = cfg.env.build().map_err(Failure::config)?;
    let batch = policy.sample_batch(env.as_ref(), k, cfg.train.seed, 0).map_err(Failure::run)?;
    let hist = OccupancyHistogram::from_batch(&batch, GridSpec::for_env(&cfg.env, bins)).map_err(Failure::run)?;
    let censored = batch.iter().filter(|t| t.censored()).count();
    println!("{k} trajectories, {} visited states, {censored} censored", hist.total);
    write(out, hist.to_csv())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config } => train(&config),
        Command::Sweep { config, lrs, repeats } => sweep(&config, &lrs, repeats),
        Command::Verify { samples, seed, negate_gradients } => verify(SuiteOptions { seed, samples, negate_gradients }),
        Command::Plot { input, kind, out } => plot(&input, kind, &out),
        Command::Occupancy { config, checkpoint, zero_policy, trajectories, bins, out } => {
            occupancy(&config, checkpoint.as_deref(), zero_policy, trajectories, bins, &out)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
