use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use recon_core::geometry::{GridSpec, Norm};
use recon_core::harness::experiment::{load_config, run_config, Experiment};
use recon_core::harness::planted::{generate_emd_instance, generate_gap_instance};
use recon_core::io::save_point_set;

/// Robust set reconciliation experiments.
#[derive(Debug, Parser)]
#[command(name = "recon", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// EMD reconciliation on planted instances.
    Emd(RunArgs),
    /// Gap-guarantee reconciliation.
    Gap(RunArgs),
    /// Gap-guarantee reconciliation with the one-sided grid.
    GapLowd(RunArgs),
    /// IBLT decode success at a given load.
    IbltLoad(RunArgs),
    /// Empirical vs exact LSH collision probabilities.
    LshCalibrate(RunArgs),
    /// Error propagation during breadth-first peeling.
    PeelSim(RunArgs),
    /// Write a planted instance as two point-set files.
    GenInstance(GenArgs),
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Metrics destination (JSON lines); stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum InstanceKind {
    Emd,
    Gap,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
    Hamming,
}

impl From<NormArg> for Norm {
    fn from(n: NormArg) -> Norm {
        match n {
            NormArg::L1 => Norm::L1,
            NormArg::L2 => Norm::L2,
            NormArg::Hamming => Norm::Hamming,
        }
    }
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: InstanceKind,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    delta: u32,
    #[arg(long, value_enum, default_value = "l1")]
    norm: NormArg,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    k: usize,
    /// EMD: perturbation radius of planted pairs. Gap: r1.
    #[arg(long)]
    near: f64,
    /// EMD: minimum distance of outliers. Gap: r2.
    #[arg(long)]
    far: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file for Alice's points.
    #[arg(long)]
    alice: PathBuf,
    /// Output file for Bob's points.
    #[arg(long)]
    bob: PathBuf,
}

fn run_experiment(expected: Experiment, args: &RunArgs) -> anyhow::Result<ExitCode> {
    let mut cfg = load_config(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if cfg.experiment != expected {
        bail!("config describes a `{}` experiment, not `{}`", cfg.experiment.as_str(), expected.as_str());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    let report = run_config(&cfg)?;
    match &args.out {
        Some(path) => {
            let mut f = std::io::BufWriter::new(
                std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
            );
            report.write_metrics(&mut f)?;
            f.flush()?;
        }
        None => report.write_metrics(std::io::stdout().lock())?,
    }
    eprintln!(
        "{}: {} trials, {} failures ({:.4})",
        expected.as_str(),
        report.trials,
        report.failures,
        report.failure_rate()
    );
    if report.ceiling_exceeded {
        eprintln!("failure rate exceeds the configured ceiling");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn gen_instance(a: &GenArgs) -> anyhow::Result<ExitCode> {
    let space = GridSpec::new(a.delta, a.d, a.norm.into())?;
    let (s_a, s_b, note) = match a.kind {
        InstanceKind::Emd => {
            let inst = generate_emd_instance(&space, a.n, a.k, a.near, a.far, a.seed)?;
            (inst.s_a, inst.s_b, format!("planted EMD_k bound {}", inst.planted_emd_k_bound))
        }
        InstanceKind::Gap => {
            let inst = generate_gap_instance(&space, a.n, a.k, a.near, a.far, a.seed)?;
            (inst.s_a, inst.s_b, format!("far indices {:?}", inst.far_indices))
        }
    };
    save_point_set(&s_a, &a.alice)?;
    save_point_set(&s_b, &a.bob)?;
    eprintln!("wrote {} and {}; {note}", a.alice.display(), a.bob.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Emd(a) => run_experiment(Experiment::Emd, a),
        Command::Gap(a) => run_experiment(Experiment::Gap, a),
        Command::GapLowd(a) => run_experiment(Experiment::GapLowd, a),
        Command::IbltLoad(a) => run_experiment(Experiment::IbltLoad, a),
        Command::LshCalibrate(a) => run_experiment(Experiment::LshCalibrate, a),
        Command::PeelSim(a) => run_experiment(Experiment::PeelSim, a),
        Command::GenInstance(a) => gen_instance(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
