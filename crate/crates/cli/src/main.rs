mod config;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use emptywave_core::bohmian::{self, BranchOptions};
use emptywave_core::experiments::{
    self, compare_models, default_statistics, linspace, sweep, ExperimentError, ExperimentName, ExperimentSpec,
    Model, Statistic, SweepParam,
};

use config::{Format, RunConfig, SweepConfig, ThetaSetting};
use output::Report;

/// Two-photon interferometry under three interpretations: exact Fock
/// amplitudes (CI), Bohmian branch dynamics (Bohm3ND) and the empty-wave
/// model (DeBroglie3D).
#[derive(Parser)]
#[command(name = "emptywave", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List built-in experiments and their statistics
    List,
    /// Run one parameter point and write a result table
    Run(RunArgs),
    /// Run a grid over one parameter
    Sweep(SweepArgs),
    /// Print a side-by-side model table with divergence flags
    Compare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; flags given on the command line take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    experiment: Option<String>,
    /// CI, Bohm3ND, DeBroglie3D or all (repeatable, comma separated)
    #[arg(long, value_delimiter = ',')]
    model: Vec<String>,
    /// Source phase: a number or "uniform"
    #[arg(long, allow_negative_numbers = true)]
    delta_theta: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    delta_phi: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    tau: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Monte-Carlo samples [default: $EMPTYWAVE_SAMPLES or 100000]
    #[arg(long)]
    samples: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Use exact enumeration for the sampling models
    #[arg(long)]
    analytic: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Print the resolved config as TOML and exit
    #[arg(long)]
    dump_config: bool,
    /// Also write Bohmian branch histories to this CSV (run only)
    #[arg(long)]
    trajectories: Option<PathBuf>,
    /// Number of histories kept for --trajectories
    #[arg(long, default_value_t = 10)]
    keep: usize,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// delta_theta, delta_phi, tau or alpha
    #[arg(long)]
    param: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    from: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    to: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
}

enum Failure {
    Validation(String),
    Engine(String),
    /// Reader went away (e.g. piped into `head`).
    Closed,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_validation() {
            Self::Validation(e.to_string())
        } else {
            Self::Engine(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Self::Closed;
        }
        Self::Engine(format!("i/o: {e}"))
    }
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Validation(msg.into()))
}

fn resolve(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match (&args.config, &args.experiment) {
        (Some(path), _) => RunConfig::load(path).map_err(Failure::Validation)?,
        (None, Some(name)) => RunConfig::new(name.parse()?),
        (None, None) => return invalid("--experiment or --config is required"),
    };
    if let Some(name) = &args.experiment {
        cfg.experiment = name.parse()?;
    }
    if !args.model.is_empty() {
        let mut models = Vec::new();
        for m in &args.model {
            if m.eq_ignore_ascii_case("all") {
                models.extend(Model::ALL);
            } else {
                models.push(m.parse::<Model>()?);
            }
        }
        models.sort();
        models.dedup();
        cfg.models = models;
    }
    if cfg.models.is_empty() {
        return invalid("no models selected");
    }
    if let Some(t) = &args.delta_theta {
        cfg.params.delta_theta = ThetaSetting::parse(t).map_err(|e| Failure::Validation(format!("--delta-theta: {e}")))?;
    }
    let p = &mut cfg.params;
    for (slot, flag) in [
        (&mut p.delta_phi, args.delta_phi),
        (&mut p.tau, args.tau),
        (&mut p.alpha, args.alpha),
        (&mut p.sigma, args.sigma),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if args.samples.is_some() {
        cfg.samples = args.samples;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.analytic |= args.analytic;
    if args.out.is_some() {
        cfg.out = args.out.clone();
    }
    if let Some(f) = args.format {
        cfg.format = f;
    }
    cfg.resolve_samples().map_err(Failure::Validation)?;
    cfg.params.params().validated()?;
    Ok(cfg)
}

fn spec_of(cfg: &RunConfig) -> ExperimentSpec {
    ExperimentSpec::new(cfg.experiment, cfg.params.params())
        .with_models(&cfg.models)
        .with_samples(cfg.samples.unwrap_or(config::DEFAULT_SAMPLES), cfg.seed)
        .analytic(cfg.analytic)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| Failure::Validation(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn dump(cfg: &RunConfig) -> Result<(), Failure> {
    print!("{}", cfg.to_toml());
    Ok(())
}

fn cmd_list() -> Result<(), Failure> {
    let mut w = io::stdout().lock();
    for e in ExperimentName::ALL {
        writeln!(w, "{e}")?;
        writeln!(w, "    {}", e.description())?;
        for s in default_statistics(e) {
            let kind = match &s {
                Statistic::Probability { .. } => "probability",
                Statistic::MeanCount { .. } => "mean count",
            };
            writeln!(w, "    - {} ({kind})", s.name())?;
        }
    }
    writeln!(w, "models: {}", Model::ALL.map(|m| m.as_str()).join(", "))?;
    Ok(())
}

fn cmd_run(args: &RunArgs, compare: bool) -> Result<(), Failure> {
    let cfg = resolve(args)?;
    if cfg.sweep.is_some() {
        return invalid("config has a [sweep] block; use the sweep command");
    }
    if args.dump_config {
        return dump(&cfg);
    }
    if let Some(path) = &args.trajectories {
        let circuit = experiments::build(cfg.experiment, &cfg.params.params())?;
        let opts = BranchOptions {
            history_limit: args.keep,
            ..Default::default()
        };
        let ens = bohmian::sample_branch_dynamics(&circuit, args.keep.max(1) as u64, cfg.seed, &opts)
            .map_err(|e| Failure::Engine(format!("Bohm3ND engine failed: {e}")))?;
        let f = File::create(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        ens.write_history_csv(&circuit, BufWriter::new(f))?;
    }
    let result = compare_models(&spec_of(&cfg))?;
    if compare {
        output::write_comparison(&result, sink(&cfg.out)?)?;
    } else {
        Report::single("run", &cfg, &result).write(cfg.format, sink(&cfg.out)?)?;
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let mut cfg = resolve(&args.run)?;
    let mut block = cfg.sweep.clone();
    if let Some(p) = &args.param {
        let param: SweepParam = p.parse()?;
        match block.as_mut() {
            Some(b) => b.param = param,
            None => {
                let (Some(from), Some(to), Some(steps)) = (args.from, args.to, args.steps) else {
                    return invalid("sweep needs --from, --to and --steps");
                };
                block = Some(SweepConfig { param, from, to, steps });
            }
        }
    }
    let Some(mut block) = block else {
        return invalid("sweep needs --param (or a [sweep] block in the config)");
    };
    if let Some(v) = args.from {
        block.from = v;
    }
    if let Some(v) = args.to {
        block.to = v;
    }
    if let Some(v) = args.steps {
        block.steps = v;
    }
    if block.steps == 0 || !block.from.is_finite() || !block.to.is_finite() {
        return invalid("sweep range must be finite with at least one step");
    }
    cfg.sweep = Some(block.clone());
    if args.run.dump_config {
        return dump(&cfg);
    }
    let grid = linspace(block.from, block.to, block.steps);
    for &v in &grid {
        block.param.apply(&cfg.params.params(), v).validated()?;
    }
    let result = sweep(&spec_of(&cfg), block.param, &grid)?;
    Report::sweep(&cfg, &result).write(cfg.format, sink(&cfg.out)?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::List => cmd_list(),
        Command::Run(a) => cmd_run(a, false),
        Command::Compare(a) => cmd_run(a, true),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match outcome {
        Ok(()) | Err(Failure::Closed) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Engine(m)) => {
            eprintln!("engine error: {m}");
            ExitCode::from(2)
        }
    }
}
