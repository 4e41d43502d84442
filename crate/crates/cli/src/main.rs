//! `cornerspace` command-line runner.
//!
//! Every subcommand builds a [`RunConfig`] from its flags, lets an optional
//! TOML file override them, validates, runs and writes CSV/JSON results.

use clap::{Args, Parser, Subcommand};
use cornerspace::corner::TracePolicy;
use cornerspace::experiments::{self, Experiment, InitialState, RunConfig};
use cornerspace::noise::NoiseKind;
use cornerspace::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "cornerspace", version, about = "Corner-space simulation of noisy quantum circuits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noisy QFT with time series.
    Qft(Flags),
    /// Infidelity against register size, with log-log slopes.
    Scaling(Flags),
    /// Random basis-state sweep with bilinear fits.
    Sweep(Flags),
    /// Corner engine against the dense master equation.
    Benchmark(Flags),
    /// Process tomography of a noisy controlled phase.
    Tomography(Flags),
    /// Driven Kerr cavity with two-photon loss.
    Kerrcat(Flags),
    /// Parse and validate a config file, then print it fully resolved.
    ValidateConfig {
        config: PathBuf,
    },
}

#[derive(Args, Clone, Default)]
struct Flags {
    /// TOML run configuration; its values override flags.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Register size L.
    #[arg(short = 'L', long)]
    qubits: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = parse_noise)]
    noise: Option<NoiseKind>,
    #[arg(long, conflicts_with = "gamma_t_qft")]
    gamma_over_delta: Option<f64>,
    #[arg(long = "gamma-T-qft")]
    gamma_t_qft: Option<f64>,
    /// Largest discarded trace fraction per step.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    m_max: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    ode_tol: Option<f64>,
    /// Rescale the trace to one after each truncation.
    #[arg(long)]
    renormalize: bool,
    /// ghz_preimage, all_up, all_down, bitstring or random_basis.
    #[arg(long)]
    initial_state: Option<String>,
    #[arg(long)]
    bits: Option<String>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Register sizes for scaling and benchmark runs.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Rates for scaling runs.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    /// Truncation thresholds for benchmark runs.
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    /// Final time for kerrcat, in units of the one-photon loss time.
    #[arg(long)]
    t_final: Option<f64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    sample_stride: Option<usize>,
    #[arg(long)]
    no_entanglement: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Serial reductions and no wall-clock values in outputs.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    allow_unreachable: bool,
    /// Repeat QFT runs at half the step and report the change.
    #[arg(long)]
    convergence_check: bool,
}

fn parse_noise(s: &str) -> Result<NoiseKind, String> {
    match s {
        "decay" => Ok(NoiseKind::Decay),
        "dephasing" => Ok(NoiseKind::Dephasing),
        "collective" => Ok(NoiseKind::Collective),
        _ => Err(format!("unknown noise type {s:?}; expected decay, dephasing or collective")),
    }
}

enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::Io(_) => 1,
        })
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(m) => Failure::Config(m),
            Error::Io(e) => Failure::Io(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

impl Flags {
    fn apply(&self, cfg: &mut RunConfig) -> Result<(), Failure> {
        macro_rules! set {
            ($flag:ident => $($target:tt)+) => {
                if let Some(v) = &self.$flag {
                    $($target)+ = v.clone();
                }
            };
        }
        set!(qubits => cfg.qubits);
        set!(delta => cfg.delta);
        set!(noise => cfg.noise.kind);
        if let Some(g) = self.gamma_over_delta {
            cfg.noise.gamma_over_delta = Some(g);
            cfg.noise.gamma_t_qft = None;
        }
        if let Some(g) = self.gamma_t_qft {
            cfg.noise.gamma_t_qft = Some(g);
            cfg.noise.gamma_over_delta = None;
        }
        set!(eps => cfg.corner.eps);
        if self.m_max.is_some() {
            cfg.corner.m_max = self.m_max;
        }
        set!(dt => cfg.corner.dt);
        set!(ode_tol => cfg.corner.ode_tol);
        if self.renormalize {
            cfg.corner.trace_policy = TracePolicy::Renormalize;
        }
        if let Some(kind) = &self.initial_state {
            cfg.initial_state = match kind.as_str() {
                "ghz_preimage" => InitialState::GhzPreimage,
                "all_up" => InitialState::AllUp,
                "all_down" => InitialState::AllDown,
                "bitstring" => InitialState::Bitstring {
                    bits: self.bits.clone().ok_or_else(|| Failure::Config("--initial-state bitstring needs --bits".into()))?,
                },
                "random_basis" => InitialState::RandomBasis {
                    count: self.count.unwrap_or(64),
                    seed: self.seed.unwrap_or(0),
                },
                other => return Err(Failure::Config(format!("unknown initial state {other:?}"))),
            };
        } else if let Some(bits) = &self.bits {
            cfg.initial_state = InitialState::Bitstring { bits: bits.clone() };
        }
        if let Some(sizes) = &self.sizes {
            cfg.scaling.qubits = sizes.clone();
            cfg.benchmark.qubits = sizes.clone();
        }
        set!(gammas => cfg.scaling.gamma_over_delta);
        set!(epsilons => cfg.benchmark.epsilons);
        set!(t_final => cfg.kerr.t_final);
        if self.out.is_some() {
            cfg.output.dir = self.out.clone();
        }
        set!(sample_stride => cfg.output.sample_stride);
        if self.no_entanglement {
            cfg.output.entanglement = false;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        cfg.deterministic |= self.deterministic;
        cfg.allow_unreachable |= self.allow_unreachable;
        cfg.convergence_check |= self.convergence_check;
        Ok(())
    }
}

fn read_file(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))
}

/// Parses the file on its own first so that errors point at its lines.
fn parse_file(path: &Path, text: &str) -> Result<toml::Table, Failure> {
    let located = |e: toml::de::Error| Failure::Config(format!("{}: {e}", path.display()));
    toml::from_str::<RunConfig>(text).map_err(located)?;
    toml::from_str::<toml::Table>(text).map_err(located)
}

/// Tables carrying one of these tags are enum values and replace rather
/// than merge.
const TAGS: [&str; 2] = ["kind", "method"];

fn overlay(base: &mut toml::Table, top: toml::Table) {
    if top.contains_key("gamma_over_delta") || top.contains_key("gamma_T_qft") {
        base.remove("gamma_over_delta");
        base.remove("gamma_T_qft");
    }
    for (key, value) in top {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) if !TAGS.iter().any(|k| t.contains_key(*k)) => overlay(b, t),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

fn resolve(experiment: Experiment, flags: &Flags) -> Result<RunConfig, Failure> {
    let mut cfg = RunConfig {
        experiment,
        ..RunConfig::default()
    };
    flags.apply(&mut cfg)?;
    if let Some(path) = &flags.config {
        let file = parse_file(path, &read_file(path)?)?;
        let mut base = toml::Table::try_from(&cfg).map_err(|e| Failure::Config(e.to_string()))?;
        overlay(&mut base, file);
        cfg = base
            .try_into()
            .map_err(|e: toml::de::Error| Failure::Config(format!("{}: {e}", path.display())))?;
        if cfg.experiment != experiment {
            return Err(Failure::Config(format!(
                "{}: experiment = {:?} does not match the subcommand",
                path.display(),
                cfg.experiment
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cfg: &RunConfig) -> Result<(), Failure> {
    let outcome = experiments::run(cfg)?;
    println!("{}", outcome.summary());
    if let Some(dir) = &cfg.output.dir {
        outcome.write(dir)?;
        eprintln!("results written to {}", dir.display());
    }
    let unreachable = outcome.unreachable_steps();
    if unreachable > 0 && !cfg.allow_unreachable {
        return Err(Failure::Numerical(format!(
            "m_max kept the truncation above eps in {unreachable} steps; raise m_max or pass --allow-unreachable"
        )));
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    let (experiment, flags) = match cli.command {
        Command::ValidateConfig { config } => {
            let text = read_file(&config)?;
            parse_file(&config, &text)?;
            let cfg: RunConfig = toml::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
            cfg.validate()?;
            print!("{}", toml::to_string(&cfg).map_err(|e| Failure::Config(e.to_string()))?);
            return Ok(());
        }
        Command::Qft(f) => (Experiment::Qft, f),
        Command::Scaling(f) => (Experiment::Scaling, f),
        Command::Sweep(f) => (Experiment::Sweep, f),
        Command::Benchmark(f) => (Experiment::Benchmark, f),
        Command::Tomography(f) => (Experiment::Tomography, f),
        Command::Kerrcat(f) => (Experiment::Kerrcat, f),
    };
    let cfg = resolve(experiment, &flags)?;
    let threads = if cfg.deterministic { Some(1) } else { cfg.threads };
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    execute(&cfg)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (kind, msg) = match &f {
                Failure::Config(m) => ("configuration error", m),
                Failure::Numerical(m) => ("numerical failure", m),
                Failure::Io(m) => ("i/o error", m),
            };
            eprintln!("cornerspace: {kind}: {msg}");
            f.code()
        }
    }
}
