use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinarray_cli::{exit_code, load, map_csv, reproduce_suite, run, validate, LoadedConfig, RunOptions};
use spinarray_core::device::{ChargeMode, MapAxis};
use spinarray_core::export::write_atomic;
use spinarray_core::{Backend, Config, Error, Severity};

#[derive(Parser)]
#[command(name = "spinarray", version, about = "Eight-dot spin-qubit array simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Analytic,
    Stochastic,
}

#[derive(Args)]
struct Overrides {
    /// Seed overriding the experiment seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    /// Shots per sweep point.
    #[arg(long)]
    shots: Option<u32>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Also write every shot to `<name>.shots.csv`.
    #[arg(long)]
    record_shots: bool,
}

impl Overrides {
    fn options(&self) -> RunOptions {
        RunOptions {
            seed: self.seed,
            backend: self.backend.map(|b| match b {
                BackendArg::Analytic => Backend::Analytic,
                BackendArg::Stochastic => Backend::Stochastic,
            }),
            shots: self.shots,
            threads: self.threads,
            record_shots: self.record_shots,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one named experiment from a config file.
    Run {
        config: PathBuf,
        experiment: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the full characterization suite and write a per-qubit summary.
    Reproduce {
        /// Config file (default: the bundled config).
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check a config and print diagnostics.
    Validate { config: PathBuf },
    /// List the experiments defined in a config.
    List { config: PathBuf },
    /// Write the bundled default config.
    Init { path: PathBuf },
    /// Charge stability map of one double dot.
    Map {
        config: PathBuf,
        /// Double dot (1-4).
        #[arg(long, default_value_t = 1)]
        dqd: usize,
        /// Axis as `gate:start:stop:points`; `eps` sweeps the cell detuning.
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
        /// Isolated mode fixes the cell's electron number at its control total.
        #[arg(long)]
        isolated: bool,
        #[arg(long, default_value = "map.csv")]
        out: PathBuf,
    },
    /// Run the staged loading routine and print each stage.
    Load {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Uniform jitter on the loading voltages (V).
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
    },
}

fn parse_axis(s: &str) -> Result<MapAxis, Error> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Usage(format!("axis '{s}' must be gate:start:stop:points"));
    if parts.len() != 4 {
        return Err(bad());
    }
    let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
    let points = parts[3].parse::<usize>().map_err(|_| bad())?;
    Ok(MapAxis::new(parts[0], num(parts[1])?, num(parts[2])?, points))
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { config, experiment, overrides } => {
            let cfg = LoadedConfig::from_path(&config)?;
            let m = run(&cfg, &experiment, &overrides.options(), &overrides.out)?;
            for f in &m.files {
                println!("{}", overrides.out.join(f).display());
            }
            eprintln!("{experiment}: done in {:.2} s", m.duration_seconds);
        }
        Command::Reproduce { config, overrides } => {
            let cfg = match config {
                Some(p) => LoadedConfig::from_path(&p)?,
                None => LoadedConfig::bundled()?,
            };
            let m = reproduce_suite(&cfg, &overrides.options(), &overrides.out)?;
            eprintln!("{} experiments in {:.1} s", m.experiments.len(), m.duration_seconds);
            print!("{}", std::fs::read_to_string(overrides.out.join("summary.csv"))?);
        }
        Command::Validate { config } => {
            let diags = validate(&config)?;
            for d in &diags {
                println!("{d}");
            }
            if diags.iter().any(|d| d.severity == Severity::Error) {
                return Err(Error::Config(format!("{} error(s) in {}", diags.len(), config.display())));
            }
            if diags.is_empty() {
                println!("ok");
            }
        }
        Command::List { config } => {
            let cfg = Config::load(&config)?;
            for (name, spec) in &cfg.experiments {
                println!("{name}\t{}\tqubit {}", spec.kind.name(), spec.qubit);
            }
        }
        Command::Init { path } => {
            write_atomic(&path, Config::bundled().to_toml_string()?.as_bytes())?;
            println!("{}", path.display());
        }
        Command::Map { config, dqd, x, y, isolated, out } => {
            let cfg = Config::load(&config)?;
            if dqd == 0 {
                return Err(Error::Usage("dqd is 1-based".into()));
            }
            let pair = cfg.device.pairs.get(dqd - 1).ok_or_else(|| Error::Usage(format!("no DQD {dqd}")))?;
            let mode = if isolated { ChargeMode::Isolated(pair.control.iter().sum()) } else { ChargeMode::Open };
            let csv = map_csv(&cfg, dqd - 1, &parse_axis(&x)?, &parse_axis(&y)?, mode)?;
            write_atomic(&out, csv.as_bytes())?;
            println!("{}", out.display());
        }
        Command::Load { config, seed, jitter } => {
            let cfg = Config::load(&config)?;
            let outcome = load(&cfg, seed, jitter)?;
            for s in &outcome.stages {
                let totals: Vec<String> =
                    s.totals.iter().map(|t| t.map_or("-".to_string(), |n| n.to_string())).collect();
                println!("{:?}\ttotals {}", s.label, totals.join(" "));
            }
            println!("final {}", outcome.occupation);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
