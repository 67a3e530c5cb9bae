use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thermo_entangle_cli::config::{
    CommandConfig, Fig2Config, Format, RunConfig, SampleConfig, SpectrumConfig, Split, StateConfig, StateSource,
    VerifyConfig,
};
use thermo_entangle_cli::{run, CliError};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_INVALID: u8 = 2;
const THREADS_VAR: &str = "THERMO_ENTANGLE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "thermo-entangle",
    version,
    about = "Entangled oscillator states and their thermal statistics"
)]
struct Cli {
    /// JSON run config; flags given alongside override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Truncation order of the Schmidt sum.
    #[arg(long, global = true)]
    trunc: Option<u32>,
    /// Override for every numerical tolerance in `verify`.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Energy unit ħω.
    #[arg(long = "hbar-omega", global = true, hide = true)]
    hbar_omega: Option<f64>,
    /// Print the resolved config as canonical JSON instead of running it.
    #[arg(long, global = true)]
    dump_config: bool,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(Debug, Args, Default)]
struct SourceArgs {
    /// Schmidt parameters, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true)]
    f: Option<Vec<f64>>,
    /// Boltzmann factor g = f².
    #[arg(long)]
    g: Option<f64>,
    /// Split of g: comma-separated weights or `equal`.
    #[arg(long)]
    p: Option<Split>,
    #[arg(long)]
    r: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Matrix A, its spectrum, the covariance and the largest Schmidt weights (JSON).
    State {
        #[command(flatten)]
        source: SourceArgs,
        /// Rows in the weight table.
        #[arg(long)]
        top: Option<usize>,
    },
    /// Seeded measurement samples (CSV).
    Sample {
        #[command(flatten)]
        source: SourceArgs,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Normal modes of the partition-coupled system (JSON).
    Spectrum {
        #[arg(long)]
        r: Option<usize>,
        #[arg(long)]
        m: Option<f64>,
        #[arg(long)]
        m0: Option<f64>,
        /// Detector mass.
        #[arg(long = "M")]
        big_m: Option<f64>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        chi: Option<f64>,
    },
    /// Temperature and mean energy against the mass ratio ξ (CSV).
    Fig2 {
        #[arg(long)]
        xi_min: Option<f64>,
        #[arg(long)]
        xi_max: Option<f64>,
        #[arg(long)]
        points: Option<usize>,
        /// Logarithmic grid spacing.
        #[arg(long)]
        log: bool,
    },
    /// Run every invariant check and report as JSON.
    Verify {
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
}

fn fail(msg: String) -> CliError {
    CliError::Invalid(msg)
}

fn merge_source(base: &mut StateSource, args: SourceArgs) {
    if args.f.is_some() {
        base.f = args.f;
        base.g = None;
        base.p = None;
    }
    if args.g.is_some() {
        base.g = args.g;
        base.f = None;
    }
    if args.p.is_some() {
        base.p = args.p;
    }
    if args.r.is_some() {
        base.r = args.r;
    }
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Applies subcommand flags on top of the matching command from the config file.
fn merge_command(base: Option<CommandConfig>, cmd: Cmd) -> Result<CommandConfig, CliError> {
    let name = match &cmd {
        Cmd::State { .. } => "state",
        Cmd::Sample { .. } => "sample",
        Cmd::Spectrum { .. } => "spectrum",
        Cmd::Fig2 { .. } => "fig2",
        Cmd::Verify { .. } => "verify",
    };
    if let Some(b) = &base {
        if b.name() != name {
            return Err(fail(format!("config file is for '{}', not '{name}'", b.name())));
        }
    }
    Ok(match (cmd, base) {
        (Cmd::State { source, top }, b) => {
            let mut c = match b {
                Some(CommandConfig::State(c)) => c,
                _ => StateConfig::default(),
            };
            merge_source(&mut c.source, source);
            set(&mut c.top, top);
            CommandConfig::State(c)
        }
        (Cmd::Sample { source, count }, b) => {
            let mut c = match b {
                Some(CommandConfig::Sample(c)) => c,
                _ => SampleConfig::default(),
            };
            merge_source(&mut c.source, source);
            set(&mut c.count, count);
            CommandConfig::Sample(c)
        }
        (
            Cmd::Spectrum {
                r,
                m,
                m0,
                big_m,
                k,
                chi,
            },
            b,
        ) => {
            let mut c = match b {
                Some(CommandConfig::Spectrum(c)) => c,
                _ => SpectrumConfig::default(),
            };
            set(&mut c.r, r);
            set(&mut c.m, m);
            set(&mut c.m0, m0);
            set(&mut c.big_m, big_m);
            set(&mut c.k, k);
            set(&mut c.chi, chi);
            CommandConfig::Spectrum(c)
        }
        (
            Cmd::Fig2 {
                xi_min,
                xi_max,
                points,
                log,
            },
            b,
        ) => {
            let mut c = match b {
                Some(CommandConfig::Fig2(c)) => c,
                _ => Fig2Config::default(),
            };
            set(&mut c.xi_min, xi_min);
            set(&mut c.xi_max, xi_max);
            set(&mut c.points, points);
            if log {
                c.log = Some(true);
            }
            CommandConfig::Fig2(c)
        }
        (Cmd::Verify { fault }, b) => {
            let mut c = match b {
                Some(CommandConfig::Verify(c)) => c,
                _ => VerifyConfig::default(),
            };
            set(&mut c.fault, fault);
            CommandConfig::Verify(c)
        }
    })
}

fn resolve(cli: Cli) -> Result<RunConfig, CliError> {
    let base = match &cli.config {
        Some(path) => {
            let text =
                std::fs::read_to_string(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
            Some(RunConfig::from_json(&text)?)
        }
        None => None,
    };
    let mut cfg = match (cli.command, base) {
        (None, None) => return Err(fail("no command given (see --help)".into())),
        (None, Some(b)) => b,
        (Some(cmd), b) => {
            let (command, rest) = match b {
                Some(b) => (Some(b.command.clone()), Some(b)),
                None => (None, None),
            };
            let merged = merge_command(command, cmd)?;
            match rest {
                Some(mut b) => {
                    b.command = merged;
                    b
                }
                None => RunConfig::new(merged),
            }
        }
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.trunc, cli.trunc);
    set(&mut cfg.tol, cli.tol);
    set(&mut cfg.hbar_omega, cli.hbar_omega);
    set(&mut cfg.out, cli.out);
    set(&mut cfg.format, cli.format);
    Ok(cfg)
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| fail(format!("{THREADS_VAR} must be a non-negative integer, got '{raw}'")))?;
    if n > 0 {
        // Fails only if a pool already exists, which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn emit(cfg: &RunConfig, text: &str) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| fail(format!("cannot write {}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| fail(format!("cannot write output: {e}")))
        }
    }
}

fn real_main() -> Result<Vec<String>, CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { EXIT_INVALID as i32 } else { 0 });
        }
    };
    configure_threads()?;
    let dump = cli.dump_config;
    let cfg = resolve(cli)?;
    if dump {
        emit(&cfg, &cfg.to_canonical_json())?;
        return Ok(Vec::new());
    }
    let outcome = run(&cfg)?;
    emit(&cfg, &outcome.output)?;
    Ok(outcome.failures)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(failures) if failures.is_empty() => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("verification failed: {}", failures.join(", "));
            ExitCode::from(EXIT_VERIFY_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}
