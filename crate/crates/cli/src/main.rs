//! `wavebound` — sweep driver for the spreading-bound library.
//!
//! Every run resolves to a single [`config::RunConfig`] (JSON file merged
//! with command-line flags, flags winning), validates it, executes one
//! experiment, and emits
//!   • a CSV table whose first line records the SHA-256 of the resolved
//!     configuration and the crate version, and
//!   • a JSON summary on stdout.
//! Outputs are byte-identical across repeat runs and thread counts.
//!
//! Exit codes: 0 success · 2 validation/domain/range failure ·
//! 3 non-convergence or boundary reflection · 4 verification failure.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use wavebound::operator::{FamilySpec, OperatorSpec, Side};
use wavebound::{Error, Result};

use config::{GridSpec, LatticeSpec, RunConfig, Spacing};

#[derive(Parser, Debug)]
#[command(
    name = "wavebound",
    version = wavebound::VERSION,
    about = "Dynamical upper and lower bounds for Jacobi-matrix wavepacket spreading"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Cmd {
    /// Length scales L⁺_ε(E) by both routes over an (E, ε) grid.
    Scales,
    /// Weyl m-function values over an (E, ε) grid.
    Mfun,
    /// Time-averaged tail profiles ⟨P_out(L)⟩_T over a (T, L) grid.
    Profile,
    /// Half-line dynamical lower bound versus spectral-measure mass.
    Hld,
    /// Exact-resummation upper bound over an energy set S.
    Ldb,
    /// Scaling exponents: lambda (scale growth), beta (spreading), local.
    Exponents,
    /// Fibonacci spectrum bands at a refinement level, plus constants.
    Fib,
    /// Lanczos reduction of a 2-D lattice to half-line Jacobi form.
    Lanczos,
    /// Dynamical bound on the 2-D lattice via the reduced operator.
    Mdhld,
    /// Inequality suites: mainm, trans, bands, invariant, derivative,
    /// keyit, corsq, envelope.
    Verify,
}

impl Cmd {
    fn name(self) -> &'static str {
        match self {
            Cmd::Scales => "scales",
            Cmd::Mfun => "mfun",
            Cmd::Profile => "profile",
            Cmd::Hld => "hld",
            Cmd::Ldb => "ldb",
            Cmd::Exponents => "exponents",
            Cmd::Fib => "fib",
            Cmd::Lanczos => "lanczos",
            Cmd::Mdhld => "mdhld",
            Cmd::Verify => "verify",
        }
    }
}

#[derive(Args, Debug)]
struct Flags {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Operator family: free | random | fibonacci.
    #[arg(long, global = true)]
    op: Option<String>,
    /// Disorder width for the random family (also the random lattice).
    #[arg(long, global = true)]
    w: Option<f64>,
    /// RNG seed for the random family (also the random lattice).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fibonacci coupling λ (operator and fib/verify experiments).
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Operator side: half | whole.
    #[arg(long, global = true)]
    side: Option<String>,

    /// Lattice family for lanczos/mdhld: free | random.
    #[arg(long, global = true)]
    lattice: Option<String>,
    /// Lattice half-width (sites per axis ≈ 2·extent+1).
    #[arg(long, global = true)]
    extent: Option<usize>,

    /// Energy grid: start:stop:count[:log] or a single value.
    #[arg(long, global = true, allow_hyphen_values = true)]
    energy: Option<String>,
    /// Epsilon grid: start:stop:count[:log] or a single value.
    #[arg(long, global = true)]
    epsilon: Option<String>,
    /// Averaging-time grid: start:stop:count[:log] or a single value.
    #[arg(long = "time", global = true)]
    time: Option<String>,
    /// Window-length grid: start:stop:count[:log] or a single value.
    #[arg(long, global = true)]
    length: Option<String>,

    /// profile: resolvent | propagate.
    #[arg(long, global = true)]
    route: Option<String>,
    /// hld: solution | transfer.
    #[arg(long = "scale-kind", global = true)]
    scale_kind: Option<String>,
    /// Spectral-measure truncation (number of atoms).
    #[arg(long, global = true)]
    atoms: Option<usize>,
    /// ldb: energy set S as comma-separated lo..hi intervals.
    #[arg(long, global = true, allow_hyphen_values = true)]
    s: Option<String>,
    /// exponents: lambda | beta | local.
    #[arg(long, global = true)]
    kind: Option<String>,
    /// exponents beta: probability threshold δ ∈ (0,1).
    #[arg(long, global = true)]
    delta: Option<f64>,
    /// fib / verify bands|invariant|derivative: refinement level.
    #[arg(long, global = true)]
    bands: Option<usize>,
    /// lanczos: number of steps; verify envelope: depth.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// verify: suite name.
    #[arg(long, global = true)]
    suite: Option<String>,
    /// verify mainm/trans: number of (E, ε) samples.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// verify corsq: number of random matrix trials.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// verify keyit/envelope: band-tree level for sample energies.
    #[arg(long, global = true)]
    level: Option<usize>,
    /// verify keyit: lowest Fibonacci index n.
    #[arg(long = "n-lo", global = true)]
    n_lo: Option<usize>,
    /// verify keyit: highest Fibonacci index n.
    #[arg(long = "n-hi", global = true)]
    n_hi: Option<usize>,
    /// m-function truncation tolerance.
    #[arg(long = "m-tol", global = true)]
    m_tol: Option<f64>,

    /// CSV output path (default <experiment>.csv; verify writes none).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Write the JSON summary to a file as well as stdout.
    #[arg(long, global = true)]
    summary: Option<PathBuf>,
    /// Size of the rayon thread pool (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn parse_grid(text: &str, name: &str) -> Result<GridSpec> {
    let parts: Vec<&str> = text.split(':').collect();
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>()
            .map_err(|_| Error::validation(format!("grid `{name}`: `{s}` is not a number")))
    };
    match parts.as_slice() {
        [x] => Ok(GridSpec::singleton(num(x)?)),
        [start, stop, count] | [start, stop, count, _] => {
            let spacing = match parts.get(3) {
                None | Some(&"linear") => Spacing::Linear,
                Some(&"log") => Spacing::Log,
                Some(other) => {
                    return Err(Error::validation(format!(
                        "grid `{name}`: spacing `{other}` is not linear | log"
                    )))
                }
            };
            let count: usize = count.parse().map_err(|_| {
                Error::validation(format!("grid `{name}`: `{count}` is not a count"))
            })?;
            Ok(GridSpec { start: num(start)?, stop: num(stop)?, count, spacing })
        }
        _ => Err(Error::validation(format!(
            "grid `{name}`: expected `value` or `start:stop:count[:spacing]`"
        ))),
    }
}

fn parse_intervals(text: &str) -> Result<Vec<(f64, f64)>> {
    text.split(',')
        .map(|piece| {
            let (lo, hi) = piece
                .split_once("..")
                .ok_or_else(|| Error::validation(format!("interval `{piece}`: expected lo..hi")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::validation(format!("interval bound `{s}` is not a number")))
            };
            Ok((parse(lo)?, parse(hi)?))
        })
        .collect()
}

fn side_of(flag: &Option<String>) -> Result<Side> {
    match flag.as_deref() {
        None | Some("half") => Ok(Side::HalfLine),
        Some("whole") => Ok(Side::WholeLine),
        Some(other) => Err(Error::validation(format!("side `{other}` is not half | whole"))),
    }
}

fn operator_from_flags(flags: &Flags) -> Result<Option<OperatorSpec>> {
    let Some(op) = flags.op.as_deref() else {
        return Ok(None);
    };
    let family = match op {
        "free" => FamilySpec::Free,
        "random" | "random-diagonal" => FamilySpec::RandomDiagonal {
            w: flags
                .w
                .ok_or_else(|| Error::validation("--op random needs --w".to_string()))?,
            seed: flags.seed.unwrap_or(1),
        },
        "fibonacci" => FamilySpec::Fibonacci {
            lambda: flags
                .lambda
                .ok_or_else(|| Error::validation("--op fibonacci needs --lambda".to_string()))?,
        },
        other => {
            return Err(Error::validation(format!(
                "operator `{other}` is not free | random | fibonacci"
            )))
        }
    };
    Ok(Some(OperatorSpec { family, side: side_of(&flags.side)? }))
}

fn lattice_from_flags(flags: &Flags) -> Result<Option<LatticeSpec>> {
    let Some(fam) = flags.lattice.as_deref() else {
        return Ok(None);
    };
    let extent = flags
        .extent
        .ok_or_else(|| Error::validation("--lattice needs --extent".to_string()))?;
    match fam {
        "free" => Ok(Some(LatticeSpec::Free { extent })),
        "random" => Ok(Some(LatticeSpec::Random {
            extent,
            w: flags.w.ok_or_else(|| Error::validation("--lattice random needs --w".to_string()))?,
            seed: flags.seed.unwrap_or(1),
        })),
        other => Err(Error::validation(format!("lattice `{other}` is not free | random"))),
    }
}

/// Merge command-line flags over the configuration file.
fn resolve(cmd: Cmd, flags: &Flags) -> Result<RunConfig> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(exp) = &cfg.experiment {
        if exp != cmd.name() {
            return Err(Error::validation(format!(
                "config is for experiment `{exp}` but the command is `{}`",
                cmd.name()
            )));
        }
    }
    cfg.experiment = Some(cmd.name().to_string());

    if let Some(spec) = operator_from_flags(flags)? {
        cfg.operator = Some(spec);
    }
    if let Some(lat) = lattice_from_flags(flags)? {
        cfg.lattice = Some(lat);
    }
    for (flag, slot, name) in [
        (&flags.energy, &mut cfg.grids.energy, "energy"),
        (&flags.epsilon, &mut cfg.grids.epsilon, "epsilon"),
        (&flags.time, &mut cfg.grids.time, "time"),
        (&flags.length, &mut cfg.grids.length, "length"),
    ] {
        if let Some(text) = flag {
            *slot = Some(parse_grid(text, name)?);
        }
    }

    let p = &mut cfg.params;
    p.route = flags.route.clone().or(p.route.take());
    p.scale_kind = flags.scale_kind.clone().or(p.scale_kind.take());
    p.atoms = flags.atoms.or(p.atoms);
    if let Some(text) = &flags.s {
        p.s_intervals = Some(parse_intervals(text)?);
    }
    p.kind = flags.kind.clone().or(p.kind.take());
    p.delta = flags.delta.or(p.delta);
    p.lambda = flags.lambda.or(p.lambda);
    p.bands = flags.bands.or(p.bands);
    p.n = flags.n.or(p.n);
    p.suite = flags.suite.clone().or(p.suite.take());
    p.samples = flags.samples.or(p.samples);
    p.trials = flags.trials.or(p.trials);
    p.seed = flags.seed.or(p.seed);
    p.level = flags.level.or(p.level);
    p.n_lo = flags.n_lo.or(p.n_lo);
    p.n_hi = flags.n_hi.or(p.n_hi);
    if let Some(t) = flags.m_tol {
        cfg.tolerances.m_tol = t;
    }
    if let Some(out) = &flags.out {
        cfg.output.csv = Some(out.display().to_string());
    }
    if let Some(s) = &flags.summary {
        cfg.output.summary = Some(s.display().to_string());
    }

    cfg.validate()?;
    Ok(cfg)
}

fn error_kind(e: &Error) -> (&'static str, u8) {
    match e {
        Error::Validation(_) => ("validation", 2),
        Error::Domain(_) => ("domain", 2),
        Error::Range(_) => ("range", 2),
        Error::NonConvergence(_) => ("non-convergence", 3),
        Error::BoundaryReflection(_) => ("boundary-reflection", 3),
        Error::Structure(_) => ("structure", 4),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    let payload = json!({ "error": { "kind": kind, "message": message }, "exit": code });
    eprintln!("{payload}");
    ExitCode::from(code)
}

fn run(cmd: Cmd, flags: &Flags) -> Result<u8> {
    let cfg = resolve(cmd, flags)?;
    if let Some(t) = flags.threads {
        if t == 0 {
            return Err(Error::validation("--threads must be ≥ 1".to_string()));
        }
        // Ignore the error from a second initialization (tests call run()
        // repeatedly in one process); the pool size then stays as built.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }

    let table = experiments::dispatch(cmd.name(), &cfg)?;

    let sha = output::sha256_hex(&cfg.canonical_json());
    let csv_path = cfg
        .output
        .csv
        .clone()
        .or_else(|| (!matches!(cmd, Cmd::Verify)).then(|| format!("{}.csv", cmd.name())));
    if let Some(path) = &csv_path {
        output::write_file(path, &table.render_csv(&sha))?;
    }

    let summary = json!({
        "experiment": cmd.name(),
        "version": wavebound::VERSION,
        "config_sha256": sha,
        "csv": csv_path,
        "rows": table.rows.len(),
        "summary": table.summary,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    println!("{text}");
    if let Some(path) = &cfg.output.summary {
        output::write_file(path, &format!("{text}\n"))?;
    }

    Ok(if table.verification_failed { 4 } else { 0 })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => fail("validation", &e.to_string(), 2),
            };
        }
    };
    match run(cli.command, &cli.flags) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(code) => {
            let payload = json!({
                "error": { "kind": "verification", "message": "one or more checks failed" },
                "exit": code,
            });
            eprintln!("{payload}");
            ExitCode::from(code)
        }
        Err(e) => {
            let (kind, code) = error_kind(&e);
            fail(kind, &e.to_string(), code)
        }
    }
}
