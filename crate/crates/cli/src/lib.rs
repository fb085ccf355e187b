//! `dualqed` command line: argument parsing, run configuration and exit-code
//! mapping. Reports go to stdout as JSON; errors go to stderr as JSON.
//!
//! Exit codes: 0 success, 1 a check failed (or a computation did not
//! converge), 2 invalid configuration or input.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dualqed::config::{Cutoffs, ModelConfig};
use dualqed::hilbert::MatterKind;
use dualqed::{Boundary, Formulation};

mod commands;
pub mod output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Library(#[from] dualqed::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use dualqed::Error as E;
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io(_) => EXIT_CHECK_FAILED,
            CliError::Library(e) => match e {
                E::NoConvergence(_) | E::NotHermitian(_) => EXIT_CHECK_FAILED,
                _ => EXIT_CONFIG,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Library(_) => "library",
            CliError::Io(_) => "io",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dualqed", version, about = "Dual formulations of compact lattice QED")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Site or plaquette Green's function.
    Greens {
        #[command(flatten)]
        common: Common,
        /// sites, plaquettes (open lattices) or modified (2D).
        #[arg(long, default_value = "sites")]
        kind: String,
    },
    /// Shift table of one link.
    Shifts {
        #[command(flatten)]
        common: Common,
        /// Link as `x1,x2[,x3]:i` with a 1-based direction.
        #[arg(long)]
        link: String,
        /// Exact rational arithmetic (the default; available up to 64 plaquettes).
        #[arg(long = "exact-rational", alias = "exact", conflicts_with = "float")]
        exact: bool,
        /// Floating-point shifts only.
        #[arg(long)]
        float: bool,
    },
    /// Physical degree-of-freedom counts of both formulations.
    Dof {
        #[command(flatten)]
        common: Common,
    },
    /// Difference-operator and dual-map identities.
    CheckMaps {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
    /// Write one linear operator as CSV.
    DumpOp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        op: String,
    },
    /// Validate a model and report Hilbert-space dimensions.
    Build {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Lowest eigenvalues of one formulation in its physical sector.
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Compare the original and θ/M spectra over a cutoff schedule.
    Compare {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Comma-separated `links:plaquettes` cutoff pairs.
        #[arg(long, default_value = "2:2,4:4,6:6,8:8")]
        schedule: String,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Every invariant suite applicable to the geometry.
    VerifyAll {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "N")]
    n: Option<usize>,
    #[arg(long)]
    bc: Option<String>,
    /// JSON model configuration; its values override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (CSV for matrices with a JSON sidecar, JSON otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on worker threads.
    #[arg(long, env = "DUALQED_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// none, staggered_fermion, hardcore_boson or truncated_boson:<n_max>.
    #[arg(long)]
    matter: Option<String>,
    #[arg(long)]
    g2: Option<f64>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    /// Static charges per site, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    #[arg(long)]
    links_cutoff: Option<u32>,
    #[arg(long)]
    plaquettes_cutoff: Option<u32>,
    #[arg(long)]
    global_cutoff: Option<u32>,
    /// original, thetam or bl.
    #[arg(long)]
    formulation: Option<String>,
}

/// Validated settings for one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub model: ModelConfig,
    pub out: Option<PathBuf>,
    pub seed: u64,
    pub exact_rational: bool,
    pub threads: Option<usize>,
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn parse_matter(s: &str) -> Result<MatterKind, CliError> {
    match s {
        "none" => Ok(MatterKind::None),
        "staggered_fermion" | "staggered" | "fermion" => Ok(MatterKind::StaggeredFermion),
        "hardcore_boson" => Ok(MatterKind::HardcoreBoson),
        _ => match s.strip_prefix("truncated_boson:") {
            Some(n) => n
                .parse()
                .map(|n_max| MatterKind::TruncatedBoson { n_max })
                .map_err(|_| config_err(format!("invalid n_max in '{s}'"))),
            None => Err(config_err(format!("unknown matter kind '{s}'"))),
        },
    }
}

fn base_config(common: &Common, model: Option<&ModelArgs>) -> Result<ModelConfig, CliError> {
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        return ModelConfig::from_json(&text).map_err(config_err);
    }
    let missing = |flag: &str| config_err(format!("--{flag} is required without --config"));
    let dim = common.dim.ok_or_else(|| missing("dim"))?;
    let n = common.n.ok_or_else(|| missing("N"))?;
    let bc: Boundary = common
        .bc
        .as_deref()
        .ok_or_else(|| missing("bc"))?
        .parse()
        .map_err(config_err)?;
    let mut cfg = ModelConfig::new(dim, n, bc);
    if let Some(m) = model {
        if let Some(s) = &m.matter {
            cfg.matter = parse_matter(s)?;
        }
        cfg.g2 = m.g2.unwrap_or(cfg.g2);
        cfg.t = m.t.unwrap_or(cfg.t);
        cfg.m = m.m.unwrap_or(cfg.m);
        if let Some(q) = &m.q {
            cfg.q = q
                .split(',')
                .map(|v| v.trim().parse::<i64>())
                .collect::<Result<_, _>>()
                .map_err(|_| config_err(format!("invalid charges '{q}'")))?;
        }
        let d = Cutoffs::default();
        cfg.cutoffs = Cutoffs {
            links: m.links_cutoff.unwrap_or(d.links),
            plaquettes: m.plaquettes_cutoff.unwrap_or(d.plaquettes),
            global: m.global_cutoff.unwrap_or(d.global),
        };
        if let Some(f) = &m.formulation {
            cfg.formulation = f.parse::<Formulation>().map_err(config_err)?;
        }
    }
    Ok(cfg)
}

fn run_config(
    command: &'static str,
    common: &Common,
    model: Option<&ModelArgs>,
    exact: bool,
) -> Result<RunConfig, CliError> {
    let model = base_config(common, model)?;
    // lattice-only commands validate the geometry alone
    model.lattice().map_err(config_err)?;
    if command_uses_model(command) {
        model.validate().map_err(config_err)?;
    }
    if common.threads == Some(0) {
        return Err(config_err("--threads must be at least 1"));
    }
    Ok(RunConfig {
        command,
        model,
        out: common.out.clone(),
        seed: common.seed,
        exact_rational: exact,
        threads: common.threads,
    })
}

fn command_uses_model(command: &str) -> bool {
    matches!(command, "build" | "spectrum" | "compare")
}

fn parse_schedule(s: &str) -> Result<Vec<(u32, u32)>, CliError> {
    s.split(',')
        .map(|pair| {
            let (a, b) = pair
                .split_once(':')
                .ok_or_else(|| config_err(format!("schedule entry '{pair}' is not links:plaquettes")))?;
            let a: u32 = a
                .trim()
                .parse()
                .map_err(|_| config_err(format!("invalid cutoff '{a}'")))?;
            let b: u32 = b
                .trim()
                .parse()
                .map_err(|_| config_err(format!("invalid cutoff '{b}'")))?;
            if a == 0 || b == 0 {
                return Err(config_err("cutoffs must be at least 1"));
            }
            Ok((a, b))
        })
        .collect()
}

/// Outcome of a command: the JSON report and whether its checks passed.
pub struct Outcome {
    pub report: serde_json::Value,
    pub passed: bool,
}

fn dispatch(cli: Cli) -> Result<Outcome, CliError> {
    use commands as c;
    match cli.command {
        Command::Greens { common, kind } => {
            let rc = run_config("greens", &common, None, false)?;
            with_threads(&rc, || c::greens(&rc, &kind))
        }
        Command::Shifts {
            common,
            link,
            exact: _,
            float,
        } => {
            let rc = run_config("shifts", &common, None, !float)?;
            let link = link.parse().map_err(config_err)?;
            with_threads(&rc, || c::shifts(&rc, &link))
        }
        Command::Dof { common } => {
            let rc = run_config("dof", &common, None, false)?;
            with_threads(&rc, || c::dof(&rc))
        }
        Command::CheckMaps { common, samples } => {
            let rc = run_config("check-maps", &common, None, false)?;
            with_threads(&rc, || c::check_maps(&rc, samples))
        }
        Command::DumpOp { common, op } => {
            let rc = run_config("dump-op", &common, None, false)?;
            with_threads(&rc, || c::dump_op(&rc, &op))
        }
        Command::Build { common, model } => {
            let rc = run_config("build", &common, Some(&model), false)?;
            with_threads(&rc, || c::build(&rc))
        }
        Command::Spectrum { common, model, k } => {
            let rc = run_config("spectrum", &common, Some(&model), false)?;
            with_threads(&rc, || c::spectrum(&rc, k))
        }
        Command::Compare {
            common,
            model,
            k,
            schedule,
            tolerance,
        } => {
            let rc = run_config("compare", &common, Some(&model), false)?;
            let schedule = parse_schedule(&schedule)?;
            if tolerance.is_nan() || tolerance < 0.0 {
                return Err(config_err("--tolerance must be non-negative"));
            }
            with_threads(&rc, || c::compare(&rc, k, &schedule, tolerance))
        }
        Command::VerifyAll { common, samples } => {
            let rc = run_config("verify-all", &common, None, false)?;
            with_threads(&rc, || c::verify_all(&rc, samples))
        }
    }
}

fn with_threads<T: Send>(rc: &RunConfig, f: impl FnOnce() -> Result<T, CliError> + Send) -> Result<T, CliError> {
    match rc.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(e.to_string()))?
            .install(f),
        None => f(),
    }
}

fn error_body(e: &CliError) -> String {
    serde_json::json!({
        "error": {
            "kind": e.kind(),
            "exit_code": e.exit_code(),
            "message": e.to_string(),
        }
    })
    .to_string()
}

/// Runs the command line with explicit output streams; returns the exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let err = CliError::Config(e.to_string().trim().to_string());
            let _ = writeln!(stderr, "{}", error_body(&err));
            return EXIT_CONFIG;
        }
    };
    match dispatch(cli) {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.report).unwrap_or_default();
            let _ = writeln!(stdout, "{text}");
            if outcome.passed {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_body(&e));
            e.exit_code()
        }
    }
}

/// Runs the command line on the process streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
