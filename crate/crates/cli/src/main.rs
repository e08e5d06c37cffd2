//! `sparsedom`: runs the sparse domination experiments and writes CSV.
//!
//! Settings come from an optional flat TOML file (`--config`) and are overridden by flags of the
//! same name. Exit status: 0 success, 1 a checked property failed or the computation errored,
//! 2 invalid configuration.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use sparsedom::io::write_comment;

use commands::{randomized, run, Command, RunError};
use config::{Config, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "sparsedom", version, about = "Sparse domination experiments on dyadic grids")]
struct Cli {
    /// Subcommand; may instead be given as `subcommand` in the config file.
    #[arg(value_enum)]
    command: Option<Command>,
    /// Flat TOML file of `key = value` settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run on a single thread.
    #[arg(long)]
    deterministic: bool,
    /// Grid dimension.
    #[arg(long)]
    d: Option<String>,
    /// Grid depth (finest level).
    #[arg(long)]
    depth: Option<String>,
    /// Lattice dimension, or chain lengths for `sharpness`.
    #[arg(long)]
    n: Option<String>,
    /// Lattice norm: `lp:<r>`, `wlp:<r>:<w1>,<w2>,...` or `lorentz:<p>:<q>`.
    #[arg(long)]
    norm: Option<String>,
    /// Exponent of the l^r chain norm for `sharpness`.
    #[arg(long)]
    r: Option<String>,
    /// Sparse exponent or convexity exponent(s).
    #[arg(long)]
    q: Option<String>,
    /// Integrability exponent.
    #[arg(long)]
    p: Option<String>,
    /// Initial stopping threshold.
    #[arg(long)]
    tau0: Option<String>,
    /// Calderon-Zygmund height(s).
    #[arg(long)]
    lambda: Option<String>,
    /// Weight family parameter(s).
    #[arg(long)]
    t: Option<String>,
    /// Chain mass ratio.
    #[arg(long)]
    rho: Option<String>,
    /// `strong`, `weak` or (weights-scan only) `weak-1`.
    #[arg(long)]
    mode: Option<String>,
    /// `maximal` or `sparse` for `probe-norm`.
    #[arg(long)]
    operator: Option<String>,
    /// `uniform`, `random:<max mass>` or `file:<path>`.
    #[arg(long)]
    measure: Option<String>,
    /// `random:<unit|int:K|dyadic:B>` or `file:<path>`.
    #[arg(long)]
    function: Option<String>,
    /// Number of seeded instances.
    #[arg(long)]
    instances: Option<String>,
    /// Random samples per probe.
    #[arg(long)]
    samples: Option<String>,
    /// Coordinate-ascent rounds on the best probe candidate.
    #[arg(long)]
    refine: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Output CSV path; stdout when absent.
    #[arg(long)]
    out: Option<String>,
}

impl Cli {
    fn flags(&self) -> Config {
        let pairs = [
            ("d", &self.d),
            ("depth", &self.depth),
            ("n", &self.n),
            ("norm", &self.norm),
            ("r", &self.r),
            ("q", &self.q),
            ("p", &self.p),
            ("tau0", &self.tau0),
            ("lambda", &self.lambda),
            ("t", &self.t),
            ("rho", &self.rho),
            ("mode", &self.mode),
            ("operator", &self.operator),
            ("measure", &self.measure),
            ("function", &self.function),
            ("instances", &self.instances),
            ("samples", &self.samples),
            ("refine", &self.refine),
            ("seed", &self.seed),
            ("out", &self.out),
        ];
        let mut cfg = Config::default();
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v.clone()).expect("flag names are config keys");
            }
        }
        cfg
    }
}

fn resolve(cli: &Cli) -> Result<(Command, Config), ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError::new("config", format!("cannot read `{}`: {e}", path.display())))?;
            Config::from_toml(&text)?
        }
        None => Config::default(),
    };
    cfg.merge(cli.flags());
    let command = match (cli.command, cfg.raw("subcommand")) {
        (Some(c), _) => c,
        (None, Some(s)) => s.parse().map_err(|e: String| ConfigError::new("subcommand", e))?,
        (None, None) => return Err(ConfigError::new("subcommand", "missing; pass it first or set it in the config")),
    };
    cfg.set("subcommand", command.name().to_string())?;
    if randomized(command, &cfg) && cfg.raw("seed").is_none() {
        return Err(ConfigError::new("seed", format!("`{}` is randomized and needs a seed", command.name())));
    }
    Ok((command, cfg))
}

fn execute(cli: &Cli) -> Result<bool, RunError> {
    let (command, cfg) = resolve(cli)?;
    let outcome = if cli.deterministic {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| RunError::Failed(e.to_string()))?;
        pool.install(|| run(command, &cfg))?
    } else {
        run(command, &cfg)?
    };
    let mut bytes = Vec::new();
    let seed = cfg.raw("seed").unwrap_or("none");
    write_comment(&mut bytes, &format!("config_hash={} seed={seed}", cfg.hash()))?;
    for note in &outcome.notes {
        write_comment(&mut bytes, note)?;
    }
    bytes.extend_from_slice(&outcome.csv);
    let written = match cfg.raw("out") {
        Some(path) => std::fs::write(path, &bytes).map_err(|e| format!("cannot write `{path}`: {e}")),
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string()),
    };
    written.map_err(RunError::Failed)?;
    Ok(outcome.ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error: a verified property failed; see the output");
            ExitCode::from(1)
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
