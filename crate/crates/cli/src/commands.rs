//! The experiment subcommands. Each returns the CSV body it wants written and whether every
//! checked property held.

use std::fmt;
use std::fs::File;
use std::str::FromStr;

use sparsedom::czdecomp::{cz_decompose, verify_cz_bounds};
use sparsedom::generate::{random_function, random_measure, ValueDist};
use sparsedom::io::{read_function, read_measure, write_family, write_table};
use sparsedom::lattice::{disjoint_basis, q_convexity_lower_bound, q_convexity_ratio};
use sparsedom::operators::{operator_norm_probe, Operator, ProbeSetup, SamplerConfig};
use sparsedom::seed::{child_seed, stream_rng};
use sparsedom::sharpness::{blowup_curve, DEFAULT_RHO};
use sparsedom::sparse::{adaptive_threshold, domination_constant, verify_sparsity};
use sparsedom::weights::{scaling_experiment, ScalingConfig, ScalingMode};
use sparsedom::{CubeCollection, DyadicMeasure, GridSpec, NormMode, NormSpec, SimpleFunction};

use crate::config::{Config, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SparseBuild,
    DominateCheck,
    Sharpness,
    WeightsScan,
    CzCheck,
    Convexity,
    ProbeNorm,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SparseBuild => "sparse-build",
            Command::DominateCheck => "dominate-check",
            Command::Sharpness => "sharpness",
            Command::WeightsScan => "weights-scan",
            Command::CzCheck => "cz-check",
            Command::Convexity => "convexity",
            Command::ProbeNorm => "probe-norm",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Command as clap::ValueEnum>::from_str(s, false)
    }
}

#[derive(Debug)]
pub enum RunError {
    /// Bad or missing configuration; exit code 2.
    Config(ConfigError),
    /// The computation itself failed; exit code 1.
    Failed(String),
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(e) => e.fmt(f),
            RunError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<sparsedom::Error> for RunError {
    fn from(e: sparsedom::Error) -> Self {
        RunError::Failed(e.to_string())
    }
}

/// CSV body and verdict of one run.
pub struct Outcome {
    pub csv: Vec<u8>,
    /// Summary lines written as comments above the header.
    pub notes: Vec<String>,
    pub ok: bool,
}

/// Whether the command draws random numbers under this configuration.
pub fn randomized(cmd: Command, cfg: &Config) -> bool {
    let generated = |key: &str, default: &str| cfg.raw(key).unwrap_or(default).starts_with("random");
    match cmd {
        Command::Sharpness => false,
        Command::SparseBuild | Command::DominateCheck | Command::CzCheck => {
            generated("measure", "uniform") || generated("function", "random")
        }
        Command::WeightsScan | Command::Convexity | Command::ProbeNorm => true,
    }
}

pub fn run(cmd: Command, cfg: &Config) -> Result<Outcome, RunError> {
    match cmd {
        Command::SparseBuild => sparse_build(cfg),
        Command::DominateCheck => dominate_check(cfg),
        Command::Sharpness => sharpness(cfg),
        Command::WeightsScan => weights_scan(cfg),
        Command::CzCheck => cz_check(cfg),
        Command::Convexity => convexity(cfg),
        Command::ProbeNorm => probe_norm(cfg),
    }
}

fn config_err(key: &str) -> impl Fn(sparsedom::Error) -> RunError + '_ {
    move |e| RunError::Config(ConfigError::new(key, e.to_string()))
}

fn grid(cfg: &Config) -> Result<GridSpec, RunError> {
    GridSpec::new(cfg.get("d", 1)?, cfg.get("depth", 8)?).map_err(config_err("depth"))
}

fn norm(cfg: &Config) -> Result<NormSpec<f64>, RunError> {
    let norm: NormSpec<f64> = cfg.raw("norm").unwrap_or("lp:2").parse().map_err(config_err("norm"))?;
    norm.validate().map_err(config_err("norm"))?;
    Ok(norm)
}

/// Lattice dimension: `n`, or the weight count of a weighted norm.
fn lattice_dim(cfg: &Config, norm: &NormSpec<f64>) -> Result<usize, RunError> {
    let default = match norm {
        NormSpec::WeightedLp { weights, .. } => weights.len(),
        _ => 1,
    };
    let n = cfg.get("n", default)?;
    norm.check_dim(n).map_err(config_err("n"))?;
    Ok(n)
}

fn seed(cfg: &Config) -> Result<u64, RunError> {
    Ok(cfg.require("seed")?)
}

fn single(cfg: &Config, key: &str, default: f64) -> Result<f64, RunError> {
    let v: Vec<f64> = cfg.range(key, &default.to_string())?;
    match v[..] {
        [x] => Ok(x),
        _ => Err(ConfigError::new(key, "expects a single value").into()),
    }
}

fn open(key: &str, path: &str) -> Result<File, RunError> {
    File::open(path).map_err(|e| ConfigError::new(key, format!("cannot open `{path}`: {e}")).into())
}

fn need_rng<'a, R>(rng: &'a mut Option<R>, key: &str) -> Result<&'a mut R, RunError> {
    rng.as_mut().ok_or_else(|| ConfigError::new("seed", format!("required to generate `{key}`")).into())
}

/// Instance `i`: measure then function, drawn from `stream_rng(seed, i)` when generated.
/// `cz-check` defaults to integer values, where every average it compares is exact.
fn instance(cfg: &Config, i: u64, dim: usize, default_function: &str) -> Result<(SimpleFunction<f64>, DyadicMeasure<f64>), RunError> {
    let g = grid(cfg)?;
    let mut rng = match cfg.raw("seed") {
        Some(_) => Some(stream_rng(seed(cfg)?, i)),
        None => None,
    };
    let measure_src = cfg.raw("measure").unwrap_or("uniform");
    let mu = match measure_src.split_once(':') {
        None if measure_src == "uniform" => DyadicMeasure::uniform(g).map_err(config_err("measure"))?,
        Some(("random", max)) => {
            let max: u32 = max.parse().map_err(|e| ConfigError::new("measure", format!("`{max}`: {e}")))?;
            random_measure(g, max, 0.2, need_rng(&mut rng, "measure")?).map_err(config_err("measure"))?
        }
        Some(("file", path)) => read_measure(open("measure", path)?, g).map_err(config_err("measure"))?,
        _ => return Err(ConfigError::new("measure", "expected `uniform`, `random:<max mass>` or `file:<path>`").into()),
    };
    let function_src = cfg.raw("function").unwrap_or(default_function);
    let f = match function_src.split_once(':') {
        Some(("random", dist)) => {
            let dist: ValueDist = dist.parse().map_err(config_err("function"))?;
            random_function(&mu, dim, dist, 0.3, need_rng(&mut rng, "function")?)?
        }
        Some(("file", path)) => {
            let f: SimpleFunction<f64> = read_function(open("function", path)?, g).map_err(config_err("function"))?;
            if f.dim() != dim {
                return Err(ConfigError::new("function", format!("file has {} coordinates, `n` is {dim}", f.dim())).into());
            }
            f
        }
        _ => return Err(ConfigError::new("function", "expected `random:<distribution>` or `file:<path>`").into()),
    };
    Ok((f, mu))
}

fn table(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, RunError> {
    let mut buf = Vec::new();
    write_table(&mut buf, header, rows)?;
    Ok(buf)
}

fn sparse_build(cfg: &Config) -> Result<Outcome, RunError> {
    let norm = norm(cfg)?;
    let dim = lattice_dim(cfg, &norm)?;
    let tau0 = single(cfg, "tau0", 1.0)?;
    let (f, mu) = instance(cfg, 0, dim, "random:unit")?;
    let d = grid(cfg)?.all_cubes();
    let (family, tau) = adaptive_threshold(&f, &d, &mu, &norm, tau0)?;
    let sparse = verify_sparsity(family.cubes(), &mu)?.is_feasible();
    let mut csv = Vec::new();
    write_family(&mut csv, &family)?;
    Ok(Outcome {
        csv,
        notes: vec![format!("tau_final={tau} cubes={} sparse={sparse}", family.cubes().len())],
        ok: sparse,
    })
}

fn dominate_check(cfg: &Config) -> Result<Outcome, RunError> {
    let norm = norm(cfg)?;
    let dim = lattice_dim(cfg, &norm)?;
    let tau0 = single(cfg, "tau0", 1.0)?;
    let q = single(cfg, "q", 2.0)?;
    let instances: u64 = cfg.get("instances", 1)?;
    let d = grid(cfg)?.all_cubes();
    let mut rows = Vec::new();
    let mut ok = true;
    for i in 0..instances {
        let (f, mu) = instance(cfg, i, dim, "random:unit")?;
        let (family, tau) = adaptive_threshold(&f, &d, &mu, &norm, tau0)?;
        let sparse = verify_sparsity(family.cubes(), &mu)?.is_feasible();
        let c = domination_constant(&f, q, &d, family.cubes(), &mu, &norm)?.constant;
        let dominated = c <= tau;
        ok &= sparse && dominated;
        rows.push(vec![
            i.to_string(),
            tau.to_string(),
            c.to_string(),
            family.cubes().len().to_string(),
            sparse.to_string(),
            dominated.to_string(),
        ]);
    }
    let header = ["instance", "tau_final", "constant", "cubes", "sparse", "dominated"];
    Ok(Outcome { csv: table(&header, rows)?, notes: vec![format!("q={q} all_dominated={ok}")], ok })
}

fn sharpness(cfg: &Config) -> Result<Outcome, RunError> {
    let r = single(cfg, "r", 1.0)?;
    let q = single(cfg, "q", 2.0)?;
    let rho = single(cfg, "rho", DEFAULT_RHO)?;
    let ns: Vec<usize> = cfg.range("n", "4,8,16,32")?;
    if ns.iter().any(|&n| n == 0 || n > 60) {
        return Err(ConfigError::new("n", "chain lengths must lie in 1..=60").into());
    }
    let norm = NormSpec::Lp(r);
    norm.validate().map_err(config_err("r"))?;
    let curve = blowup_curve(&norm, q, &ns, rho)?;
    let exponent = (1.0 / r - 1.0 / q).max(0.0);
    let mut ok = true;
    let rows = curve
        .points
        .iter()
        .map(|&(n, c)| {
            ok &= c >= 0.5 * (n as f64).powf(exponent);
            vec![n.to_string(), q.to_string(), r.to_string(), c.to_string(), curve.slope.to_string()]
        })
        .collect();
    Ok(Outcome {
        csv: table(&["n", "q", "r", "C_star", "slope"], rows)?,
        notes: vec![format!("rho={rho} expected_slope={exponent} lower_bound_holds={ok}")],
        ok,
    })
}

fn weights_scan(cfg: &Config) -> Result<Outcome, RunError> {
    let norm = norm(cfg)?;
    let dim = lattice_dim(cfg, &norm)?;
    if cfg.get("d", 1u32)? != 1 {
        return Err(ConfigError::new("d", "the weight family lives on [0,1)").into());
    }
    let mode: ScalingMode = cfg.raw("mode").unwrap_or("strong").parse().map_err(config_err("mode"))?;
    let scan = ScalingConfig {
        p: single(cfg, "p", 2.0)?,
        q: single(cfg, "q", f64::INFINITY)?,
        norm,
        dim,
        depth: cfg.get("depth", 8)?,
        ts: cfg.range("t", "1..8")?,
        mode,
        samples: cfg.get("samples", 16)?,
        seed: seed(cfg)?,
    };
    let report = scaling_experiment(&scan)?;
    let rows = report
        .points
        .iter()
        .map(|pt| {
            vec![
                pt.t.to_string(),
                pt.ap.to_string(),
                pt.a_inf.to_string(),
                pt.a_inf_dual.map(|x| x.to_string()).unwrap_or_default(),
                pt.norm_lb.to_string(),
                report.predicted_exponent.to_string(),
                report.fitted_slope.to_string(),
            ]
        })
        .collect();
    let header = ["t", "Ap", "Ainf", "Ainf_dual", "norm_lb", "predicted_exponent", "fitted_slope"];
    Ok(Outcome { csv: table(&header, rows)?, notes: Vec::new(), ok: true })
}

fn cz_check(cfg: &Config) -> Result<Outcome, RunError> {
    let norm = norm(cfg)?;
    let dim = lattice_dim(cfg, &norm)?;
    let p = single(cfg, "p", 2.0)?;
    let lambdas: Vec<f64> = cfg.range("lambda", "1")?;
    let instances: u64 = cfg.get("instances", 1)?;
    let d = grid(cfg)?.all_cubes();
    let mut rows = Vec::new();
    let mut ok = true;
    for i in 0..instances {
        let (f, mu) = instance(cfg, i, dim, "random:int:8")?;
        for &lambda in &lambdas {
            let parts = cz_decompose(&f, lambda, &d, &mu, &norm).map_err(config_err("lambda"))?;
            let r = verify_cz_bounds(&parts, &f, &mu, &norm, p)?;
            ok &= r.all_hold();
            rows.push(vec![
                i.to_string(),
                lambda.to_string(),
                parts.cubes.len().to_string(),
                parts.omega.len().to_string(),
                r.pointwise.to_string(),
                r.pointwise_excess.to_string(),
                r.weak_b.to_string(),
                r.sup_g2.to_string(),
                r.omega_matches.to_string(),
                r.b_level_mass.to_string(),
                r.weak_bound.to_string(),
                r.g1_ratio.to_string(),
            ]);
        }
    }
    let header = [
        "instance", "lambda", "cubes", "omega_cells", "pointwise", "pointwise_excess", "weak_b", "sup_g2", "omega_matches",
        "b_level_mass", "weak_bound", "g1_ratio",
    ];
    Ok(Outcome { csv: table(&header, rows)?, notes: vec![format!("all_hold={ok}")], ok })
}

fn convexity(cfg: &Config) -> Result<Outcome, RunError> {
    let norm = norm(cfg)?;
    let n = cfg.get("n", 4)?;
    norm.check_dim(n).map_err(config_err("n"))?;
    let qs: Vec<f64> = cfg.range("q", "1,2")?;
    let samples = cfg.get("samples", 10_000)?;
    let seed = seed(cfg)?;
    let mut rows = Vec::new();
    for (i, &q) in qs.iter().enumerate() {
        let est = q_convexity_lower_bound(&norm, q, n, samples, child_seed(seed, i as u64)).map_err(config_err("q"))?;
        let basis = q_convexity_ratio(&disjoint_basis::<f64>(n, n), q, &norm)?;
        rows.push(vec![q.to_string(), est.value.to_string(), basis.to_string(), samples.to_string()]);
    }
    let header = ["q", "lower_bound", "disjoint_basis_ratio", "samples"];
    Ok(Outcome { csv: table(&header, rows)?, notes: vec![format!("norm={norm} n={n}")], ok: true })
}

fn probe_norm(cfg: &Config) -> Result<Outcome, RunError> {
    let norm = norm(cfg)?;
    let dim = lattice_dim(cfg, &norm)?;
    let p = single(cfg, "p", 2.0)?;
    let mode = match cfg.raw("mode").unwrap_or("strong") {
        "strong" => NormMode::Strong,
        "weak" => NormMode::Weak,
        other => return Err(ConfigError::new("mode", format!("`{other}`: expected `strong` or `weak`")).into()),
    };
    let seed = seed(cfg)?;
    let g = grid(cfg)?;
    let d = g.all_cubes();
    let (operator, family, mu): (Operator<f64>, CubeCollection, DyadicMeasure<f64>) =
        match cfg.raw("operator").unwrap_or("maximal") {
            "maximal" => {
                let (_, mu) = instance(cfg, 0, dim, "random:unit")?;
                (Operator::LatticeMaximal, d, mu)
            }
            "sparse" => {
                // the stopping family of the seeded instance-0 function
                let (f, mu) = instance(cfg, 0, dim, "random:unit")?;
                let (family, _) = adaptive_threshold(&f, &d, &mu, &norm, single(cfg, "tau0", 1.0)?)?;
                (Operator::Sparse { q: single(cfg, "q", 2.0)? }, family.cubes().clone(), mu)
            }
            other => return Err(ConfigError::new("operator", format!("`{other}`: expected `maximal` or `sparse`")).into()),
        };
    let setup = ProbeSetup { operator, family: &family, measure: &mu, norm_measure: None, norm: &norm, dim, p, mode };
    let sampler = SamplerConfig {
        refine_rounds: cfg.get("refine", 0)?,
        ..SamplerConfig::new(cfg.get("samples", 64)?, child_seed(seed, 1))
    };
    let est = operator_norm_probe(&setup, &sampler, &[])?;
    let op = cfg.raw("operator").unwrap_or("maximal");
    let mode_name = if mode == NormMode::Strong { "strong" } else { "weak" };
    let rows = vec![vec![
        op.to_string(),
        p.to_string(),
        mode_name.to_string(),
        est.value.to_string(),
        family.len().to_string(),
        est.samples.to_string(),
    ]];
    let header = ["operator", "p", "mode", "estimate", "family_cubes", "samples"];
    Ok(Outcome { csv: table(&header, rows)?, notes: Vec::new(), ok: true })
}
