//! Muckenhoupt characteristics of weights on the unit cube and weighted norm experiments for the
//! dyadic lattice maximal operator.
//!
//! A weight is a positive density against Lebesgue measure, constant on finest cells. All
//! averages here are Lebesgue averages over dyadic cubes. The A_inf characteristic is the
//! Fujii-Wilson quantity `sup_Q int_Q M_D(w 1_Q) / int_Q w`, with the supremum taken over all
//! dyadic cubes.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CubeId, GridSpec};
use crate::lattice::{check_dim, NormSpec};
use crate::measure::{bochner_norm, check_p, DyadicMeasure, NormMode, SimpleFunction, DENSE_CELL_LIMIT};
use crate::operators::{operator_norm_probe, Operator, OperatorNormEstimate, ProbeSetup, SamplerConfig};
use crate::scalar::Scalar;
use crate::seed::child_seed;
use crate::sharpness::loglog_slope;

#[derive(Debug, Clone, PartialEq)]
pub struct Weight<T> {
    grid: GridSpec,
    values: Vec<T>,
}

impl<T: Scalar> Weight<T> {
    pub fn new(grid: GridSpec, values: Vec<T>) -> Result<Self> {
        if grid.cell_count() > DENSE_CELL_LIMIT {
            return Err(Error::InvalidGrid("weights are stored densely".into()));
        }
        check_dim(grid.cell_count() as usize, values.len())?;
        if let Some((c, v)) = values.iter().enumerate().find(|(_, v)| !(**v > T::zero()) || v.is_infinite()) {
            return Err(Error::InvalidWeight(format!("cell {c} has weight {v}")));
        }
        Ok(Weight { grid, values })
    }

    pub fn constant(grid: GridSpec, c: T) -> Result<Self> {
        Self::new(grid, vec![c; grid.cell_count() as usize])
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `w^s`.
    pub fn power(&self, s: T) -> Self {
        Weight { grid: self.grid, values: self.values.iter().map(|w| w.powf(s)).collect() }
    }

    pub fn scale(&self, c: T) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&w| c * w).collect())
    }

    /// The measure `w dx`.
    pub fn measure(&self) -> DyadicMeasure<T> {
        let vol = T::lit((-((self.grid.dim() * self.grid.depth()) as f64)).exp2());
        DyadicMeasure::from_dense(self.grid, self.values.iter().map(|&w| w * vol).collect())
            .expect("positive finite weights")
    }
}

/// Per-level tables indexed by Morton code: `table[l][j]` belongs to the `j`-th cube of level `l`.
fn pyramid<T: Scalar>(grid: &GridSpec, finest: Vec<T>, merge: impl Fn(&[T]) -> T) -> Vec<Vec<T>> {
    let fan = 1usize << grid.dim();
    let mut levels = vec![finest];
    for _ in 0..grid.depth() {
        let below = levels.last().expect("nonempty");
        levels.push(below.chunks(fan).map(&merge).collect());
    }
    levels.reverse();
    levels
}

/// Pairwise mean of `2^d` values; identical inputs come back unchanged.
fn pairwise_mean<T: Scalar>(xs: &[T]) -> T {
    let half = T::lit(0.5);
    let mut buf = xs.to_vec();
    while buf.len() > 1 {
        buf = buf.chunks(2).map(|c| (c[0] + c[1]) * half).collect();
    }
    buf[0]
}

fn means<T: Scalar>(grid: &GridSpec, values: &[T]) -> Vec<Vec<T>> {
    pyramid(grid, values.to_vec(), pairwise_mean)
}

fn cube_at(grid: &GridSpec, level: usize, code: usize) -> CubeId {
    grid.cell_ancestor((code as u64) << (grid.dim() as u64 * (grid.depth() as u64 - level as u64)), level as u32)
}

/// `sup_Q int_Q M_D(w 1_Q) / int_Q w` from the table of Lebesgue means.
fn fujii_wilson<T: Scalar>(grid: &GridSpec, mean: &[Vec<T>]) -> (T, CubeId) {
    let depth = grid.depth() as usize;
    let fan = 1usize << grid.dim();
    // sum over the finest cells of Q of the running max of means from Q down
    fn walk<T: Scalar>(mean: &[Vec<T>], fan: usize, depth: usize, level: usize, code: usize, above: T) -> T {
        let m = above.max(mean[level][code]);
        if level == depth {
            return m;
        }
        (0..fan).fold(T::zero(), |s, i| s + walk(mean, fan, depth, level + 1, code * fan + i, m))
    }
    let mut best = (T::neg_infinity(), 0usize, 0usize);
    for level in 0..=depth {
        let row: Vec<(T, usize)> = (0..mean[level].len())
            .into_par_iter()
            .map(|code| {
                let cells = T::from_usize_lossy(fan.pow((depth - level) as u32));
                (walk(mean, fan, depth, level, code, T::zero()) / (cells * mean[level][code]), code)
            })
            .collect();
        for (v, code) in row {
            if v > best.0 {
                best = (v, level, code);
            }
        }
    }
    (best.0, cube_at(grid, best.1, best.2))
}

/// `(characteristic, argmax)` of the A_p condition for `1 <= p < inf`.
fn ap_sup<T: Scalar>(w: &Weight<T>, p: T) -> (T, CubeId) {
    let grid = &w.grid;
    let mw = means(grid, &w.values);
    let second: Vec<Vec<T>> = if p == T::one() {
        pyramid(grid, w.values.iter().map(|v| v.recip()).collect(), |xs| {
            xs.iter().fold(T::zero(), |m, &x| m.max(x))
        })
    } else {
        let s = -(p - T::one()).recip();
        let pw = p - T::one();
        means(grid, &w.power(s).values).into_iter().map(|row| row.into_iter().map(|x| x.powf(pw)).collect()).collect()
    };
    let mut best = (T::neg_infinity(), 0usize, 0usize);
    for (level, (a, b)) in mw.iter().zip(&second).enumerate() {
        for (code, (&x, &y)) in a.iter().zip(b).enumerate() {
            if x * y > best.0 {
                best = (x * y, level, code);
            }
        }
    }
    (best.0, cube_at(grid, best.1, best.2))
}

/// The A_p characteristic of `w`, its argmax cube, and the companion quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ApReport<T> {
    pub p: T,
    pub characteristic: T,
    pub argmax: CubeId,
    /// `[w^(1-p')]_{A_p'}` for `1 < p < inf`.
    pub dual: Option<T>,
    pub a_inf: T,
    /// `[w^(1-p')]_{A_inf}` for `1 < p < inf`.
    pub a_inf_dual: Option<T>,
}

pub fn a_inf_characteristic<T: Scalar>(w: &Weight<T>) -> T {
    fujii_wilson(&w.grid, &means(&w.grid, &w.values)).0
}

/// `sup_Q <w>_Q <w^(-1/(p-1))>_Q^(p-1)` over all dyadic cubes; `p = 1` uses `<w>_Q / min_Q w`
/// and `p = inf` the Fujii-Wilson quantity.
pub fn ap_characteristic<T: Scalar>(w: &Weight<T>, p: T) -> Result<ApReport<T>> {
    if p.is_nan() || p < T::one() {
        return Err(Error::InvalidExponent(format!("p = {p} must be at least 1")));
    }
    let (a_inf, inf_arg) = fujii_wilson(&w.grid, &means(&w.grid, &w.values));
    if p.is_infinite() {
        return Ok(ApReport { p, characteristic: a_inf, argmax: inf_arg, dual: None, a_inf, a_inf_dual: None });
    }
    let (characteristic, argmax) = ap_sup(w, p);
    let (dual, a_inf_dual) = if p > T::one() {
        let p_dual = p / (p - T::one());
        let sigma = w.power(T::one() - p_dual);
        (Some(ap_sup(&sigma, p_dual).0), Some(a_inf_characteristic(&sigma)))
    } else {
        (None, None)
    };
    Ok(ApReport { p, characteristic, argmax, dual, a_inf, a_inf_dual })
}

/// `(int ||f||_E^p w dx)^(1/p)`, or the weak version.
pub fn weighted_norm<T: Scalar>(
    f: &SimpleFunction<T>,
    w: &Weight<T>,
    p: T,
    norm: &NormSpec<T>,
    mode: NormMode,
) -> Result<T> {
    bochner_norm(f, &w.measure(), norm, p, mode)
}

/// Which weighted bound is probed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    /// `L^p(w) -> L^p(w)`.
    Strong,
    /// `L^p(w) -> L^{p,inf}(w)`.
    Weak,
    /// `L^1(w) -> L^{1,inf}(w)` with A_1 weights.
    WeakOne,
}

impl std::str::FromStr for ScalingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strong" => Ok(ScalingMode::Strong),
            "weak" => Ok(ScalingMode::Weak),
            "weak-1" | "weak1" => Ok(ScalingMode::WeakOne),
            other => Err(Error::Parse(format!("unknown scaling mode `{other}`"))),
        }
    }
}

/// Power weights on `[0, 1)`: the cell averages of `x^a`, up to a constant factor, with
/// `a = (p - 1)(1 - 1/t)` for the `L^p` modes and `a = -(1 - 1/t)` for the A_1 mode. `t = 1`
/// gives `w = 1`, and the characteristic grows without bound as `t` does.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFamily<T> {
    pub depth: u32,
    pub p: T,
    pub mode: ScalingMode,
}

impl<T: Scalar> WeightFamily<T> {
    pub fn exponent(&self, t: T) -> T {
        let s = T::one() - t.recip();
        match self.mode {
            ScalingMode::WeakOne => -s,
            _ => (self.p - T::one()) * s,
        }
    }

    pub fn weight(&self, t: T) -> Result<Weight<T>> {
        if !(t >= T::one()) {
            return Err(Error::InvalidWeight(format!("family parameter {t} must be at least 1")));
        }
        let grid = GridSpec::new(1, self.depth)?;
        let b = self.exponent(t) + T::one();
        let values = (0..grid.cell_count())
            .map(|j| {
                let j = T::from_u64(j).expect("cell index fits");
                ((j + T::one()).powf(b) - j.powf(b)) / b
            })
            .collect();
        Weight::new(grid, values)
    }
}

/// Parameters of a weighted scaling run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingConfig<T> {
    pub p: T,
    /// Convexity exponent of the lattice (`inf` for scalars).
    pub q: T,
    pub norm: NormSpec<T>,
    pub dim: usize,
    pub depth: u32,
    pub ts: Vec<T>,
    pub mode: ScalingMode,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint<T> {
    pub t: T,
    pub ap: T,
    pub a_inf: T,
    pub a_inf_dual: Option<T>,
    /// Lower bound on the weighted operator norm of the dyadic lattice maximal operator.
    pub norm_lb: T,
    /// The mixed A_p / A_inf bound without its constant.
    pub refined_bound: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport<T> {
    pub points: Vec<ScalingPoint<T>>,
    pub predicted_exponent: f64,
    /// Least-squares slope of `ln norm_lb` against `ln [w]_{A_p}`.
    pub fitted_slope: f64,
}

impl<T: Scalar> ScalingConfig<T> {
    fn exponent_p(&self) -> T {
        match self.mode {
            ScalingMode::WeakOne => T::one(),
            _ => self.p,
        }
    }

    pub fn family(&self) -> WeightFamily<T> {
        WeightFamily { depth: self.depth, p: self.exponent_p(), mode: self.mode }
    }

    /// `max(1/(p-1), 1/q)` strong, `max(1/p, 1/q)` weak, `1` for A_1.
    pub fn predicted_exponent(&self) -> f64 {
        let (p, q) = (self.exponent_p().as_f64(), self.q.as_f64());
        match self.mode {
            ScalingMode::Strong => (p - 1.0).recip().max(q.recip()),
            ScalingMode::Weak => p.recip().max(q.recip()),
            ScalingMode::WeakOne => 1.0,
        }
    }

    fn refined_bound(&self, ap: T, a_inf: T, a_inf_dual: Option<T>) -> T {
        let p = self.exponent_p();
        let mixed = self.q.recip() - p.recip();
        match self.mode {
            ScalingMode::Strong => {
                ap.powf(p.recip()) * (a_inf.powf(mixed) + a_inf_dual.unwrap_or(T::one()).powf(p.recip()))
            }
            ScalingMode::Weak => ap.powf(p.recip()) * (a_inf.powf(mixed) + T::one()),
            ScalingMode::WeakOne => ap * (T::one() + a_inf.ln()),
        }
    }
}

/// Extremal-style test functions: `sigma 1_Q` (or `1_Q` when `p = 1`) for the dyadic cubes
/// containing the first cell, with the annulus of level `k` coloured by `e_(k mod n)`.
pub fn structured_witnesses<T: Scalar>(w: &Weight<T>, p: T, dim: usize) -> Result<Vec<SimpleFunction<T>>> {
    let grid = w.grid;
    let sigma: Vec<T> = if p > T::one() {
        w.power(T::one() - p / (p - T::one())).values
    } else {
        vec![T::one(); w.values.len()]
    };
    let annulus = |cell: u64| -> usize {
        // level of the largest cube containing `cell` but not cell 0
        (0..=grid.depth()).rev().find(|&l| grid.cell_ancestor(cell, l) != grid.cell_ancestor(0, l)).map_or(0, |l| l as usize)
    };
    let mut out = Vec::new();
    for level in 0..=grid.depth() {
        let q = grid.cube(level, &vec![0; grid.dim() as usize])?;
        for coloured in [false, true] {
            if coloured && dim == 1 {
                continue;
            }
            let entries = grid.cell_range(&q).map(|c| {
                let mut v = vec![T::zero(); dim];
                v[if coloured { annulus(c) % dim } else { 0 }] = sigma[c as usize];
                (c, v)
            });
            out.push(SimpleFunction::from_cells(grid, dim, entries)?);
        }
    }
    Ok(out)
}

/// Lower bound on the norm of `M_D` over all dyadic cubes from `L^p(w; E)` into the target
/// space of `mode`.
pub fn probe_weighted<T: Scalar>(
    w: &Weight<T>,
    p: T,
    norm: &NormSpec<T>,
    dim: usize,
    mode: NormMode,
    sampler: &SamplerConfig,
) -> Result<OperatorNormEstimate<T>> {
    check_p(p)?;
    let lebesgue = DyadicMeasure::uniform(w.grid)?;
    let nu = w.measure();
    let all = w.grid.all_cubes();
    let setup = ProbeSetup {
        operator: Operator::LatticeMaximal,
        family: &all,
        measure: &lebesgue,
        norm_measure: Some(&nu),
        norm,
        dim,
        p,
        mode,
    };
    operator_norm_probe(&setup, sampler, &structured_witnesses(w, p, dim)?)
}

/// Runs the weight family over `ts` and fits `ln norm_lb` against `ln [w]_{A_p}`.
pub fn scaling_experiment<T: Scalar>(cfg: &ScalingConfig<T>) -> Result<ScalingReport<T>> {
    let p = cfg.exponent_p();
    check_p(p)?;
    if cfg.mode == ScalingMode::Strong && p == T::one() {
        return Err(Error::InvalidExponent("the strong bound needs p > 1".into()));
    }
    let family = cfg.family();
    let mode = if cfg.mode == ScalingMode::Strong { NormMode::Strong } else { NormMode::Weak };
    let points = cfg
        .ts
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let w = family.weight(t)?;
            let report = ap_characteristic(&w, p)?;
            let sampler = SamplerConfig { cube_indicators: false, ..SamplerConfig::new(cfg.samples, child_seed(cfg.seed, i as u64)) };
            let est = probe_weighted(&w, p, &cfg.norm, cfg.dim, mode, &sampler)?;
            Ok(ScalingPoint {
                t,
                ap: report.characteristic,
                a_inf: report.a_inf,
                a_inf_dual: report.a_inf_dual,
                norm_lb: est.value,
                refined_bound: cfg.refined_bound(report.characteristic, report.a_inf, report.a_inf_dual),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = points.iter().fold((f64::INFINITY, 0.0f64), |(a, b), x| (a.min(x.ap.as_f64()), b.max(x.ap.as_f64())));
    if !(hi > lo * (1.0 + 1e-6)) {
        return Err(Error::DegenerateFamily("the A_p characteristic does not grow along the family".into()));
    }
    let fitted_slope = loglog_slope(&points.iter().map(|x| (x.ap.as_f64(), x.norm_lb.as_f64())).collect::<Vec<_>>())?;
    Ok(ScalingReport { points, predicted_exponent: cfg.predicted_exponent(), fitted_slope })
}
