//! Seeded random measures, functions and weights for experiments and tests.
//!
//! Generators draw from a caller-supplied generator, normally `seed::stream_rng(seed, i)` for
//! instance `i`. Integer and dyadic value distributions keep averages exact in floating point.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::{DyadicMeasure, SimpleFunction};
use crate::scalar::Scalar;
use crate::weights::Weight;

/// Distribution of nonnegative coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueDist {
    /// Uniform on `[0, 1)`.
    Unit,
    /// Uniform integer in `0..=max`.
    Integer(u32),
    /// Uniform multiple of `2^-bits` in `[0, 1)`.
    Dyadic(u32),
}

impl ValueDist {
    fn draw<T: Scalar, R: Rng + ?Sized>(self, rng: &mut R) -> T {
        match self {
            ValueDist::Unit => T::lit(rng.gen::<f64>()),
            ValueDist::Integer(max) => T::lit(rng.gen_range(0..=max) as f64),
            ValueDist::Dyadic(bits) => T::lit(rng.gen_range(0..1u64 << bits) as f64 * (-(bits as f64)).exp2()),
        }
    }
}

impl fmt::Display for ValueDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueDist::Unit => f.write_str("unit"),
            ValueDist::Integer(m) => write!(f, "int:{m}"),
            ValueDist::Dyadic(b) => write!(f, "dyadic:{b}"),
        }
    }
}

impl FromStr for ValueDist {
    type Err = Error;

    /// `unit`, `int:<max>` or `dyadic:<bits>`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("value distribution `{s}`: expected `unit`, `int:<max>` or `dyadic:<bits>`"));
        match s.trim().split_once(':') {
            None if s.trim() == "unit" => Ok(ValueDist::Unit),
            Some(("int", m)) => m.trim().parse().map(ValueDist::Integer).map_err(|_| bad()),
            Some(("dyadic", b)) => match b.trim().parse() {
                Ok(bits) if bits <= 52 => Ok(ValueDist::Dyadic(bits)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Measure with integer cell masses in `0..=max_mass`, each cell empty with probability
/// `empty`. At least one cell gets positive mass.
pub fn random_measure<T: Scalar, R: Rng + ?Sized>(
    grid: GridSpec,
    max_mass: u32,
    empty: f64,
    rng: &mut R,
) -> Result<DyadicMeasure<T>> {
    if max_mass == 0 || !(0.0..1.0).contains(&empty) {
        return Err(Error::InvalidMeasure(format!("max_mass {max_mass}, empty {empty}")));
    }
    let cells = grid.cell_count() as usize;
    let mut masses: Vec<T> = (0..cells)
        .map(|_| {
            if rng.gen_bool(empty) {
                T::zero()
            } else {
                T::lit(rng.gen_range(1..=max_mass) as f64)
            }
        })
        .collect();
    if masses.iter().all(|m| m.is_zero()) {
        let c = rng.gen_range(0..cells);
        masses[c] = T::lit(rng.gen_range(1..=max_mass) as f64);
    }
    DyadicMeasure::from_dense(grid, masses)
}

/// Nonnegative function listed on every cell of `mu`'s support; each cell is zero with
/// probability `empty`, otherwise every coordinate is drawn from `dist`.
pub fn random_function<T: Scalar, R: Rng + ?Sized>(
    mu: &DyadicMeasure<T>,
    dim: usize,
    dist: ValueDist,
    empty: f64,
    rng: &mut R,
) -> Result<SimpleFunction<T>> {
    if !(0.0..=1.0).contains(&empty) {
        return Err(Error::InvalidFunction(format!("empty probability {empty}")));
    }
    let mut values = Vec::with_capacity(mu.atom_count() * dim);
    for _ in 0..mu.atom_count() {
        let zero = rng.gen_bool(empty);
        values.extend((0..dim).map(|_| if zero { T::zero() } else { dist.draw::<T, _>(rng) }));
    }
    SimpleFunction::on_support(mu, dim, values)
}

/// Weight with `log2 w` uniform on `[-spread, spread]` in every cell.
pub fn random_weight<T: Scalar, R: Rng + ?Sized>(grid: GridSpec, spread: f64, rng: &mut R) -> Result<Weight<T>> {
    if !(spread.is_finite() && spread >= 0.0) {
        return Err(Error::InvalidWeight(format!("spread {spread}")));
    }
    let values = (0..grid.cell_count())
        .map(|_| T::lit((rng.gen::<f64>() * 2.0 - 1.0) * spread).exp2())
        .collect();
    Weight::new(grid, values)
}
