//! Finite-dimensional Banach lattices with coordinatewise order.
//!
//! Every lattice here is `R^n` with the coordinatewise order, so `|v|`, `sup` and `inf` are
//! coordinatewise and Krivine sums `(sum |e_k|^q)^(1/q)` are computed coordinate by coordinate.
//! The norm is described by a [`NormSpec`].
//!
//! Convexity constants are only ever estimated from below: [`q_convexity_lower_bound`] returns
//! the largest ratio it found, never the exact constant (for Lorentz norms the exact constant is
//! not known in closed form).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{scaled_power_sum, Scalar};
use crate::seed::stream_rng;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatticeVector<T>(Vec<T>);

impl<T: Scalar> LatticeVector<T> {
    pub fn new(coords: Vec<T>) -> Self {
        LatticeVector(coords)
    }

    pub fn zeros(dim: usize) -> Self {
        LatticeVector(vec![T::zero(); dim])
    }

    /// The `k`-th standard basis vector.
    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = vec![T::zero(); dim];
        v[k] = T::one();
        LatticeVector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }

    pub fn abs(&self) -> Self {
        LatticeVector(self.0.iter().map(|x| x.abs()).collect())
    }

    pub fn sup(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.max(b))
    }

    pub fn inf(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a.min(b))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn scale(&self, c: T) -> Self {
        LatticeVector(self.0.iter().map(|&x| c * x).collect())
    }

    /// Coordinatewise `self <= other`.
    pub fn le(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|x| x.is_zero())
    }

    /// `inf(|self|, |other|) = 0`, tested exactly.
    pub fn is_disjoint_from(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.0.iter().zip(&other.0).all(|(a, b)| a.is_zero() || b.is_zero())
    }

    fn zip(&self, other: &Self, op: impl Fn(T, T) -> T) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        Ok(LatticeVector(self.0.iter().zip(&other.0).map(|(&a, &b)| op(a, b)).collect()))
    }
}

impl<T> From<Vec<T>> for LatticeVector<T> {
    fn from(v: Vec<T>) -> Self {
        LatticeVector(v)
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Result of [`lattice_ops`].
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOps<T> {
    pub sup: LatticeVector<T>,
    pub inf: LatticeVector<T>,
    pub abs_u: LatticeVector<T>,
    pub abs_v: LatticeVector<T>,
    pub sum: LatticeVector<T>,
}

pub fn lattice_ops<T: Scalar>(u: &LatticeVector<T>, v: &LatticeVector<T>) -> Result<LatticeOps<T>> {
    Ok(LatticeOps { sup: u.sup(v)?, inf: u.inf(v)?, abs_u: u.abs(), abs_v: v.abs(), sum: u.add(v)? })
}

/// Lattice norm descriptor.
///
/// Config syntax: `lp:2`, `lp:inf`, `wlp:2:1.0,0.5,...`, `lorentz:2:1`.
#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec<T> {
    /// `l^p`, `p` in `[1, inf]`.
    Lp(T),
    /// `(sum_i w_i |v_i|^p)^(1/p)` with positive weights; `p = inf` gives `max_i w_i |v_i|`.
    WeightedLp { p: T, weights: Vec<T> },
    /// Discrete Lorentz `l^{p,q}`: `(sum_k (v*_k)^q (k^(q/p) - (k-1)^(q/p)))^(1/q)` with `v*` the
    /// decreasing rearrangement of `|v|`. A quasi-norm when `p < q`.
    Lorentz { p: T, q: T },
}

impl<T: Scalar> NormSpec<T> {
    pub fn lp(p: T) -> Result<Self> {
        let spec = NormSpec::Lp(p);
        spec.validate()?;
        Ok(spec)
    }

    pub fn weighted_lp(p: T, weights: Vec<T>) -> Result<Self> {
        let spec = NormSpec::WeightedLp { p, weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn lorentz(p: T, q: T) -> Result<Self> {
        let spec = NormSpec::Lorentz { p, q };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidNorm(m));
        match self {
            NormSpec::Lp(p) => {
                if p.is_nan() || *p < T::one() {
                    return bad(format!("lp exponent {p} < 1"));
                }
            }
            NormSpec::WeightedLp { p, weights } => {
                if p.is_nan() || *p < T::one() {
                    return bad(format!("wlp exponent {p} < 1"));
                }
                if weights.is_empty() || weights.iter().any(|w| !(*w > T::zero()) || w.is_infinite()) {
                    return bad("wlp weights must be positive and finite".into());
                }
            }
            NormSpec::Lorentz { p, q } => {
                if !(*p > T::one()) || p.is_infinite() {
                    return bad(format!("lorentz p = {p} must lie in (1, inf)"));
                }
                if q.is_nan() || *q < T::one() || q.is_infinite() {
                    return bad(format!("lorentz q = {q} must lie in [1, inf)"));
                }
            }
        }
        Ok(())
    }

    /// Checks that vectors of dimension `dim` can be measured.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            NormSpec::WeightedLp { weights, .. } => check_dim(weights.len(), dim),
            _ => Ok(()),
        }
    }

    /// `false` for the Lorentz quasi-norms with `p < q`, where the triangle inequality fails.
    pub fn is_norm(&self) -> bool {
        match self {
            NormSpec::Lorentz { p, q } => q <= p,
            _ => true,
        }
    }

    pub fn norm(&self, v: &[T]) -> T {
        match self {
            NormSpec::Lp(p) => {
                if p.is_infinite() {
                    v.iter().fold(T::zero(), |m, x| m.max(x.abs()))
                } else if *p == T::one() {
                    v.iter().map(|x| x.abs()).sum()
                } else {
                    scaled_power_sum(v.iter().map(|x| (x.abs(), T::one())), *p)
                }
            }
            NormSpec::WeightedLp { p, weights } => {
                debug_assert_eq!(weights.len(), v.len());
                if p.is_infinite() {
                    v.iter().zip(weights).fold(T::zero(), |m, (x, w)| m.max(*w * x.abs()))
                } else {
                    scaled_power_sum(v.iter().zip(weights).map(|(x, w)| (x.abs(), *w)), *p)
                }
            }
            NormSpec::Lorentz { p, q } => {
                let mut r: Vec<T> = v.iter().map(|x| x.abs()).collect();
                r.sort_by(|a, b| b.partial_cmp(a).expect("finite coordinates"));
                let e = *q / *p;
                let weights = (1..=r.len()).map(|k| {
                    let k = T::from_usize_lossy(k);
                    k.powf(e) - (k - T::one()).powf(e)
                });
                scaled_power_sum(r.iter().copied().zip(weights.collect::<Vec<_>>()), *q)
            }
        }
    }
}

impl<T: Scalar> fmt::Display for NormSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let exp = |p: &T| if p.is_infinite() { "inf".to_string() } else { p.to_string() };
        match self {
            NormSpec::Lp(p) => write!(f, "lp:{}", exp(p)),
            NormSpec::WeightedLp { p, weights } => {
                let w: Vec<String> = weights.iter().map(|w| w.to_string()).collect();
                write!(f, "wlp:{}:{}", exp(p), w.join(","))
            }
            NormSpec::Lorentz { p, q } => write!(f, "lorentz:{p}:{q}"),
        }
    }
}

fn parse_exponent<T: Scalar>(s: &str) -> Result<T> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") {
        return Ok(T::infinity());
    }
    s.parse::<f64>().map(T::lit).map_err(|_| Error::InvalidNorm(format!("bad number `{s}`")))
}

impl<T: Scalar> FromStr for NormSpec<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["lp", p] => NormSpec::lp(parse_exponent(p)?),
            ["wlp", p, w] => {
                let weights = w.split(',').map(parse_exponent).collect::<Result<Vec<T>>>()?;
                NormSpec::weighted_lp(parse_exponent(p)?, weights)
            }
            ["lorentz", p, q] => NormSpec::lorentz(parse_exponent(p)?, parse_exponent(q)?),
            _ => Err(Error::InvalidNorm(format!("unrecognized norm `{s}`"))),
        }
    }
}

fn check_q<T: Scalar>(q: T) -> Result<()> {
    if q.is_nan() || q < T::one() {
        return Err(Error::InvalidExponent(format!("q = {q} < 1")));
    }
    Ok(())
}

/// Coordinatewise `(sum_k |e_k|^q)^(1/q)`; `q = inf` gives the lattice sup of `|e_k|`.
///
/// An empty sequence yields the zero vector of dimension `dim`.
pub fn q_sum<T: Scalar>(dim: usize, vectors: &[LatticeVector<T>], q: T) -> Result<LatticeVector<T>> {
    check_q(q)?;
    for v in vectors {
        check_dim(dim, v.dim())?;
    }
    let coords = (0..dim)
        .map(|i| {
            let column = vectors.iter().map(|v| (v.0[i].abs(), T::one()));
            if q.is_infinite() {
                column.fold(T::zero(), |m, (a, _)| m.max(a))
            } else {
                scaled_power_sum(column, q)
            }
        })
        .collect();
    Ok(LatticeVector(coords))
}

/// `(sum_k ||e_k||^q)^(1/q)`.
fn norm_q_sum<T: Scalar>(vectors: &[LatticeVector<T>], q: T, norm: &NormSpec<T>) -> T {
    let norms = vectors.iter().map(|v| (norm.norm(v.as_slice()), T::one()));
    if q.is_infinite() {
        norms.fold(T::zero(), |m, (a, _)| m.max(a))
    } else {
        scaled_power_sum(norms, q)
    }
}

fn common_dim<T: Scalar>(vectors: &[LatticeVector<T>]) -> Result<usize> {
    let dim = vectors.first().map(|v| v.dim()).ok_or(Error::ZeroTuple)?;
    for v in vectors {
        check_dim(dim, v.dim())?;
    }
    Ok(dim)
}

/// `||(sum |e_k|^q)^(1/q)||_E / (sum ||e_k||_E^q)^(1/q)`.
pub fn q_convexity_ratio<T: Scalar>(vectors: &[LatticeVector<T>], q: T, norm: &NormSpec<T>) -> Result<T> {
    check_q(q)?;
    let dim = common_dim(vectors)?;
    norm.check_dim(dim)?;
    let denominator = norm_q_sum(vectors, q, norm);
    if denominator.is_zero() {
        return Err(Error::ZeroTuple);
    }
    Ok(norm.norm(q_sum(dim, vectors, q)?.as_slice()) / denominator)
}

/// `||sum e_k||_E / (sum ||e_k||_E^r)^(1/r)` for pairwise disjoint `e_k`.
pub fn upper_r_ratio<T: Scalar>(vectors: &[LatticeVector<T>], r: T, norm: &NormSpec<T>) -> Result<T> {
    check_q(r)?;
    let dim = common_dim(vectors)?;
    norm.check_dim(dim)?;
    for (j, a) in vectors.iter().enumerate() {
        if vectors[j + 1..].iter().any(|b| !a.is_disjoint_from(b)) {
            return Err(Error::NotDisjoint);
        }
    }
    let mut sum = LatticeVector::zeros(dim);
    let mut abs_sum = LatticeVector::zeros(dim);
    let mut sup = LatticeVector::zeros(dim);
    for v in vectors {
        sum = sum.add(v)?;
        abs_sum = abs_sum.add(&v.abs())?;
        sup = sup.sup(&v.abs())?;
    }
    // disjoint supports: one nonzero term per coordinate, so the sum is the sup bit for bit
    assert_eq!(abs_sum, sup, "sum of disjoint vectors differs from their lattice sup");
    let denominator = norm_q_sum(vectors, r, norm);
    if denominator.is_zero() {
        return Err(Error::ZeroTuple);
    }
    Ok(norm.norm(sum.as_slice()) / denominator)
}

/// Largest q-convexity ratio found by a seeded search.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityEstimate<T> {
    /// A lower bound on the best q-convexity constant.
    pub value: T,
    pub witness: Vec<LatticeVector<T>>,
    pub samples: usize,
    pub seed: u64,
}

/// The tuple of the first `k` standard basis vectors of `R^dim`.
pub fn disjoint_basis<T: Scalar>(dim: usize, k: usize) -> Vec<LatticeVector<T>> {
    (0..k.min(dim)).map(|i| LatticeVector::basis(dim, i)).collect()
}

fn random_tuple<T: Scalar>(rng: &mut impl Rng, dim: usize) -> Vec<LatticeVector<T>> {
    let len = rng.gen_range(1..=2 * dim);
    let kind = rng.gen_range(0..4);
    (0..len)
        .map(|k| {
            let coords = (0..dim)
                .map(|i| {
                    let x: f64 = match kind {
                        0 => rng.gen_range(-1.0..1.0),
                        // sparse supports
                        1 => {
                            if rng.gen_bool(0.3) {
                                rng.gen_range(0.0..1.0)
                            } else {
                                0.0
                            }
                        }
                        // exactly disjoint supports
                        2 => {
                            if i % len == k {
                                rng.gen_range(0.1..1.0)
                            } else {
                                0.0
                            }
                        }
                        // heavy-tailed magnitudes
                        _ => rng.gen_range(0.0f64..1.0).powi(6) * 100.0,
                    };
                    T::lit(x)
                })
                .collect();
            LatticeVector(coords)
        })
        .collect()
}

/// Max of [`q_convexity_ratio`] over the structured disjoint-basis tuples of `R^dim` and
/// `samples` seeded random tuples. Sample `i` draws from its own stream, so the estimate is
/// nondecreasing in `samples` for a fixed seed.
pub fn q_convexity_lower_bound<T: Scalar>(
    norm: &NormSpec<T>,
    q: T,
    dim: usize,
    samples: usize,
    seed: u64,
) -> Result<ConvexityEstimate<T>> {
    check_q(q)?;
    norm.check_dim(dim)?;
    if dim == 0 {
        return Err(Error::ZeroTuple);
    }
    let structured: Vec<Vec<LatticeVector<T>>> = (1..=dim).map(|k| disjoint_basis(dim, k)).collect();
    let best_structured = structured
        .into_iter()
        .enumerate()
        .map(|(i, t)| (q_convexity_ratio(&t, q, norm).unwrap_or(T::zero()), i, t))
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("dim >= 1");
    let best_random = (0..samples)
        .into_par_iter()
        .filter_map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let tuple = random_tuple::<T>(&mut rng, dim);
            q_convexity_ratio(&tuple, q, norm).ok().map(|r| (r, i, tuple))
        })
        .reduce_with(|a, b| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let (value, _, witness) = match best_random {
        Some(r) if r.0 > best_structured.0 => r,
        _ => best_structured,
    };
    Ok(ConvexityEstimate { value, witness, samples, seed })
}
