//! Nested doubling chains on which the best domination constant grows like `n^(1/r - 1/q)`.
//!
//! On `[0, 1)` take `Q_k = [0, 2^(k-n))` for `k = 0..n`, a measure with
//! `mu(Q_(k-1)) = rho mu(Q_k)`, and `f = e_k` on `Q_k minus Q_(k-1)` for pairwise disjoint `e_k`.
//! Each annulus carries its mass on a single cell, so chains of length 32 cost 33 atoms on a grid
//! of `2^32` cells.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CubeCollection, CubeId, GridSpec};
use crate::lattice::{LatticeVector, NormSpec};
use crate::measure::{DyadicMeasure, SimpleFunction};
use crate::scalar::Scalar;
use crate::sparse::domination_constant;

/// Mass ratio used when none is given. Ratio one half makes every average closed-form but its
/// finite-`n` corrections are large; a quarter brings the log-log slope over `n <= 32` within a
/// few hundredths of the limit.
pub const DEFAULT_RHO: f64 = 0.25;

/// The disjoint vectors placed on the annuli.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VectorFamily {
    /// `e_k` is the `k`-th standard basis vector.
    #[default]
    Basis,
    /// `e_k` is the indicator of the `k`-th of `n` equal coordinate blocks.
    Blocks,
}

impl std::str::FromStr for VectorFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basis" => Ok(VectorFamily::Basis),
            "blocks" => Ok(VectorFamily::Blocks),
            other => Err(Error::Parse(format!("unknown vector family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainInstance<T> {
    pub n: usize,
    pub rho: T,
    pub grid: GridSpec,
    /// `Q_0, ..., Q_n`, innermost first.
    pub cubes: Vec<CubeId>,
    pub measure: DyadicMeasure<T>,
    /// `e_1, ..., e_n`.
    pub vectors: Vec<LatticeVector<T>>,
    pub f: SimpleFunction<T>,
    pub norm: NormSpec<T>,
}

impl<T: Scalar> ChainInstance<T> {
    /// The family `D = {Q_0, ..., Q_n}`.
    pub fn family(&self) -> CubeCollection {
        self.cubes.iter().copied().collect()
    }

    /// The cell carrying the mass of `Q_0`.
    pub fn x0(&self) -> u64 {
        0
    }
}

/// Builds the chain of length `n` on a grid of depth `n` with values in `R^dim`.
pub fn build_counterexample<T: Scalar>(
    n: usize,
    norm: &NormSpec<T>,
    dim: usize,
    family: VectorFamily,
    rho: T,
) -> Result<ChainInstance<T>> {
    if n == 0 {
        return Err(Error::InvalidChain("chain length must be at least 1".into()));
    }
    if n > dim {
        return Err(Error::InvalidChain(format!("{n} disjoint vectors do not fit in dimension {dim}")));
    }
    if !(rho > T::zero() && rho <= T::lit(0.5)) {
        return Err(Error::InvalidChain(format!("mass ratio {rho} must lie in (0, 1/2]")));
    }
    norm.validate()?;
    norm.check_dim(dim)?;
    let grid = GridSpec::new(1, n as u32)
        .map_err(|e| Error::InvalidChain(format!("chain of length {n} exceeds the grid: {e}")))?;
    let cubes: Vec<CubeId> = (0..=n).map(|k| grid.cube((n - k) as u32, &[0]).expect("level within depth")).collect();

    let vectors: Vec<LatticeVector<T>> = match family {
        VectorFamily::Basis => (0..n).map(|k| LatticeVector::basis(dim, k)).collect(),
        VectorFamily::Blocks => {
            let width = dim / n;
            (0..n)
                .map(|k| {
                    let mut v = vec![T::zero(); dim];
                    v[k * width..(k + 1) * width].iter_mut().for_each(|x| *x = T::one());
                    LatticeVector::new(v)
                })
                .collect()
        }
    };
    let norms: Vec<T> = vectors.iter().map(|v| norm.norm(v.as_slice())).collect();
    if norms.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidChain("vector norms must be nondecreasing".into()));
    }

    // annulus k is [2^(k-1-n), 2^(k-n)), starting at cell 2^(k-1)
    let mut atoms = vec![(0u64, rho.powi(n as i32))];
    let mut values = vec![(0u64, vec![T::zero(); dim])];
    for k in 1..=n {
        let cell = 1u64 << (k - 1);
        atoms.push((cell, (T::one() - rho) * rho.powi((n - k) as i32)));
        values.push((cell, vectors[k - 1].as_slice().to_vec()));
    }
    let measure = DyadicMeasure::from_atoms(grid, atoms)?;
    let f = SimpleFunction::from_cells(grid, dim, values)?;
    Ok(ChainInstance { n, rho, grid, cubes, measure, vectors, f, norm: norm.clone() })
}

/// Best domination constant over sparse subfamilies of the chain. Every subfamily is sparse and
/// the sparse operator only grows with the family, so the minimum is attained at `S = D`.
pub fn best_domination_constant<T: Scalar>(instance: &ChainInstance<T>, q: T) -> Result<T> {
    let d = instance.family();
    Ok(domination_constant(&instance.f, q, &d, &d, &instance.measure, &instance.norm)?.constant)
}

/// Minimum of the domination constant over all `2^(n+1)` subfamilies of the chain.
pub fn enumerate_best_constant<T: Scalar>(instance: &ChainInstance<T>, q: T) -> Result<T> {
    if instance.n > 20 {
        return Err(Error::InvalidChain(format!("enumerating 2^{} subfamilies is too many", instance.n + 1)));
    }
    let d = instance.family();
    let members = instance.cubes.len();
    (1u64..1 << members)
        .into_par_iter()
        .map(|mask| {
            let s: CubeCollection =
                instance.cubes.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| *c).collect();
            domination_constant(&instance.f, q, &d, &s, &instance.measure, &instance.norm).map(|r| r.constant)
        })
        .try_reduce(T::infinity, |a, b| Ok(a.min(b)))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0) || !y.is_finite()) {
        return Err(Error::DegenerateFamily("a log-log fit needs two or more positive points".into()));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let (mx, my) = logs.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x / m, b + y / m));
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateFamily("all abscissae coincide".into()));
    }
    Ok(logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum::<f64>() / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupCurve<T> {
    pub q: T,
    pub rho: T,
    /// `(n, C*(n))`.
    pub points: Vec<(usize, T)>,
    pub slope: f64,
    /// `1/r - 1/q` when the norm is `l^r` (clamped below at zero).
    pub expected_slope: Option<f64>,
}

/// `C*(n)` over `ns` for the basis chain in `norm`, and the fitted log-log slope.
pub fn blowup_curve<T: Scalar>(norm: &NormSpec<T>, q: T, ns: &[usize], rho: T) -> Result<BlowupCurve<T>> {
    let points = ns
        .par_iter()
        .map(|&n| {
            let dim = match norm {
                NormSpec::WeightedLp { weights, .. } => weights.len(),
                _ => n,
            };
            let inst = build_counterexample(n, norm, dim, VectorFamily::Basis, rho)?;
            Ok((n, best_domination_constant(&inst, q)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let slope = loglog_slope(&points.iter().map(|&(n, c)| (n as f64, c.as_f64())).collect::<Vec<_>>())?;
    let expected_slope = match norm {
        NormSpec::Lp(r) | NormSpec::WeightedLp { p: r, .. } => {
            Some((r.as_f64().recip() - q.as_f64().recip()).max(0.0))
        }
        NormSpec::Lorentz { .. } => None,
    };
    Ok(BlowupCurve { q, rho, points, slope, expected_slope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::average;
    use crate::operators::lattice_maximal;
    use crate::sparse::{adaptive_threshold, verify_sparsity};

    fn basis_chain(n: usize, r: f64, rho: f64) -> ChainInstance<f64> {
        build_counterexample(n, &NormSpec::Lp(r), n, VectorFamily::Basis, rho).unwrap()
    }

    #[test]
    fn equality_doubling_averages() {
        for n in 1..=10 {
            let inst = basis_chain(n, 1.0, 0.5);
            let abs = inst.f.abs();
            let norms = inst.f.pointwise_norm(&inst.measure, &inst.norm).unwrap();
            for (k, q) in inst.cubes.iter().enumerate() {
                let a = average(&abs, q, &inst.measure).unwrap();
                for j in 1..=k {
                    // coefficient of e_j in <|f|>_(Q_k) is 2^(j-k-1)
                    assert_eq!(a.as_slice()[j - 1], ((j as f64) - (k as f64) - 1.0).exp2());
                }
                let closed = 1.0 - (-(k as f64)).exp2();
                let got = average(&norms, q, &inst.measure).unwrap().as_slice()[0];
                assert!((got - closed).abs() <= 1e-15, "{got} vs {closed}");
                assert!(k == 0 || got <= 1.0);
            }
            let m = lattice_maximal(&inst.f, &inst.family(), &inst.measure).unwrap();
            assert_eq!(m.value(inst.x0()).unwrap(), &vec![0.5; n][..]);
        }
    }

    #[test]
    fn doubling_and_support_invariants() {
        for rho in [0.5, 0.25, 0.125] {
            let inst = basis_chain(6, 2.0, rho);
            for w in inst.cubes.windows(2) {
                assert!(inst.measure.mass(&w[0]) <= 0.5 * inst.measure.mass(&w[1]));
            }
            assert!(inst.measure.mass(&inst.cubes[0]) > 0.0);
            assert_eq!(inst.cubes[6], inst.grid.root());
        }
    }

    #[test]
    fn single_step_chain() {
        let inst = basis_chain(1, 1.0, 0.5);
        let m = lattice_maximal(&inst.f, &inst.family(), &inst.measure).unwrap();
        assert_eq!(inst.norm.norm(m.value(0).unwrap()), 0.5);
    }

    #[test]
    fn rejects_bad_shapes() {
        let n = NormSpec::Lp(1.0);
        assert!(build_counterexample(5, &n, 4, VectorFamily::Basis, 0.5).is_err());
        assert!(build_counterexample(0, &n, 4, VectorFamily::Basis, 0.5).is_err());
        assert!(build_counterexample(3, &n, 4, VectorFamily::Basis, 0.6).is_err());
        assert!(build_counterexample(70, &n, 80, VectorFamily::Basis, 0.5).is_err());
    }

    #[test]
    fn n4_closed_form() {
        let inst = basis_chain(4, 1.0, 0.5);
        let c = best_domination_constant(&inst, 2.0).unwrap();
        let closed = 2.0 / (1..=4).map(|k| (1.0 - (-(k as f64)).exp2()).powi(2)).sum::<f64>().sqrt();
        // the maximizing cell is x0, where the closed form applies
        assert!((c - closed).abs() <= 1e-12 * closed, "{c} vs {closed}");
        assert_eq!(enumerate_best_constant(&inst, 2.0).unwrap(), c);
    }

    #[test]
    fn lower_bound_law() {
        for rho in [0.5, 0.25] {
            for (r, q) in [(1.0, 2.0), (2.0, 4.0), (1.0, 3.0)] {
                for n in [2, 5, 9, 16] {
                    let c = best_domination_constant(&basis_chain(n, r, rho), q).unwrap();
                    let bound = 0.5 * (n as f64).powf(1.0 / r - 1.0 / q);
                    assert!(c >= bound, "n={n} r={r} q={q}: {c} < {bound}");
                }
            }
        }
    }

    #[test]
    fn enumeration_confirms_full_family() {
        for n in 1..=8 {
            for (r, q) in [(1.0, 2.0), (2.0, 2.0)] {
                let inst = basis_chain(n, r, DEFAULT_RHO);
                assert_eq!(enumerate_best_constant(&inst, q).unwrap(), best_domination_constant(&inst, q).unwrap());
            }
        }
    }

    #[test]
    fn every_subfamily_is_sparse() {
        let inst = basis_chain(5, 1.0, 0.5);
        for mask in 1u32..64 {
            let s: CubeCollection =
                inst.cubes.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| *c).collect();
            assert!(verify_sparsity(&s, &inst.measure).unwrap().is_feasible());
        }
    }

    #[test]
    fn no_blowup_at_the_convexity_index() {
        for n in 2..=12 {
            let inst = basis_chain(n, 2.0, 0.5);
            let c = best_domination_constant(&inst, 2.0).unwrap();
            let (_, tau) =
                adaptive_threshold(&inst.f, &inst.family(), &inst.measure, &inst.norm, 1.0).unwrap();
            assert!(c <= tau, "n={n}: {c} > {tau}");
        }
    }

    #[test]
    fn slope_fit() {
        let pts: Vec<(f64, f64)> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x: &f64| (x, 3.0 * x.powf(0.7))).collect();
        assert!((loglog_slope(&pts).unwrap() - 0.7).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_err());
    }

    #[test]
    fn blowup_slopes() {
        let ns = [4, 8, 16, 32];
        let c = blowup_curve(&NormSpec::Lp(1.0), 2.0, &ns, DEFAULT_RHO).unwrap();
        assert!((c.slope - 0.5).abs() <= 0.1, "{}", c.slope);
        let c = blowup_curve(&NormSpec::Lp(2.0), 2.0, &ns, DEFAULT_RHO).unwrap();
        assert!(c.slope.abs() <= 0.05, "{}", c.slope);
        let c = blowup_curve(&NormSpec::Lp(2.0), 4.0, &ns, DEFAULT_RHO).unwrap();
        assert!((c.slope - 0.25).abs() <= 0.1, "{}", c.slope);
        assert_eq!(c.expected_slope, Some(0.25));
    }
}
