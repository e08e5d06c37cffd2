//! The dyadic lattice maximal operator, the sparse operator, and lower-bound probes of their
//! operator norms.
//!
//! Cubes of zero mass are skipped inside every supremum and sum: their indicator vanishes
//! almost everywhere. Outputs are defined on the atoms of the measure.

use std::ops::Range;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{CubeCollection, CubeId};
use crate::lattice::{check_dim, NormSpec};
use crate::measure::{check_p, scalar_lebesgue_norm, AtomField, DyadicMeasure, NormMode, SimpleFunction};
use crate::scalar::{pow_nonneg, root_nonneg, Scalar};
use crate::seed::stream_rng;

/// A positive-mass member of a family together with its atom positions.
#[derive(Debug, Clone)]
pub(crate) struct Placed {
    pub cube: CubeId,
    pub atoms: Range<usize>,
}

/// Positive-mass members of `family`, in family order.
pub(crate) fn place<T: Scalar>(family: &CubeCollection, mu: &DyadicMeasure<T>) -> Result<Vec<Placed>> {
    let mut out = Vec::new();
    for q in family {
        mu.grid().check(q)?;
        let atoms = mu.atom_range(q);
        if mu.masses()[atoms.clone()].iter().any(|&m| m > T::zero()) {
            out.push(Placed { cube: *q, atoms });
        }
    }
    Ok(out)
}

pub(crate) fn averages<T: Scalar>(field: &AtomField<T>, placed: &[Placed], mu: &DyadicMeasure<T>) -> Vec<Vec<T>> {
    placed
        .par_iter()
        .map(|p| field.average(mu, p.atoms.clone()).expect("placed cubes have positive mass"))
        .collect()
}

/// Coordinatewise sup of the averages of a nonnegative field over the placed cubes containing
/// each atom.
pub(crate) fn maximal_field<T: Scalar>(field: &AtomField<T>, placed: &[Placed], mu: &DyadicMeasure<T>) -> AtomField<T> {
    let avgs = averages(field, placed, mu);
    let mut out: AtomField<T> = AtomField::zeros(field.dim, mu.atom_count());
    for (p, a) in placed.iter().zip(&avgs) {
        for i in p.atoms.clone() {
            for (o, &x) in out.row_mut(i).iter_mut().zip(a) {
                *o = o.max(x);
            }
        }
    }
    out
}

/// `(sum_S <g>_S^q)^(1/q)` per atom, summed in family order; `q = inf` gives the max.
pub(crate) fn sparse_field<T: Scalar>(g: &AtomField<T>, placed: &[Placed], mu: &DyadicMeasure<T>, q: T) -> Vec<T> {
    let avgs: Vec<T> = averages(g, placed, mu).into_iter().map(|a| a[0]).collect();
    let n = mu.atom_count();
    let mut peak = vec![T::zero(); n];
    for (p, &a) in placed.iter().zip(&avgs) {
        for i in p.atoms.clone() {
            peak[i] = peak[i].max(a);
        }
    }
    if q.is_infinite() {
        return peak;
    }
    let mut acc = vec![T::zero(); n];
    for (p, &a) in placed.iter().zip(&avgs) {
        for i in p.atoms.clone() {
            if peak[i] > T::zero() && !peak[i].is_infinite() {
                acc[i] = acc[i] + pow_nonneg(a / peak[i], q);
            }
        }
    }
    peak.iter()
        .zip(acc)
        .map(|(&m, s)| if m > T::zero() && !m.is_infinite() { m * root_nonneg(s, q) } else { m })
        .collect()
}

pub(crate) fn check_q<T: Scalar>(q: T) -> Result<()> {
    if q.is_nan() || q < T::one() {
        return Err(Error::InvalidExponent(format!("q = {q} must be at least 1")));
    }
    Ok(())
}

/// `M f(x) = sup { <|f|>_Q : Q in D, x in Q, mu(Q) > 0 }`, coordinatewise, on the atoms of `mu`.
pub fn lattice_maximal<T: Scalar>(
    f: &SimpleFunction<T>,
    family: &CubeCollection,
    mu: &DyadicMeasure<T>,
) -> Result<SimpleFunction<T>> {
    let field = AtomField::of(f, mu)?.abs();
    Ok(maximal_field(&field, &place(family, mu)?, mu).into_function(mu))
}

/// `A_{q,S} g(x) = (sum { <g>_S^q : S in S, x in S, mu(S) > 0 })^(1/q)` for scalar `g >= 0`.
pub fn sparse_operator<T: Scalar>(
    g: &SimpleFunction<T>,
    q: T,
    family: &CubeCollection,
    mu: &DyadicMeasure<T>,
) -> Result<SimpleFunction<T>> {
    check_q(q)?;
    check_dim(1, g.dim())?;
    let field = AtomField::of(g, mu)?;
    let values = sparse_field(&field, &place(family, mu)?, mu, q);
    SimpleFunction::on_support(mu, 1, values)
}

/// The operator whose norm a probe bounds from below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operator<T> {
    LatticeMaximal,
    /// `f -> A_{q,S}(||f||_E)`.
    Sparse { q: T },
}

/// What is being measured: `||Op f||_{L^p or L^{p,inf}(nu)} / ||f||_{L^p(nu; E)}`, where the
/// operator averages against `measure` and the norms integrate against `norm_measure`
/// (`measure` itself when absent; a weighted norm otherwise).
#[derive(Debug, Clone)]
pub struct ProbeSetup<'a, T> {
    pub operator: Operator<T>,
    pub family: &'a CubeCollection,
    pub measure: &'a DyadicMeasure<T>,
    pub norm_measure: Option<&'a DyadicMeasure<T>>,
    pub norm: &'a NormSpec<T>,
    /// Dimension `n` of the lattice values.
    pub dim: usize,
    pub p: T,
    pub mode: NormMode,
}

struct Prepared<'a, T> {
    setup: &'a ProbeSetup<'a, T>,
    placed: Vec<Placed>,
    norm_masses: &'a [T],
}

impl<'a, T: Scalar> Prepared<'a, T> {
    fn new(setup: &'a ProbeSetup<'a, T>) -> Result<Self> {
        check_p(setup.p)?;
        setup.norm.validate()?;
        setup.norm.check_dim(setup.dim)?;
        if let Operator::Sparse { q } = setup.operator {
            check_q(q)?;
        }
        let nu = setup.norm_measure.unwrap_or(setup.measure);
        if !nu.same_support(setup.measure) {
            return Err(Error::InvalidMeasure("norm measure must have the atoms of the averaging measure".into()));
        }
        Ok(Prepared { placed: place(setup.family, setup.measure)?, norm_masses: nu.masses(), setup })
    }

    fn ratio_of_field(&self, field: &AtomField<T>) -> T {
        let s = self.setup;
        let norms_f = field.norms(s.norm);
        let denominator = scalar_lebesgue_norm(&norms_f.data, self.norm_masses, s.p, NormMode::Strong);
        if !(denominator > T::zero()) {
            return T::zero();
        }
        let image = match s.operator {
            Operator::LatticeMaximal => maximal_field(&field.clone().abs(), &self.placed, s.measure).norms(s.norm).data,
            Operator::Sparse { q } => sparse_field(&norms_f, &self.placed, s.measure, q),
        };
        scalar_lebesgue_norm(&image, self.norm_masses, s.p, s.mode) / denominator
    }

    fn ratio(&self, f: &SimpleFunction<T>) -> Result<T> {
        check_dim(self.setup.dim, f.dim())?;
        Ok(self.ratio_of_field(&AtomField::of(f, self.setup.measure)?))
    }
}

/// `||Op f|| / ||f||` for one function; zero when `f` vanishes almost everywhere.
pub fn operator_ratio<T: Scalar>(setup: &ProbeSetup<'_, T>, f: &SimpleFunction<T>) -> Result<T> {
    Prepared::new(setup)?.ratio(f)
}

/// How many random functions to try and how to refine the best one.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub samples: usize,
    pub seed: u64,
    /// Rounds of coordinate ascent on the best candidate; zero disables refinement.
    pub refine_rounds: usize,
    /// Try `1_Q e_k` for every positive-mass family cube `Q` and basis vector `e_k`.
    pub cube_indicators: bool,
}

impl SamplerConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        SamplerConfig { samples, seed, refine_rounds: 0, cube_indicators: true }
    }
}

/// A certified lower bound: `value` is the ratio achieved by `witness`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorNormEstimate<T> {
    pub value: T,
    pub witness: SimpleFunction<T>,
    pub samples: usize,
    pub seed: u64,
}

impl<T: Scalar> OperatorNormEstimate<T> {
    /// Re-evaluates the witness; equals `value` bit for bit.
    pub fn recompute(&self, setup: &ProbeSetup<'_, T>) -> Result<T> {
        operator_ratio(setup, &self.witness)
    }
}

/// Nested chain candidates: along the family cubes containing `atom`, put `e_(k mod n)` on the
/// `k`-th annulus, innermost first.
fn chain_candidate<T: Scalar>(placed: &[Placed], atom: usize, dim: usize, atoms: usize) -> AtomField<T> {
    let mut chain: Vec<&Placed> = placed.iter().filter(|p| p.atoms.contains(&atom)).collect();
    chain.sort_by_key(|p| std::cmp::Reverse(p.cube.level()));
    let mut field = AtomField::zeros(dim, atoms);
    let mut done: Range<usize> = atom..atom;
    for (k, p) in chain.iter().enumerate() {
        for i in p.atoms.clone() {
            if !done.contains(&i) {
                field.row_mut(i)[k % dim] = T::one();
            }
        }
        done = p.atoms.clone();
    }
    field
}

fn random_candidate<T: Scalar>(rng: &mut impl Rng, placed: &[Placed], dim: usize, atoms: usize) -> AtomField<T> {
    let mut field = AtomField::zeros(dim, atoms);
    let kind = rng.gen_range(0..4);
    let support = match (kind, placed.is_empty()) {
        (1, false) => placed[rng.gen_range(0..placed.len())].atoms.clone(),
        _ => 0..atoms,
    };
    for i in support {
        for x in field.row_mut(i) {
            let v: f64 = match kind {
                0 | 1 => rng.gen_range(0.0..1.0),
                2 => rng.gen_range(0.0f64..1.0).powi(8) * 1e3,
                _ => {
                    if rng.gen_bool(0.1) {
                        rng.gen_range(0.0..1.0)
                    } else {
                        0.0
                    }
                }
            };
            *x = T::lit(v);
        }
    }
    field
}

fn better<T: Scalar>(a: (T, usize), b: (T, usize)) -> (T, usize) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Maximizes `||Op f|| / ||f||` over structured candidates (family cube indicators, nested chains
/// of disjoint basis vectors, the caller's `extra` functions) and `samples` seeded random
/// functions. Sample `i` draws from its own stream, so without refinement the estimate is
/// nondecreasing in the sample count for a fixed seed.
pub fn operator_norm_probe<T: Scalar>(
    setup: &ProbeSetup<'_, T>,
    sampler: &SamplerConfig,
    extra: &[SimpleFunction<T>],
) -> Result<OperatorNormEstimate<T>> {
    let prep = Prepared::new(setup)?;
    let mu = setup.measure;
    let (dim, atoms) = (setup.dim, mu.atom_count());
    if dim == 0 {
        return Err(Error::DimensionMismatch { expected: 1, found: 0 });
    }

    let mut structured: Vec<AtomField<T>> = Vec::new();
    for f in extra {
        check_dim(dim, f.dim())?;
        structured.push(AtomField::of(f, mu)?);
    }
    if atoms > 0 {
        structured.push(chain_candidate(&prep.placed, 0, dim, atoms));
        structured.push(chain_candidate(&prep.placed, atoms - 1, dim, atoms));
        let mut ones = AtomField::zeros(dim, atoms);
        ones.data.iter_mut().for_each(|x| *x = T::one());
        structured.push(ones);
    }
    let indicator = |i: usize| {
        let (p, k) = (&prep.placed[i / dim], i % dim);
        let mut field = AtomField::zeros(dim, atoms);
        for a in p.atoms.clone() {
            field.row_mut(a)[k] = T::one();
        }
        field
    };
    let indicators = if sampler.cube_indicators { prep.placed.len() * dim } else { 0 };

    let s = structured.len();
    let best_structured = (0..s + indicators)
        .into_par_iter()
        .map(|i| {
            let r = if i < s { prep.ratio_of_field(&structured[i]) } else { prep.ratio_of_field(&indicator(i - s)) };
            (r, i)
        })
        .reduce(|| (T::neg_infinity(), usize::MAX), better);
    let best_random = (0..sampler.samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(sampler.seed, i as u64);
            (prep.ratio_of_field(&random_candidate(&mut rng, &prep.placed, dim, atoms)), s + indicators + i)
        })
        .reduce(|| (T::neg_infinity(), usize::MAX), better);
    let (mut value, index) = better(best_structured, best_random);

    let mut field = match index {
        usize::MAX => AtomField::zeros(dim, atoms),
        i if i < s => structured[i].clone(),
        i if i < s + indicators => indicator(i - s),
        i => random_candidate(&mut stream_rng(sampler.seed, (i - s - indicators) as u64), &prep.placed, dim, atoms),
    };
    value = value.max(T::zero());

    for _ in 0..sampler.refine_rounds {
        let mut improved = false;
        for j in 0..field.data.len() {
            let old = field.data[j];
            let peak = field.data.iter().fold(T::zero(), |m, x| m.max(x.abs()));
            let tries = [old + old, old * T::lit(0.5), T::zero(), old + peak.max(T::one())];
            for t in tries {
                field.data[j] = t;
                let r = prep.ratio_of_field(&field);
                if r > value {
                    value = r;
                    improved = true;
                    break;
                }
                field.data[j] = old;
            }
        }
        if !improved {
            break;
        }
    }

    Ok(OperatorNormEstimate {
        value,
        witness: field.into_function(mu),
        samples: sampler.samples,
        seed: sampler.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::measure::average;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(depth: u32) -> GridSpec {
        GridSpec::new(1, depth).unwrap()
    }

    /// Independent oracle: for each cell, scan every family cube containing it.
    fn brute_maximal(f: &SimpleFunction<f64>, family: &CubeCollection, mu: &DyadicMeasure<f64>) -> Vec<Vec<f64>> {
        let g = *mu.grid();
        mu.cells()
            .iter()
            .map(|&c| {
                let mut best = vec![0.0; f.dim()];
                for level in 0..=g.depth() {
                    let q = g.cell_ancestor(c, level);
                    if family.contains(&q) && mu.mass(&q) > 0.0 {
                        let a = average(&f.abs(), &q, mu).unwrap();
                        for (b, x) in best.iter_mut().zip(a.as_slice()) {
                            *b = f64::max(*b, *x);
                        }
                    }
                }
                best
            })
            .collect()
    }

    #[test]
    fn empty_family_gives_zero() {
        let g = line(2);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let f = SimpleFunction::scalar(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = lattice_maximal(&f, &CubeCollection::new(), &mu).unwrap();
        assert!(m.iter().all(|(_, v)| v == [0.0]));
        let a = sparse_operator(&f, 2.0, &CubeCollection::new(), &mu).unwrap();
        assert!(a.iter().all(|(_, v)| v == [0.0]));
    }

    #[test]
    fn maximal_of_a_spike() {
        let g = line(2);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let f = SimpleFunction::scalar(g, vec![4.0, 0.0, 0.0, 0.0]).unwrap();
        let m = lattice_maximal(&f, &g.all_cubes(), &mu).unwrap();
        let vals: Vec<f64> = m.iter().map(|(_, v)| v[0]).collect();
        assert_eq!(vals, vec![4.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn lattice_sup_differs_from_norm_sup() {
        let g = line(1);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let f = SimpleFunction::from_dense(g, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let d: CubeCollection = [g.root()].into_iter().collect();
        let m = lattice_maximal(&f, &d, &mu).unwrap();
        assert!(m.iter().all(|(_, v)| v == [0.5, 0.5]));
    }

    #[test]
    fn sparse_two_terms() {
        let g = line(2);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let f = SimpleFunction::scalar(g, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let s: CubeCollection = [g.root(), g.cube(1, &[0]).unwrap()].into_iter().collect();
        let a = sparse_operator(&f, 2.0, &s, &mu).unwrap();
        let vals: Vec<f64> = a.iter().map(|(_, v)| v[0]).collect();
        let left = 1.25f64.sqrt();
        assert!((vals[0] - left).abs() < 1e-15 && (vals[1] - left).abs() < 1e-15);
        assert_eq!(&vals[2..], &[0.5, 0.5]);
        assert!(sparse_operator(&f, 0.5, &s, &mu).is_err());
    }

    #[test]
    fn large_q_approaches_max() {
        let g = line(4);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = SimpleFunction::scalar(g, (0..16).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();
        let all = g.all_cubes();
        let max = sparse_operator(&f, f64::INFINITY, &all, &mu).unwrap();
        let big = sparse_operator(&f, 4096.0, &all, &mu).unwrap();
        for ((_, a), (_, b)) in max.iter().zip(big.iter()) {
            assert!((a[0] - b[0]).abs() <= 1e-6 * a[0].max(1.0), "{} vs {}", a[0], b[0]);
        }
        // q = 64: the sum of 5 terms exceeds the max by at most a factor 5^(1/64)
        let q64 = sparse_operator(&f, 64.0, &all, &mu).unwrap();
        for ((_, a), (_, b)) in max.iter().zip(q64.iter()) {
            assert!(b[0] >= a[0] && b[0] <= a[0] * 5f64.powf(1.0 / 64.0) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn probe_constant_function_on_root() {
        let g = line(3);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let d: CubeCollection = [g.root()].into_iter().collect();
        let norm = NormSpec::Lp(1.0);
        let setup = ProbeSetup {
            operator: Operator::LatticeMaximal,
            family: &d,
            measure: &mu,
            norm_measure: None,
            norm: &norm,
            dim: 1,
            p: 2.0,
            mode: NormMode::Strong,
        };
        let est = operator_norm_probe(&setup, &SamplerConfig::new(200, 1), &[]).unwrap();
        assert_eq!(est.value, 1.0);
        assert_eq!(est.recompute(&setup).unwrap(), est.value);
    }

    #[test]
    fn probe_beats_single_cell_witness() {
        let g = line(4);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let all = g.all_cubes();
        let norm = NormSpec::Lp(1.0);
        let setup = ProbeSetup {
            operator: Operator::LatticeMaximal,
            family: &all,
            measure: &mu,
            norm_measure: None,
            norm: &norm,
            dim: 1,
            p: 2.0,
            mode: NormMode::Strong,
        };
        let spike = SimpleFunction::from_cells(g, 1, [(3, vec![1.0])]).unwrap();
        // brute force: M spike = 2^(k-4) on cells at distance level k, ratio by direct summation
        let m = brute_maximal(&spike, &all, &mu);
        let num: f64 = m.iter().map(|v| v[0] * v[0] / 16.0).sum::<f64>().sqrt();
        let brute = num / (1.0f64 / 16.0).sqrt();
        let est = operator_norm_probe(&setup, &SamplerConfig::new(100, 3), &[]).unwrap();
        assert!(est.value >= brute * (1.0 - 1e-12), "{} < {}", est.value, brute);
        assert_eq!(est.recompute(&setup).unwrap(), est.value);
    }

    #[test]
    fn probe_is_monotone_in_samples() {
        let g = GridSpec::new(2, 2).unwrap();
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let all = g.all_cubes();
        let norm = NormSpec::Lp(2.0);
        let setup = ProbeSetup {
            operator: Operator::Sparse { q: 2.0 },
            family: &all,
            measure: &mu,
            norm_measure: None,
            norm: &norm,
            dim: 3,
            p: 1.0,
            mode: NormMode::Weak,
        };
        let mut last = 0.0;
        for samples in [0, 1, 5, 20, 80] {
            let mut cfg = SamplerConfig::new(samples, 11);
            cfg.cube_indicators = false;
            let est = operator_norm_probe(&setup, &cfg, &[]).unwrap();
            assert!(est.value >= last);
            assert_eq!(est.recompute(&setup).unwrap(), est.value);
            last = est.value;
        }
    }

    #[test]
    fn refinement_never_lowers_the_estimate() {
        let g = line(3);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let all = g.all_cubes();
        let norm = NormSpec::Lp(2.0);
        let setup = ProbeSetup {
            operator: Operator::LatticeMaximal,
            family: &all,
            measure: &mu,
            norm_measure: None,
            norm: &norm,
            dim: 2,
            p: 2.0,
            mode: NormMode::Strong,
        };
        let mut cfg = SamplerConfig::new(10, 4);
        let plain = operator_norm_probe(&setup, &cfg, &[]).unwrap();
        cfg.refine_rounds = 3;
        let refined = operator_norm_probe(&setup, &cfg, &[]).unwrap();
        assert!(refined.value >= plain.value);
        assert_eq!(refined.recompute(&setup).unwrap(), refined.value);
    }

    #[test]
    fn f32_maximal() {
        let g = line(2);
        let mu = DyadicMeasure::<f32>::uniform(g).unwrap();
        let f = SimpleFunction::scalar(g, vec![4.0f32, 0.0, 0.0, 0.0]).unwrap();
        let m = lattice_maximal(&f, &g.all_cubes(), &mu).unwrap();
        assert_eq!(m.value(1).unwrap(), &[2.0f32]);
    }

    fn family_from_mask(g: GridSpec, mask: u64) -> CubeCollection {
        g.all_cubes().iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, q)| *q).collect()
    }

    proptest! {
        #[test]
        fn maximal_matches_brute_force_and_dominates_averages(
            masses in proptest::collection::vec(prop_oneof![Just(0.0), 0.1f64..3.0], 8),
            vals in proptest::collection::vec(-4.0f64..4.0, 16),
            mask in 0u64..(1 << 15),
        ) {
            let g = line(3);
            let mu = DyadicMeasure::from_dense(g, masses).unwrap();
            let f = SimpleFunction::from_dense(g, 2, vals).unwrap();
            let d = family_from_mask(g, mask);
            let m = lattice_maximal(&f, &d, &mu).unwrap();
            let brute = brute_maximal(&f, &d, &mu);
            for ((_, v), b) in m.iter().zip(&brute) {
                prop_assert_eq!(v, &b[..]);
            }
            for q in d.iter().filter(|q| mu.mass(q) > 0.0) {
                let a = average(&f.abs(), q, &mu).unwrap();
                for c in g.cell_range(q) {
                    if let Some(v) = m.value(c) {
                        for (x, y) in a.as_slice().iter().zip(v) {
                            prop_assert!(x <= y);
                        }
                    }
                }
            }
        }

        #[test]
        fn maximal_is_monotone_and_homogeneous(
            vals in proptest::collection::vec(0.0f64..4.0, 8),
            bump in proptest::collection::vec(0.0f64..4.0, 8),
            c in 0.0f64..8.0,
            mask in 0u64..(1 << 7),
        ) {
            let g = line(2);
            let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
            let f = SimpleFunction::from_dense(g, 2, vals).unwrap();
            let h = f.add(&SimpleFunction::from_dense(g, 2, bump).unwrap()).unwrap();
            let d = family_from_mask(g, mask);
            let mf = lattice_maximal(&f, &d, &mu).unwrap();
            let mh = lattice_maximal(&h, &d, &mu).unwrap();
            for ((_, a), (_, b)) in mf.iter().zip(mh.iter()) {
                for (x, y) in a.iter().zip(b) {
                    prop_assert!(*x <= *y + 1e-12);
                }
            }
            // powers of two keep the scaling exact
            let c = c.log2().floor().exp2();
            let mc = lattice_maximal(&f.scale(c), &d, &mu).unwrap();
            prop_assert_eq!(mc, mf.scale(c));
        }

        #[test]
        fn sparse_is_nonincreasing_in_q(
            vals in proptest::collection::vec(0.0f64..4.0, 8),
            mask in 0u64..(1 << 15),
            q in 1.0f64..6.0,
            dq in 0.0f64..6.0,
        ) {
            let g = line(3);
            let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
            let f = SimpleFunction::scalar(g, vals).unwrap();
            let s = family_from_mask(g, mask);
            let lo = sparse_operator(&f, q, &s, &mu).unwrap();
            let hi = sparse_operator(&f, q + dq, &s, &mu).unwrap();
            for ((_, a), (_, b)) in lo.iter().zip(hi.iter()) {
                prop_assert!(b[0] <= a[0] * (1.0 + 1e-12));
            }
        }
    }
}
