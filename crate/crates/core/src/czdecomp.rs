//! Calderon-Zygmund decomposition of a nonnegative lattice-valued function at height `lambda`.
//!
//! `S` is the set of maximal cubes of the whole grid with `<||f||_E>_S > lambda` and
//! `Omega = union S`. Then `M_D f <= M_D(g1 + g2) + b` with
//!
//! * `g2 = f 1_(Omega^c)`, bounded by `lambda` off `Omega`;
//! * `g1 = sum_S (mu(S) / mu(S^)) <f>_S 1_(S^)`, where `S^` is the dyadic parent of `S` (the
//!   root is its own parent, which only enlarges `g1`);
//! * `b(x) = sup { <f>_Q : Q in D, x in Q, Q inside some S }`, supported on `Omega`.

use crate::error::{Error, Result};
use crate::grid::CubeCollection;
use crate::lattice::{check_dim, NormSpec};
use crate::measure::{check_p, scalar_lebesgue_norm, AtomField, DyadicMeasure, NormMode, SimpleFunction};
use crate::operators::{maximal_field, operator_norm_probe, place, Operator, ProbeSetup, SamplerConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct CZParts<T> {
    pub lambda: T,
    /// Maximal cubes of the full grid with `<||f||_E> > lambda`.
    pub cubes: CubeCollection,
    /// Atoms of `Omega`, sorted.
    pub omega: Vec<u64>,
    pub g1: SimpleFunction<T>,
    pub g2: SimpleFunction<T>,
    pub b: SimpleFunction<T>,
    /// The family `D` the maximal operator runs over.
    pub family: CubeCollection,
}

/// Maximal positive-mass cubes of the full grid whose scalar average exceeds `lambda`.
fn stopping_cubes<T: Scalar>(norms: &AtomField<T>, mu: &DyadicMeasure<T>, lambda: T) -> CubeCollection {
    let grid = *mu.grid();
    let mut out = CubeCollection::new();
    let mut stack = vec![grid.root()];
    while let Some(q) = stack.pop() {
        let range = mu.atom_range(&q);
        let Some(avg) = norms.average(mu, range) else { continue };
        if avg[0] > lambda {
            out.insert(q);
        } else if q.level() < grid.depth() {
            stack.extend(grid.children(&q).expect("not at the finest level"));
        }
    }
    out
}

/// Decomposes `f >= 0` at height `lambda > 0`.
pub fn cz_decompose<T: Scalar>(
    f: &SimpleFunction<T>,
    lambda: T,
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
) -> Result<CZParts<T>> {
    if !(lambda > T::zero()) || lambda.is_infinite() {
        return Err(Error::InvalidThreshold(format!("lambda = {lambda} must be positive and finite")));
    }
    norm.validate()?;
    norm.check_dim(f.dim())?;
    let field = AtomField::of(f, mu)?;
    if field.data.iter().any(|&x| x < T::zero()) {
        return Err(Error::InvalidFunction("the decomposition needs f >= 0".into()));
    }
    let dim = f.dim();
    let cubes = stopping_cubes(&field.norms(norm), mu, lambda);

    let mut in_omega = vec![false; mu.atom_count()];
    let mut g1 = AtomField::zeros(dim, mu.atom_count());
    for s in &cubes {
        let range = mu.atom_range(s);
        in_omega[range.clone()].iter_mut().for_each(|x| *x = true);
        let avg = field.average(mu, range).expect("stopping cubes have mass");
        let hat = s.parent().unwrap_or(*s);
        let hat_range = mu.atom_range(&hat);
        let share = mu.mass(s) / mu.mass(&hat);
        for i in hat_range {
            for (x, &a) in g1.row_mut(i).iter_mut().zip(&avg) {
                *x = *x + share * a;
            }
        }
    }
    let mut g2 = field.clone();
    for (i, _) in in_omega.iter().enumerate().filter(|(_, &o)| o) {
        g2.row_mut(i).iter_mut().for_each(|x| *x = T::zero());
    }

    let inside: Vec<_> = place(d, mu)?
        .into_iter()
        .filter(|p| cubes.iter().any(|s| s.contains(&p.cube)))
        .collect();
    let b = maximal_field(&field, &inside, mu);

    let omega = mu.cells().iter().zip(&in_omega).filter(|(_, &o)| o).map(|(&c, _)| c).collect();
    Ok(CZParts {
        lambda,
        cubes,
        omega,
        g1: g1.into_function(mu),
        g2: g2.into_function(mu),
        b: b.into_function(mu),
        family: d.clone(),
    })
}

/// The three verified bounds and the measured constants.
#[derive(Debug, Clone, PartialEq)]
pub struct CZReport<T> {
    /// `M_D f <= M_D(g1 + g2) + b` coordinatewise on every atom.
    pub pointwise: bool,
    /// Largest `(M_D f - M_D(g1 + g2) - b) / M_D f` over atoms and coordinates; `<= 0` iff
    /// `pointwise` holds.
    pub pointwise_excess: T,
    /// `mu(||b||_E > lambda) <= ||f||_{L^1} / lambda`.
    pub weak_b: bool,
    /// `||g2||_E <= lambda` on every atom.
    pub sup_g2: bool,
    /// `Omega` equals `{ M(||f||_E) > lambda }` over the full grid.
    pub omega_matches: bool,
    pub b_level_mass: T,
    pub weak_bound: T,
    /// `||g1||_{L^p}^p / (lambda^(p-1) ||f||_{L^1})`: measured, not asserted.
    pub g1_ratio: T,
}

impl<T> CZReport<T> {
    pub fn all_hold(&self) -> bool {
        self.pointwise && self.weak_b && self.sup_g2 && self.omega_matches
    }
}

pub fn verify_cz_bounds<T: Scalar>(
    parts: &CZParts<T>,
    f: &SimpleFunction<T>,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
    p: T,
) -> Result<CZReport<T>> {
    check_p(p)?;
    check_dim(f.dim(), parts.g1.dim())?;
    let n = mu.atom_count();
    if parts.g1.cells() != mu.cells() || parts.g2.cells() != mu.cells() || parts.b.cells() != mu.cells() {
        return Err(Error::GridMismatch("parts were not built on this measure".into()));
    }
    let field = AtomField::of(f, mu)?;
    let placed = place(&parts.family, mu)?;
    let lhs = maximal_field(&field.clone().abs(), &placed, mu);
    let good = AtomField::of(&parts.g1.add(&parts.g2)?, mu)?.abs();
    let m_good = maximal_field(&good, &placed, mu);
    let b = AtomField::of(&parts.b, mu)?;
    let mut pointwise = true;
    let mut pointwise_excess = T::neg_infinity();
    for i in 0..n {
        for ((&l, &g), &bb) in lhs.row(i).iter().zip(m_good.row(i)).zip(b.row(i)) {
            pointwise &= l <= g + bb;
            if l > T::zero() {
                pointwise_excess = pointwise_excess.max((l - (g + bb)) / l);
            }
        }
    }

    let norms_f = field.norms(norm);
    let l1 = scalar_lebesgue_norm(&norms_f.data, mu.masses(), T::one(), NormMode::Strong);
    let weak_bound = l1 / parts.lambda;
    let b_norms = b.norms(norm);
    let b_level_mass = (0..n)
        .filter(|&i| b_norms.data[i] > parts.lambda)
        .fold(T::zero(), |a, i| a + mu.masses()[i]);
    let weak_b = b_level_mass <= weak_bound;

    let g2_norms = AtomField::of(&parts.g2, mu)?.norms(norm);
    let sup_g2 = g2_norms.data.iter().all(|&x| x <= parts.lambda);

    // scalar maximal function of ||f|| over every cube of the grid
    let grid = *mu.grid();
    let all: CubeCollection = (0..=grid.depth())
        .flat_map(|l| mu.cells().iter().map(move |&c| grid.cell_ancestor(c, l)))
        .collect();
    let full = place(&all, mu)?;
    let big = maximal_field(&norms_f, &full, mu);
    let omega_atoms: Vec<bool> = mu.cells().iter().map(|c| parts.omega.binary_search(c).is_ok()).collect();
    let omega_matches = (0..n).all(|i| (big.data[i] > parts.lambda) == omega_atoms[i]);

    let g1_norms = AtomField::of(&parts.g1, mu)?.norms(norm);
    let g1_pp = scalar_lebesgue_norm(&g1_norms.data, mu.masses(), p, NormMode::Strong).powf(p);
    let g1_ratio = if l1 > T::zero() { g1_pp / (parts.lambda.powf(p - T::one()) * l1) } else { T::zero() };

    Ok(CZReport { pointwise, pointwise_excess, weak_b, sup_g2, omega_matches, b_level_mass, weak_bound, g1_ratio })
}

/// Lower bounds on the weak (1,1) and strong (p,p) norms of `M_D` and their quotient. Both are
/// lower bounds, so the quotient is reported only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakStrongRatio<T> {
    pub weak_one: T,
    pub strong_p: T,
    pub ratio: T,
}

pub fn weak_from_strong_ratio<T: Scalar>(
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
    dim: usize,
    p: T,
    sampler: &SamplerConfig,
) -> Result<WeakStrongRatio<T>> {
    let setup = |p, mode| ProbeSetup {
        operator: Operator::LatticeMaximal,
        family: d,
        measure: mu,
        norm_measure: None,
        norm,
        dim,
        p,
        mode,
    };
    let weak_one = operator_norm_probe(&setup(T::one(), NormMode::Weak), sampler, &[])?.value;
    let strong_p = operator_norm_probe(&setup(p, NormMode::Strong), sampler, &[])?.value;
    Ok(WeakStrongRatio { weak_one, strong_p, ratio: weak_one / strong_p })
}
