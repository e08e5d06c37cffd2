//! Sparse families: the stopping-cube construction, exact sparsity verification, and the
//! pointwise domination constant `max_x ||M f(x)||_E / A_{q,S}(||f||_E)(x)`.
//!
//! A family `S` is sparse when every member `S` owns a set `E_S` of at least half its mass and
//! the sets are pairwise disjoint. [`build_stopping_family`] records the natural witness
//! `E_S = S minus its stopping children`; [`verify_sparsity`] decides feasibility for an arbitrary
//! family by max-flow.

mod flow;

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::{CubeCollection, CubeId};
use crate::lattice::NormSpec;
use crate::measure::{AtomField, DyadicMeasure, SimpleFunction};
use crate::operators::{averages, check_q, maximal_field, place, sparse_field, Placed};
use crate::scalar::Scalar;

use flow::FlowNetwork;

/// A family of cubes, optionally with witness sets `E_S` (atoms only; zero-mass cells are
/// irrelevant to every mass condition) and the threshold it was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCollection<T> {
    pub cubes: CubeCollection,
    pub witness: Option<BTreeMap<CubeId, Vec<u64>>>,
    pub tau: Option<T>,
}

impl<T: Scalar> SparseCollection<T> {
    pub fn from_cubes(cubes: CubeCollection) -> Self {
        SparseCollection { cubes, witness: None, tau: None }
    }

    /// Whether the stored witnesses are pairwise disjoint, lie in their cubes, and carry at least
    /// `density` of each cube's mass. False when no witness is stored.
    pub fn witness_holds(&self, mu: &DyadicMeasure<T>, density: T) -> bool {
        let Some(witness) = &self.witness else { return false };
        let mut seen = std::collections::HashSet::new();
        for s in &self.cubes {
            let cells = witness.get(s).map(Vec::as_slice).unwrap_or(&[]);
            let range = mu.grid().cell_range(s);
            if cells.iter().any(|c| !range.contains(c) || !seen.insert(*c)) {
                return false;
            }
            let owned = cells.iter().fold(T::zero(), |a, &c| a + mu.cell_mass(c));
            if owned < density * mu.mass(s) {
                return false;
            }
        }
        true
    }
}

/// Output of the stopping construction.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingFamily<T> {
    pub sparse: SparseCollection<T>,
    pub tau: T,
    /// Stopping-tree parent of every stopping cube below the top level.
    pub tree_parent: BTreeMap<CubeId, CubeId>,
    /// `pi(Q)`: the smallest stopping cube containing `Q`, for every positive-mass `Q` in `D`.
    pub stopping_parent: BTreeMap<CubeId, CubeId>,
    /// `<||f||_E>_S` for every stopping cube.
    pub norm_average: BTreeMap<CubeId, T>,
    pub witness_mass: BTreeMap<CubeId, T>,
    pub cube_mass: BTreeMap<CubeId, T>,
}

impl<T: Scalar> StoppingFamily<T> {
    pub fn cubes(&self) -> &CubeCollection {
        &self.sparse.cubes
    }

    /// Whether every recorded witness carries at least `density` of its cube's mass.
    pub fn is_sparse(&self, density: T) -> bool {
        self.cube_mass.iter().all(|(s, &m)| self.witness_mass[s] >= density * m)
    }
}

/// Positive-mass members of `D` with nearest-member parents.
struct Forest {
    placed: Vec<Placed>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl Forest {
    fn new<T: Scalar>(d: &CubeCollection, mu: &DyadicMeasure<T>) -> Result<Self> {
        let placed = place(d, mu)?;
        let index: HashMap<CubeId, usize> = placed.iter().enumerate().map(|(i, p)| (p.cube, i)).collect();
        let mut parent = vec![None; placed.len()];
        let mut children = vec![Vec::new(); placed.len()];
        for (i, p) in placed.iter().enumerate() {
            let mut cur = p.cube.parent();
            while let Some(c) = cur {
                if let Some(&j) = index.get(&c) {
                    parent[i] = Some(j);
                    children[j].push(i);
                    break;
                }
                cur = c.parent();
            }
        }
        Ok(Forest { placed, parent, children })
    }
}

fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if !(tau > T::zero()) || tau.is_infinite() {
        return Err(Error::InvalidThreshold(format!("tau = {tau} must be positive and finite")));
    }
    Ok(())
}

fn sup_into<T: Scalar>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a = a.max(b);
    }
}

/// Atom positions of `outer` not covered by the disjoint `holes`.
fn complement(outer: Range<usize>, mut holes: Vec<Range<usize>>) -> Vec<usize> {
    holes.sort_by_key(|r| r.start);
    let mut out = Vec::new();
    let mut at = outer.start;
    for h in holes {
        out.extend(at..h.start);
        at = h.end;
    }
    out.extend(at..outer.end);
    out
}

/// Stopping cubes of `f` at threshold `tau`.
///
/// The top layer is the maximal positive-mass members of `D`. Below a stopping cube `S`, a member
/// `S'` stops when `|| sup { <|f|>_Q : Q in D, S' <= Q <= S } ||_E > tau <||f||_E>_S`, and only
/// the maximal such `S'` are kept.
pub fn build_stopping_family<T: Scalar>(
    f: &SimpleFunction<T>,
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
    tau: T,
) -> Result<StoppingFamily<T>> {
    check_tau(tau)?;
    norm.validate()?;
    norm.check_dim(f.dim())?;
    let field = AtomField::of(f, mu)?.abs();
    let forest = Forest::new(d, mu)?;
    let avg = averages(&field, &forest.placed, mu);
    let navg: Vec<T> = averages(&field.norms(norm), &forest.placed, mu).into_iter().map(|a| a[0]).collect();

    let mut queue: VecDeque<usize> = (0..forest.placed.len()).filter(|&i| forest.parent[i].is_none()).collect();
    let mut family = StoppingFamily {
        sparse: SparseCollection { cubes: CubeCollection::new(), witness: Some(BTreeMap::new()), tau: Some(tau) },
        tau,
        tree_parent: BTreeMap::new(),
        stopping_parent: BTreeMap::new(),
        norm_average: BTreeMap::new(),
        witness_mass: BTreeMap::new(),
        cube_mass: BTreeMap::new(),
    };
    while let Some(s) = queue.pop_front() {
        let cube = forest.placed[s].cube;
        let threshold = tau * navg[s];
        family.stopping_parent.insert(cube, cube);
        let mut stopped = Vec::new();
        let mut stack: Vec<(usize, Vec<T>)> = forest.children[s].iter().map(|&c| (c, avg[s].clone())).collect();
        while let Some((c, mut chain)) = stack.pop() {
            sup_into(&mut chain, &avg[c]);
            if norm.norm(&chain) > threshold {
                stopped.push(c);
            } else {
                family.stopping_parent.insert(forest.placed[c].cube, cube);
                stack.extend(forest.children[c].iter().map(|&g| (g, chain.clone())));
            }
        }
        stopped.sort_unstable();
        for &c in &stopped {
            family.tree_parent.insert(forest.placed[c].cube, cube);
            queue.push_back(c);
        }

        let holes = stopped.iter().map(|&c| forest.placed[c].atoms.clone()).collect();
        let own = complement(forest.placed[s].atoms.clone(), holes);
        let owned_mass = own.iter().fold(T::zero(), |a, &i| a + mu.masses()[i]);
        let cube_mass = mu.masses()[forest.placed[s].atoms.clone()].iter().fold(T::zero(), |a, &m| a + m);
        family.sparse.cubes.insert(cube);
        family.sparse.witness.as_mut().expect("set above").insert(cube, own.iter().map(|&i| mu.cells()[i]).collect());
        family.norm_average.insert(cube, navg[s]);
        family.witness_mass.insert(cube, owned_mass);
        family.cube_mass.insert(cube, cube_mass);
    }
    Ok(family)
}

/// Builds stopping families at `tau0, 2 tau0, 4 tau0, ...` until every recorded witness holds
/// half its cube's mass; returns the first such family and its threshold.
pub fn adaptive_threshold<T: Scalar>(
    f: &SimpleFunction<T>,
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
    tau0: T,
) -> Result<(StoppingFamily<T>, T)> {
    check_tau(tau0)?;
    let half = T::lit(0.5);
    let mut tau = tau0;
    loop {
        let family = build_stopping_family(f, d, mu, norm, tau)?;
        if family.is_sparse(half) {
            return Ok((family, tau));
        }
        tau = tau + tau;
        if tau.is_infinite() {
            return Err(Error::DegenerateFamily("threshold doubling overflowed".into()));
        }
    }
}

/// Fractional witnesses may split a cell's mass between cubes; subset witnesses assign whole
/// cells and need a measure whose atoms all carry the same mass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SparsityMode {
    #[default]
    Fractional,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityOptions<T> {
    /// Required share of each cube's mass; one half unless stated otherwise.
    pub density: T,
    pub mode: SparsityMode,
}

impl<T: Scalar> Default for SparsityOptions<T> {
    fn default() -> Self {
        SparsityOptions { density: T::lit(0.5), mode: SparsityMode::Fractional }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SparsityVerdict<T> {
    /// Mass each cube draws from each cell (whole cells in subset mode).
    Feasible { assignment: BTreeMap<CubeId, Vec<(u64, T)>> },
    /// A set of cubes whose combined demand exceeds the mass of their union.
    Infeasible { cut: CubeCollection, demand: T, supply: T },
}

impl<T> SparsityVerdict<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, SparsityVerdict::Feasible { .. })
    }
}

/// Decides whether `family` is sparse with density one half (fractional witnesses).
pub fn verify_sparsity<T: Scalar>(family: &CubeCollection, mu: &DyadicMeasure<T>) -> Result<SparsityVerdict<T>> {
    verify_sparsity_with(family, mu, SparsityOptions::default())
}

/// Bipartite supply and demand: cube `S` demands `density * mu(S)` from the atoms it contains,
/// each atom supplies its mass, and the family is sparse iff the maximum flow meets every demand.
/// Fractional mode accepts a flow within `eps * nodes` relative of the demand; subset mode works
/// in whole cells and is exact.
pub fn verify_sparsity_with<T: Scalar>(
    family: &CubeCollection,
    mu: &DyadicMeasure<T>,
    options: SparsityOptions<T>,
) -> Result<SparsityVerdict<T>> {
    let density = options.density;
    if !(density > T::zero() && density <= T::one()) {
        return Err(Error::InvalidThreshold(format!("density {density} must lie in (0, 1]")));
    }
    let placed = place(family, mu)?;
    let subset = options.mode == SparsityMode::Subset;
    if subset && mu.masses().windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::InvalidMeasure("subset witnesses need equal atom masses".into()));
    }
    let unit = |i: usize| if subset { T::one() } else { mu.masses()[i] };
    let demand_of = |p: &Placed| {
        if subset {
            (density * T::from_usize_lossy(p.atoms.len())).ceil()
        } else {
            density * p.atoms.clone().fold(T::zero(), |a, i| a + mu.masses()[i])
        }
    };

    let (source, sink) = (0, 1);
    let mut atom_node = vec![usize::MAX; mu.atom_count()];
    let mut atoms_used = Vec::new();
    for p in &placed {
        for i in p.atoms.clone() {
            if atom_node[i] == usize::MAX {
                atom_node[i] = 2 + placed.len() + atoms_used.len();
                atoms_used.push(i);
            }
        }
    }
    let nodes = 2 + placed.len() + atoms_used.len();
    let mut net = FlowNetwork::new(nodes);
    let demands: Vec<T> = placed.iter().map(demand_of).collect();
    let total_demand = demands.iter().fold(T::zero(), |a, &x| a + x);
    let mut cube_edges = Vec::new();
    for (k, p) in placed.iter().enumerate() {
        net.add_edge(source, 2 + k, demands[k]);
        let edges: Vec<(usize, usize)> =
            p.atoms.clone().map(|i| (i, net.add_edge(2 + k, atom_node[i], T::infinity()))).collect();
        cube_edges.push(edges);
    }
    for &i in &atoms_used {
        net.add_edge(atom_node[i], sink, unit(i));
    }
    let flow = net.max_flow(source, sink);
    let slack = if subset { T::zero() } else { T::epsilon() * T::from_usize_lossy(nodes) * total_demand };

    if flow >= total_demand - slack {
        let mut assignment: BTreeMap<CubeId, Vec<(u64, T)>> = family.iter().map(|s| (*s, Vec::new())).collect();
        for (p, edges) in placed.iter().zip(&cube_edges) {
            let entry = assignment.get_mut(&p.cube).expect("every member listed");
            for &(i, e) in edges {
                let x = net.flow(e);
                if x > T::zero() {
                    entry.push((mu.cells()[i], if subset { mu.masses()[i] } else { x }));
                }
            }
        }
        return Ok(SparsityVerdict::Feasible { assignment });
    }

    let side = net.source_side(source);
    let cut: CubeCollection = placed.iter().enumerate().filter(|(k, _)| side[2 + k]).map(|(_, p)| p.cube).collect();
    let demand = placed.iter().enumerate().filter(|(k, _)| side[2 + k]).fold(T::zero(), |a, (k, _)| a + demands[k]);
    let supply = atoms_used.iter().filter(|&&i| side[atom_node[i]]).fold(T::zero(), |a, &i| a + unit(i));
    Ok(SparsityVerdict::Infeasible { cut, demand, supply })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominationRow<T> {
    pub cell: u64,
    pub numerator: T,
    pub denominator: T,
    pub ratio: T,
}

/// `C = max_x ||M_D f(x)||_E / A_{q,S}(||f||_E)(x)` over positive-mass cells. Cells where both
/// sides vanish are omitted from `rows`; a positive numerator over a zero denominator makes `C`
/// infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DominationReport<T> {
    pub constant: T,
    /// First cell attaining the constant.
    pub argmax: Option<u64>,
    pub rows: Vec<DominationRow<T>>,
}

impl<T: Scalar> DominationReport<T> {
    pub fn is_infinite(&self) -> bool {
        self.constant.is_infinite()
    }
}

/// Pointwise domination constant of the maximal operator over `d` by the sparse operator over `s`.
pub fn domination_constant<T: Scalar>(
    f: &SimpleFunction<T>,
    q: T,
    d: &CubeCollection,
    s: &CubeCollection,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
) -> Result<DominationReport<T>> {
    check_q(q)?;
    norm.validate()?;
    norm.check_dim(f.dim())?;
    let field = AtomField::of(f, mu)?.abs();
    let numerators = maximal_field(&field, &place(d, mu)?, mu).norms(norm).data;
    let denominators = sparse_field(&field.norms(norm), &place(s, mu)?, mu, q);
    let mut report = DominationReport { constant: T::zero(), argmax: None, rows: Vec::new() };
    for (i, (&num, &den)) in numerators.iter().zip(&denominators).enumerate() {
        if num == T::zero() && den == T::zero() {
            continue;
        }
        let ratio = if den == T::zero() { T::infinity() } else { num / den };
        let cell = mu.cells()[i];
        if report.argmax.is_none() || ratio > report.constant {
            report.constant = ratio;
            report.argmax = Some(cell);
        }
        report.rows.push(DominationRow { cell, numerator: num, denominator: den, ratio });
    }
    Ok(report)
}

/// Outcome of checking `|| sup { <|f|>_Q 1_Q(x) : pi(Q) = S } ||_E <= tau <||f||_E>_S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointwiseCheck<T> {
    pub holds: bool,
    /// Number of (stopping cube, atom) pairs tested.
    pub checked: usize,
    /// Largest left-to-right ratio seen.
    pub worst: T,
}

/// Inner suprema `sup { <|f|>_Q : pi(Q) = S, x in Q }` for every stopping cube `S`, over the
/// atoms of `S`.
/// Per stopping cube: its atom range and the lattice sup of the averages of its inner cubes.
type InnerSuprema<T> = BTreeMap<CubeId, (Range<usize>, AtomField<T>)>;

fn inner_suprema<T: Scalar>(
    f: &SimpleFunction<T>,
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    family: &StoppingFamily<T>,
) -> Result<InnerSuprema<T>> {
    let field = AtomField::of(f, mu)?.abs();
    let placed = place(d, mu)?;
    let avg = averages(&field, &placed, mu);
    let mut inner: BTreeMap<CubeId, (Range<usize>, AtomField<T>)> = family
        .cubes()
        .iter()
        .map(|s| {
            let r = mu.atom_range(s);
            (*s, (r.clone(), AtomField::zeros(f.dim(), r.len())))
        })
        .collect();
    for (p, a) in placed.iter().zip(&avg) {
        let parent = family
            .stopping_parent
            .get(&p.cube)
            .ok_or_else(|| Error::DegenerateFamily(format!("{} has no stopping parent", p.cube)))?;
        let (range, acc) = inner
            .get_mut(parent)
            .ok_or_else(|| Error::DegenerateFamily(format!("stopping parent {parent} is not a member")))?;
        if !parent.contains(&p.cube) {
            return Err(Error::DegenerateFamily(format!("{parent} does not contain {}", p.cube)));
        }
        for i in p.atoms.clone() {
            sup_into(acc.row_mut(i - range.start), a);
        }
    }
    Ok(inner)
}

/// Checks the pointwise estimate on every stopping cube and every atom inside it.
pub fn check_pointwise_estimate<T: Scalar>(
    f: &SimpleFunction<T>,
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
    family: &StoppingFamily<T>,
) -> Result<PointwiseCheck<T>> {
    norm.check_dim(f.dim())?;
    let mut out = PointwiseCheck { holds: true, checked: 0, worst: T::zero() };
    for (s, (range, acc)) in inner_suprema(f, d, mu, family)? {
        let rhs = family.tau * family.norm_average[&s];
        for k in 0..range.len() {
            let lhs = norm.norm(acc.row(k));
            out.checked += 1;
            if lhs > rhs {
                out.holds = false;
            }
            if lhs > T::zero() {
                out.worst = out.worst.max(if rhs > T::zero() { lhs / rhs } else { T::infinity() });
            }
        }
    }
    Ok(out)
}

/// Whether `M_D f` equals, coordinatewise on every atom, the sup over stopping cubes of the inner
/// suprema grouped by stopping parent.
pub fn check_supremum_decomposition<T: Scalar>(
    f: &SimpleFunction<T>,
    d: &CubeCollection,
    mu: &DyadicMeasure<T>,
    family: &StoppingFamily<T>,
) -> Result<bool> {
    let mut combined = AtomField::zeros(f.dim(), mu.atom_count());
    for (_, (range, acc)) in inner_suprema(f, d, mu, family)? {
        for (k, i) in range.enumerate() {
            sup_into(combined.row_mut(i), acc.row(k));
        }
    }
    let direct = maximal_field(&AtomField::of(f, mu)?.abs(), &place(d, mu)?, mu);
    Ok(combined.data == direct.data)
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

    fn coll(cubes: &[CubeId]) -> CubeCollection {
        cubes.iter().copied().collect()
    }

    /// Independent oracle: for each candidate `S'` strictly inside `S`, scan the whole ancestor
    /// path for the chain sup, then keep the maximal ones.
    fn brute_children(
        f: &SimpleFunction<f64>,
        d: &CubeCollection,
        mu: &DyadicMeasure<f64>,
        norm: &NormSpec<f64>,
        s: &CubeId,
        tau: f64,
    ) -> Vec<CubeId> {
        let fa = f.abs();
        let norm_f = f.pointwise_norm(mu, norm).unwrap();
        let threshold = tau * average(&norm_f, s, mu).unwrap().as_slice()[0];
        let hits: Vec<CubeId> = d
            .iter()
            .filter(|c| s.strictly_contains(c) && mu.mass(c) > 0.0)
            .filter(|c| {
                let mut sup = vec![0.0; f.dim()];
                for q in d.iter().filter(|q| q.contains(c) && s.contains(q) && mu.mass(q) > 0.0) {
                    for (x, y) in sup.iter_mut().zip(average(&fa, q, mu).unwrap().as_slice()) {
                        *x = f64::max(*x, *y);
                    }
                }
                norm.norm(&sup) > threshold
            })
            .copied()
            .collect();
        hits.iter().filter(|c| !hits.iter().any(|o| o.strictly_contains(c))).copied().collect()
    }

    /// Muckenhoupt-Wheeden principal cubes for scalar `f >= 0` on all cubes of the grid.
    fn principal_cubes(f: &SimpleFunction<f64>, mu: &DyadicMeasure<f64>, tau: f64) -> CubeCollection {
        let g = *mu.grid();
        let avg = |q: &CubeId| average(f, q, mu).unwrap().as_slice()[0];
        let mut out = CubeCollection::new();
        let mut todo = vec![g.root()];
        while let Some(s) = todo.pop() {
            out.insert(s);
            let bar = tau * avg(&s);
            // descend breadth-first through non-stopping cubes
            let mut frontier = vec![s];
            while let Some(q) = frontier.pop() {
                if q.level() == g.depth() {
                    continue;
                }
                for c in g.children(&q).unwrap() {
                    if mu.mass(&c) <= 0.0 {
                        continue;
                    }
                    if avg(&c) > bar {
                        todo.push(c);
                    } else {
                        frontier.push(c);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn spike_family_matches_brute_force() {
        let g = line(3);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let mut vals = vec![1.0; 8];
        vals[0] = 8.0;
        let f = SimpleFunction::scalar(g, vals).unwrap();
        let d = g.all_cubes();
        let norm = NormSpec::Lp(1.0);
        let fam = build_stopping_family(&f, &d, &mu, &norm, 2.0).unwrap();
        for s in fam.cubes().iter() {
            let mut mine: Vec<CubeId> =
                fam.tree_parent.iter().filter(|(_, p)| *p == s).map(|(c, _)| *c).collect();
            mine.sort();
            assert_eq!(mine, brute_children(&f, &d, &mu, &norm, s, 2.0), "children of {s}");
        }
        assert_eq!(fam.cubes(), &coll(&[g.root(), g.cube(2, &[0]).unwrap()]));
        assert_eq!(fam.sparse.witness.as_ref().unwrap()[&g.root()], vec![2, 3, 4, 5, 6, 7]);
        assert!(fam.sparse.witness_holds(&mu, 0.5));
    }

    #[test]
    fn large_tau_keeps_only_maximal_cubes() {
        let g = line(3);
        let mu = DyadicMeasure::from_dense(g, vec![1.0, 2.0, 0.0, 1.0, 3.0, 1.0, 1.0, 0.5]).unwrap();
        let f = SimpleFunction::scalar(g, vec![5.0, 0.0, 1.0, 2.0, 9.0, 0.0, 0.0, 1.0]).unwrap();
        let d = coll(&[g.cube(1, &[0]).unwrap(), g.cube(2, &[0]).unwrap(), g.cube(1, &[1]).unwrap(), g.cube(3, &[4]).unwrap()]);
        let fam = build_stopping_family(&f, &d, &mu, &NormSpec::Lp(1.0), 1e6).unwrap();
        assert_eq!(fam.cubes(), &d.maximal());
    }

    #[test]
    fn constant_function_never_stops() {
        let g = line(4);
        let mu = DyadicMeasure::from_dense(g, (0..16).map(|i| (i % 3) as f64).collect()).unwrap();
        let f = SimpleFunction::from_vectors(g, vec![crate::Vector::new(vec![0.5, -2.0]); 16]).unwrap();
        for tau in [1.0, 1.5, 7.0] {
            let fam = build_stopping_family(&f, &g.all_cubes(), &mu, &NormSpec::Lp(2.0), tau).unwrap();
            assert_eq!(fam.cubes(), &coll(&[g.root()]));
        }
    }

    #[test]
    fn stopping_parents_cover_positive_mass_members() {
        let g = line(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mu = DyadicMeasure::from_dense(g, (0..32).map(|_| rng.gen_range(0..3) as f64).collect()).unwrap();
        let f = SimpleFunction::from_dense(g, 2, (0..64).map(|_| rng.gen_range(0.0f64..1.0).powi(4)).collect()).unwrap();
        let d = g.all_cubes();
        let fam = build_stopping_family(&f, &d, &mu, &NormSpec::Lp(2.0), 1.5).unwrap();
        for q in d.iter().filter(|q| mu.mass(q) > 0.0) {
            let p = fam.stopping_parent[q];
            assert!(p.contains(q));
            // minimal: no stopping cube strictly between
            assert!(!fam.cubes().iter().any(|s| p.strictly_contains(s) && s.contains(q)));
        }
        assert!(check_supremum_decomposition(&f, &d, &mu, &fam).unwrap());
        assert!(check_pointwise_estimate(&f, &d, &mu, &NormSpec::Lp(2.0), &fam).unwrap().holds);
    }

    #[test]
    fn principal_cubes_coincide() {
        let g = line(6);
        for seed in 0..40 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
            let f = SimpleFunction::scalar(g, (0..64).map(|_| rng.gen_range(0.0f64..1.0).powi(6)).collect()).unwrap();
            let fam = build_stopping_family(&f, &g.all_cubes(), &mu, &NormSpec::Lp(1.0), 2.0).unwrap();
            assert_eq!(fam.cubes(), &principal_cubes(&f, &mu, 2.0));
        }
    }

    #[test]
    fn adaptive_examples() {
        let g = line(6);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = SimpleFunction::scalar(g, (0..64).map(|_| rng.gen_range(0.0f64..1.0).powi(5)).collect()).unwrap();
            let (fam, tau) = adaptive_threshold(&f, &g.all_cubes(), &mu, &NormSpec::Lp(1.0), 2.0).unwrap();
            assert_eq!(tau, 2.0);
            assert!(fam.sparse.witness_holds(&mu, 0.5));
        }
        let f = SimpleFunction::scalar(g, (0..64).map(|i| (i * i % 7) as f64).collect()).unwrap();
        let d = coll(&[g.cube(1, &[0]).unwrap(), g.cube(1, &[1]).unwrap(), g.cube(3, &[2]).unwrap()]);
        let (fam, tau) = adaptive_threshold(&f, &d, &mu, &NormSpec::Lp(1.0), 1e9).unwrap();
        assert_eq!(tau, 1e9);
        assert_eq!(fam.cubes(), &d.maximal());
    }

    #[test]
    fn adaptive_terminates_from_one() {
        let g = GridSpec::new(2, 3).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mu = DyadicMeasure::from_dense(g, (0..64).map(|_| rng.gen_range(0..4) as f64).collect()).unwrap();
            let f = SimpleFunction::from_dense(g, 3, (0..192).map(|_| rng.gen_range(-1.0f64..1.0).powi(3)).collect())
                .unwrap();
            let (fam, _) = adaptive_threshold(&f, &g.all_cubes(), &mu, &NormSpec::Lp(2.0), 1.0).unwrap();
            assert!(fam.sparse.witness_holds(&mu, 0.5));
            assert!(verify_sparsity(fam.cubes(), &mu).unwrap().is_feasible());
        }
    }

    #[test]
    fn sparsity_examples() {
        let g = line(2);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let halves = coll(&[g.root(), g.cube(1, &[0]).unwrap(), g.cube(1, &[1]).unwrap()]);
        let SparsityVerdict::Feasible { assignment } = verify_sparsity(&halves, &mu).unwrap() else {
            panic!("expected feasible")
        };
        for (s, cells) in &assignment {
            let got: f64 = cells.iter().map(|c| c.1).sum();
            assert_eq!(got, 0.5 * mu.mass(s));
            assert!(cells.iter().all(|c| g.cell_range(s).contains(&c.0)));
        }

        let mut all = halves.clone();
        all.extend((0..4).map(|j| g.cube(2, &[j]).unwrap()));
        match verify_sparsity(&all, &mu).unwrap() {
            SparsityVerdict::Infeasible { demand, supply, cut } => {
                assert!(demand > supply);
                let union: f64 = (0..4u64).filter(|&c| cut.iter().any(|q| g.cell_range(q).contains(&c))).map(|c| mu.cell_mass(c)).sum();
                assert_eq!(union, supply);
            }
            _ => panic!("expected infeasible"),
        }

        // geometric chain with mass(Q_k) <= mass(Q_(k+1)) / 2
        let g = line(4);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let chain = coll(&(0..=4).map(|l| g.cube(l, &[0]).unwrap()).collect::<Vec<_>>());
        assert!(verify_sparsity(&chain, &mu).unwrap().is_feasible());
        let subset = SparsityOptions { density: 0.5, mode: SparsityMode::Subset };
        let SparsityVerdict::Feasible { assignment } = verify_sparsity_with(&chain, &mu, subset).unwrap() else {
            panic!("expected feasible")
        };
        for l in 1..=4u32 {
            let q = g.cube(l - 1, &[0]).unwrap();
            let inner = g.cube(l, &[0]).unwrap();
            let owned: Vec<u64> = assignment[&q].iter().map(|c| c.0).collect();
            let expect: Vec<u64> = g.cell_range(&q).filter(|c| !g.cell_range(&inner).contains(c)).collect();
            assert_eq!(owned, expect);
        }
    }

    #[test]
    fn subset_mode_rejects_nonuniform() {
        let g = line(1);
        let mu = DyadicMeasure::from_dense(g, vec![1.0, 2.0]).unwrap();
        let opts = SparsityOptions { density: 0.5, mode: SparsityMode::Subset };
        assert!(verify_sparsity_with(&coll(&[g.root()]), &mu, opts).is_err());
    }

    #[test]
    fn domination_examples() {
        let g = line(2);
        let mu = DyadicMeasure::<f64>::uniform(g).unwrap();
        let f = SimpleFunction::scalar(g, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let d = g.all_cubes();
        let abs = NormSpec::Lp(1.0);
        let r = domination_constant(&f, 1.0, &d, &coll(&[g.root()]), &mu, &abs).unwrap();
        assert_eq!(r.constant, 4.0);
        assert_eq!(r.argmax, Some(0));
        let r = domination_constant(&f, 1.0, &d, &d, &mu, &abs).unwrap();
        assert_eq!(r.constant, 1.0);
        let row = r.rows.iter().find(|x| x.cell == 2).unwrap();
        assert_eq!((row.numerator, row.denominator), (0.25, 0.25));
        let zero = SimpleFunction::zeros(g, 1);
        let r = domination_constant(&zero, 1.0, &d, &d, &mu, &abs).unwrap();
        assert_eq!((r.constant, r.argmax), (0.0, None));
        let left = coll(&[g.cube(1, &[0]).unwrap()]);
        let r = domination_constant(&SimpleFunction::scalar(g, vec![0.0, 0.0, 1.0, 0.0]).unwrap(), 1.0, &d, &left, &mu, &abs)
            .unwrap();
        assert!(r.is_infinite());
    }

    /// Hall's condition over every subfamily.
    fn hall_feasible(family: &[CubeId], mu: &DyadicMeasure<f64>) -> bool {
        let g = *mu.grid();
        (1u32..1 << family.len()).all(|mask| {
            let chosen: Vec<&CubeId> = family.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, c)| c).collect();
            let demand: f64 = chosen.iter().map(|q| 0.5 * mu.mass(q)).sum();
            let supply: f64 = (0..g.cell_count()).filter(|c| chosen.iter().any(|q| g.cell_range(q).contains(c))).map(|c| mu.cell_mass(c)).sum();
            demand <= supply
        })
    }

    /// Whole-cell assignments by exhaustive search.
    fn subset_feasible(family: &[CubeId], mu: &DyadicMeasure<f64>) -> bool {
        let cells: Vec<u64> = mu.cells().to_vec();
        let k = family.len() + 1;
        let total = k.pow(cells.len() as u32);
        (0..total).any(|mut code| {
            let mut owned = vec![0usize; family.len()];
            for &c in &cells {
                let choice = code % k;
                code /= k;
                if choice < family.len() {
                    if !mu.grid().cell_range(&family[choice]).contains(&c) {
                        return false;
                    }
                    owned[choice] += 1;
                }
            }
            family.iter().zip(&owned).all(|(q, &o)| 2 * o >= mu.atom_range(q).len())
        })
    }

    proptest! {
        #[test]
        fn verifier_agrees_with_hall(
            masses in proptest::collection::vec(0u8..3, 8),
            picks in proptest::collection::btree_set(0usize..15, 1..=5),
        ) {
            let g = line(3);
            let mu = DyadicMeasure::from_dense(g, masses.iter().map(|&m| m as f64).collect()).unwrap();
            let cubes = g.all_cubes().to_vec();
            let fam: Vec<CubeId> = picks.iter().map(|&i| cubes[i]).collect();
            let verdict = verify_sparsity(&coll(&fam), &mu).unwrap();
            prop_assert_eq!(verdict.is_feasible(), hall_feasible(&fam, &mu));
            if let SparsityVerdict::Feasible { assignment } = verdict {
                for c in 0..8u64 {
                    let used: f64 = assignment.values().flatten().filter(|x| x.0 == c).map(|x| x.1).sum();
                    prop_assert!(used <= mu.cell_mass(c));
                }
                for q in &fam {
                    let got: f64 = assignment[q].iter().map(|x| x.1).sum();
                    prop_assert!(got >= 0.5 * mu.mass(q));
                }
            }
        }

        #[test]
        fn subset_mode_agrees_with_exhaustive_search(
            support in proptest::collection::vec(any::<bool>(), 8),
            picks in proptest::collection::btree_set(0usize..15, 1..=4),
        ) {
            let g = line(3);
            let mu = DyadicMeasure::from_dense(g, support.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap();
            let cubes = g.all_cubes().to_vec();
            let fam: Vec<CubeId> = picks.iter().map(|&i| cubes[i]).collect();
            let opts = SparsityOptions { density: 0.5, mode: SparsityMode::Subset };
            let verdict = verify_sparsity_with(&coll(&fam), &mu, opts).unwrap();
            prop_assert_eq!(verdict.is_feasible(), subset_feasible(&fam, &mu));
        }

        #[test]
        fn lq_domination_is_controlled_by_tau(
            vals in proptest::collection::vec(0.0f64..1.0, 48),
            masses in proptest::collection::vec(0u8..3, 16),
            q in prop_oneof![Just(1.0f64), Just(2.0), Just(3.0)],
        ) {
            let g = line(4);
            let mu = DyadicMeasure::from_dense(g, masses.iter().map(|&m| m as f64).collect()).unwrap();
            let f = SimpleFunction::from_dense(g, 3, vals.iter().map(|x| x * x * x).collect()).unwrap();
            let norm = NormSpec::Lp(q);
            let d = g.all_cubes();
            let (fam, tau) = adaptive_threshold(&f, &d, &mu, &norm, 1.0).unwrap();
            let r = domination_constant(&f, q, &d, fam.cubes(), &mu, &norm).unwrap();
            prop_assert!(r.constant <= tau, "{} > {}", r.constant, tau);
            prop_assert!(check_pointwise_estimate(&f, &d, &mu, &norm, &fam).unwrap().holds);
            prop_assert!(check_supremum_decomposition(&f, &d, &mu, &fam).unwrap());
            prop_assert!(fam.sparse.witness_holds(&mu, 0.5));
        }
    }
}
