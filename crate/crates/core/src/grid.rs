//! Dyadic cube arithmetic on the unit cube `[0,1)^d` discretized to a finest level `L`.
//!
//! Cubes are addressed by `(level, index)`. Internally the index vector is stored as its Morton
//! (Z-order) code, which makes every cube a contiguous range of finest-level cells: the cube
//! `(l, code)` covers the cells `code << d(L-l) .. (code+1) << d(L-l)`. For `d = 1` the cell
//! index is the usual left-to-right position.
//!
//! Cubes are half-open, so the `2^(dL)` finest cells partition the domain exactly.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest supported value of `d * L`; cell indices are `u64`.
pub const MAX_CELL_BITS: u32 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    dim: u32,
    depth: u32,
}

impl GridSpec {
    pub fn new(dim: u32, depth: u32) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGrid("dimension must be positive".into()));
        }
        if dim.checked_mul(depth).is_none_or(|b| b > MAX_CELL_BITS) {
            return Err(Error::InvalidGrid(format!(
                "d*L = {dim}*{depth} exceeds the addressing limit {MAX_CELL_BITS}"
            )));
        }
        Ok(GridSpec { dim, depth })
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Number of finest-level cells, `2^(dL)`.
    pub fn cell_count(&self) -> u64 {
        1u64 << (self.dim * self.depth)
    }

    /// Number of cubes at `level`, `2^(d*level)`.
    pub fn cubes_at_level(&self, level: u32) -> u64 {
        1u64 << (self.dim * level)
    }

    pub fn root(&self) -> CubeId {
        CubeId { level: 0, code: 0, dim: self.dim }
    }

    /// The cube `prod_i [j_i 2^-l, (j_i+1) 2^-l)`.
    pub fn cube(&self, level: u32, index: &[u64]) -> Result<CubeId> {
        if level > self.depth {
            return Err(Error::InvalidCube(format!("level {level} exceeds depth {}", self.depth)));
        }
        if index.len() != self.dim as usize {
            return Err(Error::InvalidCube(format!(
                "index has {} coordinates, grid dimension is {}",
                index.len(),
                self.dim
            )));
        }
        if let Some(j) = index.iter().find(|&&j| j >> level != 0) {
            return Err(Error::InvalidCube(format!("index {j} out of range at level {level}")));
        }
        Ok(CubeId { level, code: interleave(index, level), dim: self.dim })
    }

    /// Checks that `cube` belongs to this grid.
    pub fn check(&self, cube: &CubeId) -> Result<()> {
        if cube.dim != self.dim || cube.level > self.depth {
            return Err(Error::InvalidCube(format!("{cube} does not belong to grid d={}, L={}", self.dim, self.depth)));
        }
        Ok(())
    }

    /// The finest-level cube holding `cell`.
    pub fn cell_cube(&self, cell: u64) -> CubeId {
        debug_assert!(cell < self.cell_count());
        CubeId { level: self.depth, code: cell, dim: self.dim }
    }

    /// The level-`level` ancestor of `cell`.
    pub fn cell_ancestor(&self, cell: u64, level: u32) -> CubeId {
        debug_assert!(level <= self.depth);
        CubeId { level, code: cell >> (self.dim * (self.depth - level)), dim: self.dim }
    }

    /// Finest-level cells of `cube`, as a contiguous range.
    pub fn cell_range(&self, cube: &CubeId) -> Range<u64> {
        let shift = self.dim * (self.depth - cube.level);
        (cube.code << shift)..((cube.code + 1) << shift)
    }

    /// The `2^d` children of `cube`, in Morton order.
    pub fn children(&self, cube: &CubeId) -> Result<Vec<CubeId>> {
        self.check(cube)?;
        if cube.level == self.depth {
            return Err(Error::NoChildren(cube.to_string()));
        }
        let base = cube.code << self.dim;
        Ok((0..(1u64 << self.dim))
            .map(|k| CubeId { level: cube.level + 1, code: base | k, dim: self.dim })
            .collect())
    }

    /// All cubes of levels `0..=max_level`.
    pub fn cubes_up_to(&self, max_level: u32) -> CubeCollection {
        let max_level = max_level.min(self.depth);
        (0..=max_level)
            .flat_map(|level| {
                (0..self.cubes_at_level(level)).map(move |code| CubeId { level, code, dim: self.dim })
            })
            .collect()
    }

    /// Every cube of the grid.
    pub fn all_cubes(&self) -> CubeCollection {
        self.cubes_up_to(self.depth)
    }

    /// Parses `"l:j_1,...,j_d"` and checks it against this grid.
    pub fn parse_cube(&self, s: &str) -> Result<CubeId> {
        let cube: CubeId = s.parse()?;
        self.check(&cube)?;
        Ok(cube)
    }
}

/// A dyadic cube: level plus the Morton code of its index vector.
///
/// Ordered by level, then by code, so shallower cubes come first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CubeId {
    level: u32,
    code: u64,
    dim: u32,
}

impl CubeId {
    pub fn level(&self) -> u32 {
        self.level
    }

    /// Morton code of the index vector at this level.
    pub fn code(&self) -> u64 {
        self.code
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    /// The index vector `(j_1, ..., j_d)`.
    pub fn index(&self) -> Vec<u64> {
        deinterleave(self.code, self.level, self.dim)
    }

    /// The unique cube one level up, or `None` for the root.
    pub fn parent(&self) -> Option<CubeId> {
        (self.level > 0).then(|| CubeId { level: self.level - 1, code: self.code >> self.dim, dim: self.dim })
    }

    /// Ancestor at `level` (itself when `level == self.level`).
    pub fn ancestor(&self, level: u32) -> Option<CubeId> {
        (level <= self.level).then(|| CubeId {
            level,
            code: self.code >> (self.dim * (self.level - level)),
            dim: self.dim,
        })
    }

    /// Whether `other ⊆ self`.
    pub fn contains(&self, other: &CubeId) -> bool {
        self.dim == other.dim
            && other.level >= self.level
            && other.code >> (self.dim * (other.level - self.level)) == self.code
    }

    /// Whether `other ⊊ self`.
    pub fn strictly_contains(&self, other: &CubeId) -> bool {
        other.level > self.level && self.contains(other)
    }

    /// Dyadic cubes are either nested or disjoint.
    pub fn intersects(&self, other: &CubeId) -> bool {
        self.contains(other) || other.contains(self)
    }

    /// Side length `2^-level` as `f64`.
    pub fn side(&self) -> f64 {
        (-(self.level as f64)).exp2()
    }
}

impl fmt::Display for CubeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.level)?;
        for (i, j) in self.index().iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl FromStr for CubeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (level, rest) = s
            .trim()
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("cube `{s}`: expected `level:j_1,...,j_d`")))?;
        let level: u32 = level.trim().parse().map_err(|_| Error::Parse(format!("cube `{s}`: bad level")))?;
        let index = rest
            .split(',')
            .map(|j| j.trim().parse::<u64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::Parse(format!("cube `{s}`: bad index")))?;
        let dim = index.len() as u32;
        if dim == 0 || dim.saturating_mul(level) > MAX_CELL_BITS {
            return Err(Error::Parse(format!("cube `{s}`: unsupported dimension/level")));
        }
        if index.iter().any(|&j| j >> level != 0) {
            return Err(Error::Parse(format!("cube `{s}`: index out of range for level {level}")));
        }
        Ok(CubeId { level, code: interleave(&index, level), dim })
    }
}

fn interleave(index: &[u64], level: u32) -> u64 {
    let mut code = 0u64;
    for b in (0..level).rev() {
        for &j in index {
            code = (code << 1) | ((j >> b) & 1);
        }
    }
    code
}

fn deinterleave(code: u64, level: u32, dim: u32) -> Vec<u64> {
    let mut index = vec![0u64; dim as usize];
    for b in 0..level {
        for (i, j) in index.iter_mut().enumerate() {
            let bit_pos = b * dim + (dim - 1 - i as u32);
            *j |= ((code >> bit_pos) & 1) << b;
        }
    }
    index
}

/// A finite set of cubes of one grid, iterated shallowest first.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CubeCollection {
    cubes: BTreeSet<CubeId>,
}

impl CubeCollection {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cube: CubeId) -> bool {
        self.cubes.insert(cube)
    }

    pub fn remove(&mut self, cube: &CubeId) -> bool {
        self.cubes.remove(cube)
    }

    pub fn contains(&self, cube: &CubeId) -> bool {
        self.cubes.contains(cube)
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn iter(&self) -> impl DoubleEndedIterator<Item = &CubeId> + ExactSizeIterator + Clone {
        self.cubes.iter()
    }

    pub fn to_vec(&self) -> Vec<CubeId> {
        self.cubes.iter().copied().collect()
    }

    pub fn maximal(&self) -> CubeCollection {
        maximal_cubes(self)
    }

    /// The nearest strict ancestor of `cube` that is a member, if any.
    pub fn nearest_ancestor(&self, cube: &CubeId) -> Option<CubeId> {
        let mut cur = cube.parent();
        while let Some(c) = cur {
            if self.cubes.contains(&c) {
                return Some(c);
            }
            cur = c.parent();
        }
        None
    }
}

impl FromIterator<CubeId> for CubeCollection {
    fn from_iter<I: IntoIterator<Item = CubeId>>(iter: I) -> Self {
        CubeCollection { cubes: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a CubeCollection {
    type Item = &'a CubeId;
    type IntoIter = std::collections::btree_set::Iter<'a, CubeId>;

    fn into_iter(self) -> Self::IntoIter {
        self.cubes.iter()
    }
}

impl Extend<CubeId> for CubeCollection {
    fn extend<I: IntoIterator<Item = CubeId>>(&mut self, iter: I) {
        self.cubes.extend(iter)
    }
}

/// The antichain of members not strictly contained in another member.
pub fn maximal_cubes(collection: &CubeCollection) -> CubeCollection {
    collection
        .iter()
        .filter(|q| collection.nearest_ancestor(q).is_none())
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval(grid: &GridSpec, q: &CubeId) -> Vec<(f64, f64)> {
        let side = q.side();
        q.index().iter().map(|&j| (j as f64 * side, (j + 1) as f64 * side)).take(grid.dim() as usize).collect()
    }

    #[test]
    fn children_bisect_in_1d() {
        let grid = GridSpec::new(1, 3).unwrap();
        let kids = grid.children(&grid.root()).unwrap();
        let shown: Vec<String> = kids.iter().map(|c| c.to_string()).collect();
        assert_eq!(shown, ["1:0", "1:1"]);
    }

    #[test]
    fn children_quadrisect_in_2d() {
        let grid = GridSpec::new(2, 2).unwrap();
        let kids = grid.children(&grid.root()).unwrap();
        assert_eq!(kids.len(), 4);
        let mut idx: Vec<Vec<u64>> = kids.iter().map(|c| c.index()).collect();
        idx.sort();
        assert_eq!(idx, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn finest_cube_has_no_children() {
        let grid = GridSpec::new(1, 2).unwrap();
        let q = grid.cube(2, &[0]).unwrap();
        assert_eq!(grid.children(&q), Err(Error::NoChildren("2:0".into())));
    }

    #[test]
    fn parent_halves_the_index() {
        let grid = GridSpec::new(1, 2).unwrap();
        let q = grid.cube(2, &[2]).unwrap();
        assert_eq!(q.parent().unwrap(), grid.cube(1, &[1]).unwrap());
        assert_eq!(grid.root().parent(), None);
    }

    #[test]
    fn parent_of_each_child_round_trips() {
        let grid = GridSpec::new(3, 3).unwrap();
        for q in grid.cubes_up_to(2).iter() {
            for c in grid.children(q).unwrap() {
                assert_eq!(c.parent(), Some(*q));
            }
        }
    }

    #[test]
    fn children_partition_cell_ranges() {
        let grid = GridSpec::new(2, 4).unwrap();
        for q in grid.cubes_up_to(3).iter() {
            let r = grid.cell_range(q);
            let mut covered: Vec<u64> =
                grid.children(q).unwrap().iter().flat_map(|c| grid.cell_range(c)).collect();
            covered.sort_unstable();
            assert_eq!(covered, r.collect::<Vec<_>>());
        }
    }

    #[test]
    fn maximal_cubes_examples() {
        let grid = GridSpec::new(1, 2).unwrap();
        let root = grid.root();
        let left = grid.cube(1, &[0]).unwrap();
        let right = grid.cube(1, &[1]).unwrap();
        let d: CubeCollection = [root, left].into_iter().collect();
        assert_eq!(maximal_cubes(&d).to_vec(), vec![root]);
        let d: CubeCollection = [left, right].into_iter().collect();
        assert_eq!(maximal_cubes(&d).to_vec(), vec![left, right]);
        assert!(maximal_cubes(&CubeCollection::new()).is_empty());
    }

    #[test]
    fn maximal_cubes_of_full_tree_matches_brute_force() {
        let grid = GridSpec::new(1, 2).unwrap();
        let d = grid.all_cubes();
        let brute: Vec<CubeId> = d
            .iter()
            .filter(|q| !d.iter().any(|p| p != *q && p.contains(q)))
            .copied()
            .collect();
        assert_eq!(brute, vec![grid.root()]);
        assert_eq!(maximal_cubes(&d).to_vec(), brute);
    }

    #[test]
    fn containment_agrees_with_interval_arithmetic() {
        let grid = GridSpec::new(2, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let random_cube = |rng: &mut ChaCha8Rng| {
            let level = rng.gen_range(0..=grid.depth());
            let idx: Vec<u64> = (0..2).map(|_| rng.gen_range(0..(1u64 << level))).collect();
            grid.cube(level, &idx).unwrap()
        };
        for _ in 0..1000 {
            let a = random_cube(&mut rng);
            // half the time, draw b inside a to exercise the positive case
            let b = if rng.gen_bool(0.5) {
                let lvl = rng.gen_range(a.level()..=grid.depth());
                let r = grid.cell_range(&a);
                let cell = rng.gen_range(r);
                grid.cell_ancestor(cell, lvl)
            } else {
                random_cube(&mut rng)
            };
            let (ia, ib) = (interval(&grid, &a), interval(&grid, &b));
            let geometric = ia.iter().zip(&ib).all(|(x, y)| x.0 <= y.0 && y.1 <= x.1);
            assert_eq!(a.contains(&b), geometric, "{a} vs {b}");
        }
    }

    #[test]
    fn cube_strings_round_trip() {
        let grid = GridSpec::new(3, 5).unwrap();
        let q = grid.cube(4, &[3, 15, 0]).unwrap();
        assert_eq!(q.to_string(), "4:3,15,0");
        assert_eq!(grid.parse_cube("4:3,15,0").unwrap(), q);
        assert!(grid.parse_cube("4:16,0,0").is_err());
        assert!(grid.parse_cube("6:0,0,0").is_err());
        assert!(grid.parse_cube("1:0,0").is_err());
    }

    #[test]
    fn grid_limits() {
        assert!(GridSpec::new(0, 3).is_err());
        assert!(GridSpec::new(2, 31).is_ok());
        assert!(GridSpec::new(2, 32).is_err());
        assert_eq!(GridSpec::new(2, 3).unwrap().cell_count(), 64);
    }
}
