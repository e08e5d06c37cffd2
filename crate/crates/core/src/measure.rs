//! Atomic measures on the finest cells and lattice-valued simple functions.
//!
//! A [`DyadicMeasure`] keeps only its positive-mass cells (its *atoms*), sorted by cell index.
//! Every "mu-a.e." statement in the crate is checked exactly on this atom set: zero-mass cells are
//! excluded from all suprema, sums and verifications. A [`SimpleFunction`] is likewise stored by
//! its listed cells and is zero elsewhere.
//!
//! Averages are computed as `f(c_0) + sum_c (m_c / mu(Q)) (f(c) - f(c_0))` in increasing cell
//! order, where `c_0` is the first atom of the cube, so constants and single atoms average
//! exactly. Summation order is fixed, so repeated evaluations agree bit for bit; against an
//! independently ordered sum the results may differ by a few ulps.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::grid::{CubeId, GridSpec};
use crate::lattice::{check_dim, LatticeVector, NormSpec};
use crate::scalar::{pow_nonneg, root_nonneg, Scalar};

/// Dense constructors refuse grids with more cells than this.
pub const DENSE_CELL_LIMIT: u64 = 1 << 26;

fn check_dense(grid: &GridSpec) -> Result<usize> {
    if grid.cell_count() > DENSE_CELL_LIMIT {
        return Err(Error::InvalidGrid(format!(
            "{} cells exceed the dense limit {DENSE_CELL_LIMIT}; use atom constructors",
            grid.cell_count()
        )));
    }
    Ok(grid.cell_count() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DyadicMeasure<T> {
    grid: GridSpec,
    cells: Vec<u64>,
    masses: Vec<T>,
}

impl<T: Scalar> DyadicMeasure<T> {
    /// Lebesgue measure: mass `2^(-dL)` on every cell, total mass one.
    pub fn uniform(grid: GridSpec) -> Result<Self> {
        let n = check_dense(&grid)?;
        let m = T::lit((-((grid.dim() * grid.depth()) as f64)).exp2());
        Ok(DyadicMeasure { grid, cells: (0..n as u64).collect(), masses: vec![m; n] })
    }

    /// One mass per cell, in cell order.
    pub fn from_dense(grid: GridSpec, masses: Vec<T>) -> Result<Self> {
        let n = check_dense(&grid)?;
        check_dim(n, masses.len())?;
        Self::from_atoms(grid, masses.into_iter().enumerate().map(|(c, m)| (c as u64, m)))
    }

    /// `(cell, mass)` pairs in any order; zero masses are dropped.
    pub fn from_atoms(grid: GridSpec, atoms: impl IntoIterator<Item = (u64, T)>) -> Result<Self> {
        let mut atoms: Vec<(u64, T)> = atoms.into_iter().collect();
        for &(c, m) in &atoms {
            if c >= grid.cell_count() {
                return Err(Error::InvalidMeasure(format!("cell {c} outside the grid")));
            }
            if !(m >= T::zero()) || m.is_infinite() {
                return Err(Error::InvalidMeasure(format!("cell {c} has mass {m}")));
            }
        }
        atoms.sort_by_key(|a| a.0);
        if atoms.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidMeasure("duplicate cell".into()));
        }
        atoms.retain(|a| a.1 > T::zero());
        let (cells, masses) = atoms.into_iter().unzip();
        Ok(DyadicMeasure { grid, cells, masses })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Positive-mass cells, sorted.
    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn atom_count(&self) -> usize {
        self.cells.len()
    }

    /// Position of `cell` among the atoms.
    pub fn atom_of(&self, cell: u64) -> Option<usize> {
        self.cells.binary_search(&cell).ok()
    }

    pub fn cell_mass(&self, cell: u64) -> T {
        self.atom_of(cell).map_or(T::zero(), |i| self.masses[i])
    }

    /// Atom positions inside `cube`.
    pub fn atom_range(&self, cube: &CubeId) -> Range<usize> {
        let cells = self.grid.cell_range(cube);
        let lo = self.cells.partition_point(|&c| c < cells.start);
        let hi = self.cells.partition_point(|&c| c < cells.end);
        lo..hi
    }

    pub fn mass(&self, cube: &CubeId) -> T {
        self.masses[self.atom_range(cube)].iter().fold(T::zero(), |s, &m| s + m)
    }

    pub fn total(&self) -> T {
        self.masses.iter().fold(T::zero(), |s, &m| s + m)
    }

    /// Whether both measures have the same atoms (masses may differ).
    pub fn same_support(&self, other: &Self) -> bool {
        self.grid == other.grid && self.cells == other.cells
    }

    pub(crate) fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if &self.grid != grid {
            return Err(Error::GridMismatch(format!("{:?} vs {:?}", self.grid, grid)));
        }
        Ok(())
    }
}

/// A function from finest cells to `R^n`, zero off its listed cells.
#[derive(Debug, Clone, PartialEq)]
pub struct SimpleFunction<T> {
    grid: GridSpec,
    dim: usize,
    cells: Vec<u64>,
    values: Vec<T>,
}

impl<T: Scalar> SimpleFunction<T> {
    pub fn zeros(grid: GridSpec, dim: usize) -> Self {
        SimpleFunction { grid, dim, cells: Vec::new(), values: Vec::new() }
    }

    /// Row-major values for every cell of the grid (`cell_count * dim` entries).
    pub fn from_dense(grid: GridSpec, dim: usize, values: Vec<T>) -> Result<Self> {
        let n = check_dense(&grid)?;
        check_dim(n * dim, values.len())?;
        Ok(SimpleFunction { grid, dim, cells: (0..n as u64).collect(), values })
    }

    /// A scalar (`n = 1`) function from one value per cell.
    pub fn scalar(grid: GridSpec, values: Vec<T>) -> Result<Self> {
        Self::from_dense(grid, 1, values)
    }

    pub fn from_vectors(grid: GridSpec, vectors: Vec<LatticeVector<T>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.dim());
        for v in &vectors {
            check_dim(dim, v.dim())?;
        }
        Self::from_dense(grid, dim, vectors.into_iter().flat_map(|v| v.into_inner()).collect())
    }

    /// `(cell, value)` pairs in any order.
    pub fn from_cells(grid: GridSpec, dim: usize, entries: impl IntoIterator<Item = (u64, Vec<T>)>) -> Result<Self> {
        let mut entries: Vec<(u64, Vec<T>)> = entries.into_iter().collect();
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidFunction("duplicate cell".into()));
        }
        let mut cells = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len() * dim);
        for (c, v) in entries {
            if c >= grid.cell_count() {
                return Err(Error::InvalidFunction(format!("cell {c} outside the grid")));
            }
            check_dim(dim, v.len())?;
            cells.push(c);
            values.extend(v);
        }
        Ok(SimpleFunction { grid, dim, cells, values })
    }

    /// Values given per atom of `mu` (`atom_count * dim` entries).
    pub fn on_support(mu: &DyadicMeasure<T>, dim: usize, values: Vec<T>) -> Result<Self> {
        check_dim(mu.atom_count() * dim, values.len())?;
        Ok(SimpleFunction { grid: mu.grid, dim, cells: mu.cells.clone(), values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Dimension `n` of the lattice values.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> &[u64] {
        &self.cells
    }

    /// Value at `cell`, or `None` where the function is implicitly zero.
    pub fn value(&self, cell: u64) -> Option<&[T]> {
        self.cells.binary_search(&cell).ok().map(|i| &self.values[i * self.dim..(i + 1) * self.dim])
    }

    pub fn value_or_zero(&self, cell: u64) -> LatticeVector<T> {
        self.value(cell).map_or_else(|| LatticeVector::zeros(self.dim), |v| LatticeVector::new(v.to_vec()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &[T])> + '_ {
        self.cells.iter().copied().zip(self.values.chunks(self.dim.max(1)))
    }

    /// Coordinatewise `|f|`.
    pub fn abs(&self) -> Self {
        SimpleFunction { values: self.values.iter().map(|x| x.abs()).collect(), ..self.clone() }
    }

    pub fn scale(&self, c: T) -> Self {
        SimpleFunction { values: self.values.iter().map(|&x| c * x).collect(), ..self.clone() }
    }

    /// Values on the atoms of `mu`, row-major (`atom_count * dim`).
    pub fn sample_on(&self, mu: &DyadicMeasure<T>) -> Result<Vec<T>> {
        mu.check_grid(&self.grid)?;
        let mut out = vec![T::zero(); mu.atom_count() * self.dim];
        if self.cells == mu.cells {
            out.copy_from_slice(&self.values);
            return Ok(out);
        }
        for (i, &c) in mu.cells.iter().enumerate() {
            if let Some(v) = self.value(c) {
                out[i * self.dim..(i + 1) * self.dim].copy_from_slice(v);
            }
        }
        Ok(out)
    }

    /// The scalar function `x -> ||f(x)||_E` on the atoms of `mu`.
    pub fn pointwise_norm(&self, mu: &DyadicMeasure<T>, norm: &NormSpec<T>) -> Result<SimpleFunction<T>> {
        norm.check_dim(self.dim)?;
        let samples = self.sample_on(mu)?;
        let norms = samples.chunks(self.dim.max(1)).map(|v| norm.norm(v)).collect();
        SimpleFunction::on_support(mu, 1, norms)
    }

    /// Sum of two functions with the same grid and dimension.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("adding functions on different grids".into()));
        }
        check_dim(self.dim, other.dim)?;
        let mut entries: Vec<(u64, Vec<T>)> = Vec::new();
        let (mut i, mut j) = (0, 0);
        let row = |f: &Self, k: usize| f.values[k * f.dim..(k + 1) * f.dim].to_vec();
        while i < self.cells.len() || j < other.cells.len() {
            let a = self.cells.get(i).copied().unwrap_or(u64::MAX);
            let b = other.cells.get(j).copied().unwrap_or(u64::MAX);
            if a == b {
                let v = row(self, i).iter().zip(row(other, j)).map(|(x, y)| *x + y).collect();
                entries.push((a, v));
                i += 1;
                j += 1;
            } else if a < b {
                entries.push((a, row(self, i)));
                i += 1;
            } else {
                entries.push((b, row(other, j)));
                j += 1;
            }
        }
        Self::from_cells(self.grid, self.dim, entries)
    }

    pub(crate) fn check_against(&self, mu: &DyadicMeasure<T>) -> Result<()> {
        mu.check_grid(&self.grid)
    }
}

/// Values aligned with the atoms of one measure: row `i` is the value at atom `i`.
#[derive(Debug, Clone)]
pub(crate) struct AtomField<T> {
    pub dim: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> AtomField<T> {
    pub fn of(f: &SimpleFunction<T>, mu: &DyadicMeasure<T>) -> Result<Self> {
        Ok(AtomField { dim: f.dim, data: f.sample_on(mu)? })
    }

    pub fn zeros(dim: usize, atoms: usize) -> Self {
        AtomField { dim, data: vec![T::zero(); dim * atoms] }
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn abs(mut self) -> Self {
        self.data.iter_mut().for_each(|x| *x = x.abs());
        self
    }

    pub fn norms(&self, norm: &NormSpec<T>) -> AtomField<T> {
        AtomField { dim: 1, data: self.data.chunks(self.dim.max(1)).map(|v| norm.norm(v)).collect() }
    }

    /// Mass-weighted mean over the atom positions `range`; `None` when they carry no mass.
    pub fn average(&self, mu: &DyadicMeasure<T>, range: Range<usize>) -> Option<Vec<T>> {
        let masses = &mu.masses()[range.clone()];
        let total = masses.iter().fold(T::zero(), |s, &m| s + m);
        if !(total > T::zero()) {
            return None;
        }
        // deviations from the first value keep constant data exact
        let base = self.row(range.start).to_vec();
        let mut acc = vec![T::zero(); self.dim];
        for (i, &m) in range.zip(masses) {
            let w = m / total;
            for ((a, &x), &b) in acc.iter_mut().zip(self.row(i)).zip(&base) {
                *a = *a + w * (x - b);
            }
        }
        Some(acc.into_iter().zip(base).map(|(a, b)| b + a).collect())
    }

    pub fn into_function(self, mu: &DyadicMeasure<T>) -> SimpleFunction<T> {
        SimpleFunction { grid: mu.grid, dim: self.dim, cells: mu.cells.clone(), values: self.data }
    }
}

/// `<f>_Q^mu`, the mass-weighted mean of `f` over `cube`.
pub fn average<T: Scalar>(f: &SimpleFunction<T>, cube: &CubeId, mu: &DyadicMeasure<T>) -> Result<LatticeVector<T>> {
    f.check_against(mu)?;
    mu.grid.check(cube)?;
    let range = mu.atom_range(cube);
    let mut field = AtomField::zeros(f.dim, range.len());
    for (k, i) in range.clone().enumerate() {
        if let Some(v) = f.value(mu.cells[i]) {
            field.row_mut(k).copy_from_slice(v);
        }
    }
    let shifted = DyadicMeasure {
        grid: mu.grid,
        cells: mu.cells[range.clone()].to_vec(),
        masses: mu.masses[range.clone()].to_vec(),
    };
    field
        .average(&shifted, 0..range.len())
        .map(LatticeVector::new)
        .ok_or_else(|| Error::ZeroMass(cube.to_string()))
}

/// Strong `L^p` or weak `L^{p,inf}` quasi-norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormMode {
    Strong,
    Weak,
}

pub(crate) fn check_p<T: Scalar>(p: T) -> Result<()> {
    if p.is_nan() || p < T::one() || p.is_infinite() {
        return Err(Error::InvalidExponent(format!("p = {p} must lie in [1, inf)")));
    }
    Ok(())
}

/// Norm of nonnegative values `a_i` carried by masses `m_i`.
pub(crate) fn scalar_lebesgue_norm<T: Scalar>(values: &[T], masses: &[T], p: T, mode: NormMode) -> T {
    match mode {
        NormMode::Strong => {
            let peak = values.iter().zip(masses).filter(|(_, &m)| m > T::zero()).fold(T::zero(), |a, (&v, _)| a.max(v));
            if peak == T::zero() || peak.is_infinite() {
                return peak;
            }
            let inner = values
                .iter()
                .zip(masses)
                .fold(T::zero(), |s, (&v, &m)| s + m * pow_nonneg(v / peak, p));
            peak * root_nonneg(inner, p)
        }
        NormMode::Weak => {
            // sup over lambda of lambda * mu(a > lambda)^(1/p): for lambda just below an attained
            // value v the level set is {a >= v}
            let mut pairs: Vec<(T, T)> =
                values.iter().copied().zip(masses.iter().copied()).filter(|&(v, m)| v > T::zero() && m > T::zero()).collect();
            pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite values"));
            let mut best = T::zero();
            let mut level_mass = T::zero();
            let mut k = 0;
            while k < pairs.len() {
                let v = pairs[k].0;
                while k < pairs.len() && pairs[k].0 == v {
                    level_mass = level_mass + pairs[k].1;
                    k += 1;
                }
                best = best.max(v * root_nonneg(level_mass, p));
            }
            best
        }
    }
}

/// `(sum_cells ||f||_E^p mass)^(1/p)` in strong mode, or the exact weak `L^{p,inf}` norm
/// computed over the attained values of `||f||_E`.
pub fn bochner_norm<T: Scalar>(
    f: &SimpleFunction<T>,
    mu: &DyadicMeasure<T>,
    norm: &NormSpec<T>,
    p: T,
    mode: NormMode,
) -> Result<T> {
    check_p(p)?;
    let norms = f.pointwise_norm(mu, norm)?;
    Ok(scalar_lebesgue_norm(&norms.values, mu.masses(), p, mode))
}
