//! CSV reading and writing.
//!
//! Every table starts with optional `# ...` comment lines followed by a header row. Cubes are
//! written as `level:j_1,...,j_d` (quoted, since they contain commas). Scalars use Rust's
//! shortest round-trip formatting, so writing and reading back is lossless.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::GridSpec;
use crate::measure::{DyadicMeasure, SimpleFunction};
use crate::scalar::Scalar;
use crate::sparse::{DominationReport, StoppingFamily};

fn io_err(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

/// Writes one `# text` line per line of `text`.
pub fn write_comment<W: Write>(w: &mut W, text: &str) -> Result<()> {
    for line in text.lines() {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    Ok(())
}

/// Writes a header and rows of preformatted fields.
pub fn write_table<W, I, R>(w: W, header: &[&str], rows: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header).map_err(io_err)?;
    for row in rows {
        out.write_record(row).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_field<V: std::str::FromStr>(field: &str, what: &str, line: u64) -> Result<V> {
    field
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: bad {what} `{field}`")))
}

fn parse_scalar<T: Scalar>(field: &str, what: &str, line: u64) -> Result<T> {
    let x: f64 = parse_field(field, what, line)?;
    T::from_f64(x).ok_or_else(|| Error::Parse(format!("line {line}: {what} `{field}` out of range")))
}

/// `cell_index,mass`, one row per positive-mass cell.
pub fn write_measure<T: Scalar, W: Write>(w: W, mu: &DyadicMeasure<T>) -> Result<()> {
    let rows = mu
        .cells()
        .iter()
        .zip(mu.masses())
        .map(|(c, m)| [c.to_string(), m.to_string()]);
    write_table(w, &["cell_index", "mass"], rows)
}

pub fn read_measure<T: Scalar, R: Read>(r: R, grid: GridSpec) -> Result<DyadicMeasure<T>> {
    let mut rd = reader(r);
    let header = rd.headers().map_err(io_err)?.clone();
    if header.len() != 2 || &header[0] != "cell_index" || &header[1] != "mass" {
        return Err(Error::Parse(format!("measure header must be `cell_index,mass`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut atoms = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 2 {
            return Err(Error::Parse(format!("line {line}: expected 2 fields, found {}", rec.len())));
        }
        atoms.push((parse_field(&rec[0], "cell index", line)?, parse_scalar(&rec[1], "mass", line)?));
    }
    DyadicMeasure::from_atoms(grid, atoms)
}

/// `cell_index,v_1,...,v_n`, one row per listed cell.
pub fn write_function<T: Scalar, W: Write>(w: W, f: &SimpleFunction<T>) -> Result<()> {
    let header: Vec<String> = std::iter::once("cell_index".to_string())
        .chain((1..=f.dim()).map(|k| format!("v_{k}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = f.iter().map(|(c, v)| {
        std::iter::once(c.to_string())
            .chain(v.iter().map(|x| x.to_string()))
            .collect::<Vec<_>>()
    });
    write_table(w, &header, rows)
}

pub fn read_function<T: Scalar, R: Read>(r: R, grid: GridSpec) -> Result<SimpleFunction<T>> {
    let mut rd = reader(r);
    let header = rd.headers().map_err(io_err)?.clone();
    let dim = header.len().saturating_sub(1);
    let expected = (1..=dim).all(|k| header[k] == format!("v_{k}"));
    if dim == 0 || &header[0] != "cell_index" || !expected {
        return Err(Error::Parse(format!(
            "function header must be `cell_index,v_1,...,v_n`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut entries = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != dim + 1 {
            return Err(Error::Parse(format!("line {line}: expected {} fields, found {}", dim + 1, rec.len())));
        }
        let cell = parse_field(&rec[0], "cell index", line)?;
        let v = (1..=dim)
            .map(|k| parse_scalar(&rec[k], "value", line))
            .collect::<Result<Vec<T>>>()?;
        entries.push((cell, v));
    }
    SimpleFunction::from_cells(grid, dim, entries)
}

/// `cube,parent,tau,witness_mass,cube_mass`; `parent` is the stopping-tree parent, empty for
/// top-level cubes.
pub fn write_family<T: Scalar, W: Write>(w: W, family: &StoppingFamily<T>) -> Result<()> {
    let rows = family.cubes().iter().map(|s| {
        [
            s.to_string(),
            family.tree_parent.get(s).map(ToString::to_string).unwrap_or_default(),
            family.tau.to_string(),
            family.witness_mass[s].to_string(),
            family.cube_mass[s].to_string(),
        ]
    });
    write_table(w, &["cube", "parent", "tau", "witness_mass", "cube_mass"], rows)
}

/// `cell,numerator,denominator,ratio`, one row per positive-mass cell.
pub fn write_domination<T: Scalar, W: Write>(w: W, report: &DominationReport<T>) -> Result<()> {
    let rows = report.rows.iter().map(|r| {
        [r.cell.to_string(), r.numerator.to_string(), r.denominator.to_string(), r.ratio.to_string()]
    });
    write_table(w, &["cell", "numerator", "denominator", "ratio"], rows)
}
