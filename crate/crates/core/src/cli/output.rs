//! File output: legacy-VTK structured grids, CSV tensor tables and JSON reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::fem::SymElasticityTensor;
use crate::geometry::StructuredGrid;
use crate::verify::OracleReport;
use crate::Result;

/// A named nodal or cell field; vectors are stored with `ncomp` entries per point.
pub struct Field<'a> {
    pub name: &'a str,
    pub ncomp: usize,
    pub values: &'a [f64],
}

/// Legacy ASCII `STRUCTURED_GRID` with point and cell data. Vector fields are
/// padded to three components.
pub fn vtk_string(title: &str, grid: &StructuredGrid, points: &[Field], cells: &[Field]) -> String {
    let mut s = String::new();
    let dims: Vec<usize> = (0..3).map(|a| grid.nodes_along(a)).collect();
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "{}", title.replace('\n', " "));
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET STRUCTURED_GRID");
    let _ = writeln!(s, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
    let _ = writeln!(s, "POINTS {} double", grid.n_nodes());
    for n in 0..grid.n_nodes() {
        let x = grid.node_position(n);
        let _ = writeln!(s, "{} {} {}", x[0], x[1], x[2]);
    }
    let section = |s: &mut String, header: &str, count: usize, fields: &[Field]| {
        if fields.is_empty() {
            return;
        }
        let _ = writeln!(s, "{header} {count}");
        for f in fields {
            if f.ncomp == 1 {
                let _ = writeln!(s, "SCALARS {} double 1", f.name);
                let _ = writeln!(s, "LOOKUP_TABLE default");
                for v in f.values {
                    let _ = writeln!(s, "{v}");
                }
            } else {
                let _ = writeln!(s, "VECTORS {} double", f.name);
                for chunk in f.values.chunks(f.ncomp) {
                    let mut v = [0.0; 3];
                    v[..chunk.len().min(3)].copy_from_slice(&chunk[..chunk.len().min(3)]);
                    let _ = writeln!(s, "{} {} {}", v[0], v[1], v[2]);
                }
            }
        }
    };
    section(&mut s, "POINT_DATA", grid.n_nodes(), points);
    section(&mut s, "CELL_DATA", grid.n_cells(), cells);
    s
}

pub fn write_vtk(path: &Path, title: &str, grid: &StructuredGrid, points: &[Field], cells: &[Field]) -> Result<()> {
    fs::write(path, vtk_string(title, grid, points, cells))?;
    Ok(())
}

/// All `dim⁴` components with header `i,j,k,l,value` (indices from 1).
pub fn tensor_csv(t: &SymElasticityTensor) -> String {
    let d = t.dim();
    let mut s = String::from("i,j,k,l,value\n");
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let _ = writeln!(s, "{},{},{},{},{}", i + 1, j + 1, k + 1, l + 1, t.component(i, j, k, l));
                }
            }
        }
    }
    s
}

/// Parses a table written by [`tensor_csv`] back into `(i, j, k, l, value)` rows.
pub fn parse_tensor_csv(text: &str) -> Option<Vec<([usize; 4], f64)>> {
    let mut lines = text.lines();
    if lines.next()? != "i,j,k,l,value" {
        return None;
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            if parts.len() != 5 {
                return None;
            }
            let idx = [0, 1, 2, 3].map(|a| parts[a].parse::<usize>().ok());
            Some((
                [idx[0]?, idx[1]?, idx[2]?, idx[3]?],
                parts[4].parse().ok()?,
            ))
        })
        .collect()
}

/// Matrix table with header `j,k,value` (indices from 1).
pub fn matrix_csv(m: &nalgebra::DMatrix<f64>) -> String {
    let mut s = String::from("j,k,value\n");
    for j in 0..m.nrows() {
        for k in 0..m.ncols() {
            let _ = writeln!(s, "{},{},{}", j + 1, k + 1, m[(j, k)]);
        }
    }
    s
}

/// Machine-readable summary of one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub units: String,
    pub config: serde_json::Value,
    pub checks: Vec<OracleReport>,
    pub results: serde_json::Value,
    pub pass: bool,
}

impl RunReport {
    pub fn new(command: &str, config: serde_json::Value, checks: Vec<OracleReport>, results: serde_json::Value) -> Self {
        let pass = checks.iter().all(|c| c.passed());
        Self {
            command: command.into(),
            units: "model units".into(),
            config,
            checks,
            results,
            pass,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
