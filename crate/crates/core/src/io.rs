//! CSV and JSON artifacts. Numbers are written with 17 significant digits so
//! every double survives a round trip.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cell_solver::{Boundary, CellSolution, CorrectorField, SolverKind};
use crate::density::{DensityTable, TableEntry, TfHomOptions, TracePoint, XiLattice};
use crate::error::{HomogError, Result};
use crate::gamma_sim::{Field, GammaReport};
use crate::manifold::ManifoldKind;

pub const CORRECTOR_CSV: &str = "corrector.csv";
pub const CORRECTOR_JSON: &str = "corrector.json";
pub const DENSITY_CSV: &str = "density.csv";
pub const DENSITY_JSON: &str = "density.json";
pub const GAMMA_JSON: &str = "gamma_report.json";
pub const GAMMA_GAPS_CSV: &str = "gamma_gaps.csv";

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> HomogError {
    HomogError::InvalidInput(format!("{}: {e}", path.display()))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim().parse().map_err(|e| io_err(path, format!("bad number {s:?}: {e}")))
}

fn parse_bool(path: &Path, s: &str) -> Result<bool> {
    s.trim().parse().map_err(|e| io_err(path, format!("bad flag {s:?}: {e}")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r.headers().map_err(|e| io_err(path, e))?.iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|r| r.iter().map(String::from).collect()).map_err(|e| io_err(path, e)))
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok((header, rows))
}

/// Sidecar describing a corrector dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorMeta {
    pub integrand: String,
    pub manifold: ManifoldKind,
    pub s: Vec<f64>,
    /// `ξ` as `d` rows of `N` entries.
    pub xi: Vec<Vec<f64>>,
    pub value: f64,
    pub iterations: usize,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub converged: bool,
    pub solver: SolverKind,
    pub n_dim: usize,
    pub t: usize,
    pub nodes_per_period: usize,
    pub boundary: Boundary,
    pub coord_dim: usize,
}

impl CorrectorMeta {
    pub fn from_solution(
        integrand: &str,
        manifold: ManifoldKind,
        s: &[f64],
        xi: Vec<Vec<f64>>,
        solver: SolverKind,
        sol: &CellSolution,
    ) -> Self {
        let c = &sol.corrector;
        Self {
            integrand: integrand.to_string(),
            manifold,
            s: s.to_vec(),
            xi,
            value: sol.value,
            iterations: sol.iterations,
            grad_norm: sol.grad_norm,
            initial_grad_norm: sol.initial_grad_norm,
            converged: sol.converged,
            solver,
            n_dim: c.n_dim,
            t: c.t,
            nodes_per_period: c.nodes_per_period,
            boundary: c.boundary,
            coord_dim: c.coord_dim,
        }
    }
}

/// Writes `corrector.csv` (node, coordinates, tangent coordinates) and `corrector.json`.
pub fn write_corrector(dir: &Path, meta: &CorrectorMeta, field: &CorrectorField) -> Result<()> {
    let grid = field.grid();
    let mut header = vec!["node".to_string()];
    header.extend((0..field.n_dim).map(|k| format!("y_{k}")));
    header.extend((0..field.coord_dim).map(|c| format!("phi_{c}")));
    let mut y = vec![0.0; field.n_dim];
    let rows = (0..field.node_count()).map(|i| {
        grid.node_coords(i, &mut y);
        let mut row = vec![i.to_string()];
        row.extend(y.iter().map(|&v| fmt_f64(v)));
        row.extend(field.node(i).iter().map(|&v| fmt_f64(v)));
        row
    });
    write_csv(&dir.join(CORRECTOR_CSV), &header, rows)?;
    write_json(&dir.join(CORRECTOR_JSON), meta)
}

pub fn read_corrector(dir: &Path) -> Result<(CorrectorMeta, CorrectorField)> {
    let meta: CorrectorMeta = read_json(&dir.join(CORRECTOR_JSON))?;
    let path = dir.join(CORRECTOR_CSV);
    let (_, rows) = read_csv(&path)?;
    let mut field = CorrectorField::zeros(meta.n_dim, meta.t, meta.nodes_per_period, meta.boundary, meta.coord_dim);
    if rows.len() != field.node_count() {
        return Err(io_err(&path, format!("expected {} rows, found {}", field.node_count(), rows.len())));
    }
    for (i, row) in rows.iter().enumerate() {
        let start = 1 + meta.n_dim;
        if row.len() != start + meta.coord_dim {
            return Err(io_err(&path, format!("row {i} has {} columns", row.len())));
        }
        for c in 0..meta.coord_dim {
            field.values[i * meta.coord_dim + c] = parse_f64(&path, &row[start + c])?;
        }
    }
    Ok((meta, field))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub s_index: usize,
    pub error: Option<String>,
    pub trace: Vec<TracePoint>,
}

/// JSON metadata accompanying `density.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMeta {
    pub manifold_kind: ManifoldKind,
    pub integrand: String,
    pub n_dim: usize,
    pub coord_dim: usize,
    pub s_points: Vec<Vec<f64>>,
    pub angles: Option<Vec<f64>>,
    pub lattice: XiLattice,
    pub options: TfHomOptions,
    pub failures: usize,
    pub entries: Vec<EntryMeta>,
}

/// Writes `density.csv` (s components, tangent coefficients, value, converged) and `density.json`.
pub fn write_density_table(dir: &Path, table: &DensityTable, opts: &TfHomOptions) -> Result<()> {
    let d = table.s_points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..d).map(|k| format!("s_{k}")).collect();
    header.extend((0..table.axes()).map(|a| format!("c_{a}")));
    header.push("value".into());
    header.push("converged".into());
    let rows = table.entries.iter().map(|e| {
        let mut row: Vec<String> = table.s_points[e.s_index].iter().map(|&v| fmt_f64(v)).collect();
        row.extend(e.coeffs.iter().map(|&v| fmt_f64(v)));
        row.push(fmt_f64(e.value));
        row.push(e.converged.to_string());
        row
    });
    write_csv(&dir.join(DENSITY_CSV), &header, rows)?;
    let meta = DensityMeta {
        manifold_kind: table.manifold_kind,
        integrand: table.integrand.clone(),
        n_dim: table.n_dim,
        coord_dim: table.coord_dim,
        s_points: table.s_points.clone(),
        angles: table.angles.clone(),
        lattice: table.lattice.clone(),
        options: opts.clone(),
        failures: table.failures(),
        entries: table
            .entries
            .iter()
            .map(|e| EntryMeta { s_index: e.s_index, error: e.error.clone(), trace: e.trace.clone() })
            .collect(),
    };
    write_json(&dir.join(DENSITY_JSON), &meta)
}

pub fn read_density_table(dir: &Path) -> Result<(DensityTable, TfHomOptions)> {
    let meta: DensityMeta = read_json(&dir.join(DENSITY_JSON))?;
    let path = dir.join(DENSITY_CSV);
    let (_, rows) = read_csv(&path)?;
    if rows.len() != meta.entries.len() {
        return Err(io_err(&path, "row count does not match metadata"));
    }
    let d = meta.s_points.first().map_or(0, Vec::len);
    let axes = meta.coord_dim * meta.n_dim;
    let entries = rows
        .iter()
        .zip(&meta.entries)
        .map(|(row, em)| {
            if row.len() != d + axes + 2 {
                return Err(io_err(&path, format!("row has {} columns, expected {}", row.len(), d + axes + 2)));
            }
            Ok(TableEntry {
                s_index: em.s_index,
                coeffs: row[d..d + axes].iter().map(|v| parse_f64(&path, v)).collect::<Result<_>>()?,
                value: parse_f64(&path, &row[d + axes])?,
                converged: parse_bool(&path, &row[d + axes + 1])?,
                error: em.error.clone(),
                trace: em.trace.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = DensityTable {
        manifold_kind: meta.manifold_kind,
        integrand: meta.integrand,
        n_dim: meta.n_dim,
        coord_dim: meta.coord_dim,
        s_points: meta.s_points,
        angles: meta.angles,
        lattice: meta.lattice,
        entries,
    };
    Ok((table, meta.options))
}

/// Writes `gamma_report.json`, the `(eps, gap)` CSV and any dumped fields.
/// Returns the paths written.
pub fn write_gamma(dir: &Path, report: &GammaReport) -> Result<Vec<PathBuf>> {
    let mut written = vec![dir.join(GAMMA_JSON), dir.join(GAMMA_GAPS_CSV)];
    write_json(&written[0], report)?;
    let rows = report.gaps().into_iter().map(|(e, g)| vec![fmt_f64(e), fmt_f64(g)]);
    write_csv(&written[1], &["eps".into(), "gap".into()], rows)?;
    for (name, field) in &report.fields {
        let path = dir.join(format!("field_{name}.csv"));
        write_field_csv(&path, field)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_gamma_report(path: &Path) -> Result<GammaReport> {
    read_json(path)
}

pub fn read_gaps_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let (_, rows) = read_csv(path)?;
    rows.iter()
        .map(|r| match r.as_slice() {
            [e, g] => Ok((parse_f64(path, e)?, parse_f64(path, g)?)),
            _ => Err(io_err(path, "expected two columns")),
        })
        .collect()
}

/// Node coordinates followed by the two ambient components of `u`.
pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    let grid = field.grid();
    let mut header: Vec<String> = (0..field.n_dim).map(|k| format!("x_{k}")).collect();
    header.extend(["u_0".to_string(), "u_1".to_string()]);
    let mut x = vec![0.0; field.n_dim];
    let rows = (0..field.node_count()).map(|i| {
        grid.node_coords(i, &mut x);
        let mut row: Vec<String> = x.iter().map(|&v| fmt_f64(v)).collect();
        row.extend(field.values[2 * i..2 * i + 2].iter().map(|&v| fmt_f64(v)));
        row
    });
    write_csv(path, &header, rows)
}

pub fn read_field_csv(path: &Path) -> Result<Field> {
    let (header, rows) = read_csv(path)?;
    let n_dim = header.len().checked_sub(2).filter(|&n| n >= 1).ok_or_else(|| io_err(path, "bad header"))?;
    let side = (rows.len() as f64).powf(1.0 / n_dim as f64).round() as usize;
    if side < 2 || side.pow(n_dim as u32) != rows.len() {
        return Err(io_err(path, "row count is not a square grid"));
    }
    let mut values = Vec::with_capacity(2 * rows.len());
    for r in &rows {
        if r.len() != n_dim + 2 {
            return Err(io_err(path, "ragged row"));
        }
        values.push(parse_f64(path, &r[n_dim])?);
        values.push(parse_f64(path, &r[n_dim + 1])?);
    }
    Ok(Field { n_dim, cells: side - 1, values })
}
