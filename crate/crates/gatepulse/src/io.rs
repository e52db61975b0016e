//! CSV traces and metrics, legacy VTK snapshots, Matrix Market dumps.
//!
//! CSV numbers are written with 17 significant digits so a write/read round
//! trip is bit-exact. No file carries timestamps, so identical inputs give
//! identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use gatepulse_core::mesh::{BoxMesh, DofMap};
use gatepulse_core::probes::{FieldSnapshot, ProbeTrace};
use gatepulse_core::sparse::CsrMatrix;
use gatepulse_core::timeloop::LineSeries;

/// 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Header plus numeric rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        if row.len() != header.len() {
            bail!("row has {} values but {} has {} columns", row.len(), path.display(), header.len());
        }
        w.write_record(row.iter().map(|v| format_f64(*v))).with_context(|| format!("writing {}", path.display()))?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    /// column-major
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.header.iter().position(|h| h == name).map(|i| self.columns[i].as_slice())
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = csv::Reader::from_reader(file);
    let header: Vec<String> =
        r.headers().with_context(|| format!("reading {}", path.display()))?.iter().map(str::to_string).collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (k, rec) in r.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {} row {}", path.display(), k + 2))?;
        if rec.len() != header.len() {
            bail!("{} row {}: expected {} values, found {}", path.display(), k + 2, header.len(), rec.len());
        }
        for (col, field) in columns.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("{} row {}: `{field}` is not a number", path.display(), k + 2))?;
            col.push(v);
        }
    }
    Ok(Table { header, columns })
}

/// Point-probe traces sharing one time base: `t_s` then one column per label.
pub fn write_trace_csv(path: &Path, traces: &[ProbeTrace], labels: &[&str]) -> Result<()> {
    if traces.len() != labels.len() {
        bail!("{} traces but {} labels", traces.len(), labels.len());
    }
    let times: &[f64] = traces.first().map_or(&[], |t| t.times.as_slice());
    if traces.iter().any(|t| t.times != times) {
        bail!("traces written to {} do not share a time base", path.display());
    }
    let mut header = vec!["t_s"];
    header.extend_from_slice(labels);
    let rows: Vec<Vec<f64>> = times
        .iter()
        .enumerate()
        .map(|(k, &t)| std::iter::once(t).chain(traces.iter().map(|tr| tr.values[k])).collect())
        .collect();
    write_table(path, &header, &rows)
}

/// φ along x at every record time: `t_s,x_m,phi_V`.
pub fn write_line_csv(path: &Path, line: &LineSeries) -> Result<()> {
    let rows: Vec<Vec<f64>> = line
        .times
        .iter()
        .zip(&line.values)
        .flat_map(|(&t, vals)| line.x.iter().zip(vals).map(move |(&x, &v)| vec![t, x, v]))
        .collect();
    write_table(path, &["t_s", "x_m", "phi_V"], &rows)
}

/// Named scalar results: `metric,value`.
pub fn write_metrics_csv(path: &Path, metrics: &[(&str, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let ctx = || format!("writing {}", path.display());
    w.write_record(["metric", "value"]).with_context(ctx)?;
    for (name, v) in metrics {
        w.write_record([name.to_string(), format_f64(*v)]).with_context(ctx)?;
    }
    w.flush().with_context(ctx)?;
    Ok(())
}

/// Legacy ASCII STRUCTURED_POINTS with φ as scalars and u as vectors.
pub fn write_vtk_snapshot(path: &Path, mesh: &BoxMesh, dofs: &DofMap, snap: &FieldSnapshot) -> Result<()> {
    let mut w = create(path)?;
    let [px, py, pz] = mesh.nodes_per_axis();
    let n = mesh.node_count();
    let mut text = String::with_capacity(64 * n);
    text.push_str("# vtk DataFile Version 3.0\n");
    text.push_str(&format!("gatepulse snapshot t = {:e} s\n", snap.time));
    text.push_str("ASCII\nDATASET STRUCTURED_POINTS\n");
    text.push_str(&format!("DIMENSIONS {px} {py} {pz}\n"));
    text.push_str("ORIGIN 0 0 0\n");
    text.push_str(&format!("SPACING {:e} {:e} {:e}\n", mesh.spacing[0], mesh.spacing[1], mesh.spacing[2]));
    text.push_str(&format!("POINT_DATA {n}\nSCALARS phi double 1\nLOOKUP_TABLE default\n"));
    for node in 0..n {
        text.push_str(&format!("{:e}\n", snap.phi[dofs.potential(node)]));
    }
    text.push_str("VECTORS u double\n");
    for node in 0..n {
        let u = |c| snap.u[dofs.displacement(node, c)];
        text.push_str(&format!("{:e} {:e} {:e}\n", u(0), u(1), u(2)));
    }
    w.write_all(text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Coordinate-format Matrix Market file (1-based indices).
pub fn write_matrix_market(path: &Path, a: &CsrMatrix) -> Result<()> {
    let mut w = create(path)?;
    let mut text = String::from("%%MatrixMarket matrix coordinate real general\n");
    text.push_str(&format!("{} {} {}\n", a.nrows(), a.ncols(), a.nnz()));
    for r in 0..a.nrows() {
        for (c, v) in a.row(r) {
            text.push_str(&format!("{} {} {}\n", r + 1, c + 1, format_f64(v)));
        }
    }
    w.write_all(text.as_bytes()).with_context(|| format!("writing {}", path.display()))?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
