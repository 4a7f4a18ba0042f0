//! CSV files exchanged between pipeline stages.
//!
//! Every row is a grid node; floats use 17 significant digits so values survive a
//! round trip bit for bit.

use std::path::Path;

use balfuse::filtering::{Direction, FilterResult, Layout};
use balfuse::fusion::SmootherResult;
use balfuse::simulate::Trajectory;
use balfuse::TimeGrid;
use nalgebra::{DMatrix, DVector};

use crate::error::CliError;

pub const TRAJECTORY: &str = "trajectory.csv";
pub const FORWARD: &str = "forward.csv";
pub const BACKWARD: &str = "backward.csv";
pub const SMOOTHED: &str = "smoothed.csv";

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

/// `{prefix}ij` in row-major order.
fn matrix_columns(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).flat_map(move |i| (1..=n).map(move |j| format!("{prefix}{i}{j}")))
}

fn write_rows(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::csv(path, e.to_string()))?;
    w.write_record(&header).map_err(|e| CliError::csv(path, e.to_string()))?;
    for row in rows {
        w.write_record(&row).map_err(|e| CliError::csv(path, e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn avail(layout: &Layout, k: usize) -> String {
    if layout.node_available(k) { "1" } else { "0" }.to_string()
}

fn push_matrix(row: &mut Vec<String>, q: &DMatrix<f64>) {
    for i in 0..q.nrows() {
        for j in 0..q.ncols() {
            row.push(fmt(q[(i, j)]));
        }
    }
}

pub fn trajectory_header(n: usize, m: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(numbered("x", n))
        .chain(numbered("y", m))
        .chain(std::iter::once("avail".to_string()))
        .collect()
}

pub fn write_trajectory(path: &Path, traj: &Trajectory, layout: &Layout) -> Result<(), CliError> {
    let (n, m) = (traj.x[0].len(), traj.y[0].len());
    let rows = (0..traj.grid.nodes()).map(|k| {
        let mut row = vec![fmt(traj.grid.time(k))];
        row.extend(traj.x[k].iter().map(|&v| fmt(v)));
        row.extend(traj.y[k].iter().map(|&v| fmt(v)));
        row.push(avail(layout, k));
        row
    });
    write_rows(path, trajectory_header(n, m), rows)
}

fn filter_prefixes(direction: Direction) -> (&'static str, &'static str) {
    match direction {
        Direction::Forward => ("xm", "Qm"),
        Direction::Backward => ("xp", "Qp"),
    }
}

pub fn filter_header(direction: Direction, n: usize) -> Vec<String> {
    let (xp, qp) = filter_prefixes(direction);
    std::iter::once("t".to_string())
        .chain(numbered(xp, n))
        .chain(matrix_columns(qp, n))
        .chain(std::iter::once("avail".to_string()))
        .collect()
}

pub fn write_filter(path: &Path, res: &FilterResult, layout: &Layout) -> Result<(), CliError> {
    let n = res.x[0].len();
    let rows = (0..res.grid.nodes()).map(|k| {
        let mut row = vec![fmt(res.grid.time(k))];
        row.extend(res.x[k].iter().map(|&v| fmt(v)));
        push_matrix(&mut row, &res.q[k]);
        row.push(avail(layout, k));
        row
    });
    write_rows(path, filter_header(res.direction, n), rows)
}

pub fn smoothed_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain(numbered("xs", n))
        .chain(matrix_columns("Qs", n))
        .collect()
}

pub fn write_smoothed(path: &Path, sm: &SmootherResult) -> Result<(), CliError> {
    let n = sm.x[0].len();
    let rows = (0..sm.grid.nodes()).map(|k| {
        let mut row = vec![fmt(sm.grid.time(k))];
        row.extend(sm.x[k].iter().map(|&v| fmt(v)));
        push_matrix(&mut row, &sm.q[k]);
        row
    });
    write_rows(path, smoothed_header(n), rows)
}

/// Numeric table with its header checked against `expected`, one row per grid node.
fn read_table(path: &Path, expected: &[String], grid: &TimeGrid) -> Result<Vec<Vec<f64>>, CliError> {
    if !path.exists() {
        return Err(CliError::MissingInput(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::csv(path, e.to_string()))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::csv(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != expected {
        return Err(CliError::csv(
            path,
            format!("unexpected columns {header:?}, expected {expected:?}"),
        ));
    }
    let mut rows = Vec::with_capacity(grid.nodes());
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e.to_string()))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::csv(path, format!("row {}: {e}", line + 1)))?;
        rows.push(row);
    }
    if rows.len() != grid.nodes() {
        return Err(CliError::csv(
            path,
            format!("{} rows, expected one per grid node ({})", rows.len(), grid.nodes()),
        ));
    }
    for (k, row) in rows.iter().enumerate() {
        let t = grid.time(k);
        if (row[0] - t).abs() > 1e-9 * grid.h() {
            return Err(CliError::csv(path, format!("row {} has t = {}, expected {t}", k + 1, row[0])));
        }
    }
    Ok(rows)
}

fn vector(row: &[f64], at: usize, n: usize) -> DVector<f64> {
    DVector::from_column_slice(&row[at..at + n])
}

fn matrix(row: &[f64], at: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, &row[at..at + n * n])
}

/// Trajectory read back for filtering; noise increments are not stored and come back as zeros.
pub fn read_trajectory(path: &Path, grid: &TimeGrid, n: usize, m: usize, p: usize) -> Result<Trajectory, CliError> {
    let rows = read_table(path, &trajectory_header(n, m), grid)?;
    Ok(Trajectory {
        grid: *grid,
        x: rows.iter().map(|r| vector(r, 1, n)).collect(),
        y: rows.iter().map(|r| vector(r, 1 + n, m)).collect(),
        dw: vec![DVector::zeros(p); grid.steps()],
        seed: 0,
        stream: 0,
    })
}

/// Filter estimates and covariances read back for fusion; gains are not stored.
pub fn read_filter(path: &Path, direction: Direction, grid: &TimeGrid, n: usize, m: usize) -> Result<FilterResult, CliError> {
    let rows = read_table(path, &filter_header(direction, n), grid)?;
    Ok(FilterResult {
        direction,
        grid: *grid,
        x: rows.iter().map(|r| vector(r, 1, n)).collect(),
        q: rows.iter().map(|r| matrix(r, 1 + n, n)).collect(),
        gain: vec![DMatrix::zeros(n, m); grid.nodes()],
        jumps: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 2.0f64.sqrt() * 1e12, 0.0] {
            let s = fmt(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(fmt(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn headers() {
        assert_eq!(trajectory_header(2, 1), ["t", "x1", "x2", "y1", "avail"]);
        assert_eq!(
            filter_header(Direction::Forward, 2),
            ["t", "xm1", "xm2", "Qm11", "Qm12", "Qm21", "Qm22", "avail"]
        );
        assert_eq!(filter_header(Direction::Backward, 1), ["t", "xp1", "Qp11", "avail"]);
        assert_eq!(smoothed_header(1), ["t", "xs1", "Qs11"]);
    }
}
