use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::TaskPoint;
use crate::gp::{CorrelationMatrix, PredictionResult};
use crate::mapping::{CorrelationTrajectory, PropertyMap, RmseCurve};

use super::{write_atomic, IoError};

pub const NODATA: f64 = -9999.0;

/// Long-format map table: one row per task per cell, tasks in order, cells
/// row-major from the south-west corner.
pub fn map_csv(maps: &[PropertyMap]) -> String {
    let mut out = String::from("task,x_m,y_m,mean,variance\n");
    for map in maps {
        for (loc, (m, v)) in map.grid.cell_centers().iter().zip(map.mean.iter().zip(&map.variance)) {
            let _ = writeln!(out, "{},{},{},{},{}", map.label, loc.x, loc.y, m, v);
        }
    }
    out
}

/// ESRI ASCII raster of `values` laid out like `map.grid` (row 0 south).
/// Rows are written north first; non-finite values become NODATA.
pub fn esri_ascii(map: &PropertyMap, values: &[f64]) -> String {
    let grid = &map.grid;
    let b = grid.bounds();
    let mut out = String::new();
    let _ = writeln!(out, "ncols {}", grid.ncols());
    let _ = writeln!(out, "nrows {}", grid.nrows());
    let _ = writeln!(out, "xllcorner {}", b.min_x);
    let _ = writeln!(out, "yllcorner {}", b.min_y);
    let _ = writeln!(out, "cellsize {}", grid.resolution());
    let _ = writeln!(out, "NODATA_value {}", NODATA);
    for row in (0..grid.nrows()).rev() {
        let line = (0..grid.ncols())
            .map(|col| {
                let v = values[row * grid.ncols() + col];
                if v.is_finite() { v } else { NODATA }.to_string()
            })
            .collect::<Vec<_>>()
            .join(" ");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Writes `{label}_mean.asc` and `{label}_variance.asc` for every map, plus
/// `map.csv`, into `dir`. Returns the paths written.
pub fn write_map_exports(dir: &Path, maps: &[PropertyMap]) -> Result<Vec<PathBuf>, IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let mut written = Vec::with_capacity(2 * maps.len() + 1);
    for map in maps {
        for (surface, values) in [("mean", &map.mean), ("variance", &map.variance)] {
            let path = dir.join(format!("{}_{}.asc", map.label, surface));
            write_atomic(&path, esri_ascii(map, values).as_bytes())?;
            written.push(path);
        }
    }
    let csv_path = dir.join("map.csv");
    write_atomic(&csv_path, map_csv(maps).as_bytes())?;
    written.push(csv_path);
    Ok(written)
}

pub fn predictions_csv(queries: &[TaskPoint], labels: &[String], result: &PredictionResult) -> String {
    let mut out = String::from("task,x_m,y_m,mean,variance\n");
    for (q, (m, v)) in queries.iter().zip(result.mean.iter().zip(&result.variance)) {
        let _ = writeln!(out, "{},{},{},{},{}", labels[q.task.0], q.location.x, q.location.y, m, v);
    }
    out
}

pub fn rmse_curves_csv(curves: &[RmseCurve]) -> String {
    let mut out = String::from("method,task,k,rmse\n");
    for curve in curves {
        for (label, points) in curve.labels.iter().zip(&curve.curves) {
            for (k, r) in points {
                let _ = writeln!(out, "{},{},{},{}", curve.method, label, k, r);
            }
        }
    }
    out
}

/// Square correlation table with a `task` column and one column per label.
pub fn correlation_matrix_csv(labels: &[String], corr: &CorrelationMatrix) -> String {
    let mut out = format!("task,{}\n", labels.join(","));
    for (i, label) in labels.iter().enumerate() {
        out.push_str(label);
        for j in 0..labels.len() {
            let _ = write!(out, ",{}", corr.get(i, j));
        }
        out.push('\n');
    }
    out
}

pub fn trajectory_csv(traj: &CorrelationTrajectory) -> String {
    let mut out = String::from("k,task_i,task_j,r\n");
    let mut rows: Vec<(usize, usize, usize, f64)> = traj
        .pairs
        .iter()
        .flat_map(|p| p.points.iter().map(move |&(k, r)| (k, p.i, p.j, r)))
        .collect();
    rows.sort_by_key(|&(k, i, j, _)| (k, i, j));
    for (k, i, j, r) in rows {
        let _ = writeln!(out, "{},{},{},{}", k, traj.labels[i], traj.labels[j], r);
    }
    out
}
