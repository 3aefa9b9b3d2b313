//! Labeled-dataset ingestion: CSV with header `t,x,y,z,u,v,w,p,T`, SI
//! units, empty cells for missing fields. Only rows inside the
//! requested time window are kept; per-field counts are independent.

use std::fs;
use std::path::Path;

use crate::problem::{DataSet, PointST};

use super::AmBenchError;

const HEADER: [&str; 9] = ["t", "x", "y", "z", "u", "v", "w", "p", "T"];

fn parse_cell(cell: &str, line: usize, name: &str) -> Result<Option<f64>, AmBenchError> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed
        .parse::<f64>()
        .map(Some)
        .map_err(|_| AmBenchError::DataFormat { line, msg: format!("column {name}: not a number: {trimmed:?}") })
}

fn required(cell: Option<f64>, line: usize, name: &str) -> Result<f64, AmBenchError> {
    cell.ok_or_else(|| AmBenchError::DataFormat { line, msg: format!("column {name} must not be empty") })
}

/// Load the samples with t in [t_min, t_max]. Velocity labels require
/// all of u, v, w; pressure and temperature are independent.
pub fn load_labeled_window(path: &Path, t_min: f64, t_max: f64) -> Result<DataSet, AmBenchError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or(AmBenchError::DataFormat { line: 1, msg: "empty file".into() })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != HEADER {
        return Err(AmBenchError::DataFormat {
            line: 1,
            msg: format!("expected header {}, got {header:?}", HEADER.join(",")),
        });
    }

    let mut data = DataSet::default();
    for (idx, raw) in lines {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = raw.split(',').collect();
        if cells.len() != HEADER.len() {
            return Err(AmBenchError::DataFormat {
                line,
                msg: format!("expected {} columns, got {}", HEADER.len(), cells.len()),
            });
        }
        let t = required(parse_cell(cells[0], line, "t")?, line, "t")?;
        if t < t_min || t > t_max {
            continue;
        }
        let x = required(parse_cell(cells[1], line, "x")?, line, "x")?;
        let y = required(parse_cell(cells[2], line, "y")?, line, "y")?;
        let z = required(parse_cell(cells[3], line, "z")?, line, "z")?;
        let point = PointST { t, x: vec![x, y, z] };

        let u = parse_cell(cells[4], line, "u")?;
        let v = parse_cell(cells[5], line, "v")?;
        let w = parse_cell(cells[6], line, "w")?;
        match (u, v, w) {
            (Some(u), Some(v), Some(w)) => data.u.push((point.clone(), vec![u, v, w])),
            (None, None, None) => {}
            _ => {
                return Err(AmBenchError::DataFormat {
                    line,
                    msg: "velocity label needs all of u, v, w (or none)".into(),
                })
            }
        }
        if let Some(p) = parse_cell(cells[7], line, "p")? {
            data.p.push((point.clone(), p));
        }
        if let Some(temp) = parse_cell(cells[8], line, "T")? {
            data.temp.push((point, temp));
        }
    }
    if data.is_empty() {
        return Err(AmBenchError::EmptyWindow { t_min, t_max });
    }
    Ok(data)
}
