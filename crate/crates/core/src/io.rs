//! Curve CSV files: the header row holds the grid points, every further row one curve.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{FofrError, Result};
use crate::grid::Grid;
use crate::sampcov::CurveSet;

fn parse_err(source: &str, msg: impl std::fmt::Display) -> FofrError {
    FofrError::Parse(format!("{source}: {msg}"))
}

fn parse_cell(source: &str, row: usize, col: usize, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan") {
        return Err(parse_err(
            source,
            format!("row {row}, column {col}: missing value (impute upstream)"),
        ));
    }
    let v: f64 = cell
        .parse()
        .map_err(|_| parse_err(source, format!("row {row}, column {col}: not a number: {cell:?}")))?;
    if !v.is_finite() {
        return Err(parse_err(source, format!("row {row}, column {col}: non-finite value {cell}")));
    }
    Ok(v)
}

/// Parses curve CSV text; `source` names the input in error messages.
/// Rows are numbered from 1 with the header as row 1.
pub fn parse_curve_csv<R: Read>(reader: R, source: &str) -> Result<CurveSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| parse_err(source, e))?,
        None => return Err(parse_err(source, "empty file")),
    };
    let points = header
        .iter()
        .enumerate()
        .map(|(c, cell)| parse_cell(source, 1, c + 1, cell))
        .collect::<Result<Vec<f64>>>()?;
    let grid = Grid::from_points(points).map_err(|e| parse_err(source, format!("row 1 (grid): {e}")))?;
    let m = grid.len();
    let mut rows = Vec::new();
    for (k, rec) in records.enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| parse_err(source, e))?;
        if rec.len() != m {
            return Err(parse_err(
                source,
                format!("row {row}: expected {m} values, found {}", rec.len()),
            ));
        }
        rows.push(
            rec.iter()
                .enumerate()
                .map(|(c, cell)| parse_cell(source, row, c + 1, cell))
                .collect::<Result<Vec<f64>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(parse_err(source, "no curve rows after the grid header"));
    }
    CurveSet::from_rows(grid, &rows)
}

pub fn read_curve_csv(path: &Path) -> Result<CurveSet> {
    let file = File::open(path).map_err(|e| parse_err(&path.display().to_string(), e))?;
    parse_curve_csv(file, &path.display().to_string())
}

/// Writes curves with shortest round-trip float formatting.
pub fn write_curve_csv_to<W: Write>(writer: W, curves: &CurveSet) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| FofrError::Parse(format!("writing curve CSV: {e}"));
    w.write_record(curves.grid().points().iter().map(|v| v.to_string()))
        .map_err(io)?;
    for row in curves.matrix().row_iter() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curve_csv(path: &Path, curves: &CurveSet) -> Result<()> {
    write_curve_csv_to(File::create(path)?, curves)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn round_trip_is_exact() {
        let g = Grid::from_points(vec![0.0, 0.1, 0.35, 1.0]).unwrap();
        let xs = CurveSet::new(g, DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0))).unwrap();
        let mut buf = Vec::new();
        write_curve_csv_to(&mut buf, &xs).unwrap();
        let back = parse_curve_csv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, xs);
    }

    #[test]
    fn rejects_missing_values_with_location() {
        let err = parse_curve_csv("0,0.5,1\n1,2,3\n4,,6\n".as_bytes(), "x.csv").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("x.csv") && msg.contains("row 3"), "{msg}");
        assert!(parse_curve_csv("0,0.5,1\n1,NA,3\n".as_bytes(), "x.csv").is_err());
    }

    #[test]
    fn rejects_ragged_and_bad_grids() {
        assert!(parse_curve_csv("0,0.5,1\n1,2\n".as_bytes(), "x").is_err());
        assert!(parse_curve_csv("0,1,0.5\n1,2,3\n".as_bytes(), "x").is_err());
        assert!(parse_curve_csv("0,0.5,1\n".as_bytes(), "x").is_err());
        assert!(parse_curve_csv("".as_bytes(), "x").is_err());
        assert!(parse_curve_csv("0,a,1\n1,2,3\n".as_bytes(), "x").is_err());
    }
}
