//! Dataset file formats.
//!
//! Two interchangeable on-disk forms, one row per sample with d columns:
//! - CSV: plain numeric rows, no header; ids are assigned 0..n on load.
//! - f64le: a 16-byte header (u64 little-endian row count, u64 little-endian
//!   dimension) followed by row-major little-endian f64 values.
//!
//! Corruption masks serialize as JSON id lists.

use crate::error::{Error, Result};
use crate::points::{PointSet, Vector};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    #[default]
    Csv,
    F64le,
}

pub fn write_points(path: &Path, points: &PointSet, format: DatasetFormat) -> Result<()> {
    match format {
        DatasetFormat::Csv => write_csv(path, points),
        DatasetFormat::F64le => write_f64le(path, points),
    }
}

pub fn read_points(path: &Path, format: DatasetFormat) -> Result<PointSet> {
    match format {
        DatasetFormat::Csv => read_csv(path),
        DatasetFormat::F64le => read_f64le(path),
    }
}

fn write_csv(path: &Path, points: &PointSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (_, v) in points.iter() {
        let row: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn read_csv(path: &Path) -> Result<PointSet> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vector> = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| {
            Error::Parse(format!("{}: line {}: {e}", path.display(), lineno + 1))
        })?;
        match dim {
            None => dim = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(Error::Parse(format!(
                    "{}: line {} has {} columns, expected {d}",
                    path.display(),
                    lineno + 1,
                    vals.len()
                )));
            }
            _ => {}
        }
        rows.push(Vector::from_vec(vals));
    }
    let d = dim.ok_or(Error::EmptySet)?;
    PointSet::from_rows(d, rows)
}

fn write_f64le(path: &Path, points: &PointSet) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&(points.len() as u64).to_le_bytes())?;
    out.write_all(&(points.dim() as u64).to_le_bytes())?;
    for (_, v) in points.iter() {
        for x in v.iter() {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_f64le(path: &Path) -> Result<PointSet> {
    let mut input = BufReader::new(File::open(path)?);
    let mut header = [0u8; 16];
    input.read_exact(&mut header)?;
    let n = u64::from_le_bytes(header[..8].try_into().unwrap()) as usize;
    let d = u64::from_le_bytes(header[8..].try_into().unwrap()) as usize;
    if d == 0 {
        return Err(Error::Parse(format!("{}: zero dimension", path.display())));
    }
    let mut rows = Vec::with_capacity(n);
    let mut buf = vec![0u8; d * 8];
    for _ in 0..n {
        input.read_exact(&mut buf)?;
        let vals: Vec<f64> = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        rows.push(Vector::from_vec(vals));
    }
    PointSet::from_rows(d, rows)
}

/// JSON form of a corruption mask: the corrupted id list.
pub fn write_mask(path: &Path, corrupted_ids: &[u64]) -> Result<()> {
    let json = serde_json::to_string_pretty(&serde_json::json!({
        "corrupted_ids": corrupted_ids,
    }))
    .expect("serializable");
    std::fs::write(path, json)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand_distr::{Distribution, Normal};

    fn sample_set(d: usize, n: usize) -> PointSet {
        let mut rng = stream(1, Purpose::CleanData, 0);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let rows = (0..n)
            .map(|_| Vector::from_fn(d, |_, _| normal.sample(&mut rng)))
            .collect();
        PointSet::from_rows(d, rows).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.csv");
        let points = sample_set(3, 17);
        write_points(&path, &points, DatasetFormat::Csv).unwrap();
        let back = read_points(&path, DatasetFormat::Csv).unwrap();
        assert_eq!(points, back);
    }

    #[test]
    fn f64le_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("points.bin");
        let points = sample_set(5, 11);
        write_points(&path, &points, DatasetFormat::F64le).unwrap();
        let back = read_points(&path, DatasetFormat::F64le).unwrap();
        assert_eq!(points, back);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "1.0,2.0\n3.0\n").unwrap();
        assert!(matches!(
            read_points(&path, DatasetFormat::Csv),
            Err(Error::Parse(_))
        ));
    }
}
