//! CSV and JSON files written by the harness. Floats use the shortest
//! round-trip representation.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_rows_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows `t, x_1..x_dim` where row `k` has time `(k + first_step) dt`.
pub fn write_trajectory_csv(path: &Path, values: &[f64], dim: usize, dt: f64, first_step: usize) -> Result<()> {
    if dim == 0 || values.len() % dim != 0 {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: values.len(),
        });
    }
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("x{i}")));
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_rows_csv(
        path,
        &header_refs,
        values.chunks(dim).enumerate().map(|(k, row)| {
            let mut rec = vec![format!("{:?}", (k + first_step) as f64 * dt)];
            rec.extend(row.iter().map(|v| format!("{v:?}")));
            rec
        }),
    )
}

/// Reads a file written by [`write_trajectory_csv`]: returns `(values, dim, times)`.
pub fn read_trajectory_csv(path: &Path) -> Result<(Vec<f64>, usize, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path)?;
    let dim = rdr.headers()?.len().saturating_sub(1);
    if dim == 0 {
        return Err(Error::InvalidInput(format!("{} has no data columns", path.display())));
    }
    let mut values = Vec::new();
    let mut times = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let parse = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("bad number `{s}` in {}", path.display())))
        };
        times.push(parse(&rec[0])?);
        for field in rec.iter().skip(1) {
            values.push(parse(field)?);
        }
    }
    Ok((values, dim, times))
}

pub fn write_result_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        let values = vec![0.1, -1e-300, 3.0, f64::MAX, 2.0 / 3.0, -0.0];
        write_trajectory_csv(&path, &values, 2, 0.01, 1).unwrap();
        let (back, dim, times) = read_trajectory_csv(&path).unwrap();
        assert_eq!(dim, 2);
        assert_eq!(back, values);
        assert_eq!(times, vec![0.01, 0.02, 0.03]);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,x1,x2\n") && !text.contains('\r'));
    }

    #[test]
    fn ragged_values_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(write_trajectory_csv(&dir.path().join("x.csv"), &[1.0, 2.0, 3.0], 2, 0.1, 0).is_err());
    }
}
