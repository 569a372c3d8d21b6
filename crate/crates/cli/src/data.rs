//! Headered CSV sample files and JSON/CSV report writers.
//!
//! A sample file holds one point per row; every column is a feature except
//! an optional `label` column (`0`/`1`, `in`/`out`, `false`/`true`) and an
//! optional `y` target column.

use std::path::Path;

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct PointSet {
    pub features: Vec<String>,
    pub points: Vec<Vec<f64>>,
    /// `true` marks out-of-distribution rows.
    pub labels: Option<Vec<bool>>,
    pub targets: Option<Vec<f64>>,
}

fn parse_label(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "in" | "false" => Some(false),
        "1" | "out" | "true" => Some(true),
        _ => None,
    }
}

pub fn read_points(path: &Path) -> CliResult<PointSet> {
    let name = path.display();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{name}: {e}")))?;
    let headers = reader.headers().map_err(|e| CliError::Data(format!("{name}: line 1: {e}")))?.clone();
    let label_col = headers.iter().position(|h| h == "label");
    let target_col = headers.iter().position(|h| h == "y");
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|i| Some(*i) != label_col && Some(*i) != target_col).collect();
    if feature_cols.is_empty() {
        return Err(CliError::Data(format!("{name}: line 1: no feature columns")));
    }
    let mut points = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut targets = target_col.map(|_| Vec::new());
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("{name}: line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |col: usize| -> CliResult<f64> {
            let raw = &record[col];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Data(format!("{name}: line {line}: column '{}': cannot parse '{raw}' as a finite number", &headers[col]))),
            }
        };
        points.push(feature_cols.iter().map(|c| number(*c)).collect::<CliResult<Vec<f64>>>()?);
        if let (Some(c), Some(l)) = (label_col, labels.as_mut()) {
            let v = parse_label(&record[c])
                .ok_or_else(|| CliError::Data(format!("{name}: line {line}: column 'label': cannot parse '{}'", &record[c])))?;
            l.push(v);
        }
        if let (Some(c), Some(t)) = (target_col, targets.as_mut()) {
            t.push(number(c)?);
        }
    }
    if points.is_empty() {
        return Err(CliError::Data(format!("{name}: no data rows")));
    }
    Ok(PointSet { features: feature_cols.iter().map(|c| headers[*c].to_string()).collect(), points, labels, targets })
}

pub fn write_points(path: &Path, points: &[Vec<f64>], labels: Option<&[bool]>) -> CliResult<()> {
    let d = points.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    let mut rows = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        let mut row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        if let Some(l) = labels {
            row.push(if l[i] { "1" } else { "0" }.into());
        }
        rows.push(row);
    }
    write_table(path, &header, &rows)
}

pub fn write_table(path: &Path, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_features_labels_and_targets() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.csv");
        std::fs::write(&p, "x1,x2,label,y\n1,2,in,0.5\n-1, 3.5 ,out,1\n").unwrap();
        let s = read_points(&p).unwrap();
        assert_eq!(s.features, vec!["x1", "x2"]);
        assert_eq!(s.points, vec![vec![1.0, 2.0], vec![-1.0, 3.5]]);
        assert_eq!(s.labels, Some(vec![false, true]));
        assert_eq!(s.targets, Some(vec![0.5, 1.0]));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "x1,x2\n1,2\n3,oops\n").unwrap();
        let e = read_points(&p).unwrap_err();
        assert!(matches!(e, CliError::Data(_)));
        assert!(e.to_string().contains("line 3"), "{e}");
        std::fs::write(&p, "x1,x2\n1,2\n3\n").unwrap();
        assert!(read_points(&p).unwrap_err().to_string().contains("line 3"));
        std::fs::write(&p, "x1,label\n1,maybe\n").unwrap();
        assert!(read_points(&p).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn points_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pts.csv");
        let pts = vec![vec![0.1, -2.0], vec![1e-17, 3.0]];
        write_points(&p, &pts, Some(&[true, false])).unwrap();
        let s = read_points(&p).unwrap();
        assert_eq!(s.points, pts);
        assert_eq!(s.labels, Some(vec![true, false]));
    }
}
