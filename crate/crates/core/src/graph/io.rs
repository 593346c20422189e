//! Plain-text graph inputs.
//!
//! - edge list: one `u v` pair of 0-based ids per line, `#` comments
//! - features: CSV, one row per node, no header
//! - labels: one `0` or `1` per line

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{JanusError, Result};
use crate::matrix::Matrix;

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| JanusError::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> JanusError {
    JanusError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, i + 1, "expected two node ids"));
        };
        let u = a
            .parse::<usize>()
            .map_err(|_| parse_err(path, i + 1, format!("bad node id `{a}`")))?;
        let v = b
            .parse::<usize>()
            .map_err(|_| parse_err(path, i + 1, format!("bad node id `{b}`")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_features_csv(path: &Path) -> Result<Matrix> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                let f = f.trim();
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(path, i + 1, format!("bad feature value `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    i + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        rows.push(row);
    }
    Matrix::from_rows(&rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = read(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "0" => labels.push(0),
            "1" => labels.push(1),
            other => return Err(parse_err(path, i + 1, format!("label must be 0 or 1, got `{other}`"))),
        }
    }
    Ok(labels)
}

pub fn write_edge_list(path: &Path, edges: &[(usize, usize)]) -> Result<()> {
    let mut s = String::with_capacity(edges.len() * 8);
    for (u, v) in edges {
        let _ = writeln!(s, "{u} {v}");
    }
    fs::write(path, s).map_err(|e| JanusError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let e = dir.path().join("g.edges");
        fs::write(&e, "# header\n0 1\n\n1 2\n").unwrap();
        assert_eq!(read_edge_list(&e).unwrap(), vec![(0, 1), (1, 2)]);

        fs::write(&e, "0 1\n1 x\n").unwrap();
        match read_edge_list(&e) {
            Err(JanusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&e, "0 1 2\n").unwrap();
        assert!(read_edge_list(&e).is_err());

        let f = dir.path().join("x.csv");
        fs::write(&f, "1,2\n3,4.5\n").unwrap();
        let m = read_features_csv(&f).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.get(1, 1), 4.5);
        fs::write(&f, "1,2\n3\n").unwrap();
        assert!(matches!(read_features_csv(&f), Err(JanusError::Parse { line: 2, .. })));

        let l = dir.path().join("y.txt");
        fs::write(&l, "0\n1\n0\n").unwrap();
        assert_eq!(read_labels(&l).unwrap(), vec![0, 1, 0]);
        fs::write(&l, "0\n2\n").unwrap();
        assert!(read_labels(&l).is_err());
    }
}
