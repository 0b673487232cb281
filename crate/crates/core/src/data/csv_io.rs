use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

/// Which columns of a CSV file hold the label and the features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub label_column: String,
    /// `None` means every column except the label, in file order.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
}

/// Dense id <-> original label string.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    /// Ids follow numeric order when every label is an integer, otherwise
    /// lexicographic order.
    pub fn from_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        let unique: BTreeSet<&str> = names.into_iter().collect();
        let mut names: Vec<String> = unique.into_iter().map(str::to_string).collect();
        if names.iter().all(|n| n.parse::<i64>().is_ok()) {
            names.sort_by_key(|n| n.parse::<i64>().expect("checked"));
        }
        Self { names }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn name_of(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }
}

struct RawTable {
    feature_names: Vec<String>,
    rows: Vec<Vec<f64>>,
    labels: Vec<String>,
}

fn read_raw(path: &Path, schema: &CsvSchema) -> Result<RawTable> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(0, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let label_idx = col(&schema.label_column)?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != label_idx)
            .map(|(_, h)| h.trim().to_string())
            .collect(),
    };
    let feature_idx: Vec<usize> = feature_names
        .iter()
        .map(|n| col(n))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let row = feature_idx
            .iter()
            .map(|&i| {
                let cell = record.get(i).unwrap_or("").trim();
                cell.parse::<f64>()
                    .map_err(|_| parse_err(line, format!("cannot parse `{cell}` as a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        labels.push(record.get(label_idx).unwrap_or("").trim().to_string());
        rows.push(row);
    }
    Ok(RawTable {
        feature_names,
        rows,
        labels,
    })
}

fn to_dataset(raw: RawTable, map: &LabelMap) -> Result<Dataset> {
    let labels = raw
        .labels
        .iter()
        .map(|l| map.id_of(l))
        .collect::<Result<Vec<_>>>()?;
    let d = raw.feature_names.len();
    let n = raw.rows.len();
    let features = Tensor::matrix(n, d, raw.rows.concat())?;
    Dataset::new(features, labels, map.len())
}

/// Parses a headered CSV; label strings become dense ids.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<(Dataset, LabelMap)> {
    let raw = read_raw(path.as_ref(), schema)?;
    let map = LabelMap::from_names(raw.labels.iter().map(String::as_str));
    Ok((to_dataset(raw, &map)?, map))
}

/// Parses with an existing label mapping; unseen labels are an error.
pub fn load_csv_with_labels(
    path: impl AsRef<Path>,
    schema: &CsvSchema,
    map: &LabelMap,
) -> Result<Dataset> {
    let raw = read_raw(path.as_ref(), schema)?;
    to_dataset(raw, map)
}

/// Writes features then the label column.
pub fn write_csv(
    path: impl AsRef<Path>,
    data: &Dataset,
    map: &LabelMap,
    feature_names: &[String],
    label_column: &str,
) -> Result<()> {
    let path = path.as_ref();
    if feature_names.len() != data.dim() {
        return Err(Error::ShapeMismatch {
            op: "write_csv",
            lhs: vec![feature_names.len()],
            rhs: vec![data.dim()],
        });
    }
    let mut out = String::new();
    out.push_str(&feature_names.join(","));
    out.push(',');
    out.push_str(label_column);
    out.push('\n');
    for (i, &l) in data.labels.iter().enumerate() {
        for v in data.features.row(i) {
            out.push_str(&format!("{v},"));
        }
        let name = map.name_of(l).ok_or(Error::LabelOutOfRange {
            label: l,
            num_classes: map.len(),
        })?;
        out.push_str(name);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> CsvSchema {
        CsvSchema {
            label_column: "class".into(),
            feature_columns: None,
        }
    }

    #[test]
    fn header_only_is_empty() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("h.csv");
        std::fs::write(&p, "a,b,class\n").unwrap();
        let (d, map) = load_csv(&p, &schema()).unwrap();
        assert_eq!(d.len(), 0);
        assert_eq!(d.features.shape(), &[0, 2]);
        assert!(map.is_empty());
    }

    #[test]
    fn parse_error_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "a,class\n1.0,x\n2.0,y\nnope,x\n").unwrap();
        match load_csv(&p, &schema()).unwrap_err() {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("nope"));
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn unknown_label_with_fixed_map() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "a,class\n1.0,x\n2.0,z\n").unwrap();
        let map = LabelMap::from_names(["x", "y"]);
        assert!(matches!(
            load_csv_with_labels(&p, &schema(), &map),
            Err(Error::UnknownLabel(l)) if l == "z"
        ));
    }

    #[test]
    fn numeric_labels_sort_numerically() {
        let map = LabelMap::from_names(["10", "2", "1"]);
        assert_eq!(map.id_of("2").unwrap(), 1);
        assert_eq!(map.id_of("10").unwrap(), 2);
    }

    #[test]
    fn export_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.csv");
        let features =
            Tensor::matrix(3, 2, vec![0.1, -2.5e-7, 3.0, 1.0 / 3.0, -0.0, 1e300]).unwrap();
        let data = Dataset::new(features, vec![1, 0, 1], 2).unwrap();
        let map = LabelMap::from_names(["cat", "dog"]);
        write_csv(&p, &data, &map, &["f0".into(), "f1".into()], "class").unwrap();
        let (back, back_map) = load_csv(&p, &schema()).unwrap();
        assert_eq!(back, data);
        assert_eq!(back_map, map);
    }

    #[test]
    fn explicit_feature_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cols.csv");
        std::fs::write(&p, "a,b,class,c\n1,2,x,3\n").unwrap();
        let s = CsvSchema {
            label_column: "class".into(),
            feature_columns: Some(vec!["c".into(), "a".into()]),
        };
        let (d, _) = load_csv(&p, &s).unwrap();
        assert_eq!(d.features.data(), &[3.0, 1.0]);
    }
}
