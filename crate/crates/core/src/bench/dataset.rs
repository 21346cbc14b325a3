//! CSV datasets for classification.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::LabeledSamples;

const HABERMAN_CSV: &[u8] = include_bytes!("../../data/haberman.csv");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed CSV: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: row {row}, column {column:?}: cannot parse {value:?} as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}, column {column:?}: non-finite value {value:?}")]
    NonFinite {
        path: PathBuf,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: label column {column} not found")]
    MissingLabelColumn { path: PathBuf, column: String },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRow {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("{path}: {reason}")]
    Invalid { path: PathBuf, reason: String },
}

/// Where the class label lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Name(String),
    /// Zero-based.
    Index(usize),
    Last,
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Name(n) => write!(f, "{n:?}"),
            LabelColumn::Index(i) => write!(f, "#{i}"),
            LabelColumn::Last => f.write_str("last"),
        }
    }
}

impl std::str::FromStr for LabelColumn {
    type Err = std::convert::Infallible;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "last" => LabelColumn::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => LabelColumn::Index(i),
                Err(_) => LabelColumn::Name(s.to_string()),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Provenance {
    pub path: String,
    /// Hex SHA-256 of the file contents.
    pub sha256: String,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    /// `N × n`, one row per sample.
    pub features: DMatrix<f64>,
    pub labels: Vec<String>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        let mut labels = self.labels.clone();
        labels.sort();
        labels.dedup();
        labels.len()
    }

    pub fn to_samples(&self) -> crate::Result<LabeledSamples> {
        LabeledSamples::from_matrix(&self.features, &self.labels)
    }
}

/// Reads a CSV file. Numeric columns become features; lines starting with `#` are skipped.
pub fn load_csv(path: &Path, label: &LabelColumn, header: bool) -> Result<Dataset, DataError> {
    let bytes = std::fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    parse_csv(&name, path, &bytes, label, header)
}

/// Haberman's survival data (306 patients, 3 features, survival label).
pub fn bundled_haberman() -> Dataset {
    parse_csv(
        "haberman",
        Path::new("bundled:haberman.csv"),
        HABERMAN_CSV,
        &LabelColumn::Name("survival".into()),
        true,
    )
    .expect("bundled data is valid")
}

fn parse_csv(
    name: &str,
    path: &Path,
    bytes: &[u8],
    label: &LabelColumn,
    header: bool,
) -> Result<Dataset, DataError> {
    let sha256 = hex::encode(Sha256::digest(bytes));
    let csv_err = |source| DataError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(header)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = Vec::new();
    for record in reader.records() {
        records.push(record.map_err(csv_err)?);
    }
    let width = match (header, records.first()) {
        (true, _) => reader.headers().map_err(csv_err)?.len(),
        (false, Some(r)) => r.len(),
        (false, None) => 0,
    };
    let names: Vec<String> = if header {
        reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect()
    } else {
        (0..width).map(|i| format!("#{i}")).collect()
    };
    let missing = || DataError::MissingLabelColumn {
        path: path.to_path_buf(),
        column: label.to_string(),
    };
    let label_idx = match label {
        LabelColumn::Name(n) => names.iter().position(|h| h == n).ok_or_else(missing)?,
        LabelColumn::Index(i) if *i < width => *i,
        LabelColumn::Index(_) => return Err(missing()),
        LabelColumn::Last if width > 0 => width - 1,
        LabelColumn::Last => return Err(missing()),
    };
    if records.len() < 2 {
        return Err(DataError::Invalid {
            path: path.to_path_buf(),
            reason: format!("need at least 2 rows, found {}", records.len()),
        });
    }
    let first_line = usize::from(header) + 1;
    let dim = width - 1;
    let mut values = Vec::with_capacity(records.len() * dim);
    let mut labels = Vec::with_capacity(records.len());
    for (r, record) in records.iter().enumerate() {
        let row = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(first_line + r);
        if record.len() != width {
            return Err(DataError::RaggedRow {
                path: path.to_path_buf(),
                row,
                found: record.len(),
                expected: width,
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if c == label_idx {
                labels.push(cell.to_string());
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| DataError::Parse {
                path: path.to_path_buf(),
                row,
                column: names[c].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DataError::NonFinite {
                    path: path.to_path_buf(),
                    row,
                    column: names[c].clone(),
                    value: cell.to_string(),
                });
            }
            values.push(value);
        }
    }
    Ok(Dataset {
        name: name.to_string(),
        features: DMatrix::from_row_slice(records.len(), dim, &values),
        labels,
        provenance: Provenance {
            path: path.display().to_string(),
            sha256,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn small_file_with_header() {
        let f = write("a,b,label\n1,2,x\n3,4,y\n5,6,x\n7,8.5,y\n");
        let d = load_csv(f.path(), &LabelColumn::Name("label".into()), true).unwrap();
        assert_eq!(d.len(), 4);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.features[(3, 1)], 8.5);
        assert_eq!(d.labels, vec!["x", "y", "x", "y"]);
        assert_eq!(d.class_count(), 2);
        assert_eq!(d.provenance.sha256.len(), 64);
    }

    #[test]
    fn label_by_index_without_header() {
        let f = write("x,1,2\ny,3,4\n");
        let d = load_csv(f.path(), &LabelColumn::Index(0), false).unwrap();
        assert_eq!(
            d.features,
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])
        );
        let d = load_csv(f.path(), &"0".parse().unwrap(), false).unwrap();
        assert_eq!(d.labels, vec!["x", "y"]);
    }

    #[test]
    fn nan_cell_is_reported() {
        let f = write("a,b,label\n1,2,x\n3,NaN,y\n");
        match load_csv(f.path(), &LabelColumn::Last, true) {
            Err(DataError::NonFinite { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_name_the_cell() {
        let f = write("a,b,label\n1,2,x\n3,oops,y\n");
        let err = load_csv(f.path(), &LabelColumn::Last, true).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("row 3") && msg.contains("\"b\"") && msg.contains("oops"),
            "{msg}"
        );
    }

    #[test]
    fn missing_label_and_file() {
        let f = write("a,b\n1,2\n3,4\n");
        assert!(matches!(
            load_csv(f.path(), &LabelColumn::Name("class".into()), true),
            Err(DataError::MissingLabelColumn { .. })
        ));
        let err = load_csv(Path::new("/no/such/file.csv"), &LabelColumn::Last, true).unwrap_err();
        assert!(err.to_string().contains("/no/such/file.csv"));
    }

    #[test]
    fn bundled_haberman_shape() {
        let d = bundled_haberman();
        assert_eq!(d.len(), 306);
        assert_eq!(d.dim(), 3);
        assert_eq!(d.class_count(), 2);
        assert_eq!(d.labels.iter().filter(|l| *l == "positive").count(), 81);
    }
}
