//! CSV and JSON writers with a metadata header.

use std::io::{self, Write};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::VERSION;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Run identification written alongside every output table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Metadata {
    pub seed: u64,
    /// SHA-256 of the configuration serialized as JSON.
    pub config_sha256: String,
    pub version: &'static str,
}

impl Metadata {
    pub fn new<C: Serialize>(seed: u64, config: &C) -> Self {
        let json = serde_json::to_vec(config).expect("configurations serialize");
        Metadata {
            seed,
            config_sha256: hex::encode(Sha256::digest(&json)),
            version: VERSION,
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "# optilik {} seed={} config_sha256={}",
            self.version, self.seed, self.config_sha256
        )
    }
}

/// Writes the metadata comment, a header row and one record per row.
pub fn write_csv<T: Serialize>(mut out: impl Write, meta: &Metadata, rows: &[T]) -> io::Result<()> {
    writeln!(out, "{}", meta.comment_line())?;
    let mut writer = csv::Writer::from_writer(&mut out);
    for row in rows {
        writer.serialize(row).map_err(io::Error::other)?;
    }
    writer.flush()?;
    Ok(())
}

/// `{"meta": …, <key>: rows}` pretty-printed.
pub fn write_json<T: Serialize>(
    mut out: impl Write,
    meta: &Metadata,
    sections: &[(&str, &T)],
) -> io::Result<()> {
    let mut map = serde_json::Map::new();
    map.insert("meta".into(), serde_json::to_value(meta)?);
    for (key, value) in sections {
        map.insert((*key).into(), serde_json::to_value(value)?);
    }
    serde_json::to_writer_pretty(&mut out, &map)?;
    writeln!(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize)]
    struct Row {
        n: usize,
        value: Option<f64>,
    }

    #[test]
    fn csv_has_comment_and_header() {
        let meta = Metadata::new(7, &("cfg", 1));
        let mut buf = vec![];
        let rows = [
            Row {
                n: 1,
                value: Some(0.5),
            },
            Row { n: 2, value: None },
        ];
        write_csv(&mut buf, &meta, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert!(lines[0].starts_with("# optilik ") && lines[0].contains("seed=7"));
        assert_eq!(&lines[1..], ["n,value", "1,0.5", "2,"]);
    }

    #[test]
    fn config_hash_tracks_content() {
        assert_eq!(Metadata::new(1, &[1, 2]), Metadata::new(1, &[1, 2]));
        assert_ne!(
            Metadata::new(1, &[1, 2]).config_sha256,
            Metadata::new(1, &[1, 3]).config_sha256
        );
    }

    #[test]
    fn json_sections() {
        let mut buf = vec![];
        let rows = vec![Row { n: 3, value: None }];
        write_json(&mut buf, &Metadata::new(0, &()), &[("rows", &rows)]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["rows"][0]["n"], 3);
        assert_eq!(v["meta"]["seed"], 0);
    }
}
