//! CSV tables, schema files and JSON helpers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use cdtd_core::schema::MISSING_CATEGORY;
use cdtd_core::{FeatureKind, FeatureSpec, RawTable, TableSchema};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{open_error, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureEntry {
    pub name: String,
    pub kind: Kind,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub integer: bool,
}

/// On-disk schema: `{"features": [{"name", "kind", "integer"?}], "target"?: name}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub features: Vec<FeatureEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

impl SchemaFile {
    pub fn to_schema(&self) -> Result<TableSchema> {
        let mut features = Vec::with_capacity(self.features.len());
        for f in &self.features {
            features.push(match (f.kind, f.integer) {
                (Kind::Continuous, false) => FeatureSpec::continuous(&f.name),
                (Kind::Continuous, true) => FeatureSpec::integer(&f.name),
                (Kind::Categorical, false) => FeatureSpec::categorical(&f.name),
                (Kind::Categorical, true) => {
                    return Err(Error::Usage(format!("feature {:?}: `integer` only applies to continuous features", f.name)))
                }
            });
        }
        let target = match &self.target {
            None => None,
            Some(t) => Some(
                features
                    .iter()
                    .position(|f| &f.name == t)
                    .ok_or_else(|| Error::Usage(format!("target {t:?} is not a feature")))?,
            ),
        };
        Ok(TableSchema::new(self.name.as_deref().unwrap_or("table"), features, target)?)
    }

    pub fn from_schema(schema: &TableSchema) -> Self {
        Self {
            name: Some(schema.name.clone()),
            features: schema
                .features
                .iter()
                .map(|f| match f.kind {
                    FeatureKind::Continuous { is_integer } => {
                        FeatureEntry { name: f.name.clone(), kind: Kind::Continuous, integer: is_integer }
                    }
                    FeatureKind::Categorical => FeatureEntry { name: f.name.clone(), kind: Kind::Categorical, integer: false },
                })
                .collect(),
            target: schema.target.map(|t| schema.features[t].name.clone()),
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path, what: &'static str) -> Result<T> {
    let f = File::open(path).map_err(|e| open_error(what, path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|source| Error::Json { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let io = |source| Error::Io { path: path.to_path_buf(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    w.write_all(b"\n").map_err(io)?;
    w.flush().map_err(io)
}

pub fn load_schema(path: &Path) -> Result<TableSchema> {
    read_json::<SchemaFile>(path, "schema")?.to_schema()
}

/// A CSV file read against a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedTable {
    pub table: RawTable,
    /// Rows dropped for a missing continuous value or a missing target.
    pub dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.trim().is_empty()
}

/// Parse CSV text. Missing categorical cells become [`MISSING_CATEGORY`];
/// rows missing a continuous value or the target are dropped.
pub fn parse_csv<R: std::io::Read>(reader: R, schema: &TableSchema, path: &Path) -> Result<LoadedTable> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let mut table = RawTable::new(header);
    table.check_header(schema)?;
    let mut dropped = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut row = Vec::with_capacity(rec.len());
        let mut keep = true;
        for (j, (cell, f)) in rec.iter().zip(&schema.features).enumerate() {
            let missing = is_missing(cell);
            match f.kind {
                FeatureKind::Continuous { .. } => {
                    if missing {
                        keep = false;
                    } else if !cell.trim().parse::<f64>().is_ok_and(f64::is_finite) {
                        return Err(cdtd_core::Error::Data(format!(
                            "{}: line {}: non-numeric value {cell:?} in continuous column {:?}",
                            path.display(),
                            i + 2,
                            f.name
                        ))
                        .into());
                    }
                    row.push(cell.trim().to_string());
                }
                FeatureKind::Categorical => {
                    if missing && schema.target == Some(j) {
                        keep = false;
                    }
                    row.push(if missing { MISSING_CATEGORY.to_string() } else { cell.to_string() });
                }
            }
        }
        if keep {
            table.rows.push(row);
        } else {
            dropped += 1;
        }
    }
    Ok(LoadedTable { table, dropped })
}

pub fn load_csv(path: &Path, schema: &TableSchema, what: &'static str) -> Result<LoadedTable> {
    let f = File::open(path).map_err(|e| open_error(what, path, e))?;
    parse_csv(BufReader::new(f), schema, path)
}

pub fn write_csv_to<W: Write>(writer: W, table: &RawTable, path: &Path) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.to_path_buf(), source };
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&table.header).map_err(csv_err)?;
    for row in &table.rows {
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn write_csv(path: &Path, table: &RawTable) -> Result<()> {
    let f = File::create(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    write_csv_to(BufWriter::new(f), table, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> TableSchema {
        SchemaFile {
            name: None,
            features: vec![
                FeatureEntry { name: "age".into(), kind: Kind::Continuous, integer: true },
                FeatureEntry { name: "job".into(), kind: Kind::Categorical, integer: false },
                FeatureEntry { name: "y".into(), kind: Kind::Categorical, integer: false },
            ],
            target: Some("y".into()),
        }
        .to_schema()
        .unwrap()
    }

    fn parse(text: &str) -> Result<LoadedTable> {
        parse_csv(text.as_bytes(), &schema(), Path::new("mem.csv"))
    }

    #[test]
    fn clean_rows() {
        let t = parse("age,job,y\n30,a,1\n41,b,0\n22,a,1\n").unwrap();
        assert_eq!(t.table.n_rows(), 3);
        assert_eq!(t.dropped, 0);
    }

    #[test]
    fn missing_values() {
        let t = parse("age,job,y\n30,a,1\n,b,0\n22,a,1\n").unwrap();
        assert_eq!((t.table.n_rows(), t.dropped), (2, 1));
        let t = parse("age,job,y\n30,,1\n22,a,\n").unwrap();
        assert_eq!((t.table.n_rows(), t.dropped), (1, 1));
        assert_eq!(t.table.rows[0][1], MISSING_CATEGORY);
    }

    #[test]
    fn bad_input() {
        assert!(matches!(parse("age,work,y\n1,a,1\n"), Err(Error::Core(cdtd_core::Error::Schema(_)))));
        assert!(matches!(parse("age,job,y\nold,a,1\n"), Err(Error::Core(cdtd_core::Error::Data(_)))));
        assert!(matches!(parse("age,job,y\n1,a\n"), Err(Error::Csv { .. })));
    }

    #[test]
    fn schema_json() {
        let s: SchemaFile = serde_json::from_str(
            r#"{"features":[{"name":"x","kind":"continuous"},{"name":"c","kind":"categorical"}],"target":"c"}"#,
        )
        .unwrap();
        let ts = s.to_schema().unwrap();
        assert_eq!(ts.target, Some(1));
        assert_eq!(SchemaFile::from_schema(&ts).to_schema().unwrap(), ts);
        assert!(serde_json::from_str::<SchemaFile>(r#"{"features":[{"name":"x","kind":"ordinal"}]}"#).is_err());
        let bad = SchemaFile { target: Some("nope".into()), ..s };
        assert!(bad.to_schema().is_err());
    }

    #[test]
    fn csv_round_trip() {
        let t = parse("age,job,y\n30,\"a, b\",1\n41,b,0\n").unwrap();
        let mut buf = Vec::new();
        write_csv_to(&mut buf, &t.table, Path::new("mem.csv")).unwrap();
        assert_eq!(parse(std::str::from_utf8(&buf).unwrap()).unwrap(), t);
    }
}
