//! Table schema and the raw (string) table representation.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Label used for missing categorical cells.
pub const MISSING_CATEGORY: &str = "(missing)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Continuous { is_integer: bool },
    Categorical,
}

impl FeatureKind {
    pub fn is_continuous(self) -> bool {
        matches!(self, FeatureKind::Continuous { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn continuous(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Continuous { is_integer: false } }
    }

    pub fn integer(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Continuous { is_integer: true } }
    }

    pub fn categorical(name: &str) -> Self {
        Self { name: name.to_string(), kind: FeatureKind::Categorical }
    }
}

/// Ordered feature list plus an optional target column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableSchema {
    pub name: String,
    pub features: Vec<FeatureSpec>,
    pub target: Option<usize>,
}

impl TableSchema {
    pub fn new(name: &str, features: Vec<FeatureSpec>, target: Option<usize>) -> Result<Self> {
        let schema = Self { name: name.to_string(), features, target };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() {
            return Err(Error::Schema("schema has no features".into()));
        }
        let mut seen = BTreeSet::new();
        for f in &self.features {
            if f.name.is_empty() {
                return Err(Error::Schema("empty feature name".into()));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {:?}", f.name)));
            }
        }
        if let Some(t) = self.target {
            if t >= self.features.len() {
                return Err(Error::Schema(format!("target index {t} out of range")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    /// Schema positions of the continuous features, in order.
    pub fn cont_indices(&self) -> Vec<usize> {
        (0..self.features.len()).filter(|&i| self.features[i].kind.is_continuous()).collect()
    }

    /// Schema positions of the categorical features, in order.
    pub fn cat_indices(&self) -> Vec<usize> {
        (0..self.features.len()).filter(|&i| !self.features[i].kind.is_continuous()).collect()
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Categorical target, if the schema has one.
    pub fn categorical_target(&self) -> Option<usize> {
        self.target.filter(|&t| !self.features[t].kind.is_continuous())
    }
}

/// Row-major table of string cells in schema column order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[j].as_str())
    }

    /// Check the header against the schema names (same order).
    pub fn check_header(&self, schema: &TableSchema) -> Result<()> {
        let names = schema.names();
        if self.header != names {
            return Err(Error::Schema(format!(
                "header {:?} does not match schema {:?}",
                self.header, names
            )));
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != names.len() {
                return Err(Error::Data(format!("row {i} has {} cells, expected {}", r.len(), names.len())));
            }
        }
        Ok(())
    }

    /// Parse column `j` as floats.
    pub fn parse_column(&self, j: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                    Error::Data(format!("row {i}: non-numeric value {:?} in column {:?}", r[j], self.header[j]))
                })
            })
            .collect()
    }

    pub fn select_rows(&self, idx: &[usize]) -> RawTable {
        RawTable { header: self.header.clone(), rows: idx.iter().map(|&i| self.rows[i].clone()).collect() }
    }
}
