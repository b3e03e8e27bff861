//! Sample-quality metrics comparing a real and a generated table.

pub mod assoc;
pub mod dcr;
pub mod linear;
pub mod marginal;

pub use assoc::{corr_l2, correlation_matrix, CorrelationMatrix};
pub use dcr::dcr;
pub use linear::{detection_score, ml_efficiency_linear, MlEfficiency};
pub use marginal::{jsd, wasserstein_1d};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{RawTable, TableSchema};

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Continuous(Vec<f64>),
    Categorical { codes: Vec<u32>, n_classes: usize },
}

impl Column {
    fn select(&self, idx: &[usize]) -> Column {
        match self {
            Column::Continuous(v) => Column::Continuous(idx.iter().map(|&i| v[i]).collect()),
            Column::Categorical { codes, n_classes } => {
                Column::Categorical { codes: idx.iter().map(|&i| codes[i]).collect(), n_classes: *n_classes }
            }
        }
    }
}

/// Columns in schema order; categorical codes index a vocabulary shared by
/// all tables being compared.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedTable {
    pub names: Vec<String>,
    pub columns: Vec<Column>,
    pub n_rows: usize,
}

impl MixedTable {
    pub fn select(&self, idx: &[usize]) -> MixedTable {
        MixedTable {
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| c.select(idx)).collect(),
            n_rows: idx.len(),
        }
    }

    /// Keep only the listed columns.
    pub fn project(&self, cols: &[usize]) -> MixedTable {
        MixedTable {
            names: cols.iter().map(|&j| self.names[j].clone()).collect(),
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &MixedTable) -> Result<MixedTable> {
        if self.names != other.names {
            return Err(Error::Metric("cannot concatenate tables with different columns".into()));
        }
        let mut columns = Vec::with_capacity(self.columns.len());
        for (a, b) in self.columns.iter().zip(&other.columns) {
            columns.push(match (a, b) {
                (Column::Continuous(x), Column::Continuous(y)) => {
                    Column::Continuous(x.iter().chain(y).copied().collect())
                }
                (Column::Categorical { codes: x, n_classes: cx }, Column::Categorical { codes: y, n_classes: cy })
                    if cx == cy =>
                {
                    Column::Categorical { codes: x.iter().chain(y).copied().collect(), n_classes: *cx }
                }
                _ => return Err(Error::Metric("column types differ".into())),
            });
        }
        Ok(MixedTable { names: self.names.clone(), columns, n_rows: self.n_rows + other.n_rows })
    }

    pub fn cont_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| matches!(self.columns[j], Column::Continuous(_))).collect()
    }

    pub fn cat_indices(&self) -> Vec<usize> {
        (0..self.columns.len()).filter(|&j| matches!(self.columns[j], Column::Categorical { .. })).collect()
    }
}

/// Parse several raw tables against `schema`, building one categorical
/// vocabulary per column over all of them (first-appearance order).
pub fn encode_tables(schema: &TableSchema, tables: &[&RawTable]) -> Result<Vec<MixedTable>> {
    for t in tables {
        t.check_header(schema)?;
    }
    let mut per_table: Vec<Vec<Column>> = (0..tables.len()).map(|_| Vec::new()).collect();
    for (j, f) in schema.features.iter().enumerate() {
        if f.kind.is_continuous() {
            for (cols, t) in per_table.iter_mut().zip(tables) {
                cols.push(Column::Continuous(t.parse_column(j)?));
            }
        } else {
            let mut vocab: BTreeMap<&str, u32> = BTreeMap::new();
            let mut coded: Vec<Vec<u32>> = Vec::with_capacity(tables.len());
            for t in tables {
                coded.push(
                    t.column(j)
                        .map(|v| {
                            let next = vocab.len() as u32;
                            *vocab.entry(v).or_insert(next)
                        })
                        .collect(),
                );
            }
            let n_classes = vocab.len();
            for (cols, codes) in per_table.iter_mut().zip(coded) {
                cols.push(Column::Categorical { codes, n_classes });
            }
        }
    }
    Ok(per_table
        .into_iter()
        .zip(tables)
        .map(|(columns, t)| MixedTable { names: schema.names(), columns, n_rows: t.n_rows() })
        .collect())
}

/// Conventions the numbers depend on, recorded alongside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub jsd_log_base: u32,
    pub wd_scaling: String,
    pub detection_model: String,
    pub detection_penalties: Vec<f64>,
    pub n_real: usize,
    pub n_fake: usize,
    pub n_train: Option<usize>,
    /// `[row feature, column feature]` pairs whose association was
    /// undefined (constant column) and set to 0.
    pub degenerate_correlations_real: Vec<[String; 2]>,
    pub degenerate_correlations_fake: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cat_features: Vec<String>,
    pub jsd_per_feature: Vec<f64>,
    pub jsd_mean: f64,
    pub cont_features: Vec<String>,
    pub wd_per_feature: Vec<f64>,
    pub wd_mean: f64,
    pub corr_l2: f64,
    pub dcr_gen: Option<f64>,
    pub dcr_test: Option<f64>,
    pub dcr_abs_diff: Option<f64>,
    pub detection_accuracy_proxy: f64,
    pub ml_efficiency: Option<MlEfficiency>,
    pub metadata: ReportMetadata,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Options for [`evaluate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub seed: u64,
    pub dcr: bool,
    pub detection: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { seed: 0, dcr: true, detection: true }
    }
}

/// Full metric suite. `real` is held-out real data; `train`, when given,
/// enables DCR and the efficiency check (if the schema has a target).
pub fn evaluate(
    schema: &TableSchema,
    real: &RawTable,
    fake: &RawTable,
    train: Option<&RawTable>,
    options: EvalOptions,
) -> Result<EvalReport> {
    let mut refs = alloc::vec![real, fake];
    if let Some(t) = train {
        refs.push(t);
    }
    let mut enc = encode_tables(schema, &refs)?;
    let train_t = if train.is_some() { enc.pop() } else { None };
    let fake_t = enc.pop().expect("fake table");
    let real_t = enc.pop().expect("real table");
    evaluate_encoded(&real_t, &fake_t, train_t.as_ref(), schema.target, options)
}

/// [`evaluate`] on tables that already share vocabularies.
pub fn evaluate_encoded(
    real: &MixedTable,
    fake: &MixedTable,
    train: Option<&MixedTable>,
    target: Option<usize>,
    options: EvalOptions,
) -> Result<EvalReport> {
    if real.n_rows == 0 || fake.n_rows == 0 {
        return Err(Error::Metric("empty table".into()));
    }
    if real.names != fake.names {
        return Err(Error::Metric("real and fake tables have different columns".into()));
    }
    let mut cat_features = Vec::new();
    let mut jsd_per_feature = Vec::new();
    let mut cont_features = Vec::new();
    let mut wd_per_feature = Vec::new();
    for (j, (a, b)) in real.columns.iter().zip(&fake.columns).enumerate() {
        let name = &real.names[j];
        match (a, b) {
            (Column::Categorical { codes: x, n_classes }, Column::Categorical { codes: y, .. }) => {
                cat_features.push(name.clone());
                jsd_per_feature.push(jsd(x, y, *n_classes)?);
            }
            (Column::Continuous(x), Column::Continuous(y)) => {
                cont_features.push(name.clone());
                wd_per_feature
                    .push(wasserstein_1d(x, y).map_err(|e| Error::Metric(format!("feature {name:?}: {e}")))?);
            }
            _ => return Err(Error::Metric(format!("feature {name:?} has different types"))),
        }
    }
    let cr = correlation_matrix(real)?;
    let cf = correlation_matrix(fake)?;
    let corr = corr_l2(&cr, &cf)?;
    let pairs = |m: &CorrelationMatrix| -> Vec<[String; 2]> {
        m.degenerate.iter().map(|&(a, b)| [real.names[a].clone(), real.names[b].clone()]).collect()
    };

    let (dcr_gen, dcr_test) = match (train, options.dcr) {
        (Some(t), true) => (Some(dcr(t, fake)?), Some(dcr(t, real)?)),
        _ => (None, None),
    };
    let detection = if options.detection { detection_score(real, fake, options.seed)? } else { 0.5 };
    let ml_efficiency = match (train, target) {
        (Some(t), Some(target)) => Some(ml_efficiency_linear(t, fake, real, target)?),
        _ => None,
    };
    Ok(EvalReport {
        jsd_mean: mean(&jsd_per_feature),
        wd_mean: mean(&wd_per_feature),
        cat_features,
        jsd_per_feature,
        cont_features,
        wd_per_feature,
        corr_l2: corr,
        dcr_abs_diff: dcr_gen.zip(dcr_test).map(|(g, t)| (g - t).abs()),
        dcr_gen,
        dcr_test,
        detection_accuracy_proxy: detection,
        ml_efficiency,
        metadata: ReportMetadata {
            jsd_log_base: 2,
            wd_scaling: "real_min_max_range".to_string(),
            detection_model: "l2_logistic_regression_onehot_standardized".to_string(),
            detection_penalties: linear::DETECTION_PENALTIES.to_vec(),
            n_real: real.n_rows,
            n_fake: fake.n_rows,
            n_train: train.map(|t| t.n_rows),
            degenerate_correlations_real: pairs(&cr),
            degenerate_correlations_fake: pairs(&cf),
        },
    })
}
