//! Fitted, invertible preprocessing.
//!
//! Continuous columns go through a rank-based Gaussianization followed by
//! standardization; categorical columns are integer coded by first
//! appearance. Everything is fitted on the training split only.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{entropy, normal_ppf};
use crate::schema::{FeatureKind, RawTable, TableSchema, MISSING_CATEGORY};

/// Maximum number of quantile knots kept per continuous feature.
pub const MAX_KNOTS: usize = 1000;

/// Piecewise-linear map from raw values to normal scores, then standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTransform {
    /// Strictly increasing raw values.
    pub knots: Vec<f64>,
    /// Normal scores at the knots, strictly increasing.
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub is_integer: bool,
}

impl QuantileTransform {
    pub fn fit(values: &[f64], is_integer: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("cannot fit a quantile transform on an empty column".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value in continuous column".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        // unique values with their average (1-based) rank
        let mut uniq = Vec::new();
        let mut ranks = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            uniq.push(sorted[i]);
            ranks.push((i + j) as f64 / 2.0 + 1.0);
            i = j + 1;
        }
        if uniq.len() < 2 {
            return Err(Error::Data("constant continuous column".into()));
        }
        let keep: Vec<usize> = if uniq.len() > MAX_KNOTS {
            let last = (uniq.len() - 1) as f64;
            let mut idx: Vec<usize> = (0..MAX_KNOTS)
                .map(|k| libm::round(k as f64 * last / (MAX_KNOTS - 1) as f64) as usize)
                .collect();
            idx.dedup();
            idx
        } else {
            (0..uniq.len()).collect()
        };
        let knots: Vec<f64> = keep.iter().map(|&k| uniq[k]).collect();
        let scores: Vec<f64> = keep.iter().map(|&k| normal_ppf(ranks[k] / (n + 1.0))).collect();
        let mut qt = Self { knots, scores, mean: 0.0, std: 1.0, is_integer };
        let transformed: Vec<f64> = values.iter().map(|&v| qt.score(v)).collect();
        let mean = transformed.iter().sum::<f64>() / n;
        let var = transformed.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
        let std = libm::sqrt(var);
        if !(std > 0.0) {
            return Err(Error::Data("continuous column has zero spread after transform".into()));
        }
        qt.mean = mean;
        qt.std = std;
        Ok(qt)
    }

    /// Normal score before standardization; clamps outside the fitted range.
    fn score(&self, v: f64) -> f64 {
        interp_clamped(&self.knots, &self.scores, v)
    }

    pub fn apply(&self, v: f64) -> f64 {
        (self.score(v) - self.mean) / self.std
    }

    /// Map a standardized value back to raw units. Values beyond the
    /// outermost knots clamp to the training min/max.
    pub fn invert(&self, z: f64) -> f64 {
        let q = z * self.std + self.mean;
        let v = if q.is_nan() { self.knots[self.knots.len() / 2] } else { interp_clamped(&self.scores, &self.knots, q) };
        if self.is_integer {
            libm::round(v)
        } else {
            v
        }
    }

    /// Like [`invert`](Self::invert) but without integer rounding.
    pub fn invert_unrounded(&self, z: f64) -> f64 {
        interp_clamped(&self.scores, &self.knots, z * self.std + self.mean)
    }
}

fn interp_clamped(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let last = xs.len() - 1;
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[last] {
        return ys[last];
    }
    // first index with xs[i] > x
    let hi = xs.partition_point(|&k| k <= x);
    let lo = hi - 1;
    if xs[lo] == x {
        return ys[lo];
    }
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

/// Category vocabulary with training proportions and entropy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalEncoder {
    pub vocab: Vec<String>,
    pub proportions: Vec<f64>,
    /// Entropy of the training proportions in nats.
    pub entropy: f64,
}

impl CategoricalEncoder {
    pub fn fit<'a>(values: impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut vocab: Vec<String> = Vec::new();
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let mut counts: Vec<u64> = Vec::new();
        for v in values {
            match index.get(v) {
                Some(&c) => counts[c] += 1,
                None => {
                    index.insert(v.to_string(), vocab.len());
                    vocab.push(v.to_string());
                    counts.push(1);
                }
            }
        }
        if vocab.is_empty() {
            return Err(Error::Data("cannot fit a categorical encoder on an empty column".into()));
        }
        if let Some(pos) = vocab.iter().position(|v| v == MISSING_CATEGORY) {
            let v = vocab.remove(pos);
            let c = counts.remove(pos);
            vocab.push(v);
            counts.push(c);
        }
        if vocab.len() < 2 {
            return Err(Error::Data(format!("categorical column has a single class {:?}", vocab[0])));
        }
        let total = counts.iter().sum::<u64>() as f64;
        let proportions: Vec<f64> = counts.iter().map(|&c| c as f64 / total).collect();
        let entropy = entropy(&proportions);
        Ok(Self { vocab, proportions, entropy })
    }

    pub fn cardinality(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, v: &str) -> Result<u32> {
        self.vocab
            .iter()
            .position(|x| x == v)
            .map(|c| c as u32)
            .ok_or_else(|| Error::Data(format!("unknown category {v:?}")))
    }

    pub fn decode(&self, code: u32) -> Result<&str> {
        self.vocab
            .get(code as usize)
            .map(String::as_str)
            .ok_or_else(|| Error::Data(format!("unknown category code {code}")))
    }
}

/// All fitted preprocessing for one schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocState {
    pub schema: TableSchema,
    /// One per continuous feature, in schema order.
    pub cont: Vec<QuantileTransform>,
    /// One per categorical feature, in schema order.
    pub cat: Vec<CategoricalEncoder>,
}

/// Standardized continuous columns and integer-coded categorical columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: TableSchema,
    /// Column-major, one column per continuous feature.
    pub cont: Vec<Vec<f64>>,
    /// Column-major, one column per categorical feature.
    pub cat: Vec<Vec<u32>>,
    pub n_rows: usize,
}

impl Dataset {
    pub fn select_rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            cont: self.cont.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            cat: self.cat.iter().map(|c| idx.iter().map(|&i| c[i]).collect()).collect(),
            n_rows: idx.len(),
        }
    }
}

impl PreprocState {
    pub fn fit(schema: &TableSchema, train: &RawTable) -> Result<Self> {
        schema.validate()?;
        train.check_header(schema)?;
        if train.n_rows() == 0 {
            return Err(Error::Data("empty training table".into()));
        }
        let mut cont = Vec::new();
        let mut cat = Vec::new();
        for (j, f) in schema.features.iter().enumerate() {
            match f.kind {
                FeatureKind::Continuous { is_integer } => {
                    let col = train.parse_column(j)?;
                    cont.push(
                        QuantileTransform::fit(&col, is_integer)
                            .map_err(|e| Error::Data(format!("feature {:?}: {e}", f.name)))?,
                    );
                }
                FeatureKind::Categorical => {
                    cat.push(
                        CategoricalEncoder::fit(train.column(j))
                            .map_err(|e| Error::Data(format!("feature {:?}: {e}", f.name)))?,
                    );
                }
            }
        }
        Ok(Self { schema: schema.clone(), cont, cat })
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.cat.iter().map(CategoricalEncoder::cardinality).collect()
    }

    pub fn apply(&self, table: &RawTable) -> Result<Dataset> {
        table.check_header(&self.schema)?;
        let mut cont = Vec::with_capacity(self.cont.len());
        let mut cat = Vec::with_capacity(self.cat.len());
        let (mut ci, mut ki) = (0, 0);
        for (j, f) in self.schema.features.iter().enumerate() {
            if f.kind.is_continuous() {
                let qt = &self.cont[ci];
                cont.push(table.parse_column(j)?.into_iter().map(|v| qt.apply(v)).collect());
                ci += 1;
            } else {
                let enc = &self.cat[ki];
                cat.push(table.column(j).map(|v| enc.encode(v)).collect::<Result<Vec<_>>>()?);
                ki += 1;
            }
        }
        Ok(Dataset { schema: self.schema.clone(), cont, cat, n_rows: table.n_rows() })
    }

    /// Map standardized values and codes back to a string table.
    pub fn invert(&self, cont: &[Vec<f64>], cat: &[Vec<u32>]) -> Result<RawTable> {
        if cont.len() != self.cont.len() || cat.len() != self.cat.len() {
            return Err(Error::Shape("column counts do not match the preprocessing state".into()));
        }
        let n = cont.first().map(Vec::len).or_else(|| cat.first().map(Vec::len)).unwrap_or(0);
        let mut out = RawTable::new(self.schema.names());
        for r in 0..n {
            let mut row = Vec::with_capacity(self.schema.len());
            let (mut ci, mut ki) = (0, 0);
            for f in &self.schema.features {
                if f.kind.is_continuous() {
                    let qt = &self.cont[ci];
                    let v = qt.invert(cont[ci][r]);
                    row.push(format_value(v, qt.is_integer));
                    ci += 1;
                } else {
                    row.push(self.cat[ki].decode(cat[ki][r])?.to_string());
                    ki += 1;
                }
            }
            out.rows.push(row);
        }
        Ok(out)
    }
}

/// Text form of a continuous value; integers print without a fraction.
pub fn format_value(v: f64, is_integer: bool) -> String {
    if is_integer {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::FeatureSpec;
    use alloc::vec;

    fn col_stats(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = libm::sqrt(v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n);
        (m, s)
    }

    #[test]
    fn five_values_are_centered() {
        let qt = QuantileTransform::fit(&[1.0, 2.0, 3.0, 4.0, 5.0], false).unwrap();
        let t: Vec<f64> = [1.0, 2.0, 3.0, 4.0, 5.0].iter().map(|&v| qt.apply(v)).collect();
        let (m, s) = col_stats(&t);
        assert!(m.abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
        assert!(t[2].abs() < 1e-12);
    }

    #[test]
    fn ties_share_average_rank() {
        let qt = QuantileTransform::fit(&[1.0, 1.0, 2.0, 3.0], false).unwrap();
        // ranks 1.5, 3, 4 over n + 1 = 5
        assert_eq!(qt.knots, vec![1.0, 2.0, 3.0]);
        assert!((qt.scores[0] - normal_ppf(0.3)).abs() < 1e-15);
        assert!((qt.scores[2] - normal_ppf(0.8)).abs() < 1e-15);
    }

    #[test]
    fn constant_and_empty_columns_rejected() {
        assert!(QuantileTransform::fit(&[2.0, 2.0, 2.0], false).is_err());
        assert!(QuantileTransform::fit(&[], false).is_err());
    }

    #[test]
    fn round_trip_training_values() {
        let vals: Vec<f64> = (0..3000).map(|i| libm::sin(i as f64 * 0.37) * 100.0 + (i % 7) as f64).collect();
        let qt = QuantileTransform::fit(&vals, false).unwrap();
        assert!(qt.knots.len() <= MAX_KNOTS);
        let worst = vals.iter().map(|&v| (qt.invert_unrounded(qt.apply(v)) - v).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-9, "worst {worst}");
    }

    #[test]
    fn integer_rounding_and_clamping() {
        let qt = QuantileTransform::fit(&[1.0, 2.0, 3.0, 4.0, 5.0], true).unwrap();
        let z = qt.apply(3.0) + 0.49 * (qt.apply(4.0) - qt.apply(3.0));
        assert_eq!(qt.invert(z), 3.0);
        assert_eq!(qt.invert(50.0), 5.0);
        assert_eq!(qt.invert(-50.0), 1.0);
    }

    #[test]
    fn clamp_matches_brute_force_lookup() {
        let vals: Vec<f64> = (0..200).map(|i| (i * i) as f64 * 0.01).collect();
        let qt = QuantileTransform::fit(&vals, false).unwrap();
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        let min = vals.iter().copied().fold(f64::MAX, f64::min);
        for z in [3.5, 4.0, 10.0, 1e6] {
            assert_eq!(qt.invert(z), max);
            assert_eq!(qt.invert(-z), min);
        }
    }

    #[test]
    fn categorical_proportions_and_entropy() {
        let vals: Vec<&str> = core::iter::repeat("a").take(9).chain(core::iter::once("b")).collect();
        let enc = CategoricalEncoder::fit(vals.into_iter()).unwrap();
        assert_eq!(enc.proportions, vec![0.9, 0.1]);
        assert!((enc.entropy - 0.3251).abs() < 1e-4);
        let uni = CategoricalEncoder::fit(["x", "y", "x", "y"].into_iter()).unwrap();
        assert!((uni.entropy - 0.6931).abs() < 1e-4);
        assert!((enc.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_category_goes_last() {
        let enc = CategoricalEncoder::fit(["(missing)", "b", "a", "b"].into_iter()).unwrap();
        assert_eq!(enc.vocab, vec!["b", "a", "(missing)"]);
        assert!(enc.decode(7).is_err());
        assert!(CategoricalEncoder::fit(["a", "a"].into_iter()).is_err());
    }

    #[test]
    fn state_round_trip() {
        let schema = TableSchema::new(
            "t",
            vec![FeatureSpec::integer("n"), FeatureSpec::categorical("c"), FeatureSpec::continuous("x")],
            None,
        )
        .unwrap();
        let mut raw = RawTable::new(schema.names());
        for i in 0..50 {
            raw.rows.push(vec![
                format!("{}", i % 9),
                String::from(if i % 3 == 0 { "u" } else { "v" }),
                format!("{}", libm::cos(i as f64)),
            ]);
        }
        let st = PreprocState::fit(&schema, &raw).unwrap();
        let ds = st.apply(&raw).unwrap();
        for col in &ds.cont {
            let (m, s) = col_stats(col);
            assert!(m.abs() <= 0.05 && (s - 1.0).abs() <= 0.05);
        }
        let back = st.invert(&ds.cont, &ds.cat).unwrap();
        for (a, b) in back.rows.iter().zip(&raw.rows) {
            assert_eq!(a[0], b[0]);
            assert_eq!(a[1], b[1]);
            let (x, y): (f64, f64) = (a[2].parse().unwrap(), b[2].parse().unwrap());
            assert!((x - y).abs() < 1e-9);
        }
    }
}
