//! Distance to closest record.

use alloc::vec;
use alloc::vec::Vec;

use super::{Column, MixedTable};
use crate::error::{Error, Result};

/// One-hot encoding of categorical columns followed by standardization
/// with statistics from a reference table.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    /// Encoded width per source column.
    widths: Vec<usize>,
    mean: Vec<f64>,
    inv_std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(reference: &MixedTable) -> Result<Self> {
        if reference.n_rows == 0 {
            return Err(Error::Metric("cannot standardize against an empty table".into()));
        }
        let widths: Vec<usize> = reference
            .columns
            .iter()
            .map(|c| match c {
                Column::Continuous(_) => 1,
                Column::Categorical { n_classes, .. } => *n_classes,
            })
            .collect();
        let dim: usize = widths.iter().sum();
        let mut s = Self { widths, mean: vec![0.0; dim], inv_std: vec![1.0; dim] };
        let raw = s.encode_raw(reference)?;
        let n = reference.n_rows as f64;
        let mut mean = vec![0.0; dim];
        for row in raw.chunks_exact(dim) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in raw.chunks_exact(dim) {
            for ((s2, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s2 += (v - m) * (v - m);
            }
        }
        s.inv_std = var.iter().map(|&v| if v > 0.0 { 1.0 / libm::sqrt(v / n) } else { 1.0 }).collect();
        s.mean = mean;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn encode_raw(&self, t: &MixedTable) -> Result<Vec<f64>> {
        if t.columns.len() != self.widths.len() {
            return Err(Error::Metric("table does not match the standardizer".into()));
        }
        let dim = self.dim();
        let mut out = vec![0.0; t.n_rows * dim];
        let mut off = 0;
        for (c, &w) in t.columns.iter().zip(&self.widths) {
            match c {
                Column::Continuous(v) => {
                    if w != 1 {
                        return Err(Error::Metric("column type mismatch".into()));
                    }
                    for (i, &x) in v.iter().enumerate() {
                        out[i * dim + off] = x;
                    }
                }
                Column::Categorical { codes, n_classes } => {
                    if *n_classes != w {
                        return Err(Error::Metric("categorical vocabularies differ".into()));
                    }
                    for (i, &code) in codes.iter().enumerate() {
                        out[i * dim + off + code as usize] = 1.0;
                    }
                }
            }
            off += w;
        }
        Ok(out)
    }

    /// Row-major `n × dim` encoding of `t`.
    pub fn transform(&self, t: &MixedTable) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut out = self.encode_raw(t)?;
        for row in out.chunks_exact_mut(dim.max(1)) {
            for ((v, &m), &s) in row.iter_mut().zip(&self.mean).zip(&self.inv_std) {
                *v = (*v - m) * s;
            }
        }
        Ok(out)
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    s
}

/// Squared distance with early exit once the running sum exceeds `bound`.
/// Accumulates in the same order as [`sq_dist`], so whenever it returns a
/// value below `bound` that value equals `sq_dist` exactly.
#[inline]
fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
        if s > bound {
            return s;
        }
    }
    s
}

fn check(train: &[f64], query: &[f64], dim: usize) -> Result<()> {
    if train.is_empty() || query.is_empty() || dim == 0 {
        return Err(Error::Metric("DCR of an empty table".into()));
    }
    if train.len() % dim != 0 || query.len() % dim != 0 {
        return Err(Error::Metric("encoded tables have ragged rows".into()));
    }
    Ok(())
}

/// Minimum distance from each query row to the train rows, by exhaustive search.
pub fn min_distances_brute(train: &[f64], query: &[f64], dim: usize) -> Result<Vec<f64>> {
    check(train, query, dim)?;
    Ok(query
        .chunks_exact(dim)
        .map(|q| libm::sqrt(train.chunks_exact(dim).map(|t| sq_dist(q, t)).fold(f64::INFINITY, f64::min)))
        .collect())
}

/// Same result as [`min_distances_brute`], with partial distance
/// elimination and the previous query's nearest neighbour as a warm start.
pub fn min_distances(train: &[f64], query: &[f64], dim: usize) -> Result<Vec<f64>> {
    check(train, query, dim)?;
    let rows: Vec<&[f64]> = train.chunks_exact(dim).collect();
    let mut hint = 0usize;
    let mut out = Vec::with_capacity(query.len() / dim);
    for q in query.chunks_exact(dim) {
        let mut best = sq_dist(q, rows[hint]);
        let mut arg = hint;
        for (i, t) in rows.iter().enumerate() {
            if i == hint {
                continue;
            }
            let d = sq_dist_bounded(q, t, best);
            if d < best {
                best = d;
                arg = i;
            }
        }
        hint = arg;
        out.push(libm::sqrt(best));
    }
    Ok(out)
}

/// Mean distance to closest record of `query` rows among `train` rows, in
/// the one-hot, train-standardized space.
pub fn dcr(train: &MixedTable, query: &MixedTable) -> Result<f64> {
    let st = Standardizer::fit(train)?;
    let a = st.transform(train)?;
    let b = st.transform(query)?;
    let d = min_distances(&a, &b, st.dim())?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}
