//! Mixed-type association matrix.

use alloc::vec;
use alloc::vec::Vec;

use super::{Column, MixedTable};
use crate::error::{Error, Result};

/// Pearson correlation; `None` if either column has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx > 0.0 && syy > 0.0 {
        Some((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
    } else {
        None
    }
}

fn entropy_of_counts(counts: &[f64], n: f64) -> f64 {
    counts.iter().filter(|&&c| c > 0.0).map(|&c| -(c / n) * libm::log(c / n)).sum()
}

/// Theil's uncertainty coefficient `U(x | y) = (H(x) − H(x | y)) / H(x)`:
/// the fraction of the entropy of `x` explained by `y`. `None` if `x` is
/// constant.
pub fn theils_u(x: &[u32], cx: usize, y: &[u32], cy: usize) -> Option<f64> {
    let n = x.len() as f64;
    let mut joint = vec![0.0; cx * cy];
    let mut px = vec![0.0; cx];
    let mut py = vec![0.0; cy];
    for (&a, &b) in x.iter().zip(y) {
        joint[b as usize * cx + a as usize] += 1.0;
        px[a as usize] += 1.0;
        py[b as usize] += 1.0;
    }
    let hx = entropy_of_counts(&px, n);
    if !(hx > 1e-12) {
        return None;
    }
    let mut h_cond = 0.0;
    for (b, &nb) in py.iter().enumerate() {
        if nb > 0.0 {
            h_cond += (nb / n) * entropy_of_counts(&joint[b * cx..(b + 1) * cx], nb);
        }
    }
    Some(((hx - h_cond) / hx).clamp(0.0, 1.0))
}

/// Correlation ratio η of continuous `y` given the categories `x`. `None`
/// if `y` is constant.
pub fn correlation_ratio(x: &[u32], cx: usize, y: &[f64]) -> Option<f64> {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let mut sums = vec![0.0; cx];
    let mut counts = vec![0.0; cx];
    for (&c, &v) in x.iter().zip(y) {
        sums[c as usize] += v;
        counts[c as usize] += 1.0;
    }
    let total: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    if !(total > 0.0) {
        return None;
    }
    let between: f64 = sums
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0.0)
        .map(|(&s, &c)| {
            let m = s / c;
            c * (m - mean) * (m - mean)
        })
        .sum();
    Some(libm::sqrt((between / total).clamp(0.0, 1.0)))
}

/// Association matrix with flags for entries that were undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub k: usize,
    /// Row-major `k × k`.
    pub values: Vec<f64>,
    /// Entries set to 0 because a column was constant.
    pub degenerate: Vec<(usize, usize)>,
}

/// Pearson for continuous pairs, Theil's U for categorical pairs (entry
/// `(j, k)` is `U(j | k)`), correlation ratio for mixed pairs, unit
/// diagonal.
pub fn correlation_matrix(table: &MixedTable) -> Result<CorrelationMatrix> {
    if table.n_rows < 2 {
        return Err(Error::Metric("correlation matrix needs at least two rows".into()));
    }
    let k = table.columns.len();
    let mut values = vec![0.0; k * k];
    let mut degenerate = Vec::new();
    for j in 0..k {
        values[j * k + j] = 1.0;
        for l in 0..k {
            if l == j {
                continue;
            }
            let v = match (&table.columns[j], &table.columns[l]) {
                (Column::Continuous(a), Column::Continuous(b)) => pearson(a, b),
                (Column::Categorical { codes: a, n_classes: ca }, Column::Categorical { codes: b, n_classes: cb }) => {
                    theils_u(a, *ca, b, *cb)
                }
                (Column::Categorical { codes, n_classes }, Column::Continuous(y))
                | (Column::Continuous(y), Column::Categorical { codes, n_classes }) => {
                    correlation_ratio(codes, *n_classes, y)
                }
            };
            match v {
                Some(v) => values[j * k + l] = v,
                None => degenerate.push((j, l)),
            }
        }
    }
    Ok(CorrelationMatrix { k, values, degenerate })
}

/// Frobenius norm of the difference of two association matrices.
pub fn corr_l2(real: &CorrelationMatrix, fake: &CorrelationMatrix) -> Result<f64> {
    if real.k != fake.k {
        return Err(Error::Metric("correlation matrices differ in size".into()));
    }
    Ok(libm::sqrt(real.values.iter().zip(&fake.values).map(|(a, b)| (a - b) * (a - b)).sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::String;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pearson_basics() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn theils_u_deterministic_and_independent() {
        let y: Vec<u32> = (0..600).map(|i| (i % 6) as u32).collect();
        let x: Vec<u32> = y.iter().map(|&v| v / 2).collect();
        // x is a function of y
        assert!((theils_u(&x, 3, &y, 6).unwrap() - 1.0).abs() < 1e-12);
        // y is not a function of x: U(y|x) = H(x)/H(y) = ln 3 / ln 6
        let expected = libm::log(3.0) / libm::log(6.0);
        assert!((theils_u(&y, 6, &x, 3).unwrap() - expected).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u32> = (0..100_000).map(|_| rng.random_range(0..4)).collect();
        assert!(theils_u(&a, 4, &b, 4).unwrap() <= 0.01);
    }

    #[test]
    fn correlation_ratio_examples() {
        let x = [0, 0, 1, 1];
        assert!((correlation_ratio(&x, 2, &[1.0, 1.0, 3.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(correlation_ratio(&x, 2, &[1.0, 3.0, 1.0, 3.0]).unwrap(), 0.0);
        assert!(correlation_ratio(&x, 2, &[2.0; 4]).is_none());
    }

    #[test]
    fn matrix_of_self_is_zero_distance() {
        let t = MixedTable {
            names: vec![String::from("a"), String::from("b"), String::from("c")],
            columns: vec![
                Column::Continuous(vec![0.1, 0.5, 0.2, 0.9]),
                Column::Categorical { codes: vec![0, 1, 1, 0], n_classes: 2 },
                Column::Continuous(vec![1.0, 1.0, 1.0, 1.0]),
            ],
            n_rows: 4,
        };
        let m = correlation_matrix(&t).unwrap();
        assert_eq!(corr_l2(&m, &m).unwrap(), 0.0);
        assert_eq!(m.values[0], 1.0);
        assert!(m.degenerate.contains(&(0, 2)) && m.degenerate.contains(&(2, 1)));
        assert!(m.values.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
