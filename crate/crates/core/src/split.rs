//! Seeded train/validation/test partitioning.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Default partition fractions (train, valid, test).
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

fn sizes(n: usize, fractions: (f64, f64, f64)) -> (usize, usize) {
    let total = fractions.0 + fractions.1 + fractions.2;
    let n_train = libm::round(n as f64 * fractions.0 / total) as usize;
    let n_valid = (libm::round(n as f64 * fractions.1 / total) as usize).min(n - n_train);
    (n_train, n_valid)
}

/// Partition `0..n_rows`. With `strata`, every class is split separately so
/// per-class proportions match the overall ones up to rounding.
pub fn split_indices(
    n_rows: usize,
    fractions: (f64, f64, f64),
    strata: Option<&[u32]>,
    seed: u64,
) -> Result<Split> {
    if n_rows < 10 {
        return Err(Error::Data(format!("need at least 10 rows to split, got {n_rows}")));
    }
    if fractions.0 <= 0.0 || fractions.1 < 0.0 || fractions.2 < 0.0 {
        return Err(Error::Config("split fractions must be non-negative with a positive train share".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Split { train: Vec::new(), valid: Vec::new(), test: Vec::new() };
    let groups: Vec<Vec<usize>> = match strata {
        None => alloc::vec![(0..n_rows).collect()],
        Some(labels) => {
            if labels.len() != n_rows {
                return Err(Error::Shape("strata length differs from row count".into()));
            }
            let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, &c) in labels.iter().enumerate() {
                by_class.entry(c).or_default().push(i);
            }
            for (c, rows) in &by_class {
                if rows.len() < 3 {
                    return Err(Error::Data(format!(
                        "class {c} has {} rows, fewer than the 3 partitions",
                        rows.len()
                    )));
                }
            }
            by_class.into_values().collect()
        }
    };
    for mut g in groups {
        g.shuffle(&mut rng);
        let (a, b) = sizes(g.len(), fractions);
        out.train.extend_from_slice(&g[..a]);
        out.valid.extend_from_slice(&g[a..a + b]);
        out.test.extend_from_slice(&g[a + b..]);
    }
    out.train.sort_unstable();
    out.valid.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
