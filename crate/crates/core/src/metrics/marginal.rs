//! Per-feature marginal distances.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

fn pmf(codes: &[u32], n_classes: usize) -> Vec<f64> {
    let mut p = vec![0.0; n_classes];
    for &c in codes {
        p[c as usize] += 1.0;
    }
    let n = codes.len() as f64;
    p.iter_mut().for_each(|v| *v /= n);
    p
}

/// Jensen–Shannon divergence (base 2) between two probability vectors.
pub fn jsd_pmf(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            s += 0.5 * a * libm::log2(a / m);
        }
        if b > 0.0 {
            s += 0.5 * b * libm::log2(b / m);
        }
    }
    s.clamp(0.0, 1.0)
}

/// JSD between the empirical distributions of two code columns sharing a
/// vocabulary of `n_classes`.
pub fn jsd(real: &[u32], fake: &[u32], n_classes: usize) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Metric("JSD of an empty column".into()));
    }
    if real.iter().chain(fake).any(|&c| c as usize >= n_classes) {
        return Err(Error::Metric("category code outside the shared vocabulary".into()));
    }
    Ok(jsd_pmf(&pmf(real, n_classes), &pmf(fake, n_classes)))
}

/// Order-1 Wasserstein distance between two empirical distributions,
/// divided by the range of `real`. Integrates the absolute difference of
/// the two quantile functions over the merged grid of their breakpoints.
pub fn wasserstein_1d(real: &[f64], fake: &[f64]) -> Result<f64> {
    if real.is_empty() || fake.is_empty() {
        return Err(Error::Metric("Wasserstein distance of an empty column".into()));
    }
    let mut a = real.to_vec();
    let mut b = fake.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let range = a[a.len() - 1] - a[0];
    if !(range > 0.0) {
        return Err(Error::Metric("real column has zero range".into()));
    }
    let (n, m) = (a.len(), b.len());
    let mut total = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    let mut u = 0.0f64;
    // Walk the merged breakpoints i/n and j/m using integer cross-multiplication.
    while i < n && j < m {
        let next_a = (i + 1) * m;
        let next_b = (j + 1) * n;
        let next = next_a.min(next_b);
        let u_next = next as f64 / (n * m) as f64;
        total += (u_next - u) * (a[i] - b[j]).abs();
        u = u_next;
        if next_a == next {
            i += 1;
        }
        if next_b == next {
            j += 1;
        }
    }
    Ok(total / range)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsd_examples() {
        assert_eq!(jsd(&[0, 1, 1, 2], &[1, 0, 2, 1], 3).unwrap(), 0.0);
        assert!((jsd(&[0, 0], &[1, 1], 2).unwrap() - 1.0).abs() < 1e-15);
        // p = (1, 0), q = (1/2, 1/2), m = (3/4, 1/4)
        let oracle = 0.5 * libm::log2(1.0 / 0.75) + 0.25 * libm::log2(0.5 / 0.75) + 0.25 * libm::log2(0.5 / 0.25);
        let v = jsd(&[0, 0, 0, 0], &[0, 1, 0, 1], 2).unwrap();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.3113).abs() < 5e-5);
        assert!(jsd(&[], &[0], 2).is_err());
    }

    fn sorted_matching(a: &[f64], b: &[f64]) -> f64 {
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein_1d(&[0.0, 2.0], &[1.0, 3.0]).unwrap(), 0.5);
        assert_eq!(wasserstein_1d(&[1.0, 5.0, 3.0], &[3.0, 1.0, 5.0]).unwrap(), 0.0);
        let real = [0.0, 1.0, 4.0, 10.0];
        let shifted: Vec<f64> = real.iter().map(|v| v + 2.5).collect();
        assert!((wasserstein_1d(&real, &shifted).unwrap() - 0.25).abs() < 1e-15);
        assert!(wasserstein_1d(&[1.0, 1.0], &[0.0]).is_err());
    }

    #[test]
    fn unequal_sizes_match_replicated_sorted_matching() {
        // Repeating each sample of the smaller set makes sizes equal without
        // changing the empirical distribution.
        let real = [0.3, -1.2, 2.2, 0.9, 5.0, -0.4];
        let fake = [0.0, 1.5, 3.3];
        let fake_rep: Vec<f64> = fake.iter().flat_map(|&v| [v, v]).collect();
        let range = 5.0 - (-1.2);
        let oracle = sorted_matching(&real, &fake_rep) / range;
        assert!((wasserstein_1d(&real, &fake).unwrap() - oracle).abs() < 1e-14);
    }
}
