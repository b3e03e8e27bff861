//! Linear models used by the detection proxy and the machine-learning
//! efficiency check.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dcr::Standardizer;
use super::{Column, MixedTable};
use crate::error::{Error, Result};
use crate::math::{cholesky, cholesky_solve, sigmoid};

/// Penalty grid searched by the detection proxy.
pub const DETECTION_PENALTIES: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];
const ML_LOGISTIC_PENALTY: f64 = 1e-3;
const RIDGE_PENALTY: f64 = 1e-2;

/// `P(y = 1 | x) = sigmoid(w·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub b: f64,
}

impl LogisticModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b
    }

    pub fn prob(&self, x: &[f64]) -> f64 {
        sigmoid(self.score(x))
    }
}

fn logistic_objective(x: &[f64], y: &[f64], p: usize, w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = y.len() as f64;
    let mut s = 0.0;
    for (row, &t) in x.chunks_exact(p.max(1)).zip(y) {
        let z: f64 = row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>() + b;
        // log(1 + e^z) − t·z, stable for both signs
        s += if z > 0.0 { z + libm::log1p(libm::exp(-z)) } else { libm::log1p(libm::exp(z)) } - t * z;
    }
    s / n + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// L2-penalized logistic regression, `(1/n) Σ logloss + (λ/2)‖w‖²`, fitted
/// by damped Newton iterations. The intercept is not penalized.
pub fn fit_logistic(x: &[f64], y: &[f64], p: usize, lambda: f64) -> Result<LogisticModel> {
    let n = y.len();
    if n == 0 || x.len() != n * p {
        return Err(Error::Metric("logistic regression needs a non-empty design matrix".into()));
    }
    let pos = y.iter().filter(|&&v| v > 0.5).count();
    if pos == 0 || pos == n {
        return Ok(LogisticModel { w: vec![0.0; p], b: if pos == 0 { -20.0 } else { 20.0 } });
    }
    let q = p + 1;
    let mut beta = vec![0.0; q];
    let rate = pos as f64 / n as f64;
    beta[p] = libm::log(rate / (1.0 - rate));
    let nf = n as f64;
    let mut obj = logistic_objective(x, y, p, &beta[..p], beta[p], lambda);
    for _ in 0..100 {
        let mut g = vec![0.0; q];
        let mut h = vec![0.0; q * q];
        let mut xa = vec![1.0; q];
        for (row, &t) in x.chunks_exact(p.max(1)).zip(y) {
            xa[..p].copy_from_slice(&row[..p]);
            let z: f64 = xa.iter().zip(&beta).map(|(a, c)| a * c).sum();
            let pr = sigmoid(z);
            let r = pr - t;
            let s = pr * (1.0 - pr);
            for i in 0..q {
                g[i] += r * xa[i];
                let si = s * xa[i];
                for j in 0..=i {
                    h[i * q + j] += si * xa[j];
                }
            }
        }
        for i in 0..q {
            g[i] /= nf;
            for j in 0..=i {
                h[i * q + j] /= nf;
                h[j * q + i] = h[i * q + j];
            }
            if i < p {
                g[i] += lambda * beta[i];
                h[i * q + i] += lambda;
            }
            h[i * q + i] += 1e-10;
        }
        let l = cholesky(&h, q).ok_or_else(|| Error::Metric("singular Hessian in logistic fit".into()))?;
        let mut step = g.clone();
        cholesky_solve(&l, q, &mut step);
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b - scale * s).collect();
            let o = logistic_objective(x, y, p, &cand[..p], cand[p], lambda);
            if o <= obj {
                beta = cand;
                let done = obj - o < 1e-12 * (1.0 + obj.abs());
                obj = o;
                improved = !done;
                break;
            }
            scale *= 0.5;
        }
        let max_step = step.iter().fold(0.0f64, |m, s| m.max(s.abs())) * scale;
        if !improved || max_step < 1e-9 {
            break;
        }
    }
    Ok(LogisticModel { w: beta[..p].to_vec(), b: beta[p] })
}

/// Ridge regression with an unpenalized intercept. Returns `(w, b)`.
pub fn fit_ridge(x: &[f64], y: &[f64], p: usize, lambda: f64) -> Result<(Vec<f64>, f64)> {
    let n = y.len();
    if n == 0 || x.len() != n * p {
        return Err(Error::Metric("ridge regression needs a non-empty design matrix".into()));
    }
    let q = p + 1;
    let mut a = vec![0.0; q * q];
    let mut rhs = vec![0.0; q];
    let mut xa = vec![1.0; q];
    for (row, &t) in x.chunks_exact(p.max(1)).zip(y) {
        xa[..p].copy_from_slice(&row[..p]);
        for i in 0..q {
            rhs[i] += xa[i] * t;
            for j in 0..=i {
                a[i * q + j] += xa[i] * xa[j];
            }
        }
    }
    let nf = n as f64;
    for i in 0..q {
        rhs[i] /= nf;
        for j in 0..=i {
            a[i * q + j] /= nf;
            a[j * q + i] = a[i * q + j];
        }
        if i < p {
            a[i * q + i] += lambda;
        }
        a[i * q + i] += 1e-12;
    }
    let l = cholesky(&a, q).ok_or_else(|| Error::Metric("singular ridge system".into()))?;
    cholesky_solve(&l, q, &mut rhs);
    let b = rhs[p];
    rhs.truncate(p);
    Ok((rhs, b))
}

fn accuracy(model: &LogisticModel, x: &[f64], y: &[f64], p: usize) -> f64 {
    let correct = x
        .chunks_exact(p.max(1))
        .zip(y)
        .filter(|(row, &t)| (model.score(row) >= 0.0) == (t > 0.5))
        .count();
    correct as f64 / y.len() as f64
}

/// Labeled design matrices for train / validation / test.
#[derive(Debug, Clone)]
pub struct DetectionSplits {
    pub dim: usize,
    pub x: [Vec<f64>; 3],
    pub y: [Vec<f64>; 3],
}

impl DetectionSplits {
    /// Balanced real (label 1) versus fake (label 0) splits, 60/20/20,
    /// standardized with the statistics of the mixed training split.
    pub fn build(real: &MixedTable, fake: &MixedTable, seed: u64) -> Result<Self> {
        let n = real.n_rows.min(fake.n_rows);
        if n < 10 {
            return Err(Error::Metric("detection needs at least 10 rows of each kind".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ri: Vec<usize> = (0..real.n_rows).collect();
        let mut fi: Vec<usize> = (0..fake.n_rows).collect();
        ri.shuffle(&mut rng);
        fi.shuffle(&mut rng);
        let n_train = libm::round(n as f64 * 0.6) as usize;
        let n_valid = libm::round(n as f64 * 0.2) as usize;
        let bounds = [0, n_train, n_train + n_valid, n];
        let mut tables = Vec::with_capacity(3);
        let mut labels = Vec::with_capacity(3);
        for s in 0..3 {
            let (lo, hi) = (bounds[s], bounds[s + 1]);
            if hi <= lo {
                return Err(Error::Metric("degenerate detection split".into()));
            }
            let t = real.select(&ri[lo..hi]).concat(&fake.select(&fi[lo..hi]))?;
            let mut y = vec![1.0; hi - lo];
            y.extend(core::iter::repeat(0.0).take(hi - lo));
            tables.push(t);
            labels.push(y);
        }
        let st = Standardizer::fit(&tables[0])?;
        let x = [st.transform(&tables[0])?, st.transform(&tables[1])?, st.transform(&tables[2])?];
        let [y0, y1, y2]: [Vec<f64>; 3] = labels.try_into().expect("three splits");
        Ok(Self { dim: st.dim(), x, y: [y0, y1, y2] })
    }

    /// Select the penalty on validation accuracy (ties keep the smaller
    /// penalty) and return `(test accuracy, chosen penalty)`.
    pub fn score(&self) -> Result<(f64, f64)> {
        for y in &self.y {
            let pos = y.iter().filter(|&&v| v > 0.5).count();
            if pos == 0 || pos == y.len() {
                return Err(Error::Metric("detection split contains a single class".into()));
            }
        }
        let mut best: Option<(f64, LogisticModel, f64)> = None;
        for &lambda in &DETECTION_PENALTIES {
            let m = fit_logistic(&self.x[0], &self.y[0], self.dim, lambda)?;
            let acc = accuracy(&m, &self.x[1], &self.y[1], self.dim);
            if best.as_ref().is_none_or(|(a, _, _)| acc > *a) {
                best = Some((acc, m, lambda));
            }
        }
        let (_, m, lambda) = best.expect("non-empty grid");
        Ok((accuracy(&m, &self.x[2], &self.y[2], self.dim), lambda))
    }
}

/// Held-out accuracy of a penalized logistic classifier separating real
/// from fake rows; 0.5 means indistinguishable.
pub fn detection_score(real: &MixedTable, fake: &MixedTable, seed: u64) -> Result<f64> {
    Ok(DetectionSplits::build(real, fake, seed)?.score()?.0)
}

/// One efficiency metric for models trained on real versus fake rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyMetric {
    pub name: String,
    pub real: f64,
    pub fake: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlEfficiency {
    pub target: String,
    pub task: String,
    pub metrics: Vec<EfficiencyMetric>,
}

/// Area under the ROC curve by the rank statistic (ties count half).
pub fn auc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            if positive[k] {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    Some((rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64)
}

/// Macro-averaged F1 over classes that occur in the truth or the predictions.
pub fn macro_f1(truth: &[u32], pred: &[u32], n_classes: usize) -> f64 {
    let mut tp = vec![0.0; n_classes];
    let mut fp = vec![0.0; n_classes];
    let mut fn_ = vec![0.0; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t as usize] += 1.0;
        } else {
            fp[p as usize] += 1.0;
            fn_[t as usize] += 1.0;
        }
    }
    let mut sum = 0.0;
    let mut count = 0;
    for c in 0..n_classes {
        let denom = 2.0 * tp[c] + fp[c] + fn_[c];
        if denom > 0.0 {
            sum += 2.0 * tp[c] / denom;
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

struct ClassifierEval {
    f1: f64,
    auc: f64,
}

fn classify(xtr: &[f64], ytr: &[u32], xte: &[f64], yte: &[u32], p: usize, k: usize) -> Result<ClassifierEval> {
    let n_te = yte.len();
    if k == 2 {
        let y: Vec<f64> = ytr.iter().map(|&c| f64::from(c)).collect();
        let m = fit_logistic(xtr, &y, p, ML_LOGISTIC_PENALTY)?;
        let s: Vec<f64> = xte.chunks_exact(p.max(1)).map(|r| m.score(r)).collect();
        let pred: Vec<u32> = s.iter().map(|&v| u32::from(v >= 0.0)).collect();
        let pos: Vec<bool> = yte.iter().map(|&c| c == 1).collect();
        return Ok(ClassifierEval { f1: macro_f1(yte, &pred, 2), auc: auc(&s, &pos).unwrap_or(0.5) });
    }
    let mut scores = vec![0.0; n_te * k];
    for c in 0..k {
        let y: Vec<f64> = ytr.iter().map(|&v| f64::from(u8::from(v as usize == c))).collect();
        let m = fit_logistic(xtr, &y, p, ML_LOGISTIC_PENALTY)?;
        for (i, r) in xte.chunks_exact(p.max(1)).enumerate() {
            scores[i * k + c] = m.score(r);
        }
    }
    let pred: Vec<u32> = scores.chunks_exact(k).map(|r| crate::math::argmax(r) as u32).collect();
    let mut auc_sum = 0.0;
    let mut auc_n = 0;
    for c in 0..k {
        let s: Vec<f64> = (0..n_te).map(|i| scores[i * k + c]).collect();
        let pos: Vec<bool> = yte.iter().map(|&v| v as usize == c).collect();
        if let Some(a) = auc(&s, &pos) {
            auc_sum += a;
            auc_n += 1;
        }
    }
    Ok(ClassifierEval { f1: macro_f1(yte, &pred, k), auc: if auc_n > 0 { auc_sum / auc_n as f64 } else { 0.5 } })
}

/// Train-synthetic-test-real comparison with linear models: ridge for a
/// continuous target (RMSE), logistic for a categorical one (macro-F1 and
/// AUC, one-vs-rest beyond two classes).
pub fn ml_efficiency_linear(
    train_real: &MixedTable,
    train_fake: &MixedTable,
    test_real: &MixedTable,
    target: usize,
) -> Result<MlEfficiency> {
    if target >= train_real.columns.len() {
        return Err(Error::Metric("target column missing".into()));
    }
    let feats: Vec<usize> = (0..train_real.columns.len()).filter(|&j| j != target).collect();
    let xr = train_real.project(&feats);
    let st = Standardizer::fit(&xr)?;
    let p = st.dim();
    let x_real = st.transform(&xr)?;
    let x_fake = st.transform(&train_fake.project(&feats))?;
    let x_test = st.transform(&test_real.project(&feats))?;
    let name = train_real.names[target].clone();
    let pair = |metric: &str, real: f64, fake: f64| EfficiencyMetric {
        name: metric.into(),
        real,
        fake,
        abs_diff: (fake - real).abs(),
    };
    match (&train_real.columns[target], &train_fake.columns[target], &test_real.columns[target]) {
        (Column::Continuous(yr), Column::Continuous(yf), Column::Continuous(yt)) => {
            let rmse = |x: &[f64], y: &[f64]| -> Result<f64> {
                let (w, b) = fit_ridge(x, y, p, RIDGE_PENALTY)?;
                let se: f64 = x_test
                    .chunks_exact(p.max(1))
                    .zip(yt)
                    .map(|(r, &t)| {
                        let pr = w.iter().zip(r).map(|(a, c)| a * c).sum::<f64>() + b;
                        (pr - t) * (pr - t)
                    })
                    .sum();
                Ok(libm::sqrt(se / yt.len() as f64))
            };
            let (r, f) = (rmse(&x_real, yr)?, rmse(&x_fake, yf)?);
            Ok(MlEfficiency { target: name, task: "regression".into(), metrics: vec![pair("rmse", r, f)] })
        }
        (
            Column::Categorical { codes: yr, n_classes: k },
            Column::Categorical { codes: yf, .. },
            Column::Categorical { codes: yt, .. },
        ) => {
            let r = classify(&x_real, yr, &x_test, yt, p, *k)?;
            let f = classify(&x_fake, yf, &x_test, yt, p, *k)?;
            Ok(MlEfficiency {
                target: name,
                task: "classification".into(),
                metrics: vec![pair("macro_f1", r.f1, f.f1), pair("auc", r.auc, f.auc)],
            })
        }
        _ => Err(Error::Metric("target column types disagree between tables".into())),
    }
}
