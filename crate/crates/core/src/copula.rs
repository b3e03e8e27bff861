//! Gaussian-copula generator for mixed-type tables with a known
//! dependence structure.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cholesky, normal_cdf, normal_ppf};
use crate::preprocess::format_value;
use crate::schema::{FeatureSpec, RawTable, TableSchema};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub std: f64,
}

/// Continuous marginal: a mixture of Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousMarginal {
    pub name: String,
    pub components: Vec<Component>,
    /// Round generated values to integers.
    #[serde(default)]
    pub integer: bool,
}

/// Categorical marginal: the latent is cut at normal quantiles of the
/// cumulative class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalMarginal {
    pub name: String,
    pub probabilities: Vec<f64>,
    /// Class labels; defaults to `c0, c1, …`.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaSpec {
    #[serde(default)]
    pub continuous: Vec<ContinuousMarginal>,
    #[serde(default)]
    pub categorical: Vec<CategoricalMarginal>,
    /// Common latent correlation between every pair of features, used when
    /// `correlation` is absent.
    #[serde(default)]
    pub rho: f64,
    /// Full latent correlation matrix, continuous features first.
    #[serde(default)]
    pub correlation: Option<Vec<Vec<f64>>>,
}

impl CopulaSpec {
    /// Two Gaussian continuous features and two categorical features with
    /// latent equicorrelation `rho`.
    pub fn desk(rho: f64) -> Self {
        Self {
            continuous: vec![
                ContinuousMarginal {
                    name: "x1".into(),
                    components: vec![Component { weight: 1.0, mean: 0.0, std: 1.0 }],
                    integer: false,
                },
                ContinuousMarginal {
                    name: "x2".into(),
                    components: vec![Component { weight: 1.0, mean: 10.0, std: 3.0 }],
                    integer: false,
                },
            ],
            categorical: vec![
                CategoricalMarginal { name: "c1".into(), probabilities: vec![0.5, 0.3, 0.2], labels: None },
                CategoricalMarginal {
                    name: "c2".into(),
                    probabilities: vec![0.4, 0.3, 0.2, 0.1],
                    labels: Some(vec!["a".into(), "b".into(), "c".into(), "d".into()]),
                },
            ],
            rho,
            correlation: None,
        }
    }

    pub fn n_features(&self) -> usize {
        self.continuous.len() + self.categorical.len()
    }

    pub fn labels(&self, j: usize) -> Vec<String> {
        let m = &self.categorical[j];
        m.labels.clone().unwrap_or_else(|| (0..m.probabilities.len()).map(|c| format!("c{c}")).collect())
    }

    pub fn correlation_matrix(&self) -> Vec<f64> {
        let k = self.n_features();
        match &self.correlation {
            Some(m) => m.iter().flatten().copied().collect(),
            None => {
                let mut r = vec![self.rho; k * k];
                for i in 0..k {
                    r[i * k + i] = 1.0;
                }
                r
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.n_features();
        if k == 0 {
            return Err(Error::Config("copula spec has no features".into()));
        }
        for m in &self.continuous {
            if m.components.is_empty() {
                return Err(Error::Config(format!("feature {:?} has no mixture components", m.name)));
            }
            let w: f64 = m.components.iter().map(|c| c.weight).sum();
            if m.components.iter().any(|c| !(c.weight > 0.0 && c.std > 0.0 && c.mean.is_finite())) || (w - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "feature {:?}: mixture weights must be positive and sum to 1, stds positive",
                    m.name
                )));
            }
        }
        for (j, m) in self.categorical.iter().enumerate() {
            let s: f64 = m.probabilities.iter().sum();
            if m.probabilities.len() < 2 || m.probabilities.iter().any(|&p| !(p > 0.0)) || (s - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "feature {:?}: needs at least two positive probabilities summing to 1",
                    m.name
                )));
            }
            if let Some(l) = &m.labels {
                if l.len() != m.probabilities.len() {
                    return Err(Error::Config(format!("feature {:?}: label count mismatch", m.name)));
                }
            }
            let labels = self.labels(j);
            for (a, la) in labels.iter().enumerate() {
                if labels[..a].contains(la) {
                    return Err(Error::Config(format!("feature {:?}: duplicate label {la:?}", m.name)));
                }
            }
        }
        if let Some(m) = &self.correlation {
            if m.len() != k || m.iter().any(|r| r.len() != k) {
                return Err(Error::Config(format!("correlation matrix must be {k}×{k}")));
            }
            for i in 0..k {
                if (m[i][i] - 1.0).abs() > 1e-12 {
                    return Err(Error::Config("correlation matrix needs a unit diagonal".into()));
                }
                for j in 0..k {
                    if (m[i][j] - m[j][i]).abs() > 1e-12 {
                        return Err(Error::Config("correlation matrix must be symmetric".into()));
                    }
                }
            }
        }
        if cholesky(&self.correlation_matrix(), k).is_none() {
            return Err(Error::Config("latent correlation is not positive definite".into()));
        }
        Ok(())
    }

    /// Schema matching the generated table.
    pub fn schema(&self) -> Result<TableSchema> {
        let mut f: Vec<FeatureSpec> = self
            .continuous
            .iter()
            .map(|m| if m.integer { FeatureSpec::integer(&m.name) } else { FeatureSpec::continuous(&m.name) })
            .collect();
        f.extend(self.categorical.iter().map(|m| FeatureSpec::categorical(&m.name)));
        TableSchema::new("copula", f, None)
    }

    /// Draw `n` rows.
    pub fn generate(&self, n: usize, seed: u64) -> Result<RawTable> {
        self.validate()?;
        let k = self.n_features();
        let l = cholesky(&self.correlation_matrix(), k).expect("validated");
        let kc = self.continuous.len();
        let thresholds: Vec<Vec<f64>> = self
            .categorical
            .iter()
            .map(|m| {
                let mut acc = 0.0;
                m.probabilities[..m.probabilities.len() - 1]
                    .iter()
                    .map(|&p| {
                        acc += p;
                        normal_ppf(acc.min(1.0))
                    })
                    .collect()
            })
            .collect();
        let labels: Vec<Vec<String>> = (0..self.categorical.len()).map(|j| self.labels(j)).collect();
        let header: Vec<String> =
            self.continuous.iter().map(|m| m.name.clone()).chain(self.categorical.iter().map(|m| m.name.clone())).collect();
        let mut table = RawTable::new(header);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = vec![0.0; k];
        let mut z = vec![0.0; k];
        for _ in 0..n {
            for v in e.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            for i in 0..k {
                z[i] = (0..=i).map(|j| l[i * k + j] * e[j]).sum();
            }
            let mut row = Vec::with_capacity(k);
            for (m, &zi) in self.continuous.iter().zip(&z) {
                let v = mixture_quantile(&m.components, zi);
                let v = if m.integer { libm::round(v) } else { v };
                row.push(format_value(v, m.integer));
            }
            for (j, th) in thresholds.iter().enumerate() {
                let zi = z[kc + j];
                let code = th.iter().filter(|&&t| zi > t).count();
                row.push(labels[j][code].to_string());
            }
            table.rows.push(row);
        }
        Ok(table)
    }
}

/// Value of a Gaussian mixture at the same quantile as the standard normal
/// latent `z`.
fn mixture_quantile(components: &[Component], z: f64) -> f64 {
    if let [c] = components {
        return c.mean + c.std * z;
    }
    let u = normal_cdf(z);
    let cdf = |x: f64| components.iter().map(|c| c.weight * normal_cdf((x - c.mean) / c.std)).sum::<f64>();
    let mut lo = components.iter().map(|c| c.mean - 40.0 * c.std).fold(f64::INFINITY, f64::min);
    let mut hi = components.iter().map(|c| c.mean + 40.0 * c.std).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < u {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}
