//! Soft-margin linear SVM trained by dual coordinate descent, plus the
//! feature standardizer fitted on each training subset.
//!
//! The bias is folded into the weights through a constant feature of 1, so the
//! problem solved is
//!
//! ```text
//! min_{w, b}  ½ (‖w‖² + b²) + C Σ max(0, 1 − yᵢ (w·xᵢ + b))
//! ```
//!
//! whose dual `max_α Σαᵢ − ½‖Σ αᵢ yᵢ x̃ᵢ‖², 0 ≤ αᵢ ≤ C` is solved one
//! coordinate at a time in a seeded order that is reshuffled every epoch.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crowd::Class;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn check_rows(x: &[Vec<f64>]) -> Result<usize> {
    let first = x.first().ok_or(Error::EmptyMatrix)?;
    let d = first.len();
    if d == 0 {
        return Err(Error::EmptyMatrix);
    }
    if let Some(row) = x.iter().find(|r| r.len() != d) {
        return Err(Error::FeatureDimension {
            expected: d,
            found: row.len(),
        });
    }
    Ok(d)
}

/// Column means and population deviations. Columns without spread pass through
/// untouched (mean 0, deviation 1).
pub fn fit_standardizer(x: &[Vec<f64>]) -> Result<Standardizer> {
    let d = check_rows(x)?;
    let n = x.len() as f64;
    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for row in x {
        for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let mut std = Vec::with_capacity(d);
    for (m, s) in mean.iter_mut().zip(var) {
        let sd = (s / n).sqrt();
        if sd <= 1e-12 * m.abs().max(1.0) || !sd.is_finite() {
            *m = 0.0;
            std.push(1.0);
        } else {
            std.push(sd);
        }
    }
    Ok(Standardizer { mean, std })
}

impl Standardizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::FeatureDimension {
                expected: self.dim(),
                found: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn apply(&self, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        x.iter().map(|r| self.transform(r)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hinge-loss weight.
    pub c: f64,
    /// Stop once the largest projected-gradient magnitude of an epoch is below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Seeds the coordinate order.
    pub seed: u64,
    /// Value of the constant feature that carries the bias.
    pub bias_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tolerance: 1e-4,
            max_epochs: 1000,
            seed: 0,
            bias_scale: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param("c", "must be positive"));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if !(self.bias_scale > 0.0 && self.bias_scale.is_finite()) {
            return Err(Error::param("bias_scale", "must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::param("max_epochs", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    /// Constant feature value used for the bias during training.
    pub bias_scale: f64,
    /// Dual objective at termination.
    pub objective: f64,
    pub epochs: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub dual: f64,
    pub primal: f64,
    pub max_violation: f64,
}

pub fn train(x: &[Vec<f64>], y: &[Class], config: &TrainConfig) -> Result<LinearModel> {
    train_traced(x, y, config).map(|(m, _)| m)
}

/// Like [`train`], also returning objective values after every epoch.
pub fn train_traced(
    x: &[Vec<f64>],
    y: &[Class],
    config: &TrainConfig,
) -> Result<(LinearModel, Vec<EpochStats>)> {
    config.validate()?;
    let d = check_rows(x)?;
    if x.len() != y.len() {
        return Err(Error::param(
            "y",
            format!("{} labels for {} rows", y.len(), x.len()),
        ));
    }
    if !(y.contains(&Class::Forest) && y.contains(&Class::NonForest)) {
        return Err(Error::SingleClass);
    }
    let n = x.len();
    let c = config.c;
    let bscale = config.bias_scale;
    let sign: Vec<f64> = y.iter().map(|c| c.sign()).collect();
    // Squared norms of the augmented rows.
    let q: Vec<f64> = x
        .iter()
        .map(|r| r.iter().map(|v| v * v).sum::<f64>() + bscale * bscale)
        .collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut epochs = 0;

    let dot =
        |w: &[f64], row: &[f64]| row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() + w[d] * bscale;

    while epochs < config.max_epochs {
        epochs += 1;
        order.shuffle(&mut rng);
        let mut max_violation: f64 = 0.0;
        for &i in &order {
            let g = sign[i] * dot(&w, &x[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            max_violation = max_violation.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * sign[i];
                if step != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(&x[i]) {
                        *wj += step * xj;
                    }
                    w[d] += step * bscale;
                }
            }
        }
        let half_norm = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
        let dual = alpha.iter().sum::<f64>() - half_norm;
        let hinge: f64 = (0..n)
            .map(|i| (1.0 - sign[i] * dot(&w, &x[i])).max(0.0))
            .sum();
        trace.push(EpochStats {
            dual,
            primal: half_norm + c * hinge,
            max_violation,
        });
        if max_violation < config.tolerance {
            converged = true;
            break;
        }
    }

    let bias = w[d] * bscale;
    w.truncate(d);
    let objective = trace.last().map_or(0.0, |s| s.dual);
    Ok((
        LinearModel {
            weights: w,
            bias,
            c,
            bias_scale: bscale,
            objective,
            epochs,
            converged,
        },
        trace,
    ))
}

impl LinearModel {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.weights.len() {
            return Err(Error::FeatureDimension {
                expected: self.weights.len(),
                found: x.len(),
            });
        }
        Ok(x.iter().zip(&self.weights).map(|(a, b)| a * b).sum::<f64>() + self.bias)
    }

    /// Forest when the decision value is `>= 0`.
    pub fn predict(&self, x: &[f64]) -> Result<Class> {
        Ok(if self.decision_value(x)? >= 0.0 {
            Class::Forest
        } else {
            Class::NonForest
        })
    }

    /// Primal objective of this model on `(x, y)` with its own `C`.
    pub fn primal_objective(&self, x: &[Vec<f64>], y: &[Class]) -> Result<f64> {
        let b = self.bias / self.bias_scale;
        let reg = 0.5 * (self.weights.iter().map(|v| v * v).sum::<f64>() + b * b);
        let mut hinge = 0.0;
        for (row, class) in x.iter().zip(y) {
            hinge += (1.0 - class.sign() * self.decision_value(row)?).max(0.0);
        }
        Ok(reg + self.c * hinge)
    }
}

/// Hex SHA-256 over the little-endian bytes of `ids`.
pub fn fingerprint(ids: &[u32]) -> String {
    let mut h = Sha256::new();
    for id in ids {
        h.update(id.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// On-disk model: everything needed to score raw feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub c: f64,
    pub bias: f64,
    pub bias_scale: f64,
    pub objective: f64,
    pub pool_fingerprint: String,
    pub standardizer: Standardizer,
    pub weights: Vec<f64>,
}

impl ModelFile {
    pub fn new(model: &LinearModel, standardizer: &Standardizer, pool_ids: &[u32]) -> Self {
        Self {
            c: model.c,
            bias: model.bias,
            bias_scale: model.bias_scale,
            objective: model.objective,
            pool_fingerprint: fingerprint(pool_ids),
            standardizer: standardizer.clone(),
            weights: model.weights.clone(),
        }
    }

    pub fn write(&self, sink: &mut dyn Write, comment: Option<&str>) -> Result<()> {
        if let Some(c) = comment {
            writeln!(sink, "# {c}")?;
        }
        let body = toml::to_string(self).map_err(|e| Error::Manifest(e.to_string()))?;
        sink.write_all(body.as_bytes())?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))
    }

    /// Scores a raw (unstandardized) feature vector.
    pub fn predict(&self, raw: &[f64]) -> Result<Class> {
        let x = self.standardizer.transform(raw)?;
        let model = LinearModel {
            weights: self.weights.clone(),
            bias: self.bias,
            c: self.c,
            bias_scale: self.bias_scale,
            objective: self.objective,
            epochs: 0,
            converged: true,
        };
        model.predict(&x)
    }
}
