//! Dynamic model averaging with a forgetting factor, in log space.

use crate::data::Quarter;
use crate::error::{Error, Result};
use crate::forecast::{write_table, ScorePanel};
use crate::special::log_sum_exp;
use std::path::Path;

const WEIGHT_FLOOR_LN: f64 = -690.7755278982137; // ln 1e-300

#[derive(Debug, Clone, PartialEq)]
pub struct DmaResult {
    pub labels: Vec<Quarter>,
    pub models: Vec<String>,
    pub alpha: f64,
    /// Predicted weights per window.
    pub predicted: Vec<Vec<f64>>,
    /// Updated weights per window.
    pub updated: Vec<Vec<f64>>,
    /// ln sum_i w_pred_i PL_i per window.
    pub score: Vec<f64>,
}

/// Run the prediction/update recursion over a panel of log predictive likelihoods.
/// `init` defaults to uniform weights.
pub fn dma_run(panel: &ScorePanel, alpha: f64, init: Option<&[f64]>) -> Result<DmaResult> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("forgetting factor {alpha} outside [0, 1]")));
    }
    let n = panel.models.len();
    if n == 0 || panel.values.is_empty() {
        return Err(Error::EmptyInput("score panel".into()));
    }
    for (w, row) in panel.values.iter().enumerate() {
        if row.len() != n {
            return Err(Error::Dimension(format!("window {w} has {} scores for {n} models", row.len())));
        }
        if let Some(i) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("score of `{}` at {}", panel.models[i], panel.labels[w])));
        }
    }
    let mut ln_w: Vec<f64> = match init {
        None => vec![-(n as f64).ln(); n],
        Some(w0) => {
            if w0.len() != n || w0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidParameter("initial weights must be non-negative, one per model".into()));
            }
            let s: f64 = w0.iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidParameter("initial weights sum to zero".into()));
            }
            w0.iter().map(|v| (v / s).ln()).collect()
        }
    };
    let mut out = DmaResult {
        labels: panel.labels.clone(),
        models: panel.models.clone(),
        alpha,
        predicted: Vec::with_capacity(panel.values.len()),
        updated: Vec::with_capacity(panel.values.len()),
        score: Vec::with_capacity(panel.values.len()),
    };
    for row in &panel.values {
        let mut pred: Vec<f64> = ln_w.iter().map(|v| alpha * v.max(WEIGHT_FLOOR_LN)).collect();
        let z = log_sum_exp(&pred);
        pred.iter_mut().for_each(|v| *v -= z);
        let joint: Vec<f64> = pred.iter().zip(row).map(|(a, b)| a + b).collect();
        let score = log_sum_exp(&joint);
        ln_w = joint.iter().map(|v| v - score).collect();
        out.predicted.push(pred.iter().map(|v| v.exp()).collect());
        out.updated.push(ln_w.iter().map(|v| v.exp()).collect());
        out.score.push(score);
    }
    Ok(out)
}

impl DmaResult {
    /// Writes `weights_predicted.csv`, `weights_updated.csv` and `score.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_table(&dir.join(format!("{stem}_weights_predicted.csv")), &self.labels, &self.models, &self.predicted)?;
        write_table(&dir.join(format!("{stem}_weights_updated.csv")), &self.labels, &self.models, &self.updated)?;
        let rows: Vec<Vec<f64>> = self.score.iter().map(|s| vec![*s]).collect();
        write_table(&dir.join(format!("{stem}_score.csv")), &self.labels, &["dma".to_string()], &rows)
    }
}
