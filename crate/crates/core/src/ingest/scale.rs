//! Feature scaling and the flow target transform.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::FeaturizedRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScalerKind {
    #[default]
    Zscore,
    Minmax,
}

impl FromStr for ScalerKind {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "zscore" => Ok(ScalerKind::Zscore),
            "minmax" => Ok(ScalerKind::Minmax),
            other => Err(IngestError::Config(format!("unknown scaler kind {other:?}"))),
        }
    }
}

impl fmt::Display for ScalerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScalerKind::Zscore => "zscore",
            ScalerKind::Minmax => "minmax",
        })
    }
}

/// `log1p(y)` rescaled to [0, 1] over the training rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetTransform {
    pub log_min: f64,
    pub log_max: f64,
}

impl TargetTransform {
    pub fn fit(ys: impl Iterator<Item = f64>) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in ys {
            let l = y.ln_1p();
            lo = lo.min(l);
            hi = hi.max(l);
        }
        TargetTransform { log_min: lo, log_max: hi }
    }

    fn range(&self) -> f64 {
        self.log_max - self.log_min
    }

    pub fn forward(&self, y: f64) -> f64 {
        let r = self.range();
        if r > 0.0 {
            (y.ln_1p() - self.log_min) / r
        } else {
            0.0
        }
    }

    pub fn inverse(&self, t: f64) -> f64 {
        let r = self.range();
        if r > 0.0 {
            (t * r + self.log_min).exp_m1()
        } else {
            self.log_min.exp_m1()
        }
    }
}

/// Per-feature scaling state plus the target transform, fitted on training
/// rows only. Columns with zero spread map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub kind: ScalerKind,
    pub center: Vec<f64>,
    pub spread: Vec<f64>,
    pub target: TargetTransform,
}

pub fn fit_scaler(rows: &[FeaturizedRecord], kind: ScalerKind) -> Result<ScalerState, IngestError> {
    if rows.len() < 2 {
        return Err(IngestError::TooFewRows { needed: 2, found: rows.len() });
    }
    let width = rows[0].x.len();
    check_widths(rows, width)?;
    let n = rows.len() as f64;
    let mut center = vec![0.0; width];
    let mut spread = vec![0.0; width];
    match kind {
        ScalerKind::Zscore => {
            for j in 0..width {
                let mean = rows.iter().map(|r| r.x[j]).sum::<f64>() / n;
                let var = rows.iter().map(|r| (r.x[j] - mean).powi(2)).sum::<f64>() / n;
                center[j] = mean;
                spread[j] = var.sqrt();
            }
        }
        ScalerKind::Minmax => {
            for j in 0..width {
                let lo = rows.iter().map(|r| r.x[j]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r.x[j]).fold(f64::NEG_INFINITY, f64::max);
                center[j] = lo;
                spread[j] = hi - lo;
            }
        }
    }
    Ok(ScalerState {
        kind,
        center,
        spread,
        target: TargetTransform::fit(rows.iter().map(|r| r.y)),
    })
}

fn check_widths(rows: &[FeaturizedRecord], width: usize) -> Result<(), IngestError> {
    match rows.iter().find(|r| r.x.len() != width) {
        Some(r) => Err(IngestError::Width { expected: width, found: r.x.len() }),
        None => Ok(()),
    }
}

impl ScalerState {
    pub fn width(&self) -> usize {
        self.center.len()
    }

    pub fn scale_value(&self, j: usize, v: f64) -> f64 {
        if self.spread[j] > 0.0 {
            (v - self.center[j]) / self.spread[j]
        } else {
            0.0
        }
    }

    pub fn unscale_value(&self, j: usize, v: f64) -> f64 {
        if self.spread[j] > 0.0 {
            v * self.spread[j] + self.center[j]
        } else {
            self.center[j]
        }
    }

    pub fn transform_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.scale_value(j, v)).collect()
    }

    pub fn inverse_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().enumerate().map(|(j, &v)| self.unscale_value(j, v)).collect()
    }

    /// Scales features and transforms the target. `distance_raw` is kept.
    pub fn apply(&self, rows: &[FeaturizedRecord]) -> Result<Vec<FeaturizedRecord>, IngestError> {
        check_widths(rows, self.width())?;
        Ok(rows
            .iter()
            .map(|r| FeaturizedRecord {
                x: self.transform_x(&r.x),
                y: self.target.forward(r.y),
                ..r.clone()
            })
            .collect())
    }

    pub fn invert(&self, rows: &[FeaturizedRecord]) -> Result<Vec<FeaturizedRecord>, IngestError> {
        check_widths(rows, self.width())?;
        Ok(rows
            .iter()
            .map(|r| FeaturizedRecord {
                x: self.inverse_x(&r.x),
                y: self.target.inverse(r.y),
                ..r.clone()
            })
            .collect())
    }
}

pub fn apply_scaler(rows: &[FeaturizedRecord], scaler: &ScalerState) -> Result<Vec<FeaturizedRecord>, IngestError> {
    scaler.apply(rows)
}
