//! Generalized gravity model `T = k * P_o^lambda * P_d^alpha / d^beta` and
//! its log-linear least-squares calibration.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Dataset, ScalerState};
use crate::model::DatasetVariant;

#[derive(Debug, Error, PartialEq)]
pub enum GravityError {
    #[error("{what} must be positive, got {value}")]
    Domain { what: &'static str, value: f64 },
    #[error("need at least {needed} usable rows (positive flow and distance), found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("singular fit: column {0} is constant, collinear with the intercept")]
    SingularFit(&'static str),
    #[error("gravity params must be finite with k > 0")]
    InvalidParams,
    #[error("row width {found} does not match the {variant} width {expected}")]
    Width {
        variant: DatasetVariant,
        expected: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityParams {
    pub k: f64,
    /// Exponent on the origin population.
    pub lambda: f64,
    /// Exponent on the destination population.
    pub alpha: f64,
    /// Distance-decay exponent.
    pub beta: f64,
}

impl GravityParams {
    /// The classic form `P_o * P_d / d^beta`.
    pub fn traditional(beta: f64) -> Self {
        GravityParams { k: 1.0, lambda: 1.0, alpha: 1.0, beta }
    }

    pub fn validate(&self) -> Result<(), GravityError> {
        let finite = [self.k, self.lambda, self.alpha, self.beta].iter().all(|v| v.is_finite());
        if finite && self.k > 0.0 {
            Ok(())
        } else {
            Err(GravityError::InvalidParams)
        }
    }
}

pub fn predict_gravity(params: &GravityParams, p_origin: f64, p_dest: f64, distance: f64) -> Result<f64, GravityError> {
    for (what, value) in [("origin population", p_origin), ("destination population", p_dest), ("distance", distance)] {
        if !(value > 0.0) {
            return Err(GravityError::Domain { what, value });
        }
    }
    Ok(params.k * p_origin.powf(params.lambda) * p_dest.powf(params.alpha) / distance.powf(params.beta))
}

/// One calibration row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityObservation {
    pub p_origin: f64,
    pub p_dest: f64,
    pub distance: f64,
    pub flow: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Solver {
    Cholesky,
    PseudoInverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationDiagnostics {
    pub rows_used: usize,
    /// Rows with zero flow (or nonpositive inputs) left out of the fit.
    pub rows_dropped: usize,
    pub r_squared_log: f64,
    pub mean_log_residual: f64,
    pub log_shift: Option<f64>,
    pub solver: Solver,
}

pub const MIN_CALIBRATION_ROWS: usize = 5;

/// Ordinary least squares on
/// `ln T = ln k + lambda ln P_o + alpha ln P_d - beta ln d`.
///
/// Rows with zero flow are dropped unless `log_shift` is set, in which case
/// `ln(T + shift)` is regressed instead. The normal equations are solved by
/// Cholesky; if that fails numerically, the SVD pseudo-inverse is used.
pub fn calibrate_loglinear(
    rows: &[GravityObservation],
    log_shift: Option<f64>,
) -> Result<(GravityParams, CalibrationDiagnostics), GravityError> {
    let shift = log_shift.unwrap_or(0.0);
    let usable: Vec<[f64; 4]> = rows
        .iter()
        .filter(|r| r.p_origin > 0.0 && r.p_dest > 0.0 && r.distance > 0.0 && r.flow + shift > 0.0)
        .map(|r| [r.p_origin.ln(), r.p_dest.ln(), r.distance.ln(), (r.flow + shift).ln()])
        .collect();
    if usable.len() < MIN_CALIBRATION_ROWS {
        return Err(GravityError::TooFewRows { needed: MIN_CALIBRATION_ROWS, found: usable.len() });
    }
    for (col, name) in [(0, "ln(origin population)"), (1, "ln(destination population)"), (2, "ln(distance)")] {
        let first = usable[0][col];
        if usable.iter().all(|r| r[col] == first) {
            return Err(GravityError::SingularFit(name));
        }
    }

    // Columns are centered before forming X'X; the intercept is recovered
    // from the means afterwards.
    let n = usable.len() as f64;
    let mut means = [0.0; 4];
    for r in &usable {
        for j in 0..4 {
            means[j] += r[j] / n;
        }
    }
    let mut xtx = Matrix4::<f64>::zeros();
    let mut xty = Vector4::<f64>::zeros();
    for r in &usable {
        let z = [1.0, r[0] - means[0], r[1] - means[1], -(r[2] - means[2])];
        let t = r[3] - means[3];
        for a in 0..4 {
            xty[a] += z[a] * t;
            for b in 0..4 {
                xtx[(a, b)] += z[a] * z[b];
            }
        }
    }
    let (coef, solver) = match xtx.cholesky() {
        Some(ch) => (ch.solve(&xty), Solver::Cholesky),
        None => {
            let pinv = xtx
                .pseudo_inverse(1e-12)
                .map_err(|_| GravityError::SingularFit("design matrix"))?;
            (pinv * xty, Solver::PseudoInverse)
        }
    };
    let (lambda, alpha, beta) = (coef[1], coef[2], coef[3]);
    let log_k = means[3] + coef[0] - lambda * means[0] - alpha * means[1] + beta * means[2];
    let params = GravityParams { k: log_k.exp(), lambda, alpha, beta };

    let residuals: Vec<f64> = usable
        .iter()
        .map(|r| r[3] - (log_k + lambda * r[0] + alpha * r[1] - beta * r[2]))
        .collect();
    let ss_res: f64 = residuals.iter().map(|e| e * e).sum();
    let ss_tot: f64 = usable.iter().map(|r| (r[3] - means[3]).powi(2)).sum();
    let diagnostics = CalibrationDiagnostics {
        rows_used: usable.len(),
        rows_dropped: rows.len() - usable.len(),
        r_squared_log: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { f64::NAN },
        mean_log_residual: residuals.iter().sum::<f64>() / n,
        log_shift,
        solver,
    };
    Ok((params, diagnostics))
}

/// A calibrated gravity law behind the common predict interface.
///
/// Rows may be scaled; the scaler (when present) is inverted to recover raw
/// populations and distance, and the predicted flow is mapped forward into
/// the scaler's target space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GravityModel {
    pub params: GravityParams,
    pub variant: DatasetVariant,
    pub scaler: Option<ScalerState>,
    pub diagnostics: Option<CalibrationDiagnostics>,
}

pub fn gravity_as_model(
    params: GravityParams,
    variant: DatasetVariant,
    scaler: Option<ScalerState>,
) -> Result<GravityModel, GravityError> {
    params.validate()?;
    Ok(GravityModel { params, variant, scaler, diagnostics: None })
}

impl GravityModel {
    pub fn width(&self) -> usize {
        self.variant.width()
    }

    fn raw_value(&self, x: &[f64], j: usize) -> f64 {
        match &self.scaler {
            Some(s) => s.unscale_value(j, x[j]),
            None => x[j],
        }
    }

    /// Raw gravity inputs (origin population, destination population, distance).
    pub fn raw_inputs(&self, x: &[f64]) -> Result<(f64, f64, f64), GravityError> {
        if x.len() != self.width() {
            return Err(GravityError::Width { variant: self.variant, expected: self.width(), found: x.len() });
        }
        let (po, pd, d) = self.variant.gravity_columns();
        Ok((self.raw_value(x, po), self.raw_value(x, pd), self.raw_value(x, d)))
    }

    /// Predicted flow in raw units.
    pub fn predict_flow(&self, x: &[f64]) -> Result<f64, GravityError> {
        let (po, pd, d) = self.raw_inputs(x)?;
        predict_gravity(&self.params, po, pd, d)
    }

    /// Prediction in the model's target space.
    pub fn predict_row(&self, x: &[f64]) -> Result<f64, GravityError> {
        let flow = self.predict_flow(x)?;
        Ok(match &self.scaler {
            Some(s) => s.target.forward(flow),
            None => flow,
        })
    }
}

/// Calibrates on a (possibly scaled) training dataset and wraps the result.
pub fn calibrate_dataset(train: &Dataset, log_shift: Option<f64>) -> Result<GravityModel, GravityError> {
    let unwrapped = GravityModel {
        params: GravityParams::traditional(1.0),
        variant: train.variant,
        scaler: train.scaler.clone(),
        diagnostics: None,
    };
    let rows = train
        .records
        .iter()
        .map(|r| {
            let (p_origin, p_dest, distance) = unwrapped.raw_inputs(&r.x)?;
            let flow = match &train.scaler {
                Some(s) => s.target.inverse(r.y),
                None => r.y,
            };
            Ok(GravityObservation { p_origin, p_dest, distance, flow })
        })
        .collect::<Result<Vec<_>, GravityError>>()?;
    let (params, diagnostics) = calibrate_loglinear(&rows, log_shift)?;
    Ok(GravityModel { params, diagnostics: Some(diagnostics), ..unwrapped })
}
