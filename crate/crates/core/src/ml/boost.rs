use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_weighted, ColumnData, MaxFeatures, RegressionTree, TreeParams};
use super::{check_rows, MlError};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Fraction of rows drawn without replacement for each stage.
    pub subsample: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    /// The tuned configuration reported for the county data.
    fn default() -> Self {
        BoostConfig {
            n_estimators: 500,
            learning_rate: 0.05,
            max_depth: Some(5),
            min_samples_split: 2,
            min_samples_leaf: 2,
            subsample: 0.9,
            seed: 0,
        }
    }
}

impl BoostConfig {
    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: MaxFeatures::All,
        }
    }

    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlError::InvalidConfig("learning_rate must be positive".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(MlError::InvalidConfig("subsample must lie in (0, 1]".into()));
        }
        self.tree_params().validate()
    }
}

/// Squared-error gradient boosting: `F_0 = mean(y)`,
/// `F_m = F_{m-1} + learning_rate * tree_m`, each tree fitted to the
/// residuals `y - F_{m-1}` on a row subsample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub config: BoostConfig,
    pub n_features: usize,
    pub init: f64,
    pub trees: Vec<RegressionTree>,
}

pub fn gbr_fit(x: &[Vec<f64>], y: &[f64], config: &BoostConfig) -> Result<GradientBoosting, MlError> {
    config.validate()?;
    let data = ColumnData::new(x)?;
    check_rows(&data, y)?;
    let n = data.n_rows;
    let init = y.iter().sum::<f64>() / n as f64;
    let mut current = vec![init; n];
    let mut residual = vec![0.0; n];
    let n_sub = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let params = config.tree_params();
    let mut trees = Vec::with_capacity(config.n_estimators);
    for stage in 0..config.n_estimators {
        let mut rng = rng::labelled(config.seed, streams::STAGES, stage as u64);
        let weights = if n_sub < n {
            let mut w = vec![0u32; n];
            for i in index::sample(&mut rng, n, n_sub) {
                w[i] = 1;
            }
            w
        } else {
            vec![1u32; n]
        };
        for i in 0..n {
            residual[i] = y[i] - current[i];
        }
        let tree = fit_tree_weighted(&data, &residual, &weights, params, &mut rng)?;
        for (i, c) in current.iter_mut().enumerate() {
            *c += config.learning_rate * tree.predict_row(&x[i]);
        }
        trees.push(tree);
    }
    Ok(GradientBoosting { config: config.clone(), n_features: data.n_features(), init, trees })
}

impl GradientBoosting {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let lr = self.config.learning_rate;
        self.trees.iter().fold(self.init, |acc, t| acc + lr * t.predict_row(x))
    }

    /// Predictions after each stage: entry `m` holds `F_m` for every row,
    /// entry 0 being the constant initial prediction.
    pub fn staged_predict(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let lr = self.config.learning_rate;
        let mut current = vec![self.init; x.len()];
        let mut out = Vec::with_capacity(self.trees.len() + 1);
        out.push(current.clone());
        for t in &self.trees {
            for (c, row) in current.iter_mut().zip(x) {
                *c += lr * t.predict_row(row);
            }
            out.push(current.clone());
        }
        out
    }
}
