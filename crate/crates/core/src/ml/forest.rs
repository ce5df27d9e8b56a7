use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree_weighted, ColumnData, MaxFeatures, RegressionTree, TreeParams};
use super::{check_rows, MlError};
use crate::rng::{self, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_estimators: 100,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            min_samples_leaf: self.min_samples_leaf,
            max_features: self.max_features,
        }
    }

    pub fn validate(&self) -> Result<(), MlError> {
        if self.n_estimators < 1 {
            return Err(MlError::InvalidConfig("n_estimators must be at least 1".into()));
        }
        self.tree_params().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub trees: Vec<RegressionTree>,
}

/// Fits `n_estimators` trees; tree `t` draws from its own stream derived
/// from `(seed, t)`, so parallel and sequential fitting agree exactly.
pub fn rf_fit(x: &[Vec<f64>], y: &[f64], config: &ForestConfig) -> Result<RandomForest, MlError> {
    config.validate()?;
    let data = ColumnData::new(x)?;
    check_rows(&data, y)?;
    let n = data.n_rows;
    let params = config.tree_params();
    let trees = (0..config.n_estimators)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng::labelled(config.seed, streams::TREES, t as u64);
            let weights = if config.bootstrap {
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[rng.random_range(0..n)] += 1;
                }
                w
            } else {
                vec![1u32; n]
            };
            fit_tree_weighted(&data, y, &weights, params, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RandomForest { config: config.clone(), trees })
}

impl RandomForest {
    pub fn n_features(&self) -> usize {
        self.trees[0].n_features
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(x)).sum::<f64>() / self.trees.len() as f64
    }
}
