//! Regressors with a uniform fit/predict surface: CART trees, random forest,
//! gradient boosting, a five-layer MLP, and the gravity baseline.

pub mod boost;
pub mod forest;
pub mod mlp;
pub mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gravity::{GravityError, GravityModel};
use crate::ingest::Dataset;

pub use boost::{gbr_fit, BoostConfig, GradientBoosting};
pub use forest::{rf_fit, ForestConfig, RandomForest};
pub use mlp::{mlp_fit, Mlp, MlpConfig};
pub use tree::{fit_tree, MaxFeatures, Node, RegressionTree, TreeParams};

#[derive(Debug, Error, PartialEq)]
pub enum MlError {
    #[error("no training rows")]
    Empty,
    #[error("row width {found} does not match expected width {expected}")]
    Width { expected: usize, found: usize },
    #[error("training data contains non-finite values")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error(transparent)]
    Gravity(#[from] GravityError),
}

pub(crate) fn check_rows(data: &tree::ColumnData, y: &[f64]) -> Result<(), MlError> {
    if y.len() != data.n_rows {
        return Err(MlError::Width { expected: data.n_rows, found: y.len() });
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(MlError::NonFinite);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Gravity,
    Forest,
    Boosting,
    Mlp,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Gravity => "gravity",
            ModelFamily::Forest => "rf",
            ModelFamily::Boosting => "gbr",
            ModelFamily::Mlp => "mlp",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelFamily::Gravity => "Gravity",
            ModelFamily::Forest => "Random Forest",
            ModelFamily::Boosting => "Gradient Boosting",
            ModelFamily::Mlp => "Neural Networks",
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = MlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gravity" => Ok(ModelFamily::Gravity),
            "rf" | "forest" | "random_forest" => Ok(ModelFamily::Forest),
            "gbr" | "boosting" | "gradient_boosting" => Ok(ModelFamily::Boosting),
            "mlp" | "nn" => Ok(ModelFamily::Mlp),
            other => Err(MlError::InvalidConfig(format!("unknown model family {other:?}"))),
        }
    }
}

/// A trained predictor of any family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedModel {
    Gravity(GravityModel),
    Forest(RandomForest),
    Boosting(GradientBoosting),
    Mlp(Mlp),
}

impl FittedModel {
    pub fn family(&self) -> ModelFamily {
        match self {
            FittedModel::Gravity(_) => ModelFamily::Gravity,
            FittedModel::Forest(_) => ModelFamily::Forest,
            FittedModel::Boosting(_) => ModelFamily::Boosting,
            FittedModel::Mlp(_) => ModelFamily::Mlp,
        }
    }

    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Gravity(m) => m.width(),
            FittedModel::Forest(m) => m.n_features(),
            FittedModel::Boosting(m) => m.n_features,
            FittedModel::Mlp(m) => m.n_inputs,
        }
    }

    /// Trees of tree-based models; empty for the others.
    pub fn trees(&self) -> &[RegressionTree] {
        match self {
            FittedModel::Forest(m) => &m.trees,
            FittedModel::Boosting(m) => &m.trees,
            _ => &[],
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<f64, MlError> {
        if x.len() != self.n_features() {
            return Err(MlError::Width { expected: self.n_features(), found: x.len() });
        }
        Ok(match self {
            FittedModel::Gravity(m) => m.predict_row(x)?,
            FittedModel::Forest(m) => m.predict_row(x),
            FittedModel::Boosting(m) => m.predict_row(x),
            FittedModel::Mlp(m) => m.predict_row(x),
        })
    }

    /// Order-preserving, deterministic batch prediction.
    pub fn predict(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>, MlError> {
        rows.iter().map(|r| self.predict_row(r)).collect()
    }

    pub fn predict_dataset(&self, ds: &Dataset) -> Result<Vec<f64>, MlError> {
        ds.records.iter().map(|r| self.predict_row(&r.x)).collect()
    }
}

/// Training configuration of any learnable family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Gravity { log_shift: Option<f64> },
    Forest(ForestConfig),
    Boosting(BoostConfig),
    Mlp(MlpConfig),
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Gravity { .. } => ModelFamily::Gravity,
            ModelSpec::Forest(_) => ModelFamily::Forest,
            ModelSpec::Boosting(_) => ModelFamily::Boosting,
            ModelSpec::Mlp(_) => ModelFamily::Mlp,
        }
    }

    /// Default configuration of a family.
    pub fn default_for(family: ModelFamily) -> Self {
        match family {
            ModelFamily::Gravity => ModelSpec::Gravity { log_shift: None },
            ModelFamily::Forest => ModelSpec::Forest(ForestConfig::default()),
            ModelFamily::Boosting => ModelSpec::Boosting(BoostConfig::default()),
            ModelFamily::Mlp => ModelSpec::Mlp(MlpConfig::default()),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            ModelSpec::Gravity { .. } => {}
            ModelSpec::Forest(c) => c.seed = seed,
            ModelSpec::Boosting(c) => c.seed = seed,
            ModelSpec::Mlp(c) => c.seed = seed,
        }
        self
    }

    /// Fits on a dataset's rows (scaled or not).
    pub fn fit(&self, train: &Dataset) -> Result<FittedModel, MlError> {
        let x = train.xs();
        let y = train.ys();
        Ok(match self {
            ModelSpec::Gravity { log_shift } => {
                FittedModel::Gravity(crate::gravity::calibrate_dataset(train, *log_shift)?)
            }
            ModelSpec::Forest(c) => FittedModel::Forest(rf_fit(&x, &y, c)?),
            ModelSpec::Boosting(c) => FittedModel::Boosting(gbr_fit(&x, &y, c)?),
            ModelSpec::Mlp(c) => FittedModel::Mlp(mlp_fit(&x, &y, c)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut r = rng::seeded(1);
        let x: Vec<Vec<f64>> = (0..50).map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)]).collect();
        let y = x.iter().map(|v| v[0] * v[1]).collect();
        (x, y)
    }

    fn all_models() -> Vec<FittedModel> {
        let (x, y) = data();
        let small_mlp = MlpConfig { hidden: vec![4, 4, 4, 4, 4], epochs: 2, batch_size: 8, ..Default::default() };
        vec![
            FittedModel::Forest(rf_fit(&x, &y, &ForestConfig { n_estimators: 5, ..Default::default() }).unwrap()),
            FittedModel::Boosting(gbr_fit(&x, &y, &BoostConfig { n_estimators: 5, ..Default::default() }).unwrap()),
            FittedModel::Mlp(mlp_fit(&x, &y, &small_mlp).unwrap()),
        ]
    }

    #[test]
    fn predict_is_order_preserving_and_repeatable() {
        let (x, _) = data();
        let reversed: Vec<Vec<f64>> = x.iter().rev().cloned().collect();
        for m in all_models() {
            let a = m.predict(&x).unwrap();
            let b = m.predict(&reversed).unwrap();
            let mut b_rev = b.clone();
            b_rev.reverse();
            assert_eq!(a, b_rev);
            assert_eq!(a, m.predict(&x).unwrap());
        }
    }

    #[test]
    fn width_mismatch_is_rejected() {
        for m in all_models() {
            assert!(matches!(m.predict(&[vec![1.0, 2.0, 3.0]]), Err(MlError::Width { expected: 2, found: 3 })));
        }
    }

    #[test]
    fn one_leaf_tree_predicts_leaf_value() {
        let (x, y) = data();
        let cfg = ForestConfig { n_estimators: 1, max_depth: Some(0), bootstrap: false, ..Default::default() };
        let m = FittedModel::Forest(rf_fit(&x, &y, &cfg).unwrap());
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.predict_row(&x[0]).unwrap() - mean).abs() < 1e-15);
    }

    #[test]
    fn serde_round_trip() {
        for m in all_models() {
            let json = serde_json::to_string(&m).unwrap();
            let back: FittedModel = serde_json::from_str(&json).unwrap();
            assert_eq!(back, m);
        }
    }
}
