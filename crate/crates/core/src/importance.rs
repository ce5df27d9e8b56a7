//! Feature rankings: permutation importance for any model and impurity
//! importance for tree ensembles.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::metrics::{self, MetricError};
use crate::ml::{FittedModel, MlError, ModelFamily};
use crate::rng::{self, streams};

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("need at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("n_repeats must be at least 1")]
    NoRepeats,
    #[error("impurity importance is not defined for {0} models")]
    Unsupported(&'static str),
    #[error(transparent)]
    Model(#[from] MlError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub index: usize,
    pub label: String,
    pub importance: f64,
}

/// Sorts by descending importance, ties by feature index.
pub fn rank(mut items: Vec<FeatureImportance>) -> Vec<FeatureImportance> {
    items.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.index.cmp(&b.index)));
    items
}

fn labelled(labels: &[String], values: Vec<f64>) -> Vec<FeatureImportance> {
    values
        .into_iter()
        .enumerate()
        .map(|(index, importance)| FeatureImportance { index, label: labels[index].clone(), importance })
        .collect()
}

/// Mean increase in MAE when one column is shuffled, over `n_repeats`
/// shuffles. Each (feature, repeat) shuffle has its own stream.
pub fn permutation_importance(
    model: &FittedModel,
    dataset: &Dataset,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<FeatureImportance>, ImportanceError> {
    if dataset.len() < 2 {
        return Err(ImportanceError::TooFewRows(dataset.len()));
    }
    if n_repeats == 0 {
        return Err(ImportanceError::NoRepeats);
    }
    let x = dataset.xs();
    let y = dataset.ys();
    let baseline = metrics::mae(&y, &model.predict(&x)?)?;
    let width = model.n_features();
    let values = (0..width)
        .into_par_iter()
        .map(|f| {
            let mut rows = x.clone();
            let mut total = 0.0;
            for r in 0..n_repeats {
                let mut column: Vec<f64> = x.iter().map(|row| row[f]).collect();
                let index = ((f as u64) << 32) | r as u64;
                column.shuffle(&mut rng::labelled(seed, streams::PERMUTE, index));
                for (row, v) in rows.iter_mut().zip(column) {
                    row[f] = v;
                }
                total += metrics::mae(&y, &model.predict(&rows)?)? - baseline;
            }
            Ok(total / n_repeats as f64)
        })
        .collect::<Result<Vec<f64>, ImportanceError>>()?;
    Ok(rank(labelled(&dataset.variant.feature_labels(), values)))
}

/// Split gains per feature summed over all trees, normalized to sum to 1.
/// A model without any split yields all zeros.
pub fn impurity_importance(model: &FittedModel, labels: &[String]) -> Result<Vec<FeatureImportance>, ImportanceError> {
    match model.family() {
        ModelFamily::Forest | ModelFamily::Boosting => {}
        f => return Err(ImportanceError::Unsupported(f.as_str())),
    }
    let mut gains = vec![0.0; model.n_features()];
    for t in model.trees() {
        t.accumulate_gains(&mut gains);
    }
    let total: f64 = gains.iter().sum();
    if total > 0.0 {
        for g in &mut gains {
            *g /= total;
        }
    }
    Ok(rank(labelled(labels, gains)))
}

pub fn top_k(rankings: &[FeatureImportance], k: usize) -> Vec<FeatureImportance> {
    rankings.iter().take(k).cloned().collect()
}

/// Two columns of ranked labels (1-5 and 6-10) per model.
pub fn render_top_features(rows: &[(String, Vec<FeatureImportance>)]) -> String {
    let mut table = vec![[
        "Model".to_string(),
        "Ranked Features (1-5)".to_string(),
        "Ranked Features (6-10)".to_string(),
    ]];
    for (name, ranking) in rows {
        let join = |r: &[FeatureImportance]| r.iter().map(|f| f.label.as_str()).collect::<Vec<_>>().join(", ");
        let top = top_k(ranking, 10);
        let split = top.len().min(5);
        table.push([name.clone(), join(&top[..split]), join(&top[split..])]);
    }
    let mut widths = [0usize; 3];
    for r in &table {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    table
        .iter()
        .map(|r| format!("{:<a$}  {:<b$}  {}\n", r[0], r[1], r[2], a = widths[0], b = widths[1]))
        .map(|l| l.trim_end().to_string() + "\n")
        .collect()
}
