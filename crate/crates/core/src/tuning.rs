//! Randomized (or exhaustive) hyperparameter search scored by k-fold MAE.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::metrics;
use crate::ml::{MaxFeatures, MlError, ModelFamily, ModelSpec};
use crate::rng::{self, streams};

#[derive(Debug, Error, PartialEq)]
pub enum TuningError {
    #[error("invalid parameter space: {0}")]
    Space(String),
    #[error("need 2 <= k <= n, got k={k}, n={n}")]
    Folds { n: usize, k: usize },
    #[error("n_iter must be at least 1")]
    NoTrials,
    #[error("exhaustive search needs a discrete space with at least {needed} points, found {found}")]
    Exhaustive { needed: usize, found: usize },
    #[error("parameter {name}: {message}")]
    Param { name: String, message: String },
    #[error(transparent)]
    Model(#[from] MlError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Str(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Discrete(Vec<ParamValue>),
    Continuous { low: f64, high: f64, sampling: Sampling },
}

pub type ParamPoint = BTreeMap<String, ParamValue>;

/// Named search dimensions, kept in name order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub dimensions: BTreeMap<String, Dimension>,
}

impl ParamSpace {
    pub fn new(dimensions: impl IntoIterator<Item = (&'static str, Dimension)>) -> Result<Self, TuningError> {
        let space = ParamSpace { dimensions: dimensions.into_iter().map(|(k, v)| (k.to_string(), v)).collect() };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<(), TuningError> {
        if self.dimensions.is_empty() {
            return Err(TuningError::Space("no dimensions".into()));
        }
        for (name, d) in &self.dimensions {
            match d {
                Dimension::Discrete(v) if v.is_empty() => {
                    return Err(TuningError::Space(format!("{name} has no values")));
                }
                Dimension::Continuous { low, high, sampling } => {
                    if !(low < high && low.is_finite() && high.is_finite()) {
                        return Err(TuningError::Space(format!("{name} needs low < high")));
                    }
                    if *sampling == Sampling::Log && *low <= 0.0 {
                        return Err(TuningError::Space(format!("{name} log range must be positive")));
                    }
                }
                Dimension::Discrete(_) => {}
            }
        }
        Ok(())
    }

    /// One point drawn with replacement; dimensions sampled in name order.
    pub fn sample(&self, rng: &mut rng::Rng) -> ParamPoint {
        self.dimensions
            .iter()
            .map(|(name, d)| {
                let v = match d {
                    Dimension::Discrete(values) => values[rng.random_range(0..values.len())].clone(),
                    Dimension::Continuous { low, high, sampling: Sampling::Linear } => {
                        ParamValue::Float(rng.random_range(*low..*high))
                    }
                    Dimension::Continuous { low, high, sampling: Sampling::Log } => {
                        ParamValue::Float(rng.random_range(low.ln()..high.ln()).exp())
                    }
                };
                (name.clone(), v)
            })
            .collect()
    }

    /// Every point of an all-discrete space, in lexicographic order of the
    /// dimension value indices.
    pub fn grid(&self) -> Option<Vec<ParamPoint>> {
        let mut points = vec![ParamPoint::new()];
        for (name, d) in &self.dimensions {
            let Dimension::Discrete(values) = d else { return None };
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        Some(points)
    }
}

/// Shuffled partition of `0..n` into `k` folds whose sizes differ by at
/// most one; the first `n % k` folds get the extra row. Folds are sorted.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TuningError> {
    if k < 2 || k > n {
        return Err(TuningError::Folds { n, k });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::labelled(seed, streams::FOLDS, 0));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Independent draws with replacement.
    Randomized,
    /// Distinct grid points in a seeded order; the space must be discrete.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: ParamPoint,
    pub fold_mae: Vec<f64>,
    /// `+inf` when training diverged.
    pub mean_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub family: ModelFamily,
    pub k: usize,
    pub seed: u64,
    pub trials: Vec<Trial>,
    pub best_index: usize,
    pub best_params: ParamPoint,
    pub best_score: f64,
}

fn as_usize(name: &str, v: &ParamValue) -> Result<usize, TuningError> {
    match v {
        ParamValue::Int(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(TuningError::Param { name: name.into(), message: format!("expected a nonnegative integer, got {v}") }),
    }
}

fn as_f64(name: &str, v: &ParamValue) -> Result<f64, TuningError> {
    match v {
        ParamValue::Float(f) => Ok(*f),
        ParamValue::Int(i) => Ok(*i as f64),
        ParamValue::Str(_) => Err(TuningError::Param { name: name.into(), message: format!("expected a number, got {v}") }),
    }
}

fn as_depth(name: &str, v: &ParamValue) -> Result<Option<usize>, TuningError> {
    match v {
        ParamValue::Str(s) if s.eq_ignore_ascii_case("none") => Ok(None),
        other => as_usize(name, other).map(Some),
    }
}

fn as_max_features(name: &str, v: &ParamValue) -> Result<MaxFeatures, TuningError> {
    match v {
        ParamValue::Str(s) if s == "sqrt" => Ok(MaxFeatures::Sqrt),
        ParamValue::Str(s) if s == "all" => Ok(MaxFeatures::All),
        ParamValue::Int(_) => as_usize(name, v).map(MaxFeatures::Count),
        _ => Err(TuningError::Param { name: name.into(), message: format!("expected sqrt, all or a count, got {v}") }),
    }
}

/// Overrides the matching fields of `base` with the values in `point`.
pub fn apply_params(base: &ModelSpec, point: &ParamPoint) -> Result<ModelSpec, TuningError> {
    let mut spec = base.clone();
    for (name, v) in point {
        let n = name.as_str();
        match &mut spec {
            ModelSpec::Forest(c) => match n {
                "n_estimators" => c.n_estimators = as_usize(n, v)?,
                "max_depth" => c.max_depth = as_depth(n, v)?,
                "min_samples_split" => c.min_samples_split = as_usize(n, v)?,
                "min_samples_leaf" => c.min_samples_leaf = as_usize(n, v)?,
                "max_features" => c.max_features = as_max_features(n, v)?,
                _ => return Err(unknown(n, ModelFamily::Forest)),
            },
            ModelSpec::Boosting(c) => match n {
                "n_estimators" => c.n_estimators = as_usize(n, v)?,
                "learning_rate" => c.learning_rate = as_f64(n, v)?,
                "max_depth" => c.max_depth = as_depth(n, v)?,
                "min_samples_split" => c.min_samples_split = as_usize(n, v)?,
                "min_samples_leaf" => c.min_samples_leaf = as_usize(n, v)?,
                "subsample" => c.subsample = as_f64(n, v)?,
                _ => return Err(unknown(n, ModelFamily::Boosting)),
            },
            ModelSpec::Mlp(c) => match n {
                "learning_rate" => c.learning_rate = as_f64(n, v)?,
                "dropout" => c.dropout_rate = as_f64(n, v)?,
                "batch_size" => c.batch_size = as_usize(n, v)?,
                "epochs" => c.epochs = as_usize(n, v)?,
                _ => return Err(unknown(n, ModelFamily::Mlp)),
            },
            ModelSpec::Gravity { log_shift } => match n {
                "log_shift" => *log_shift = Some(as_f64(n, v)?),
                _ => return Err(unknown(n, ModelFamily::Gravity)),
            },
        }
    }
    Ok(spec)
}

fn unknown(name: &str, family: ModelFamily) -> TuningError {
    TuningError::Param { name: name.into(), message: format!("not a {} hyperparameter", family.as_str()) }
}

fn cross_validate(spec: &ModelSpec, train: &Dataset, folds: &[Vec<usize>]) -> Result<Vec<f64>, TuningError> {
    let mut held_out = vec![usize::MAX; train.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            held_out[i] = f;
        }
    }
    folds
        .iter()
        .enumerate()
        .map(|(f, fold)| {
            let fit_idx: Vec<usize> = (0..train.len()).filter(|&i| held_out[i] != f).collect();
            let model = spec.fit(&train.subset(&fit_idx))?;
            let valid = train.subset(fold);
            let pred = model.predict_dataset(&valid)?;
            Ok(metrics::mae(&valid.ys(), &pred).unwrap_or(f64::INFINITY))
        })
        .collect()
}

/// Scores `n_iter` parameter points by k-fold MAE on `train`.
///
/// Folds are shared by every trial. Trial `i` draws its point from stream
/// `i`, so a shorter search is a prefix of a longer one with the same seed.
/// A diverged trial scores `+inf`; ties keep the earliest trial.
pub fn random_search(
    base: &ModelSpec,
    space: &ParamSpace,
    n_iter: usize,
    k: usize,
    train: &Dataset,
    seed: u64,
    mode: SearchMode,
) -> Result<SearchReport, TuningError> {
    space.validate()?;
    if n_iter == 0 {
        return Err(TuningError::NoTrials);
    }
    let folds = kfold_indices(train.len(), k, seed)?;
    let points: Vec<ParamPoint> = match mode {
        SearchMode::Randomized => {
            (0..n_iter).map(|i| space.sample(&mut rng::labelled(seed, streams::TRIALS, i as u64))).collect()
        }
        SearchMode::Exhaustive => {
            let mut grid = space.grid().ok_or(TuningError::Exhaustive { needed: n_iter, found: 0 })?;
            if grid.len() < n_iter {
                return Err(TuningError::Exhaustive { needed: n_iter, found: grid.len() });
            }
            grid.shuffle(&mut rng::labelled(seed, streams::TRIALS, 0));
            grid.truncate(n_iter);
            grid
        }
    };
    let specs = points.iter().map(|p| apply_params(base, p)).collect::<Result<Vec<_>, _>>()?;
    let trials = points
        .into_par_iter()
        .zip(specs)
        .map(|(params, spec)| match cross_validate(&spec, train, &folds) {
            Ok(fold_mae) => {
                let mean_mae = fold_mae.iter().sum::<f64>() / fold_mae.len() as f64;
                Ok(Trial { params, fold_mae, mean_mae })
            }
            Err(TuningError::Model(MlError::Diverged { .. })) => {
                Ok(Trial { params, fold_mae: vec![], mean_mae: f64::INFINITY })
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut best_index = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.mean_mae < trials[best_index].mean_mae {
            best_index = i;
        }
    }
    Ok(SearchReport {
        family: base.family(),
        k,
        seed,
        best_params: trials[best_index].params.clone(),
        best_score: trials[best_index].mean_mae,
        best_index,
        trials,
    })
}

/// A named search setup: space, trial count and fold count.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub family: ModelFamily,
    pub space: ParamSpace,
    pub n_iter: usize,
    pub k: usize,
}

fn ints(v: &[i64]) -> Dimension {
    Dimension::Discrete(v.iter().map(|&i| ParamValue::Int(i)).collect())
}

fn floats(v: &[f64]) -> Dimension {
    Dimension::Discrete(v.iter().map(|&f| ParamValue::Float(f)).collect())
}

fn strs(v: &[&str]) -> Dimension {
    Dimension::Discrete(v.iter().map(|s| ParamValue::Str(s.to_string())).collect())
}

/// Search setups for the three learned families. Forest and boosting grids
/// are centred on commonly used values and the best boosting configuration.
pub fn preset(family: ModelFamily) -> Result<Preset, TuningError> {
    let (space, n_iter, k) = match family {
        ModelFamily::Forest => (
            ParamSpace::new([
                ("n_estimators", ints(&[50, 100, 200, 300])),
                (
                    "max_depth",
                    Dimension::Discrete(vec![
                        ParamValue::Int(8),
                        ParamValue::Int(12),
                        ParamValue::Int(16),
                        ParamValue::Str("none".into()),
                    ]),
                ),
                ("min_samples_split", ints(&[2, 5, 10])),
                ("min_samples_leaf", ints(&[1, 2, 4])),
                ("max_features", strs(&["sqrt", "all"])),
            ])?,
            20,
            5,
        ),
        ModelFamily::Boosting => (
            ParamSpace::new([
                ("n_estimators", ints(&[100, 200, 500])),
                ("learning_rate", floats(&[0.01, 0.05, 0.1])),
                ("max_depth", ints(&[3, 4, 5])),
                ("min_samples_split", ints(&[2, 5])),
                ("min_samples_leaf", ints(&[1, 2])),
                ("subsample", floats(&[0.8, 0.9, 1.0])),
            ])?,
            10,
            2,
        ),
        ModelFamily::Mlp => (
            ParamSpace::new([
                ("learning_rate", Dimension::Continuous { low: 1e-5, high: 1e-3, sampling: Sampling::Log }),
                ("dropout", Dimension::Continuous { low: 0.1, high: 0.5, sampling: Sampling::Linear }),
                ("batch_size", ints(&[16, 32, 64])),
            ])?,
            20,
            3,
        ),
        ModelFamily::Gravity => {
            return Err(TuningError::Space("the gravity baseline has no search preset".into()));
        }
    };
    Ok(Preset { family, space, n_iter, k })
}
