//! Distance segmentation and model-versus-baseline comparison reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Dataset;
use crate::metrics::{self, GroupKey, GroupStat, Grouping, MetricError, Segment};
use crate::ml::{FittedModel, MlError, ModelFamily};
use crate::model::{DatasetVariant, FeaturizedRecord};

pub const SHORT_PERCENTILE: f64 = 0.33;
pub const LONG_PERCENTILE: f64 = 0.66;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 3 distinct distances, found {0}")]
    TooFewDistances(usize),
    #[error("distance {0} is negative or not finite")]
    Domain(f64),
    #[error("percentile {0} outside [0, 1]")]
    Percentile(f64),
    #[error("schema mismatch: {0}")]
    Schema(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Model(#[from] MlError),
}

/// Linear interpolation between closest ranks at rank `1 + p (n - 1)`.
pub fn percentile(values: &[f64], p: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(AnalysisError::Percentile(p));
    }
    if values.is_empty() {
        return Err(AnalysisError::TooFewDistances(0));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(percentile_sorted(&sorted, p))
}

fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low: f64,
    pub high: f64,
}

impl Thresholds {
    pub fn assign(&self, distance: f64) -> Result<Segment, AnalysisError> {
        assign_segment(distance, *self)
    }
}

/// 33rd and 66th distance percentiles.
pub fn segment_thresholds(distances: &[f64]) -> Result<Thresholds, AnalysisError> {
    if let Some(&d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(AnalysisError::Domain(d));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(AnalysisError::TooFewDistances(distinct.len()));
    }
    Ok(Thresholds {
        low: percentile_sorted(&sorted, SHORT_PERCENTILE),
        high: percentile_sorted(&sorted, LONG_PERCENTILE),
    })
}

/// Short up to and including `low`, Medium up to and including `high`.
pub fn assign_segment(distance: f64, thresholds: Thresholds) -> Result<Segment, AnalysisError> {
    if !(distance >= 0.0 && distance.is_finite()) {
        return Err(AnalysisError::Domain(distance));
    }
    Ok(if distance <= thresholds.low {
        Segment::Short
    } else if distance <= thresholds.high {
        Segment::Medium
    } else {
        Segment::Long
    })
}

/// Scale on which metrics are computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricSpace {
    /// The scaled target the models were trained on.
    #[default]
    Transformed,
    /// Flow counts, recovered through the test set's target transform.
    Original,
}

impl MetricSpace {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricSpace::Transformed => "transformed",
            MetricSpace::Original => "original",
        }
    }
}

/// A fitted model paired with the test rows it is scored on.
#[derive(Debug, Clone, Copy)]
pub struct Evaluated<'a> {
    pub name: &'a str,
    pub model: &'a FittedModel,
    pub test: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelScores {
    pub name: String,
    pub family: ModelFamily,
    pub variant: DatasetVariant,
    pub n_rows: usize,
    pub mae: f64,
    pub r_squared: f64,
    pub cpc: f64,
    pub by_segment: BTreeMap<Segment, GroupStat>,
    pub by_day: BTreeMap<String, GroupStat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub traditional: f64,
    pub data_driven: f64,
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub mae: MetricComparison,
    pub r_squared: MetricComparison,
    pub cpc: MetricComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparativeReport {
    pub baseline: ModelScores,
    pub candidates: Vec<ModelScores>,
    pub comparisons: Vec<ComparisonRow>,
    pub thresholds: Thresholds,
    #[serde(default)]
    pub space: MetricSpace,
}

/// Scores one model on its test rows in the transformed target space. CPC
/// clamps negative values to zero first.
pub fn score_model(e: Evaluated<'_>, thresholds: Thresholds) -> Result<ModelScores, AnalysisError> {
    score_model_in(e, thresholds, MetricSpace::Transformed)
}

pub fn score_model_in(e: Evaluated<'_>, thresholds: Thresholds, space: MetricSpace) -> Result<ModelScores, AnalysisError> {
    let mut predictions = e.model.predict_dataset(e.test)?;
    let original;
    let records = match space {
        MetricSpace::Transformed => &e.test.records,
        MetricSpace::Original => {
            let Some(scaler) = &e.test.scaler else {
                return Err(AnalysisError::Schema("test set has no target transform to invert".into()));
            };
            for p in &mut predictions {
                *p = scaler.target.inverse(*p);
            }
            original = e
                .test
                .records
                .iter()
                .map(|r| FeaturizedRecord { y: scaler.target.inverse(r.y), ..r.clone() })
                .collect::<Vec<_>>();
            &original
        }
    };
    let actual: Vec<f64> = records.iter().map(|r| r.y).collect();
    let clamp = |v: &[f64]| v.iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
    let seg = |d: f64| assign_segment(d, thresholds).ok();
    let by_segment = metrics::grouped_mae(records, &predictions, Grouping::DistanceSegment(&seg))?
        .into_iter()
        .filter_map(|(k, v)| match k {
            GroupKey::Segment(s) => Some((s, v)),
            GroupKey::Day(_) => None,
        })
        .collect();
    let by_day = metrics::grouped_mae(records, &predictions, Grouping::DayType)?
        .into_iter()
        .map(|(k, v)| (k.label().to_string(), v))
        .collect();
    Ok(ModelScores {
        name: e.name.to_string(),
        family: e.model.family(),
        variant: e.test.variant,
        n_rows: actual.len(),
        mae: metrics::mae(&actual, &predictions)?,
        r_squared: metrics::r_squared(&actual, &predictions)?,
        cpc: metrics::cpc_aligned(&clamp(&predictions), &clamp(&actual))?,
        by_segment,
        by_day,
    })
}

fn compare(traditional: &ModelScores, data_driven: &ModelScores) -> ComparisonRow {
    let score = |t: f64, d: f64| MetricComparison {
        traditional: t,
        data_driven: d,
        improvement_pct: metrics::score_improvement(t, d),
    };
    ComparisonRow {
        model: data_driven.name.clone(),
        mae: MetricComparison {
            traditional: traditional.mae,
            data_driven: data_driven.mae,
            improvement_pct: metrics::error_improvement(traditional.mae, data_driven.mae),
        },
        r_squared: score(traditional.r_squared, data_driven.r_squared),
        cpc: score(traditional.cpc, data_driven.cpc),
    }
}

fn check_alignment(a: &Dataset, b: &Dataset) -> Result<(), AnalysisError> {
    if a.len() != b.len() {
        return Err(AnalysisError::Schema(format!("test sets have {} and {} rows", a.len(), b.len())));
    }
    for (i, (r, s)) in a.records.iter().zip(&b.records).enumerate() {
        if r.origin != s.origin || r.dest != s.dest || r.date != s.date || r.y != s.y {
            return Err(AnalysisError::Schema(format!("test row {i} differs between models")));
        }
    }
    Ok(())
}

/// Scores a baseline and each candidate on aligned test rows (same pairs,
/// dates and targets in the same order; feature variants may differ) and
/// reports each candidate's improvement over the baseline.
pub fn comparative_report(
    baseline: Evaluated<'_>,
    candidates: &[Evaluated<'_>],
    thresholds: Thresholds,
) -> Result<ComparativeReport, AnalysisError> {
    comparative_report_in(baseline, candidates, thresholds, MetricSpace::Transformed)
}

pub fn comparative_report_in(
    baseline: Evaluated<'_>,
    candidates: &[Evaluated<'_>],
    thresholds: Thresholds,
    space: MetricSpace,
) -> Result<ComparativeReport, AnalysisError> {
    for c in candidates {
        check_alignment(baseline.test, c.test)?;
    }
    for e in std::iter::once(&baseline).chain(candidates) {
        if e.model.n_features() != e.test.variant.width() {
            return Err(AnalysisError::Schema(format!(
                "model {} expects {} features but the {} test set has {}",
                e.name,
                e.model.n_features(),
                e.test.variant,
                e.test.variant.width()
            )));
        }
    }
    let base = score_model_in(baseline, thresholds, space)?;
    let scored = candidates.iter().map(|&c| score_model_in(c, thresholds, space)).collect::<Result<Vec<_>, _>>()?;
    let comparisons = scored.iter().map(|c| compare(&base, c)).collect();
    Ok(ComparativeReport { baseline: base, candidates: scored, comparisons, thresholds, space })
}

impl ComparativeReport {
    /// Aligned text table: one row per candidate and metric.
    pub fn render_table(&self) -> String {
        let mut rows = vec![[
            "Model".to_string(),
            "Metric".to_string(),
            format!("Traditional ({})", self.baseline.name),
            "Data-driven".to_string(),
            "% Improvement".to_string(),
        ]];
        for c in &self.comparisons {
            for (metric, m) in [("MAE", c.mae), ("R2", c.r_squared), ("CPC", c.cpc)] {
                rows.push([
                    c.model.clone(),
                    metric.to_string(),
                    format!("{:.4}", m.traditional),
                    format!("{:.4}", m.data_driven),
                    format!("{:.2}%", m.improvement_pct),
                ]);
            }
        }
        render_columns(&rows)
    }

    /// `model,segment,mae,count` rows for every scored model.
    pub fn segments_csv(&self) -> String {
        let mut out = String::from("model,segment,mae,count\n");
        for s in std::iter::once(&self.baseline).chain(&self.candidates) {
            for (seg, g) in &s.by_segment {
                let _ = writeln!(out, "{},{},{},{}", s.name, seg.as_str(), g.mae, g.count);
            }
        }
        out
    }

    /// `model,day_type,mae,count` rows; empty for day-aggregated data.
    pub fn days_csv(&self) -> String {
        let mut out = String::from("model,day_type,mae,count\n");
        for s in std::iter::once(&self.baseline).chain(&self.candidates) {
            for (day, g) in &s.by_day {
                let _ = writeln!(out, "{},{},{},{}", s.name, day, g.mae, g.count);
            }
        }
        out
    }
}

/// Left-aligned first columns, right-aligned numbers, two-space gaps.
pub fn render_columns<const N: usize>(rows: &[[String; N]]) -> String {
    let mut widths = [0usize; N];
    for r in rows {
        for (w, cell) in widths.iter_mut().zip(r) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = String::new();
    for r in rows {
        let mut line = String::new();
        for (j, cell) in r.iter().enumerate() {
            if j > 0 {
                line.push_str("  ");
            }
            if j < 2 {
                let _ = write!(line, "{:<w$}", cell, w = widths[j]);
            } else {
                let _ = write!(line, "{:>w$}", cell, w = widths[j]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}
