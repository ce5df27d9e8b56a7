//! R², MAE, common part of commuters (CPC), and grouped MAE.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DayType, FeaturizedRecord};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} actual values vs {1} predictions")]
    Length(usize, usize),
    #[error("need at least {needed} values, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("{0} is undefined for this input")]
    Undefined(&'static str),
    #[error("flows must be nonnegative and finite, got {0}")]
    NegativeFlow(f64),
}

fn check(actual: &[f64], predicted: &[f64], min_len: usize) -> Result<(), MetricError> {
    if actual.len() != predicted.len() {
        return Err(MetricError::Length(actual.len(), predicted.len()));
    }
    if actual.len() < min_len {
        return Err(MetricError::TooShort { needed: min_len, found: actual.len() });
    }
    Ok(())
}

/// `1 - SS_res / SS_tot`; negative when worse than predicting the mean.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted, 2)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricError::Undefined("R² (constant actual values)"));
    }
    let ss_res: f64 = actual.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricError> {
    check(actual, predicted, 1)?;
    Ok(actual.iter().zip(predicted).map(|(y, p)| (y - p).abs()).sum::<f64>() / actual.len() as f64)
}

/// Sørensen-Dice overlap `2 Σ min(g, r) / (Σ g + Σ r)` over the union of
/// keys; a key missing from one map counts as zero flow there.
pub fn cpc<K: Ord>(generated: &BTreeMap<K, f64>, real: &BTreeMap<K, f64>) -> Result<f64, MetricError> {
    for &v in generated.values().chain(real.values()) {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(MetricError::NegativeFlow(v));
        }
    }
    let keys: BTreeSet<&K> = generated.keys().chain(real.keys()).collect();
    let common: f64 = keys
        .into_iter()
        .map(|k| {
            let g = generated.get(k).copied().unwrap_or(0.0);
            let r = real.get(k).copied().unwrap_or(0.0);
            g.min(r)
        })
        .sum();
    let total = generated.values().sum::<f64>() + real.values().sum::<f64>();
    if total == 0.0 {
        return Err(MetricError::Undefined("CPC (both flow totals are zero)"));
    }
    Ok(2.0 * common / total)
}

/// CPC of two aligned vectors, position `i` being one OD observation.
pub fn cpc_aligned(generated: &[f64], real: &[f64]) -> Result<f64, MetricError> {
    check(generated, real, 1)?;
    let g: BTreeMap<usize, f64> = generated.iter().copied().enumerate().collect();
    let r: BTreeMap<usize, f64> = real.iter().copied().enumerate().collect();
    cpc(&g, &r)
}

/// `(traditional - data_driven) / traditional * 100`: error reduction.
pub fn error_improvement(traditional: f64, data_driven: f64) -> f64 {
    (traditional - data_driven) / traditional * 100.0
}

/// `(data_driven - traditional) / traditional * 100`: score gain.
pub fn score_improvement(traditional: f64, data_driven: f64) -> f64 {
    (data_driven - traditional) / traditional * 100.0
}

/// Trip-length band by distance percentiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Segment {
    Short,
    Medium,
    Long,
}

impl Segment {
    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Short => "Short",
            Segment::Medium => "Medium",
            Segment::Long => "Long",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupKey {
    Segment(Segment),
    Day(DayType),
}

impl GroupKey {
    pub fn label(&self) -> &'static str {
        match self {
            GroupKey::Segment(s) => s.as_str(),
            GroupKey::Day(d) => d.as_str(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupStat {
    pub mae: f64,
    pub count: usize,
}

/// How records are labelled for [`grouped_mae`].
pub enum Grouping<'a> {
    DistanceSegment(&'a dyn Fn(f64) -> Option<Segment>),
    DayType,
}

/// MAE per group; records without a label and empty groups are left out.
pub fn grouped_mae(
    records: &[FeaturizedRecord],
    predictions: &[f64],
    grouping: Grouping<'_>,
) -> Result<BTreeMap<GroupKey, GroupStat>, MetricError> {
    if records.len() != predictions.len() {
        return Err(MetricError::Length(records.len(), predictions.len()));
    }
    let mut buckets: BTreeMap<GroupKey, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (r, &p) in records.iter().zip(predictions) {
        let key = match &grouping {
            Grouping::DistanceSegment(f) => f(r.distance_raw).map(GroupKey::Segment),
            Grouping::DayType => r.day_type.map(GroupKey::Day),
        };
        if let Some(k) = key {
            let b = buckets.entry(k).or_default();
            b.0.push(r.y);
            b.1.push(p);
        }
    }
    buckets
        .into_iter()
        .map(|(k, (a, p))| Ok((k, GroupStat { mae: mae(&a, &p)?, count: a.len() })))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_date, day_type, Fips};
    use proptest::prelude::*;

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap(), 0.5);
        assert!(r_squared(&[1.0, 2.0, 3.0], &[9.0, -9.0, 9.0]).unwrap() < 0.0);
        assert!(matches!(r_squared(&[2.0, 2.0], &[1.0, 2.0]), Err(MetricError::Undefined(_))));
        assert!(matches!(r_squared(&[2.0], &[1.0]), Err(MetricError::TooShort { .. })));
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap(), 1.0);
        assert!(mae(&[], &[]).is_err());
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(MetricError::Length(1, 2))));
    }

    #[test]
    fn cpc_examples() {
        let g: BTreeMap<&str, f64> = [("AB", 2.0), ("AC", 3.0)].into();
        let r: BTreeMap<&str, f64> = [("AB", 1.0), ("AC", 5.0)].into();
        assert!((cpc(&g, &r).unwrap() - 8.0 / 11.0).abs() < 1e-15);
        assert_eq!(cpc(&g, &g).unwrap(), 1.0);
        let other: BTreeMap<&str, f64> = [("BC", 4.0)].into();
        assert_eq!(cpc(&g, &other).unwrap(), 0.0);
        let zero: BTreeMap<&str, f64> = [("AB", 0.0)].into();
        assert!(matches!(cpc(&zero, &zero), Err(MetricError::Undefined(_))));
        let neg: BTreeMap<&str, f64> = [("AB", -1.0)].into();
        assert!(matches!(cpc(&neg, &g), Err(MetricError::NegativeFlow(_))));
    }

    #[test]
    fn published_improvements() {
        assert!((error_improvement(0.0879, 0.0320) - 63.59).abs() < 0.01);
        assert!((score_improvement(0.6444, 0.9762) - 51.48).abs() < 0.01);
        assert_eq!(error_improvement(0.5, 0.5), 0.0);
        assert_eq!(score_improvement(0.5, 0.5), 0.0);
    }

    fn rec(y: f64, date: &str, distance: f64) -> FeaturizedRecord {
        let d = parse_date(date).unwrap();
        FeaturizedRecord {
            origin: Fips::new("00001").unwrap(),
            dest: Fips::new("00002").unwrap(),
            date: Some(d),
            x: vec![],
            y,
            day_type: Some(day_type(d)),
            distance_raw: distance,
        }
    }

    #[test]
    fn grouped_by_day_matches_subset_mae() {
        // 2021-03-15 is a Monday; a synthetic week.
        let dates = ["2021-03-15", "2021-03-16", "2021-03-17", "2021-03-18", "2021-03-19", "2021-03-20", "2021-03-21"];
        let recs: Vec<FeaturizedRecord> = dates.iter().enumerate().map(|(i, d)| rec(i as f64, d, 1.0)).collect();
        let preds: Vec<f64> = (0..7).map(|i| i as f64 * 1.5 - 1.0).collect();
        let g = grouped_mae(&recs, &preds, Grouping::DayType).unwrap();
        assert_eq!(g.len(), 2);
        let ys: Vec<f64> = recs.iter().map(|r| r.y).collect();
        let wd = mae(&ys[..5], &preds[..5]).unwrap();
        let we = mae(&ys[5..], &preds[5..]).unwrap();
        assert_eq!(g[&GroupKey::Day(DayType::Weekday)], GroupStat { mae: wd, count: 5 });
        assert_eq!(g[&GroupKey::Day(DayType::Weekend)], GroupStat { mae: we, count: 2 });
    }

    #[test]
    fn grouped_by_segment() {
        let recs = vec![rec(0.0, "2021-03-15", 1.0), rec(0.0, "2021-03-15", 100.0)];
        let seg = |d: f64| Some(if d < 50.0 { Segment::Short } else { Segment::Long });
        let g = grouped_mae(&recs, &[1.0, 3.0], Grouping::DistanceSegment(&seg)).unwrap();
        assert_eq!(g[&GroupKey::Segment(Segment::Short)].mae, 1.0);
        assert_eq!(g[&GroupKey::Segment(Segment::Long)].mae, 3.0);
        assert!(!g.contains_key(&GroupKey::Segment(Segment::Medium)));
        let one = |_: f64| Some(Segment::Medium);
        let g = grouped_mae(&recs, &[1.0, 3.0], Grouping::DistanceSegment(&one)).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[&GroupKey::Segment(Segment::Medium)].mae, 2.0);
    }

    fn flows() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..30)
            .prop_filter("positive total", |v| v.iter().any(|(a, b)| *a > 0.0 || *b > 0.0))
    }

    proptest! {
        #[test]
        fn cpc_symmetric_bounded_and_scale_free(v in flows(), c in 0.01f64..100.0) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let ab = cpc_aligned(&a, &b).unwrap();
            let ba = cpc_aligned(&b, &a).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            let ca: Vec<f64> = a.iter().map(|x| x * c).collect();
            let cb: Vec<f64> = b.iter().map(|x| x * c).collect();
            prop_assert!((cpc_aligned(&ca, &cb).unwrap() - ab).abs() < 1e-12);
        }

        #[test]
        fn mae_translation_invariant(v in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..30), c in -10.0f64..10.0) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            let m = mae(&a, &b).unwrap();
            prop_assert!(m >= 0.0);
            let ta: Vec<f64> = a.iter().map(|x| x + c).collect();
            let tb: Vec<f64> = b.iter().map(|x| x + c).collect();
            prop_assert!((mae(&ta, &tb).unwrap() - m).abs() < 1e-9);
            prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn r_squared_affine_invariant(v in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..30), scale in 0.1f64..10.0, shift in -10.0f64..10.0) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            prop_assume!(a.iter().any(|x| (x - a[0]).abs() > 1e-3));
            let r = r_squared(&a, &b).unwrap();
            let ta: Vec<f64> = a.iter().map(|x| x * scale + shift).collect();
            let tb: Vec<f64> = b.iter().map(|x| x * scale + shift).collect();
            let rt = r_squared(&ta, &tb).unwrap();
            prop_assert!((r - rt).abs() <= 1e-9 * r.abs().max(1.0));
        }
    }
}
