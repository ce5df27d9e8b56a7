//! Shared domain types: counties, flows, separations and featurized rows.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of per-county features (F1..F27).
pub const N_COUNTY_FEATURES: usize = 27;

/// Zero-based positions of selected county features.
pub mod feature {
    pub const COMMERCE: usize = 8; // F9
    pub const EDUCATION_POI: usize = 7; // F8
    pub const TERMINALS: usize = 18; // F19
    pub const UNEMPLOYMENT: usize = 20; // F21
    pub const MEDIAN_INCOME: usize = 21; // F22
    pub const STATE_INCOME_SHARE: usize = 22; // F23
    pub const POVERTY: usize = 23; // F24
    pub const CHILD_POVERTY: usize = 24; // F25
    pub const COLLEGE: usize = 25; // F26
    pub const POPULATION: usize = 26; // F27

    /// Features bounded to [0, 100].
    pub const PERCENTAGES: [usize; 4] = [UNEMPLOYMENT, POVERTY, CHILD_POVERTY, COLLEGE];
}

/// Short descriptions in F1..F27 order.
pub const FEATURE_DESCRIPTIONS: [&str; N_COUNTY_FEATURES] = [
    "land use: natural",
    "land use: agricultural",
    "land use: residential",
    "land use: commercial",
    "land use: public",
    "land use: industrial",
    "land use: military",
    "POI: education",
    "POI: commerce",
    "POI: public services",
    "POI: healthcare",
    "POI: recreation",
    "POI: heritage",
    "POI: transport",
    "POI: miscellaneous",
    "roads: highways",
    "roads: roadways",
    "roads: streets",
    "terminals",
    "buildings",
    "unemployment rate (%)",
    "median household income (USD)",
    "% of state median household income",
    "poverty rate (%)",
    "child poverty rate (%)",
    "college completion (%)",
    "population",
];

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("invalid FIPS code {0:?}: expected 5 decimal digits")]
    InvalidFips(String),
    #[error("invalid state code {0:?}: expected 2 letters")]
    InvalidState(String),
    #[error("invalid date {0:?}: expected YYYY-MM-DD")]
    InvalidDate(String),
    #[error("county {fips}: feature F{feature} = {value} is out of range ({reason})")]
    FeatureOutOfRange {
        fips: String,
        feature: usize,
        value: f64,
        reason: &'static str,
    },
    #[error("expected {expected} county features, found {found}")]
    FeatureCount { expected: usize, found: usize },
    #[error("unknown dataset variant {0:?}: expected dataset1 or dataset2")]
    UnknownVariant(String),
}

/// Five-digit county FIPS code.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Fips(String);

impl Fips {
    pub fn new(code: impl Into<String>) -> Result<Self, ModelError> {
        let code = code.into();
        if code.len() == 5 && code.bytes().all(|b| b.is_ascii_digit()) {
            Ok(Fips(code))
        } else {
            Err(ModelError::InvalidFips(code))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Fips {
    type Error = ModelError;
    fn try_from(value: String) -> Result<Self, Self::Error> {
        Fips::new(value)
    }
}

impl From<Fips> for String {
    fn from(value: Fips) -> Self {
        value.0
    }
}

impl FromStr for Fips {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Fips::new(s)
    }
}

impl fmt::Display for Fips {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CountyId {
    pub state: String,
    pub fips: Fips,
}

impl CountyId {
    pub fn new(state: &str, fips: &str) -> Result<Self, ModelError> {
        if state.len() != 2 || !state.bytes().all(|b| b.is_ascii_alphabetic()) {
            return Err(ModelError::InvalidState(state.to_string()));
        }
        Ok(CountyId {
            state: state.to_ascii_uppercase(),
            fips: Fips::new(fips)?,
        })
    }
}

/// The 27 county features in F1..F27 order.
///
/// A missing value (an empty CSV cell before imputation) is stored as NaN;
/// see [`CountyFeatures::is_complete`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountyFeatures {
    pub id: CountyId,
    pub values: Vec<f64>,
}

impl CountyFeatures {
    pub fn new(id: CountyId, values: Vec<f64>) -> Result<Self, ModelError> {
        if values.len() != N_COUNTY_FEATURES {
            return Err(ModelError::FeatureCount {
                expected: N_COUNTY_FEATURES,
                found: values.len(),
            });
        }
        Ok(CountyFeatures { id, values })
    }

    /// Value of feature `Fk` (1-based, matching the published numbering).
    pub fn f(&self, k: usize) -> f64 {
        self.values[k - 1]
    }

    pub fn population(&self) -> f64 {
        self.values[feature::POPULATION]
    }

    pub fn is_missing(&self, index: usize) -> bool {
        self.values[index].is_nan()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| !v.is_nan())
    }

    /// Checks the range contract of a fully imputed county.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fips = || self.id.fips.to_string();
        for (i, &v) in self.values.iter().enumerate() {
            let reason = if !v.is_finite() {
                Some("must be finite")
            } else if i == feature::POPULATION && v <= 0.0 {
                Some("population must be positive")
            } else if v < 0.0 {
                Some("must be nonnegative")
            } else if feature::PERCENTAGES.contains(&i) && v > 100.0 {
                Some("percentage must be at most 100")
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(ModelError::FeatureOutOfRange {
                    fips: fips(),
                    feature: i + 1,
                    value: v,
                    reason,
                });
            }
        }
        Ok(())
    }
}

/// One dated origin-destination flow observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub origin: Fips,
    pub dest: Fips,
    pub date: NaiveDate,
    pub flow: f64,
}

impl FlowRecord {
    pub fn is_self_loop(&self) -> bool {
        self.origin == self.dest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    /// Miles.
    pub distance: f64,
    /// Minutes.
    pub time: f64,
}

/// Ordered (origin, dest) pair.
pub type OdPair = (Fips, Fips);

pub type SeparationMap = BTreeMap<OdPair, Separation>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn as_str(self) -> &'static str {
        match self {
            DayType::Weekday => "weekday",
            DayType::Weekend => "weekend",
        }
    }
}

impl fmt::Display for DayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Saturday and Sunday are weekend days.
pub fn day_type(date: NaiveDate) -> DayType {
    match date.weekday() {
        Weekday::Sat | Weekday::Sun => DayType::Weekend,
        _ => DayType::Weekday,
    }
}

pub fn parse_date(s: &str) -> Result<NaiveDate, ModelError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| ModelError::InvalidDate(s.to_string()))
}

/// Input layout of a featurized record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetVariant {
    /// Origin population, destination population, distance, time.
    Dataset1,
    /// F1..F27 of the origin, F1..F27 of the destination, distance, time.
    Dataset2,
}

impl DatasetVariant {
    pub fn width(self) -> usize {
        match self {
            DatasetVariant::Dataset1 => 4,
            DatasetVariant::Dataset2 => 2 * N_COUNTY_FEATURES + 2,
        }
    }

    /// Column positions of (origin population, destination population, distance).
    pub fn gravity_columns(self) -> (usize, usize, usize) {
        match self {
            DatasetVariant::Dataset1 => (0, 1, 2),
            DatasetVariant::Dataset2 => (
                feature::POPULATION,
                N_COUNTY_FEATURES + feature::POPULATION,
                2 * N_COUNTY_FEATURES,
            ),
        }
    }

    pub fn distance_column(self) -> usize {
        self.width() - 2
    }

    pub fn time_column(self) -> usize {
        self.width() - 1
    }

    /// Column labels: `Fk-O` for origin features, `Fk-D` for destination
    /// features, then `Distance` and `Time`.
    pub fn feature_labels(self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.width());
        match self {
            DatasetVariant::Dataset1 => {
                labels.push(format!("F{}-O", N_COUNTY_FEATURES));
                labels.push(format!("F{}-D", N_COUNTY_FEATURES));
            }
            DatasetVariant::Dataset2 => {
                labels.extend((1..=N_COUNTY_FEATURES).map(|k| format!("F{k}-O")));
                labels.extend((1..=N_COUNTY_FEATURES).map(|k| format!("F{k}-D")));
            }
        }
        labels.push("Distance".to_string());
        labels.push("Time".to_string());
        labels
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetVariant::Dataset1 => "dataset1",
            DatasetVariant::Dataset2 => "dataset2",
        }
    }

    /// Builds the input vector for one ordered pair.
    pub fn featurize(self, origin: &CountyFeatures, dest: &CountyFeatures, sep: Separation) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.width());
        match self {
            DatasetVariant::Dataset1 => {
                x.push(origin.population());
                x.push(dest.population());
            }
            DatasetVariant::Dataset2 => {
                x.extend_from_slice(&origin.values);
                x.extend_from_slice(&dest.values);
            }
        }
        x.push(sep.distance);
        x.push(sep.time);
        x
    }
}

impl FromStr for DatasetVariant {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dataset1" | "1" | "d1" => Ok(DatasetVariant::Dataset1),
            "dataset2" | "2" | "d2" => Ok(DatasetVariant::Dataset2),
            _ => Err(ModelError::UnknownVariant(s.to_string())),
        }
    }
}

impl fmt::Display for DatasetVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One model input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturizedRecord {
    pub origin: Fips,
    pub dest: Fips,
    /// `None` for rows aggregated over several days.
    pub date: Option<NaiveDate>,
    pub x: Vec<f64>,
    pub y: f64,
    /// `None` for rows aggregated over several days.
    pub day_type: Option<DayType>,
    /// Unscaled distance in miles.
    pub distance_raw: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn county(fips: &str, pop: f64) -> CountyFeatures {
        let mut values: Vec<f64> = (1..=27).map(|k| k as f64).collect();
        values[feature::POPULATION] = pop;
        CountyFeatures::new(CountyId::new("TN", fips).unwrap(), values).unwrap()
    }

    #[test]
    fn schema_widths() {
        assert_eq!(DatasetVariant::Dataset1.width(), 4);
        assert_eq!(DatasetVariant::Dataset2.width(), 56);
    }

    #[test]
    fn day_types() {
        let d = |s| day_type(parse_date(s).unwrap());
        assert_eq!(d("2021-03-15"), DayType::Weekday);
        assert_eq!(d("2021-03-20"), DayType::Weekend);
        assert_eq!(d("2021-03-21"), DayType::Weekend);
        assert_eq!(d("2021-04-15"), DayType::Weekday);
        assert!(parse_date("2021-02-30").is_err());
        assert!(parse_date("15/03/2021").is_err());
    }

    #[test]
    fn fips_validation() {
        assert!(Fips::new("47001").is_ok());
        assert!(Fips::new("4700").is_err());
        assert!(Fips::new("4700a").is_err());
        assert!(CountyId::new("T1", "47001").is_err());
    }

    #[test]
    fn dataset2_layout() {
        let a = county("47001", 1000.0);
        let b = county("47003", 2000.0);
        let sep = Separation { distance: 12.5, time: 20.0 };
        let x = DatasetVariant::Dataset2.featurize(&a, &b, sep);
        assert_eq!(x.len(), 56);
        assert_eq!(&x[0..27], &a.values[..]);
        assert_eq!(&x[27..54], &b.values[..]);
        assert_eq!(x[54], 12.5);
        assert_eq!(x[55], 20.0);
        let (po, pd, d) = DatasetVariant::Dataset2.gravity_columns();
        assert_eq!((x[po], x[pd], x[d]), (1000.0, 2000.0, 12.5));

        let x1 = DatasetVariant::Dataset1.featurize(&a, &b, sep);
        assert_eq!(x1, vec![1000.0, 2000.0, 12.5, 20.0]);
    }

    #[test]
    fn labels_follow_suffix_convention() {
        let labels = DatasetVariant::Dataset2.feature_labels();
        assert_eq!(labels.len(), 56);
        assert_eq!(labels[26], "F27-O");
        assert_eq!(labels[52], "F26-D");
        assert_eq!(labels[54], "Distance");
        assert_eq!(labels[55], "Time");
        assert_eq!(
            DatasetVariant::Dataset1.feature_labels(),
            vec!["F27-O", "F27-D", "Distance", "Time"]
        );
    }

    #[test]
    fn validate_ranges() {
        let mut c = county("47001", 1000.0);
        assert!(c.validate().is_ok());
        c.values[feature::UNEMPLOYMENT] = 120.0;
        assert!(matches!(c.validate(), Err(ModelError::FeatureOutOfRange { feature: 21, .. })));
        let mut c = county("47001", 0.0);
        assert!(c.validate().is_err());
        c.values[feature::POPULATION] = 5.0;
        c.values[3] = -1.0;
        assert!(c.validate().is_err());
    }
}
