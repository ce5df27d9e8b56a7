//! CSV ingestion, median imputation, dataset assembly and train/test splits.
//!
//! File formats (UTF-8, comma separated, dot decimal separator):
//!
//! | file | header |
//! |------|--------|
//! | `county_features.csv` | `state,fips,f1,...,f27` (empty cell = missing) |
//! | `flows.csv` | `origin_fips,dest_fips,date,flow` (ISO 8601 date) |
//! | `separations.csv` | `origin_fips,dest_fips,distance_miles,time_minutes` |

mod scale;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    day_type, parse_date, CountyFeatures, CountyId, DatasetVariant, FeaturizedRecord, Fips, FlowRecord, ModelError,
    OdPair, Separation, SeparationMap, N_COUNTY_FEATURES,
};
use crate::rng;

pub use scale::{apply_scaler, fit_scaler, ScalerKind, ScalerState, TargetTransform};

pub const COUNTY_FILE: &str = "county_features.csv";
pub const FLOW_FILE: &str = "flows.csv";
pub const SEPARATION_FILE: &str = "separations.csv";

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing required column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}: line {line}, column {column:?}: cannot parse {value:?}")]
    Parse {
        path: PathBuf,
        line: u64,
        column: String,
        value: String,
    },
    #[error("{path}: line {line}: {message}")]
    Invalid { path: PathBuf, line: u64, message: String },
    #[error("duplicate county {0}")]
    DuplicateCounty(String),
    #[error("flows reference unknown counties: {}", .0.join(", "))]
    UnknownFips(Vec<String>),
    #[error("separation matrix lacks pairs: {}", format_pairs(.0))]
    Coverage(Vec<OdPair>),
    #[error("feature F{feature} has no observed values; cannot impute")]
    Imputation { feature: usize },
    #[error("county {0} has unimputed missing values")]
    NotImputed(String),
    #[error("row width {found} does not match expected width {expected}")]
    Width { expected: usize, found: usize },
    #[error("need at least {needed} rows, found {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("split of {n} rows with test fraction {fraction} leaves an empty partition")]
    EmptyPartition { n: usize, fraction: f64 },
    #[error("dataset is already scaled")]
    AlreadyScaled,
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn format_pairs(pairs: &[OdPair]) -> String {
    let shown: Vec<String> = pairs.iter().take(10).map(|(o, d)| format!("({o},{d})")).collect();
    let more = if pairs.len() > 10 { format!(" and {} more", pairs.len() - 10) } else { String::new() };
    format!("{}{more}", shown.join(", "))
}

struct Table {
    path: PathBuf,
    columns: HashMap<String, usize>,
    reader: csv::Reader<File>,
}

impl Table {
    fn open(path: &Path, required: &[String]) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
        let headers = reader
            .headers()
            .map_err(|source| IngestError::Csv { path: path.to_path_buf(), source })?;
        let columns: HashMap<String, usize> = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim_start_matches('\u{feff}').to_ascii_lowercase(), i))
            .collect();
        if let Some(column) = required.iter().find(|c| !columns.contains_key(c.as_str())) {
            return Err(IngestError::MissingColumn { path: path.to_path_buf(), column: column.clone() });
        }
        Ok(Table { path: path.to_path_buf(), columns, reader })
    }

    fn rows(&mut self) -> impl Iterator<Item = Result<Row<'_>, IngestError>> + '_ {
        let path = &self.path;
        let columns = &self.columns;
        self.reader.records().map(move |rec| {
            let record = rec.map_err(|source| IngestError::Csv { path: path.clone(), source })?;
            let line = record.position().map_or(0, |p| p.line());
            Ok(Row { path, columns, record, line })
        })
    }
}

struct Row<'a> {
    path: &'a Path,
    columns: &'a HashMap<String, usize>,
    record: csv::StringRecord,
    line: u64,
}

impl Row<'_> {
    fn text(&self, column: &str) -> &str {
        self.record.get(self.columns[column]).unwrap_or("")
    }

    fn parse_err(&self, column: &str) -> IngestError {
        IngestError::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            column: column.to_string(),
            value: self.text(column).to_string(),
        }
    }

    fn number(&self, column: &str) -> Result<f64, IngestError> {
        self.text(column)
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| self.parse_err(column))
    }

    /// Empty cell -> `None`.
    fn optional_number(&self, column: &str) -> Result<Option<f64>, IngestError> {
        if self.text(column).is_empty() {
            Ok(None)
        } else {
            self.number(column).map(Some)
        }
    }

    fn fips(&self, column: &str) -> Result<Fips, IngestError> {
        Fips::new(self.text(column)).map_err(|_| self.parse_err(column))
    }

    fn invalid(&self, message: String) -> IngestError {
        IngestError::Invalid { path: self.path.to_path_buf(), line: self.line, message }
    }
}

fn feature_columns() -> Vec<String> {
    (1..=N_COUNTY_FEATURES).map(|k| format!("f{k}")).collect()
}

/// Loads `county_features.csv`. Empty feature cells become NaN (missing).
pub fn load_county_features(path: &Path) -> Result<Vec<CountyFeatures>, IngestError> {
    let features = feature_columns();
    let mut required = vec!["state".to_string(), "fips".to_string()];
    required.extend(features.iter().cloned());
    let mut table = Table::open(path, &required)?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in table.rows() {
        let row = row?;
        let id = CountyId::new(row.text("state"), row.text("fips")).map_err(|e| row.invalid(e.to_string()))?;
        if !seen.insert(id.fips.clone()) {
            return Err(IngestError::DuplicateCounty(id.fips.to_string()));
        }
        let values = features
            .iter()
            .map(|c| row.optional_number(c).map(|v| v.unwrap_or(f64::NAN)))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(CountyFeatures::new(id, values)?);
    }
    Ok(out)
}

/// Loads `flows.csv`, summing duplicate (origin, dest, date) rows.
/// Every FIPS code must appear in `counties`.
pub fn load_flows(path: &Path, counties: &[CountyFeatures]) -> Result<Vec<FlowRecord>, IngestError> {
    let known: BTreeSet<&Fips> = counties.iter().map(|c| &c.id.fips).collect();
    let required: Vec<String> = ["origin_fips", "dest_fips", "date", "flow"].iter().map(|s| s.to_string()).collect();
    let mut table = Table::open(path, &required)?;
    let mut totals: BTreeMap<(Fips, Fips, NaiveDate), f64> = BTreeMap::new();
    let mut unknown = BTreeSet::new();
    for row in table.rows() {
        let row = row?;
        let origin = row.fips("origin_fips")?;
        let dest = row.fips("dest_fips")?;
        let date = parse_date(row.text("date")).map_err(|_| row.parse_err("date"))?;
        let flow = row.number("flow")?;
        if flow < 0.0 {
            return Err(row.invalid(format!("negative flow {flow}")));
        }
        for f in [&origin, &dest] {
            if !known.contains(f) {
                unknown.insert(f.to_string());
            }
        }
        *totals.entry((origin, dest, date)).or_insert(0.0) += flow;
    }
    if !unknown.is_empty() {
        return Err(IngestError::UnknownFips(unknown.into_iter().collect()));
    }
    Ok(totals
        .into_iter()
        .map(|((origin, dest, date), flow)| FlowRecord { origin, dest, date, flow })
        .collect())
}

/// Loads `separations.csv` into an ordered-pair map.
pub fn load_separation_matrix(path: &Path) -> Result<SeparationMap, IngestError> {
    let required: Vec<String> = ["origin_fips", "dest_fips", "distance_miles", "time_minutes"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut table = Table::open(path, &required)?;
    let mut map = SeparationMap::new();
    for row in table.rows() {
        let row = row?;
        let origin = row.fips("origin_fips")?;
        let dest = row.fips("dest_fips")?;
        let distance = row.number("distance_miles")?;
        let time = row.number("time_minutes")?;
        if distance < 0.0 || time < 0.0 {
            return Err(row.invalid("distance and time must be nonnegative".into()));
        }
        if origin != dest && distance == 0.0 {
            return Err(row.invalid(format!("zero distance between distinct counties {origin} and {dest}")));
        }
        if map.insert((origin.clone(), dest.clone()), Separation { distance, time }).is_some() {
            return Err(row.invalid(format!("duplicate pair ({origin},{dest})")));
        }
    }
    Ok(map)
}

/// Fails with the list of flow pairs that have no separation entry.
pub fn check_coverage(flows: &[FlowRecord], separations: &SeparationMap, include_self_loops: bool) -> Result<(), IngestError> {
    let missing: BTreeSet<OdPair> = flows
        .iter()
        .filter(|f| include_self_loops || !f.is_self_loop())
        .map(|f| (f.origin.clone(), f.dest.clone()))
        .filter(|pair| !separations.contains_key(pair))
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(IngestError::Coverage(missing.into_iter().collect()))
    }
}

/// Median of a nonempty sample; even counts average the two middle values.
pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Replaces each missing value by its column median over observed values.
pub fn impute_median(counties: &[CountyFeatures]) -> Result<Vec<CountyFeatures>, IngestError> {
    let mut out = counties.to_vec();
    for j in 0..N_COUNTY_FEATURES {
        if counties.iter().all(|c| !c.is_missing(j)) {
            continue;
        }
        let mut observed: Vec<f64> = counties.iter().map(|c| c.values[j]).filter(|v| !v.is_nan()).collect();
        if observed.is_empty() {
            return Err(IngestError::Imputation { feature: j + 1 });
        }
        let m = median(&mut observed);
        for c in out.iter_mut().filter(|c| c.values[j].is_nan()) {
            c.values[j] = m;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DayAggregation {
    /// One row per (pair, date).
    #[default]
    PerDay,
    /// One row per pair; target = total flow / number of dates in the window.
    MeanDaily,
}

impl FromStr for DayAggregation {
    type Err = IngestError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "per_day" => Ok(DayAggregation::PerDay),
            "mean_daily" => Ok(DayAggregation::MeanDaily),
            other => Err(IngestError::Config(format!("unknown day aggregation {other:?}"))),
        }
    }
}

impl fmt::Display for DayAggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayAggregation::PerDay => "per_day",
            DayAggregation::MeanDaily => "mean_daily",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub variant: DatasetVariant,
    pub records: Vec<FeaturizedRecord>,
    /// Present once the records have been scaled.
    pub scaler: Option<ScalerState>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn xs(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.x.clone()).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.y).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.distance_raw).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            variant: self.variant,
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
            scaler: self.scaler.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AssemblyOptions {
    pub aggregation: DayAggregation,
    pub include_self_loops: bool,
}

/// Joins imputed counties, flows and separations into unscaled records,
/// ordered by (origin, dest, date).
pub fn assemble_dataset(
    counties: &[CountyFeatures],
    flows: &[FlowRecord],
    separations: &SeparationMap,
    variant: DatasetVariant,
    options: AssemblyOptions,
) -> Result<Dataset, IngestError> {
    let by_fips: HashMap<&Fips, &CountyFeatures> = counties.iter().map(|c| (&c.id.fips, c)).collect();
    if let Some(c) = counties.iter().find(|c| !c.is_complete()) {
        return Err(IngestError::NotImputed(c.id.fips.to_string()));
    }
    let unknown: BTreeSet<String> = flows
        .iter()
        .flat_map(|f| [&f.origin, &f.dest])
        .filter(|f| !by_fips.contains_key(f))
        .map(|f| f.to_string())
        .collect();
    if !unknown.is_empty() {
        return Err(IngestError::UnknownFips(unknown.into_iter().collect()));
    }
    check_coverage(flows, separations, options.include_self_loops)?;

    let kept = flows.iter().filter(|f| options.include_self_loops || !f.is_self_loop());
    // (pair) -> [(date, flow)], summed per date.
    let mut grouped: BTreeMap<OdPair, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
    for f in kept {
        *grouped
            .entry((f.origin.clone(), f.dest.clone()))
            .or_default()
            .entry(f.date)
            .or_insert(0.0) += f.flow;
    }
    let n_dates = flows.iter().map(|f| f.date).collect::<BTreeSet<_>>().len().max(1);

    let mut records = Vec::new();
    for ((o, d), by_date) in grouped {
        let sep = separations[&(o.clone(), d.clone())];
        let x = variant.featurize(by_fips[&o], by_fips[&d], sep);
        match options.aggregation {
            DayAggregation::PerDay => {
                for (date, flow) in by_date {
                    records.push(FeaturizedRecord {
                        origin: o.clone(),
                        dest: d.clone(),
                        date: Some(date),
                        x: x.clone(),
                        y: flow,
                        day_type: Some(day_type(date)),
                        distance_raw: sep.distance,
                    });
                }
            }
            DayAggregation::MeanDaily => {
                let total: f64 = by_date.values().sum();
                records.push(FeaturizedRecord {
                    origin: o.clone(),
                    dest: d.clone(),
                    date: None,
                    x,
                    y: total / n_dates as f64,
                    day_type: None,
                    distance_raw: sep.distance,
                });
            }
        }
    }
    Ok(Dataset { variant, records, scaler: None })
}

/// Shuffled (train, test) index partition, each half in ascending order.
pub fn split_indices(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), IngestError> {
    if n < 2 {
        return Err(IngestError::TooFewRows { needed: 2, found: n });
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(IngestError::Config(format!("test fraction {test_fraction} must lie in (0, 1)")));
    }
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(IngestError::EmptyPartition { n, fraction: test_fraction });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::labelled(seed, rng::streams::SPLIT, 0));
    let mut test = order[..n_test].to_vec();
    let mut train = order[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

/// Splits an unscaled dataset and scales both halves with a scaler fitted
/// on the training half.
pub fn train_test_split(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
    kind: ScalerKind,
) -> Result<(Dataset, Dataset), IngestError> {
    if ds.scaler.is_some() {
        return Err(IngestError::AlreadyScaled);
    }
    let (train_idx, test_idx) = split_indices(ds.len(), test_fraction, seed)?;
    let train = ds.subset(&train_idx);
    let test = ds.subset(&test_idx);
    let scaler = fit_scaler(&train.records, kind)?;
    let scale = |d: Dataset| -> Result<Dataset, IngestError> {
        Ok(Dataset { variant: d.variant, records: scaler.apply(&d.records)?, scaler: Some(scaler.clone()) })
    };
    Ok((scale(train)?, scale(test)?))
}

/// The three input tables of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    pub counties: Vec<CountyFeatures>,
    pub flows: Vec<FlowRecord>,
    pub separations: SeparationMap,
}

/// Loads and validates the three standard files under `dir`, imputing
/// missing county features.
pub fn load_dir(dir: &Path) -> Result<RawData, IngestError> {
    let counties = impute_median(&load_county_features(&dir.join(COUNTY_FILE))?)?;
    for c in &counties {
        c.validate()?;
    }
    let flows = load_flows(&dir.join(FLOW_FILE), &counties)?;
    let separations = load_separation_matrix(&dir.join(SEPARATION_FILE))?;
    Ok(RawData { counties, flows, separations })
}

fn create(path: &Path) -> Result<csv::Writer<File>, IngestError> {
    let file = File::create(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> IngestError + '_ {
    move |source| IngestError::Csv { path: path.to_path_buf(), source }
}

fn finish(path: &Path, mut w: csv::Writer<File>) -> Result<(), IngestError> {
    w.flush().map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

/// Writes `county_features.csv`; NaN values become empty cells.
pub fn write_county_features(path: &Path, counties: &[CountyFeatures]) -> Result<(), IngestError> {
    let mut w = create(path)?;
    let mut header = vec!["state".to_string(), "fips".to_string()];
    header.extend(feature_columns());
    w.write_record(&header).map_err(csv_err(path))?;
    for c in counties {
        let mut rec = vec![c.id.state.clone(), c.id.fips.to_string()];
        rec.extend(c.values.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    finish(path, w)
}

pub fn write_flows(path: &Path, flows: &[FlowRecord]) -> Result<(), IngestError> {
    let mut w = create(path)?;
    w.write_record(["origin_fips", "dest_fips", "date", "flow"]).map_err(csv_err(path))?;
    for f in flows {
        w.write_record([f.origin.to_string(), f.dest.to_string(), f.date.to_string(), f.flow.to_string()])
            .map_err(csv_err(path))?;
    }
    finish(path, w)
}

pub fn write_separations(path: &Path, separations: &SeparationMap) -> Result<(), IngestError> {
    let mut w = create(path)?;
    w.write_record(["origin_fips", "dest_fips", "distance_miles", "time_minutes"])
        .map_err(csv_err(path))?;
    for ((o, d), s) in separations {
        w.write_record([o.to_string(), d.to_string(), s.distance.to_string(), s.time.to_string()])
            .map_err(csv_err(path))?;
    }
    finish(path, w)
}

/// Writes a string to a file, mapping failures to [`IngestError::Io`].
pub fn write_text(path: &Path, text: &str) -> Result<(), IngestError> {
    let mut f = File::create(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })?;
    f.write_all(text.as_bytes())
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}
