//! Synthetic county systems and flows with known generating laws.
//!
//! Two regimes are available: flows that follow the gravity law exactly
//! (up to optional lognormal noise), and a nonlinear regime in which
//! non-population county features modulate a gravity core.

use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gravity::{predict_gravity, GravityError, GravityParams};
use crate::ingest::{self, IngestError};
use crate::model::{
    day_type, feature, CountyFeatures, CountyId, DayType, FlowRecord, Fips, Separation, SeparationMap,
    N_COUNTY_FEATURES,
};
use crate::rng::{self, streams};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least {needed} {what}, got {found}")]
    TooFew { what: &'static str, needed: usize, found: usize },
    #[error("invalid setting: {0}")]
    Invalid(String),
    #[error("no separation for pair {0} -> {1}")]
    MissingSeparation(String, String),
    #[error(transparent)]
    Gravity(#[from] GravityError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// Side of the square region, in miles.
pub const REGION_MILES: f64 = 400.0;
pub const MIN_POPULATION: f64 = 1e3;
pub const MAX_POPULATION: f64 = 1e6;
pub const SPEED_RANGE_MPH: (f64, f64) = (30.0, 70.0);
/// Distance assigned to distinct counties that share coordinates.
pub const COINCIDENT_OFFSET_MILES: f64 = 1e-3;
/// Sigma of the lognormal per-county factor on count features.
pub const COUNT_FACTOR_SIGMA: f64 = 0.5;

/// Expected count per 1000 residents for F1..F20.
pub const COUNT_RATES: [f64; 20] = [
    0.8, 1.2, 3.0, 1.0, 0.6, 0.4, 0.02, // land use
    1.5, 6.0, 0.8, 0.9, 0.7, 0.2, 0.5, 1.0, // POI
    0.3, 2.0, 12.0, // roads
    0.01, // terminals
    25.0, // buildings
];

/// The first flow date, a Monday.
pub fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 3, 15).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCounty {
    pub features: CountyFeatures,
    /// Planar coordinates in miles.
    pub x: f64,
    pub y: f64,
}

impl SynthCounty {
    pub fn fips(&self) -> &Fips {
        &self.features.id.fips
    }
}

/// `n` counties in state "ZZ" with FIPS codes 00001, 00002, ...
///
/// County `i` draws from its own stream, so the first `m` counties of a
/// larger system equal an `m`-county system with the same seed.
pub fn generate_counties(n: usize, seed: u64) -> Result<Vec<SynthCounty>, SynthError> {
    if n < 2 {
        return Err(SynthError::TooFew { what: "counties", needed: 2, found: n });
    }
    if n > 99_999 {
        return Err(SynthError::Invalid(format!("{n} counties exceed the FIPS range")));
    }
    let factor = LogNormal::new(0.0, COUNT_FACTOR_SIGMA).expect("valid lognormal");
    (0..n)
        .map(|i| {
            let mut r = rng::labelled(seed, streams::COUNTIES, i as u64);
            let population = r.random_range(MIN_POPULATION.ln()..MAX_POPULATION.ln()).exp().round();
            let scale = population / 1000.0 * factor.sample(&mut r);
            let mut values = vec![0.0; N_COUNTY_FEATURES];
            for (k, rate) in COUNT_RATES.iter().enumerate() {
                let mean = rate * scale;
                values[k] = Poisson::new(mean).expect("positive mean").sample(&mut r);
            }
            let income = r.random_range(35_000.0..110_000.0_f64).round();
            let poverty = r.random_range(5.0..30.0);
            values[feature::UNEMPLOYMENT] = r.random_range(2.0..15.0);
            values[feature::MEDIAN_INCOME] = income;
            values[feature::STATE_INCOME_SHARE] = income / 65_000.0 * 100.0;
            values[feature::POVERTY] = poverty;
            values[feature::CHILD_POVERTY] = (poverty * r.random_range(1.1..1.6)).min(100.0);
            values[feature::COLLEGE] = r.random_range(10.0..60.0);
            values[feature::POPULATION] = population;
            let x = r.random_range(0.0..REGION_MILES);
            let y = r.random_range(0.0..REGION_MILES);
            let id = CountyId::new("ZZ", &format!("{:05}", i + 1)).expect("valid id");
            let features = CountyFeatures::new(id, values).expect("27 features");
            Ok(SynthCounty { features, x, y })
        })
        .collect()
}

/// Euclidean distance between every ordered pair of distinct counties and a
/// travel time at a speed drawn per unordered pair; both directions share
/// distance and time.
pub fn synth_separations(counties: &[SynthCounty], seed: u64) -> SeparationMap {
    let mut map = SeparationMap::new();
    let n = counties.len() as u64;
    for (i, a) in counties.iter().enumerate() {
        for (j, b) in counties.iter().enumerate().skip(i + 1) {
            let mut distance = (a.x - b.x).hypot(a.y - b.y);
            if distance == 0.0 {
                distance = COINCIDENT_OFFSET_MILES;
            }
            let mut r = rng::labelled(seed, streams::SPEEDS, i as u64 * n + j as u64);
            let speed = r.random_range(SPEED_RANGE_MPH.0..SPEED_RANGE_MPH.1);
            let sep = Separation { distance, time: distance / speed * 60.0 };
            map.insert((a.fips().clone(), b.fips().clone()), sep);
            map.insert((b.fips().clone(), a.fips().clone()), sep);
        }
    }
    map
}

/// Which days flows are generated for, and how weekends scale them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub days: usize,
    pub start: NaiveDate,
    pub weekend_multiplier: f64,
}

impl Schedule {
    pub fn new(days: usize) -> Self {
        Schedule { days, start: default_start(), weekend_multiplier: 1.0 }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.days < 1 {
            return Err(SynthError::TooFew { what: "days", needed: 1, found: 0 });
        }
        if !(self.weekend_multiplier > 0.0 && self.weekend_multiplier.is_finite()) {
            return Err(SynthError::Invalid("weekend multiplier must be positive".into()));
        }
        Ok(())
    }

    fn dates(&self) -> Vec<(NaiveDate, f64)> {
        (0..self.days as u64)
            .map(|d| {
                let date = self.start + Days::new(d);
                let m = match day_type(date) {
                    DayType::Weekday => 1.0,
                    DayType::Weekend => self.weekend_multiplier,
                };
                (date, m)
            })
            .collect()
    }
}

/// Streams `mean(o, d) * day multiplier * exp(eps)` for every ordered pair
/// of distinct counties and every day, in (origin, dest, date) order.
fn generate(
    counties: &[SynthCounty],
    separations: &SeparationMap,
    schedule: Schedule,
    noise_sigma: f64,
    seed: u64,
    mean: impl Fn(&CountyFeatures, &CountyFeatures, Separation) -> Result<f64, SynthError>,
) -> Result<Vec<FlowRecord>, SynthError> {
    schedule.validate()?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(SynthError::Invalid(format!("noise sigma {noise_sigma} must be nonnegative")));
    }
    let noise = Normal::new(0.0, noise_sigma).expect("valid sigma");
    let mut r = rng::labelled(seed, streams::FLOWS, 0);
    let mut sorted: Vec<&SynthCounty> = counties.iter().collect();
    sorted.sort_by(|a, b| a.fips().cmp(b.fips()));
    let dates = schedule.dates();
    let mut flows = Vec::with_capacity(sorted.len() * sorted.len() * dates.len());
    for o in &sorted {
        for d in &sorted {
            if o.fips() == d.fips() {
                continue;
            }
            let key = (o.fips().clone(), d.fips().clone());
            let sep = *separations
                .get(&key)
                .ok_or_else(|| SynthError::MissingSeparation(key.0.to_string(), key.1.to_string()))?;
            let base = mean(&o.features, &d.features, sep)?;
            for &(date, m) in &dates {
                let eps = if noise_sigma > 0.0 { noise.sample(&mut r) } else { 0.0 };
                flows.push(FlowRecord { origin: key.0.clone(), dest: key.1.clone(), date, flow: base * m * eps.exp() });
            }
        }
    }
    Ok(flows)
}

/// Flows following `k P_o^lambda P_d^alpha / d^beta` with i.i.d. lognormal
/// noise of log-scale `noise_sigma`.
pub fn generate_gravity_flows(
    counties: &[SynthCounty],
    separations: &SeparationMap,
    params: &GravityParams,
    noise_sigma: f64,
    schedule: Schedule,
    seed: u64,
) -> Result<Vec<FlowRecord>, SynthError> {
    params.validate()?;
    generate(counties, separations, schedule, noise_sigma, seed, |o, d, s| {
        Ok(predict_gravity(params, o.population(), d.population(), s.distance)?)
    })
}

/// Constants of the nonlinear regime.
///
/// Mean flow = `K P_o^LAMBDA P_d^ALPHA / d^BETA` times
/// - `INCOME_BOOST` when the destination median income F22 exceeds
///   `INCOME_THRESHOLD`, else 1;
/// - `1 + TERMINAL_STEP * min(F19_D, TERMINAL_CAP)`;
/// - `exp(EDUCATION_COEF * F26_O / 100 * tanh(F8_D / EDUCATION_SCALE))`;
/// - `exp(-UNEMPLOYMENT_COEF * F21_O)`;
/// - `1 + COMMERCE_COEF * tanh(F9_D / COMMERCE_SCALE)`.
///
/// Every modifier equals 1 when its features are zero. Weekend flows are
/// scaled by `WEEKEND_MULTIPLIER` and each record carries lognormal noise
/// of log-scale `NOISE_SIGMA`.
pub mod nonlinear {
    pub const K: f64 = 0.05;
    pub const LAMBDA: f64 = 0.5;
    pub const ALPHA: f64 = 0.6;
    pub const BETA: f64 = 1.2;
    pub const INCOME_THRESHOLD: f64 = 65_000.0;
    pub const INCOME_BOOST: f64 = 2.5;
    pub const TERMINAL_STEP: f64 = 0.5;
    pub const TERMINAL_CAP: f64 = 6.0;
    pub const EDUCATION_COEF: f64 = 1.2;
    pub const EDUCATION_SCALE: f64 = 50.0;
    pub const UNEMPLOYMENT_COEF: f64 = 0.08;
    pub const COMMERCE_COEF: f64 = 0.6;
    pub const COMMERCE_SCALE: f64 = 200.0;
    pub const WEEKEND_MULTIPLIER: f64 = 0.9;
    pub const NOISE_SIGMA: f64 = 0.1;
}

pub fn nonlinear_core() -> GravityParams {
    GravityParams { k: nonlinear::K, lambda: nonlinear::LAMBDA, alpha: nonlinear::ALPHA, beta: nonlinear::BETA }
}

/// Noise-free weekday mean flow of the nonlinear regime.
pub fn nonlinear_mean_flow(origin: &CountyFeatures, dest: &CountyFeatures, distance: f64) -> Result<f64, SynthError> {
    use nonlinear::*;
    let core = predict_gravity(&nonlinear_core(), origin.population(), dest.population(), distance)?;
    let income = if dest.values[feature::MEDIAN_INCOME] > INCOME_THRESHOLD { INCOME_BOOST } else { 1.0 };
    let terminals = 1.0 + TERMINAL_STEP * dest.values[feature::TERMINALS].min(TERMINAL_CAP);
    let education = (EDUCATION_COEF * origin.values[feature::COLLEGE] / 100.0
        * (dest.values[feature::EDUCATION_POI] / EDUCATION_SCALE).tanh())
    .exp();
    let unemployment = (-UNEMPLOYMENT_COEF * origin.values[feature::UNEMPLOYMENT]).exp();
    let commerce = 1.0 + COMMERCE_COEF * (dest.values[feature::COMMERCE] / COMMERCE_SCALE).tanh();
    Ok(core * income * terminals * education * unemployment * commerce)
}

pub fn generate_nonlinear_flows(
    counties: &[SynthCounty],
    separations: &SeparationMap,
    days: usize,
    seed: u64,
) -> Result<Vec<FlowRecord>, SynthError> {
    let schedule = Schedule { weekend_multiplier: nonlinear::WEEKEND_MULTIPLIER, ..Schedule::new(days) };
    generate(counties, separations, schedule, nonlinear::NOISE_SIGMA, seed, |o, d, s| {
        nonlinear_mean_flow(o, d, s.distance)
    })
}

/// Writes the three ingestion CSVs into `dir`, creating it if needed.
pub fn write_region(
    dir: &Path,
    counties: &[SynthCounty],
    separations: &SeparationMap,
    flows: &[FlowRecord],
) -> Result<(), SynthError> {
    std::fs::create_dir_all(dir).map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?;
    let features: Vec<CountyFeatures> = counties.iter().map(|c| c.features.clone()).collect();
    ingest::write_county_features(&dir.join(ingest::COUNTY_FILE), &features)?;
    ingest::write_flows(&dir.join(ingest::FLOW_FILE), flows)?;
    ingest::write_separations(&dir.join(ingest::SEPARATION_FILE), separations)?;
    Ok(())
}
