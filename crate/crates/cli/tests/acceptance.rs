//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero if any fail.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;

use tripgrav_core::analysis::{assign_segment, segment_thresholds};
use tripgrav_core::gravity::{calibrate_loglinear, GravityObservation, GravityParams};
use tripgrav_core::importance::{impurity_importance, permutation_importance};
use tripgrav_core::ingest::{assemble_dataset, train_test_split, AssemblyOptions, Dataset, ScalerKind};
use tripgrav_core::metrics::{cpc, error_improvement, mae, r_squared, score_improvement, Segment};
use tripgrav_core::ml::{
    gbr_fit, mlp_fit, BoostConfig, FittedModel, ForestConfig, MaxFeatures, Mlp, MlpConfig, ModelSpec,
};
use tripgrav_core::model::{DatasetVariant, FeaturizedRecord, Fips, FlowRecord, SeparationMap};
use tripgrav_core::rng;
use tripgrav_core::synth::{
    generate_counties, generate_gravity_flows, generate_nonlinear_flows, synth_separations, Schedule, SynthCounty,
};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let spent = start.elapsed();
    check(spent < budget, || format!("took {:.2}s, budget {:.0}s", spent.as_secs_f64(), budget.as_secs_f64()))
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

// Brute-force references, written independently of the library.
fn oracle_r2(y: &[f64], p: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mut mean = 0.0;
    for v in y {
        mean += v;
    }
    mean /= n;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..y.len() {
        num += (y[i] - p[i]) * (y[i] - p[i]);
        den += (y[i] - mean) * (y[i] - mean);
    }
    1.0 - num / den
}

fn oracle_mae(y: &[f64], p: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..y.len() {
        s += if y[i] > p[i] { y[i] - p[i] } else { p[i] - y[i] };
    }
    s / y.len() as f64
}

fn oracle_cpc(g: &[f64], r: &[f64]) -> f64 {
    let (mut common, mut tg, mut tr) = (0.0, 0.0, 0.0);
    for i in 0..g.len() {
        common += if g[i] < r[i] { g[i] } else { r[i] };
        tg += g[i];
        tr += r[i];
    }
    2.0 * common / (tg + tr)
}

fn as_map(v: &[f64]) -> BTreeMap<String, f64> {
    v.iter().enumerate().map(|(i, x)| (format!("pair-{i:03}"), *x)).collect()
}

fn ac1() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for s in 0..100u64 {
        let mut r = rng::seeded(1000 + s);
        let n = r.random_range(3..=50);
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let p: Vec<f64> = (0..n).map(|_| r.random_range(0.0..100.0)).collect();
        let pairs = [
            (r_squared(&y, &p).map_err(|e| e.to_string())?, oracle_r2(&y, &p)),
            (mae(&y, &p).map_err(|e| e.to_string())?, oracle_mae(&y, &p)),
            (cpc(&as_map(&p), &as_map(&y)).map_err(|e| e.to_string())?, oracle_cpc(&p, &y)),
        ];
        for (got, want) in pairs {
            worst = worst.max(rel(got, want));
        }
    }
    check(worst <= 1e-12, || format!("max relative error {worst:e}"))?;
    within_budget(start, Duration::from_secs(1))?;
    Ok(format!("100 vector pairs, max relative error {worst:.1e}"))
}

/// (model, metric, traditional, data-driven, published %) for TN then NY.
const TABLE: [(&str, &str, f64, f64, f64); 18] = [
    ("NN", "MAE", 0.1026, 0.0622, 39.38),
    ("NN", "R2", 0.8274, 0.9406, 13.68),
    ("NN", "CPC", 0.7206, 0.8412, 16.73),
    ("RF", "MAE", 0.0420, 0.0402, 4.29),
    ("RF", "R2", 0.9746, 0.9781, 0.36),
    ("RF", "CPC", 0.9121, 0.9169, 0.53),
    ("GB", "MAE", 0.1070, 0.0957, 10.56),
    ("GB", "R2", 0.8814, 0.9180, 4.15),
    ("GB", "CPC", 0.7554, 0.7894, 4.50),
    ("NN", "MAE", 0.0879, 0.0320, 63.59),
    ("NN", "R2", 0.6444, 0.9762, 51.48),
    ("NN", "CPC", 0.6295, 0.9085, 44.32),
    ("RF", "MAE", 0.0255, 0.0208, 18.43),
    ("RF", "R2", 0.9755, 0.9874, 1.22),
    ("RF", "CPC", 0.9291, 0.9456, 1.78),
    ("GB", "MAE", 0.0620, 0.0527, 15.0),
    ("GB", "R2", 0.9395, 0.9654, 2.75),
    ("GB", "CPC", 0.8231, 0.8631, 4.86),
];

fn ac2() -> Outcome {
    let mut worst: f64 = 0.0;
    for (model, metric, trad, dd, published) in TABLE {
        let got = if metric == "MAE" { error_improvement(trad, dd) } else { score_improvement(trad, dd) };
        let gap = (got - published).abs();
        // Published values are rounded to two decimals.
        check(gap <= 0.01 + 1e-9, || format!("{model} {metric}: {got:.4}% vs published {published}%"))?;
        worst = worst.max(gap);
    }
    Ok(format!("18 rows, largest gap {worst:.4} pp"))
}

fn observations(counties: &[SynthCounty], flows: &[FlowRecord], seps: &SeparationMap) -> Vec<GravityObservation> {
    let pop: BTreeMap<&Fips, f64> = counties.iter().map(|c| (c.fips(), c.features.population())).collect();
    flows
        .iter()
        .map(|f| GravityObservation {
            p_origin: pop[&f.origin],
            p_dest: pop[&f.dest],
            distance: seps[&(f.origin.clone(), f.dest.clone())].distance,
            flow: f.flow,
        })
        .collect()
}

fn recover(n_counties: usize, n_pairs: usize, sigma: f64, seed: u64) -> Result<GravityParams, String> {
    let truth = GravityParams { k: 2.0, lambda: 0.8, alpha: 1.1, beta: 1.5 };
    let counties = generate_counties(n_counties, seed).map_err(|e| e.to_string())?;
    let seps = synth_separations(&counties, seed);
    let flows = generate_gravity_flows(&counties, &seps, &truth, sigma, Schedule::new(1), seed).map_err(|e| e.to_string())?;
    let obs = observations(&counties, &flows[..n_pairs], &seps);
    calibrate_loglinear(&obs, None).map(|(p, _)| p).map_err(|e| e.to_string())
}

fn ac3() -> Outcome {
    let start = Instant::now();
    let truth = [2.0, 0.8, 1.1, 1.5];
    let p = recover(11, 100, 0.0, 3)?;
    let exact = [p.k, p.lambda, p.alpha, p.beta];
    let abs_err = exact.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    check(abs_err <= 1e-6, || format!("noiseless absolute error {abs_err:e}"))?;

    let mut mean_rel = [0.0; 4];
    for seed in 0..5 {
        let p = recover(33, 1000, 0.05, 100 + seed)?;
        for (m, (got, want)) in mean_rel.iter_mut().zip([p.k, p.lambda, p.alpha, p.beta].iter().zip(truth)) {
            *m += ((got - want) / want).abs() / 5.0;
        }
    }
    let worst = mean_rel.iter().copied().fold(0.0, f64::max);
    check(worst < 0.05, || format!("noisy mean relative errors {mean_rel:?}"))?;
    within_budget(start, Duration::from_secs(5))?;
    Ok(format!("noiseless error {abs_err:.1e}; noisy mean relative error <= {:.2}%", worst * 100.0))
}

fn split(counties: &[SynthCounty], flows: &[FlowRecord], seps: &SeparationMap, v: DatasetVariant, seed: u64) -> Result<(Dataset, Dataset), String> {
    let features: Vec<_> = counties.iter().map(|c| c.features.clone()).collect();
    let ds = assemble_dataset(&features, flows, seps, v, AssemblyOptions::default()).map_err(|e| e.to_string())?;
    train_test_split(&ds, 0.2, seed, ScalerKind::Zscore).map_err(|e| e.to_string())
}

fn test_mae(spec: ModelSpec, train: &Dataset, test: &Dataset) -> Result<f64, String> {
    let m = spec.fit(train).map_err(|e| e.to_string())?;
    let p = m.predict_dataset(test).map_err(|e| e.to_string())?;
    mae(&test.ys(), &p).map_err(|e| e.to_string())
}

fn ac4() -> Outcome {
    let start = Instant::now();
    let seed = 1;
    let counties = generate_counties(50, seed).map_err(|e| e.to_string())?;
    let seps = synth_separations(&counties, seed);
    let flows = generate_nonlinear_flows(&counties, &seps, 7, seed).map_err(|e| e.to_string())?;
    let (tr1, te1) = split(&counties, &flows, &seps, DatasetVariant::Dataset1, seed)?;
    let (tr2, te2) = split(&counties, &flows, &seps, DatasetVariant::Dataset2, seed)?;

    let gravity = test_mae(ModelSpec::Gravity { log_shift: None }, &tr1, &te1)?;
    let rf = test_mae(ModelSpec::Forest(ForestConfig { seed, ..Default::default() }), &tr2, &te2)?;
    let gbr = test_mae(ModelSpec::Boosting(BoostConfig { seed, ..Default::default() }), &tr2, &te2)?;
    let mlp = MlpConfig { seed, ..Default::default() };
    let mlp1 = test_mae(ModelSpec::Mlp(mlp.clone()), &tr1, &te1)?;
    let mlp2 = test_mae(ModelSpec::Mlp(mlp), &tr2, &te2)?;
    let rf_gain = error_improvement(gravity, rf);
    let gbr_gain = error_improvement(gravity, gbr);
    let summary = format!(
        "gravity {gravity:.4}, RF {rf:.4} ({rf_gain:.1}%), GBR {gbr:.4} ({gbr_gain:.1}%), MLP D1 {mlp1:.4} vs D2 {mlp2:.4}"
    );
    check(rf_gain >= 30.0 && gbr_gain >= 30.0 && mlp2 < mlp1, || summary.clone())?;
    within_budget(start, Duration::from_secs(120))?;
    Ok(format!("{summary} [{:.0}s]", start.elapsed().as_secs_f64()))
}

fn ac5() -> Outcome {
    let start = Instant::now();
    let cfg = MlpConfig { dropout_rate: 0.0, use_batch_norm: false, seed: 5, ..Default::default() };
    let mut r = rng::seeded(55);
    let x: Vec<Vec<f64>> = (0..3).map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut net = Mlp::new(5, &cfg).map_err(|e| e.to_string())?;
    let (_, grad) = net.batch_loss_gradient(&x, &y).map_err(|e| e.to_string())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let orig = net.parameters()[i];
        net.parameters_mut()[i] = orig + h;
        let up = net.batch_loss(&x, &y).map_err(|e| e.to_string())?;
        net.parameters_mut()[i] = orig - h;
        let down = net.batch_loss(&x, &y).map_err(|e| e.to_string())?;
        net.parameters_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        if grad[i].abs().max(numeric.abs()) < 1e-10 {
            continue;
        }
        let e = rel(grad[i], numeric);
        check(e <= 1e-4, || format!("parameter {i}: analytic {} vs numeric {numeric}", grad[i]))?;
        worst = worst.max(e);
    }
    within_budget(start, Duration::from_secs(5))?;
    Ok(format!("{} parameters, max relative error {worst:.1e}", grad.len()))
}

fn ac6() -> Outcome {
    let mut r = rng::seeded(66);
    let x: Vec<Vec<f64>> = (0..300).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|v| (3.0 * v[0]).sin() + v[1] * v[2] + 0.05 * r.random_range(-1.0..1.0)).collect();
    let cfg = BoostConfig { n_estimators: 100, subsample: 1.0, max_depth: Some(3), learning_rate: 0.1, ..Default::default() };
    let gbr = gbr_fit(&x, &y, &cfg).map_err(|e| e.to_string())?;
    let mse: Vec<f64> = gbr
        .staged_predict(&x)
        .iter()
        .map(|p| p.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
        .collect();
    for (m, w) in mse.windows(2).enumerate() {
        check(w[1] <= w[0] * (1.0 + 1e-12), || format!("stage {}: MSE rose {} -> {}", m + 1, w[0], w[1]))?;
    }

    let x_lin: Vec<Vec<f64>> = (0..256).map(|_| vec![r.random_range(0.0..1.0)]).collect();
    let y_lin: Vec<f64> = x_lin.iter().map(|v| 2.0 * v[0] + 1.0).collect();
    let mlp = mlp_fit(&x_lin, &y_lin, &MlpConfig { epochs: 200, seed: 6, ..Default::default() }).map_err(|e| e.to_string())?;
    let (first, last) = (mlp.loss_history[0], mlp.loss_history[199]);
    check(last < 0.1 * first, || {
        format!("MLP L1 loss epoch 1 {first:.4}, epoch 200 {last:.4} (ratio {:.3}, need < 0.1)", last / first)
    })?;
    Ok(format!(
        "GBR MSE {:.4} -> {:.4} over 100 stages; MLP L1 {first:.4} -> {last:.4}",
        mse[0], mse[100]
    ))
}

fn ac7() -> Outcome {
    let ints: Vec<f64> = (1..=100).map(f64::from).collect();
    let t = segment_thresholds(&ints).map_err(|e| e.to_string())?;
    let oracle = |p: f64| {
        let r = 1.0 + p * 99.0;
        let lo = r.floor();
        lo + (r - lo) * 1.0
    };
    check(
        (t.low - oracle(0.33)).abs() < 1e-12 && (t.high - oracle(0.66)).abs() < 1e-12,
        || format!("1..100 thresholds {} / {}", t.low, t.high),
    )?;
    check((t.low - 33.67).abs() < 1e-9 && (t.high - 66.34).abs() < 1e-9, || {
        format!("1..100 thresholds {} / {}", t.low, t.high)
    })?;

    let mut r = rng::seeded(77);
    let mut set = BTreeSet::new();
    while set.len() < 10_000 {
        set.insert(r.random_range(0.0..500.0_f64).to_bits());
    }
    let distances: Vec<f64> = set.into_iter().map(f64::from_bits).collect();
    let t = segment_thresholds(&distances).map_err(|e| e.to_string())?;
    let mut counts = [0usize; 3];
    for &d in &distances {
        let i = match assign_segment(d, t).map_err(|e| e.to_string())? {
            Segment::Short => 0,
            Segment::Medium => 1,
            Segment::Long => 2,
        };
        counts[i] += 1;
    }
    let third = distances.len() as f64 / 3.0;
    let ok = counts.iter().all(|&c| (c as f64 - third).abs() <= 1.0);
    let detail = format!("percentiles 33.67/66.34 exact; 10000 distances split {}/{}/{}", counts[0], counts[1], counts[2]);
    check(ok, || format!("{detail}, each must be within 1 of {third:.2}"))?;
    Ok(detail)
}

fn run(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_tripgrav"))
        .current_dir(dir)
        .env_remove("TRIPGRAV_SEED")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))?;
    Ok(out.stdout)
}

fn read(dir: &Path, f: &str) -> Result<Vec<u8>, String> {
    std::fs::read(dir.join(f)).map_err(|e| format!("{f}: {e}"))
}

fn ac8() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let mut compared = 0;
    for (jobs, name) in [("1", "a"), ("4", "b")] {
        run(d, &["--jobs", jobs, "synth", "--counties", "15", "--days", "7", "--seed", "8", "--out", &format!("{name}/data")])?;
        let data = format!("{name}/data");
        let common = ["--jobs", jobs, "train", "--data", &data, "--seed", "8"];
        let out = |f: &str| format!("{name}/{f}");
        run(d, &[&common[..], &["--model", "gravity", "--variant", "dataset1", "--out", &out("g.json")]].concat())?;
        run(d, &[&common[..], &["--model", "rf", "--out", &out("rf.json")]].concat())?;
        run(d, &[&common[..], &["--model", "gbr", "--param", "n_estimators=50", "--out", &out("gbr.json")]].concat())?;
        run(d, &[&common[..], &["--model", "mlp", "--param", "epochs=5", "--out", &out("mlp.json")]].concat())?;
        run(
            d,
            &[&common[..], &["--model", "rf", "--tune", "--n-iter", "4", "--folds", "3", "--param", "n_estimators=20", "--out", &out("rf_tuned.json")]]
                .concat(),
        )?;
        let tune = run(d, &["--jobs", jobs, "tune", "--data", &data, "--seed", "8", "--model", "gbr", "--n-iter", "3", "--param", "n_estimators=30"])?;
        std::fs::write(d.join(out("tune.json")), tune).map_err(|e| e.to_string())?;
        let models = [&out("rf.json"), &out("gbr.json"), &out("mlp.json")];
        let baseline = out("g.json");
        let mut args = vec!["--jobs", jobs, "evaluate", "--data", &data, "--baseline", &baseline];
        for m in &models {
            args.extend(["--model", m.as_str()]);
        }
        let ev = out("ev");
        args.extend(["--repeats", "2", "--seed", "8", "--out-dir", &ev]);
        run(d, &args)?;
    }
    let files = [
        "data/county_features.csv",
        "data/flows.csv",
        "data/separations.csv",
        "g.json",
        "rf.json",
        "gbr.json",
        "mlp.json",
        "rf_tuned.json",
        "tune.json",
        "ev/report.json",
        "ev/comparison.txt",
        "ev/segments.csv",
        "ev/days.csv",
        "ev/features.txt",
    ];
    for f in files {
        let a = read(d, &format!("a/{f}"))?;
        let b = read(d, &format!("b/{f}"))?;
        check(a == b, || format!("{f} differs between --jobs 1 and --jobs 4"))?;
        compared += 1;
    }
    let again = tmp.path().join("c");
    std::fs::create_dir_all(&again).map_err(|e| e.to_string())?;
    run(d, &["--jobs", "4", "train", "--data", "a/data", "--seed", "8", "--model", "mlp", "--param", "epochs=5", "--out", "c/mlp.json"])?;
    check(read(d, "a/mlp.json")? == read(d, "c/mlp.json")?, || "MLP rerun differs".into())?;
    Ok(format!("{} artifacts byte-identical across reruns with --jobs 1 and 4", compared + 1))
}

fn linear_dataset(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, Dataset) {
    let mut r = rng::seeded(seed);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| r.random_range(0.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|v| 10.0 * v[0] + 0.1 * v[1]).collect();
    let records = x
        .iter()
        .zip(&y)
        .map(|(x, &y)| FeaturizedRecord {
            origin: Fips::new("00001").expect("fips"),
            dest: Fips::new("00002").expect("fips"),
            date: None,
            x: x.clone(),
            y,
            day_type: None,
            distance_raw: 1.0,
        })
        .collect();
    (x, y, Dataset { variant: DatasetVariant::Dataset1, records, scaler: None })
}

fn ac9() -> Outcome {
    let (x, y, ds) = linear_dataset(90, 200);
    let forest = ModelSpec::Forest(ForestConfig { n_estimators: 10, max_depth: Some(2), max_features: MaxFeatures::All, seed: 9, ..Default::default() })
        .fit(&ds)
        .map_err(|e| e.to_string())?;
    let used: BTreeSet<usize> = forest.trees().iter().flat_map(|t| t.split_features()).collect();
    check(used.len() < 4, || "every feature is used; nothing to test".into())?;
    let perm = permutation_importance(&forest, &ds, 3, 9).map_err(|e| e.to_string())?;
    for f in &perm {
        if !used.contains(&f.index) {
            check(f.importance == 0.0, || format!("unused feature {} has importance {}", f.label, f.importance))?;
        }
    }
    let imp = impurity_importance(&forest, &ds.variant.feature_labels()).map_err(|e| e.to_string())?;
    let total: f64 = imp.iter().map(|f| f.importance).sum();
    check((total - 1.0).abs() <= 1e-12, || format!("impurity importances sum to {total}"))?;

    let mut wins = 0;
    for s in 0..20u64 {
        let (x, y, ds) = linear_dataset(900 + s, 200);
        let cfg = BoostConfig { n_estimators: 100, max_depth: Some(2), learning_rate: 0.1, seed: s, ..Default::default() };
        let m = FittedModel::Boosting(gbr_fit(&x, &y, &cfg).map_err(|e| e.to_string())?);
        let ranking = permutation_importance(&m, &ds, 5, s).map_err(|e| e.to_string())?;
        let pos = |i: usize| ranking.iter().position(|f| f.index == i).expect("ranked");
        if pos(0) < pos(1) {
            wins += 1;
        }
    }
    let _ = (x, y);
    check(wins >= 19, || format!("x0 outranked x1 in {wins}/20 runs"))?;
    Ok(format!(
        "{} unused features at exactly 0; impurity sum error {:.1e}; x0 first in {wins}/20 runs",
        4 - used.len(),
        (total - 1.0).abs()
    ))
}

fn ac10() -> Outcome {
    let mut worst: f64 = 0.0;
    for s in 0..50u64 {
        let mut r = rng::seeded(5000 + s);
        let n = r.random_range(2..40);
        let mut g = BTreeMap::new();
        let mut real = BTreeMap::new();
        for i in 0..n {
            if r.random_bool(0.9) {
                g.insert(i, r.random_range(0.0..50.0));
            }
            if r.random_bool(0.9) {
                real.insert(i, r.random_range(0.0..50.0));
            }
        }
        real.entry(n).or_insert(1.0);
        g.entry(n + 1).or_insert(1.0);
        let tg: f64 = g.values().sum();
        let tr: f64 = real.values().sum();
        for v in g.values_mut() {
            *v *= tr / tg;
        }
        let keys: BTreeSet<usize> = g.keys().chain(real.keys()).copied().collect();
        let abs: f64 = keys
            .iter()
            .map(|k| (g.get(k).copied().unwrap_or(0.0) - real.get(k).copied().unwrap_or(0.0)).abs())
            .sum();
        let accuracy = 1.0 - abs / (2.0 * real.values().sum::<f64>());
        let c = cpc(&g, &real).map_err(|e| e.to_string())?;
        worst = worst.max((c - accuracy).abs());
    }
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("50 rescaled map pairs, max deviation {worst:.1e}"))
}

fn main() {
    let criteria: [(&str, &str, fn() -> Outcome); 10] = [
        ("AC1", "metric oracle equivalence", ac1),
        ("AC2", "published improvement arithmetic", ac2),
        ("AC3", "gravity calibration recovery", ac3),
        ("AC4", "learned models beat the gravity baseline", ac4),
        ("AC5", "MLP gradient check", ac5),
        ("AC6", "GBR and MLP training monotonicity", ac6),
        ("AC7", "distance segmentation", ac7),
        ("AC8", "determinism across reruns and --jobs", ac8),
        ("AC9", "importance sanity", ac9),
        ("AC10", "CPC equals accuracy when totals match", ac10),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("{id} PASS {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id} FAIL {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
