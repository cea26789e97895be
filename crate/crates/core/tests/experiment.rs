use std::fs;
use std::path::Path;

use sairod::config::ExperimentConfig;
use sairod::experiment::{read_manifest, run_experiment, Phase};
use sairod::export::{default_labels, export_dtmc, import_dtmc, ExportOptions};
use sairod::{
    build_policy_dtmc, limit_distribution, query_probability, AdaptiveConfig, Distribution,
    ModelKind, Parameters, Policy, Signal, StateVector,
};

const SMALL: &str = r#"
seed = 3
kind = "simplified"

[parameters]
n = 6
c = 2

[[initial]]
state = [5, 1, 0, 0, 0, 0]
weight = 0.5

[[initial]]
state = [4, 2, 0, 0, 0, 0]
weight = 0.5

[[policies]]
kind = "constant"
m = 2

[[policies]]
kind = "adaptive"
signal = "asymptomatic"
t_low = 0.05
t_high = 0.15
m_low = 1
m_high = 5

[queries]
steps = 12
cdf = ["d", "s"]

[sweep]
m = [1, 2, 3, 4, 5]
c = [1, 2, 3, 5]

[montecarlo]
runs = 40
depth = 8
scale = 2

[export]
stem = "chain"
"#;

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(str::to_string).collect()
}

#[test]
fn full_pipeline_writes_every_file() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = run_experiment(&cfg, dir.path(), &Phase::ALL).unwrap();
    for f in &manifest.files {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    assert_eq!(read_manifest(dir.path()).unwrap().files, manifest.files);

    let sweep = lines(&dir.path().join("sweep.csv"));
    assert_eq!(sweep[0], "m,c,states,transitions,limit_deaths_ge");
    assert_eq!(sweep.len(), 21);

    let series = lines(&dir.path().join("series_m2.csv"));
    assert_eq!(series[0], "step,deaths_ge,expected_m,l1_change");
    assert_eq!(series.len(), 14);
    let deaths: Vec<f64> = series[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(deaths.windows(2).all(|w| w[1] >= w[0] - 1e-15));

    let cdf = lines(&dir.path().join("cdf_aa.csv"));
    assert_eq!(cdf[0], "value,d,s");
    assert_eq!(cdf.len(), 8);
    assert!(cdf[7].ends_with(",1,1"));

    assert_eq!(manifest.policies.len(), 2);
    assert_eq!(manifest.montecarlo.len(), 2);
    assert!(dir.path().join("chain_aa.tra").is_file());
    let limits = lines(&dir.path().join("limits.csv"));
    assert_eq!(limits.len(), 3);
}

#[test]
fn frozen_parameters_give_constant_queries() {
    let text = SMALL.replace(
        "c = 2\n",
        "c = 2\nomega = 0.0\nbeta = 0.0\ndelta = 0.0\nmu = 0.0\nalpha = 0.0\nsigma = 0.0\nxi = 0.0\npsi = 0.0\n",
    );
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    run_experiment(&cfg, dir.path(), &[Phase::Solve]).unwrap();
    let series = lines(&dir.path().join("series_m2.csv"));
    let first = series[1].split(',').nth(1).unwrap().to_string();
    for row in &series[1..] {
        let f: Vec<&str> = row.split(',').collect();
        assert_eq!(f[1], first);
        assert_eq!(f[3], "0");
    }
}

#[test]
fn monte_carlo_outputs_are_reproducible() {
    let cfg = ExperimentConfig::from_toml(SMALL).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_experiment(&cfg, a.path(), &[Phase::MonteCarlo]).unwrap();
    run_experiment(&cfg, b.path(), &[Phase::MonteCarlo]).unwrap();
    for name in ["mc_m2.csv", "mc_m2.json", "mc_aa.csv", "mc_aa.json"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn imported_chain_answers_queries_identically() {
    let params = Parameters::reference(10, 2);
    let start = StateVector::untested(9, 1, 0, 0, 0, 0);
    let policy = Policy::adaptive(AdaptiveConfig::new(0.05, 0.15, 1, 5, Signal::Asymptomatic));
    let dtmc = build_policy_dtmc(&[start], &policy, &params, ModelKind::Simplified).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let init = dtmc.space().rank(&start).unwrap();
    export_dtmc(
        dir.path().join("aa"),
        &dtmc,
        &default_labels(dtmc.space(), &[init], 0.2),
        ExportOptions::default(),
    )
    .unwrap();
    let (back, _) = import_dtmc(dir.path().join("aa")).unwrap();
    let deaths = |v: &StateVector| v.d >= 2;
    let solve = |d: &sairod::Dtmc| {
        let x0 = Distribution::from_weights(d.space(), &[(start, 1.0)]).unwrap();
        query_probability(d.space(), &limit_distribution(d, &x0).unwrap(), deaths)
    };
    let (before, after) = (solve(&dtmc), solve(&back));
    assert!(before > 0.0);
    assert!((before - after).abs() <= 1e-12, "{before} vs {after}");
}
