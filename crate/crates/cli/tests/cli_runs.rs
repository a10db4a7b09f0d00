use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rarefuse_cli::{execute, ExperimentConfig};

fn rarefuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rarefuse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_config(output_dir: &Path) -> String {
    format!(
        r#"{{"benchmark": "linear-gaussian(beta=2.5)", "mode": "all", "m": 4000,
            "n_grid": [4, 300, 900], "repetitions": 3, "seed": 11,
            "subset": {{"N": 300, "p0": 0.1, "max_levels": 8}},
            "output_dir": {:?}}}"#,
        output_dir.to_str().unwrap()
    )
}

fn read(path: &Path) -> String {
    fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), "c.json", &small_config(&out));
    let o = rarefuse(&["run", "--config", &cfg]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["densities.json", "estimates.csv", "weights.csv", "subset.csv", "report.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }

    let estimates = read(&out.join("estimates.csv"));
    let mut lines = estimates.lines();
    assert_eq!(
        lines.next().unwrap(),
        "config_hash,seed,repetition,n_total,estimator_id,kind,n,estimate,variance,hits,rmse,cv,status"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells.len(), 13);
        if cells[12] == "ok" {
            // 17 significant digits: d.dddddddddddddddde±x
            let mantissa = cells[7].split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.replace('.', "").len(), 17, "{}", cells[7]);
        }
        if cells[3] == "4" && !["reference", "mc"].contains(&cells[4]) && !cells[4].ends_with(":full") {
            assert_eq!(cells[12], "insufficient", "{line}");
        }
    }

    let weights = read(&out.join("weights.csv"));
    let mut lines = weights.lines();
    assert_eq!(
        lines.next().unwrap(),
        "config_hash,seed,repetition,n_total,q1,q2,q3,excluded,status"
    );
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[8] == "ok" {
            let total: f64 = cells[4..7].iter().map(|c| c.parse::<f64>().unwrap()).sum();
            assert!((total - 1.0).abs() < 1e-12, "{line}");
        }
    }

    let subset = read(&out.join("subset.csv"));
    assert_eq!(
        subset.lines().next().unwrap(),
        "config_hash,seed,repetition,samples,samples_each_level,levels,failure_prob,estimated_cov,converged"
    );
    assert_eq!(subset.lines().count(), 4);

    let report: serde_json::Value = serde_json::from_str(&read(&out.join("report.json"))).unwrap();
    assert_eq!(report["config"]["seed"], 11);
    assert!(report["timings"].as_array().unwrap().len() >= 3);
}

#[test]
fn worker_count_does_not_change_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let mut contents = Vec::new();
    for workers in ["1", "3"] {
        let out = tmp.path().join(format!("out{workers}"));
        let cfg = write_config(tmp.path(), &format!("c{workers}.json"), &small_config(&out));
        let o = rarefuse(&["--workers", workers, "run", "--config", &cfg]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        contents.push(
            ["estimates.csv", "weights.csv", "subset.csv"]
                .map(|f| fs::read(out.join(f)).unwrap()),
        );
    }
    assert_eq!(contents[0], contents[1]);
}

#[test]
fn invalid_configs_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let unknown = small_config(&out).replace("\"seed\"", "\"sede\": 1, \"seed\"");
    let cfg = write_config(tmp.path(), "bad.json", &unknown);
    assert_eq!(rarefuse(&["run", "--config", &cfg]).status.code(), Some(2));
    let bad_mode = small_config(&out).replace("\"all\"", "\"everything\"");
    let cfg = write_config(tmp.path(), "bad2.json", &bad_mode);
    assert_eq!(rarefuse(&["run", "--config", &cfg]).status.code(), Some(2));
    let missing = tmp.path().join("nope.json");
    assert_eq!(
        rarefuse(&["run", "--config", missing.to_str().unwrap()]).status.code(),
        Some(2)
    );
    assert!(!out.exists());
}

#[test]
fn benchmarks_and_oracle_commands() {
    let o = rarefuse(&["benchmarks", "list"]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("linear-gaussian") && text.contains("arrhenius-2d"));

    let o = rarefuse(&["oracle", "--benchmark", "linear-gaussian", "--resolution", "101"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["probability"].as_f64().unwrap() / 2.326_290_790_355_250_4e-4 - 1.0).abs() < 1e-12);

    let o = rarefuse(&["oracle", "--benchmark", "arrhenius-2d", "--resolution", "401"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["refinement_delta"].is_f64());

    let o = rarefuse(&["oracle", "--benchmark", "arrhenius-2d", "--resolution", "50"]);
    assert_eq!(o.status.code(), Some(2));
    let o = rarefuse(&["oracle", "--benchmark", "nope", "--resolution", "101"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fallback_density_gets_the_smallest_weight() {
    let config = ExperimentConfig::from_json(
        r#"{"benchmark": "linear-gaussian", "mode": "convergence", "n_grid": [300, 3000],
            "repetitions": 20, "seed": 4, "reference": false, "mc_baseline": false,
            "output_dir": "unused"}"#,
    )
    .unwrap();
    let report = execute(&config).unwrap();
    let fallback: Vec<usize> = report
        .densities
        .iter()
        .enumerate()
        .filter(|(_, d)| d.build.fell_back_to_nominal)
        .map(|(i, _)| i)
        .collect();
    assert!(fallback.contains(&2), "the constant surrogate always falls back");
    let fitted: Vec<usize> = (0..3).filter(|i| !fallback.contains(i)).collect();
    assert!(!fitted.is_empty());
    let largest = *config.n_grid.last().unwrap();
    let rows: Vec<_> = report.weights.iter().filter(|w| w.n_total == largest).collect();
    let dominated = rows
        .iter()
        .filter(|w| {
            fallback
                .iter()
                .all(|&f| fitted.iter().all(|&j| w.weights[f] <= w.weights[j]))
        })
        .count();
    assert!(dominated as f64 >= 0.8 * rows.len() as f64, "{dominated} of {}", rows.len());
}

#[test]
fn fused_cv_never_exceeds_worst_density_cv() {
    let config = ExperimentConfig::from_json(
        r#"{"benchmark": "linear-gaussian(beta=2.5)", "mode": "convergence", "m": 20000,
            "n_grid": [300, 600, 900, 1200], "repetitions": 3, "output_dir": "unused"}"#,
    )
    .unwrap();
    let report = execute(&config).unwrap();
    for n in &config.n_grid {
        for rep in 0..3 {
            let rows: Vec<_> = report
                .estimates
                .iter()
                .filter(|r| r.n_total == *n && r.repetition == rep)
                .collect();
            let fused = rows.iter().find(|r| r.estimator_id == "fused").unwrap();
            let worst = rows
                .iter()
                .filter(|r| r.estimator_id.starts_with('q'))
                .filter_map(|r| r.cv)
                .fold(0.0, f64::max);
            assert!(fused.cv.unwrap() <= worst, "n={n} rep={rep}");
        }
    }
}
