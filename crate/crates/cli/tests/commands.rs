use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Duration, NaiveDate};
use serde_json::Value;
use socialgame::equilibrium::SolverParams;
use socialgame::game::GameConfig;
use socialgame::pipeline::ingest::write_votes;
use socialgame::synthetic::{even_schedule, generate_votes, population, SyntheticConfig};

const TZ: chrono_tz::Tz = chrono_tz::America::Los_Angeles;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_socialgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_json(p: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

/// Best response of one active player against fixed default votes, by
/// bisection on its first-order condition.
fn best_response(theta: f64, defaults: &[f64]) -> f64 {
    let (baseline, n) = (90.0, (defaults.len() + 1) as f64);
    let others: f64 = defaults.iter().sum();
    let foc = |x: f64| {
        let sum = x + others;
        2.0 * (1.0 - 1.0 / n) * (sum / n - x) + theta * (-1.0 / (baseline - x) + 1.0 / (n * baseline - sum))
    };
    let (mut lo, mut hi) = (0.0, 89.0);
    assert!(foc(lo) > 0.0 && foc(hi) < 0.0, "fixture must have an interior optimum");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if foc(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Occupant `a` plays its exact best response each day against defaults of
/// `b`..`d`; one Daylight round per day.
fn foc_log(dir: &Path, theta: f64) -> PathBuf {
    let mut csv = String::from("timestamp,occupant_id,vote,is_default\n");
    let start = NaiveDate::from_ymd_opt(2014, 3, 3).unwrap();
    for k in 0..30 {
        let defaults: Vec<f64> = (0..3).map(|j| 40.0 + ((k * 7 + j * 13) % 45) as f64).collect();
        let x = best_response(theta, &defaults);
        let day = start + Duration::days(k as i64);
        csv.push_str(&format!("{day}T12:00:00-08:00,a,{x},false\n"));
        for (j, v) in defaults.iter().enumerate() {
            csv.push_str(&format!("{day}T12:0{}:00-08:00,{},{v},true\n", j + 1, ["b", "c", "d"][j]));
        }
    }
    let p = dir.join("votes.csv");
    std::fs::write(&p, csv).unwrap();
    p
}

fn synthetic_inputs(dir: &Path, days: usize) -> (PathBuf, PathBuf) {
    let start = NaiveDate::from_ymd_opt(2014, 3, 3).unwrap();
    let schedule = even_schedule(start, days, &[20.0, 10.0, 60.0, 90.0]);
    let sc = SyntheticConfig {
        start,
        days,
        noise_sd: 1.0,
        seed: 5,
    };
    let cfg = GameConfig::new(100.0, 90.0).unwrap();
    let records = generate_votes(&population(6, 5), &schedule, &cfg, &SolverParams::default(), &sc, TZ).unwrap();
    let votes = dir.join("votes.csv");
    let mut buf = Vec::new();
    write_votes(&mut buf, &records).unwrap();
    std::fs::write(&votes, buf).unwrap();
    let periods = dir.join("periods.csv");
    let mut text = String::from("start,end,default_level\n");
    for p in schedule.periods() {
        text.push_str(&format!("{},{},{}\n", p.start, p.end, p.default_level));
    }
    std::fs::write(&periods, text).unwrap();
    (votes, periods)
}

#[test]
fn estimate_recovers_exact_theta_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let votes = foc_log(dir.path(), 250.0);
    let outs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("out{k}"))).collect();
    for out in &outs {
        let o = run(&[
            "estimate", "--votes", path(&votes), "--default-level", "20", "--strata", "pooled",
            "--bootstrap", "40", "--seed", "3", "--out", path(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(outs[0].join("estimates.jsonl")).unwrap();
    let rows: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let a = rows.iter().find(|r| r["occupant"] == "a").unwrap();
    let theta_hat = a["theta_hat"].as_f64().unwrap();
    assert!((theta_hat - 250.0).abs() / 250.0 < 1e-6, "theta_hat = {theta_hat}");
    assert!(a["reliable"].as_bool().unwrap());
    // Noise-free rounds: every resample reproduces the estimate.
    assert!(a["boot_std"].as_f64().unwrap() < 1e-6);

    for name in ["estimates.jsonl", "estimates.csv", "report.txt", "manifest.json"] {
        assert_eq!(
            std::fs::read(outs[0].join(name)).unwrap(),
            std::fs::read(outs[1].join(name)).unwrap(),
            "{name} differs between runs"
        );
    }
    let m = read_json(outs[0].join("manifest.json"));
    assert_eq!(m["command"], "estimate");
    assert_eq!(m["seeds"]["bootstrap"], 3);
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn estimate_with_thread_cap_matches_default() {
    let dir = tempfile::tempdir().unwrap();
    let votes = foc_log(dir.path(), 40.0);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let base = ["estimate", "--votes", path(&votes), "--default-level", "20", "--bootstrap", "30"];
    let o = run(&[&base[..], &["--out", path(&a)]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(&[&base[..], &["--threads", "1", "--out", path(&b)]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(a.join("estimates.jsonl")).unwrap(),
        std::fs::read(b.join("estimates.jsonl")).unwrap()
    );
}

#[test]
fn empty_vote_file_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("empty-votes.csv");
    std::fs::write(&votes, "").unwrap();
    let o = run(&["estimate", "--votes", path(&votes), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("empty-votes.csv"), "{}", stderr(&o));
}

#[test]
fn no_estimable_occupant_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("votes.csv");
    std::fs::write(
        &votes,
        "timestamp,occupant_id,vote,is_default\n2014-03-03T12:00:00-08:00,a,20,true\n2014-03-03T12:01:00-08:00,b,20,true\n",
    )
    .unwrap();
    let o = run(&["estimate", "--votes", path(&votes), "--out", path(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("insufficient data"), "{}", stderr(&o));
}

#[test]
fn exit_codes_for_usage_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["estimate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("nope.csv");
    let o = run(&["estimate", "--votes", path(&missing), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.csv"));
    let votes = foc_log(dir.path(), 10.0);
    let o = run(&["estimate", "--votes", path(&votes), "--rho", "-1", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["estimate", "--votes", path(&votes), "--strata", "weekly", "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn simulate_with_zero_theta_keeps_a_consensus_profile() {
    let dir = tempfile::tempdir().unwrap();
    let players = dir.path().join("players.csv");
    std::fs::write(&players, "occupant,theta,role,vote\na,0,active,40\nb,0,active,40\nc,0,default,40\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--theta", path(&players), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(out.join("equilibrium.json"));
    assert!(r["converged"].as_bool().unwrap());
    for p in r["players"].as_array().unwrap() {
        assert_eq!(p["vote"].as_f64().unwrap(), 40.0);
    }
}

#[test]
fn simulate_single_active_matches_bisection() {
    let dir = tempfile::tempdir().unwrap();
    let players = dir.path().join("players.csv");
    std::fs::write(&players, "occupant,theta,role,vote\na,120,active,\nb,0,default,55\nc,0,default,70\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--theta", path(&players), "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r = read_json(out.join("equilibrium.json"));
    let got = r["players"][0]["vote"].as_f64().unwrap();
    assert!((got - best_response(120.0, &[55.0, 70.0])).abs() < 1e-4, "{got}");
    assert!(r["certified"].as_bool().unwrap());
}

#[test]
fn simulate_iteration_cap_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let players = dir.path().join("players.csv");
    std::fs::write(&players, "occupant,theta,role,vote\na,120,active,10\nb,0,default,55\n").unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--theta", path(&players), "--max-iters", "3", "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!read_json(out.join("equilibrium.json"))["converged"].as_bool().unwrap());
}

#[test]
fn predict_then_evaluate_on_model_data() {
    let dir = tempfile::tempdir().unwrap();
    let (votes, periods) = synthetic_inputs(dir.path(), 28);
    let pred = dir.path().join("pred");
    let o = run(&[
        "predict", "--votes", path(&votes), "--periods", path(&periods), "--samples", "20", "--seed", "9",
        "--out", path(&pred),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let file = read_json(pred.join("predictions.json"));
    let days = file["days"].as_array().unwrap();
    assert_eq!(days.len(), 27);
    assert_eq!(days[0]["samples"][0]["implemented"]["samples"].as_array().unwrap().len(), 20);
    assert_eq!(read_json(pred.join("manifest.json"))["seeds"]["prediction"], 9);

    let eval = dir.path().join("eval");
    let o = run(&[
        "evaluate", "--predictions", path(&pred.join("predictions.json")), "--votes", path(&votes),
        "--periods", path(&periods), "--out", path(&eval),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mse = read_json(eval.join("mse.json"));
    let row = |table: &str, model: &str| -> f64 {
        mse[table]["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r[0] == model)
            .unwrap()[1]
            .as_f64()
            .unwrap()
    };
    assert_eq!(mse["implemented"]["rows"].as_array().unwrap().len(), 4);
    assert!(row("implemented", "nash") <= row("implemented", "constant"));
    let text = std::fs::read_to_string(eval.join("mse.txt")).unwrap();
    assert!(text.contains("implemented") && text.contains("votes"));

    // A forecast equal to the truth scores zero; the baselines do not.
    let mut perfect = file.clone();
    for d in perfect["days"].as_array_mut().unwrap() {
        d["nash"] = d["truth"].clone();
        for v in d["votes"].as_array_mut().unwrap() {
            v["nash"] = v["truth"].clone();
        }
    }
    let perfect_path = dir.path().join("perfect.json");
    std::fs::write(&perfect_path, serde_json::to_string(&perfect).unwrap()).unwrap();
    let eval2 = dir.path().join("eval2");
    let o = run(&[
        "evaluate", "--predictions", path(&perfect_path), "--votes", path(&votes), "--periods", path(&periods),
        "--out", path(&eval2),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mse = read_json(eval2.join("mse.json"));
    for table in ["implemented", "votes"] {
        for r in mse[table]["rows"].as_array().unwrap() {
            let v = r[1].as_f64().unwrap();
            if r[0] == "nash" {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0, "{table} {} = {v}", r[0]);
            }
        }
    }
}

#[test]
fn evaluate_lists_days_missing_from_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (votes, periods) = synthetic_inputs(dir.path(), 6);
    let pred = dir.path().join("pred");
    let o = run(&["predict", "--votes", path(&votes), "--periods", path(&periods), "--samples", "4", "--out", path(&pred)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = std::fs::read_to_string(&votes).unwrap();
    let short: String = text
        .lines()
        .filter(|l| !l.starts_with("2014-03-07") && !l.starts_with("2014-03-08T0"))
        .map(|l| format!("{l}\n"))
        .collect();
    let short_votes = dir.path().join("short.csv");
    std::fs::write(&short_votes, short).unwrap();
    let o = run(&[
        "evaluate", "--predictions", path(&pred.join("predictions.json")), "--votes", path(&short_votes),
        "--periods", path(&periods), "--out", path(&dir.path().join("e")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("2014-03-07"), "{}", stderr(&o));
}

#[test]
fn predict_with_fixed_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let (votes, periods) = synthetic_inputs(dir.path(), 8);
    let est = dir.path().join("est");
    let o = run(&["estimate", "--votes", path(&votes), "--periods", path(&periods), "--bootstrap", "0", "--out", path(&est)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pred = dir.path().join("pred");
    let o = run(&[
        "predict", "--votes", path(&votes), "--periods", path(&periods), "--samples", "4",
        "--estimates", path(&est.join("estimates.jsonl")), "--out", path(&pred),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read_json(pred.join("predictions.json"))["days"].as_array().unwrap().len(), 7);

    let o = run(&[
        "predict", "--votes", path(&votes), "--periods", path(&periods),
        "--estimates", path(&dir.path().join("missing.jsonl")), "--out", path(&pred),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing.jsonl"));
}

#[test]
fn savings_at_baseline_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let votes = dir.path().join("votes.csv");
    let mut text = String::from("timestamp,occupant_id,vote,is_default\n");
    for d in 3..8 {
        text.push_str(&format!("2014-03-0{d}T12:00:00-08:00,a,90,false\n2014-03-0{d}T18:00:00-08:00,b,90,false\n"));
    }
    std::fs::write(&votes, text).unwrap();
    let out = dir.path().join("o");
    let o = run(&["savings", "--votes", path(&votes), "--power-kw", "2", "--hours", "10", "--out", path(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ledger = read_json(out.join("ledger.json"));
    assert_eq!(ledger["total_saved_kwh"].as_f64().unwrap(), 0.0);
    assert_eq!(ledger["days"].as_array().unwrap().len(), 5);
    assert!((ledger["total_consumed_kwh"].as_f64().unwrap() - 5.0 * 18.0).abs() < 1e-9);
    assert_eq!(
        run(&["savings", "--votes", path(&votes), "--power-kw", "0", "--hours", "10", "--out", path(&out)])
            .status
            .code(),
        Some(1)
    );
}
