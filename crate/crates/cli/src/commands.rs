use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::json;
use socialgame::equilibrium::{solve_nash, SolverParams};
use socialgame::estimation::{estimate_strata, Bootstrap, EstimateError, EstimationOptions};
use socialgame::game::{GameError, Role, ThetaVector, VoteProfile};
use socialgame::pipeline::energy::{daily_implemented, energy_savings, EnergyParams};
use socialgame::pipeline::records::{estimate_records, read_jsonl, write_jsonl, EstimateRecord};
use socialgame::prediction::{
    daily_truth, rolling_forecast_with, score_implemented, score_votes, DayForecast, FixedTheta, MseError, MseTable, PredictError,
    RollingConfig,
};

use crate::inputs::{game_config, load, read_to_string, require_file, Loaded};
use crate::manifest::{Manifest, OutDir};
use crate::{
    CliError, DataArgs, EstimateArgs, EvaluateArgs, PredictArgs, Result, SavingsArgs, SimulateArgs, SolverArgs,
};

fn game_err(e: GameError) -> CliError {
    match e {
        GameError::InvalidConfig(_) | GameError::InvalidGridStep(_) => CliError::Usage(e.to_string()),
        GameError::DegenerateRound { .. } | GameError::InvalidDual { .. } => CliError::Numerical(e.to_string()),
        _ => CliError::Data(e.to_string()),
    }
}

fn predict_err(e: PredictError) -> CliError {
    match e {
        PredictError::NoSamples => CliError::Usage(e.to_string()),
        PredictError::Game(g) => game_err(g),
        PredictError::Estimation(_) => CliError::Numerical(e.to_string()),
        PredictError::Mse(MseError::EmptyIndex) => {
            CliError::Data("no day has a forecast from every model; the log is too short to score".into())
        }
        _ => CliError::Data(e.to_string()),
    }
}

fn solver_params(s: &SolverArgs) -> Result<SolverParams> {
    let p = SolverParams {
        step_size: s.step,
        max_iters: s.max_iters,
        convergence_tol: s.tol,
        ..SolverParams::default()
    };
    p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(p)
}

fn data_config(d: &DataArgs, loaded: &Loaded) -> serde_json::Value {
    json!({
        "votes": d.votes.display().to_string(),
        "periods": loaded.schedule_source,
        "timezone": d.timezone,
        "lenient": d.lenient,
        "records": loaded.records,
        "skipped_rows": loaded.skipped_rows,
    })
}

fn with_inputs(mut m: Manifest, d: &DataArgs) -> Result<Manifest> {
    m = m.input(&d.votes)?;
    if let Some(p) = &d.periods {
        m = m.input(p)?;
    }
    Ok(m)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$}"))
}

pub fn estimate(a: &EstimateArgs) -> Result<()> {
    let cfg = game_config(&a.game)?;
    if a.bootstrap == 1 {
        return Err(CliError::Usage("--bootstrap needs at least 2 resamples (or 0 to skip)".into()));
    }
    let loaded = load(&a.data)?;
    let boot = (a.bootstrap > 0).then_some(Bootstrap {
        resamples: a.bootstrap,
        seed: a.seed,
    });
    let strata = estimate_strata(&loaded.set.observations, &cfg, &EstimationOptions::default(), a.strata, boot)
        .map_err(|e| match e {
            EstimateError::TooFewResamples(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        })?;
    let records = estimate_records(&strata, &loaded.set.roster);
    if !records.iter().any(|r| r.theta_hat.is_some()) {
        return Err(CliError::Data(format!(
            "insufficient data for all occupants: {} rounds, {} occupants, no usable active votes",
            loaded.set.observations.len(),
            loaded.set.roster.len()
        )));
    }

    let mut out = OutDir::create(&a.out)?;
    let mut jsonl = Vec::new();
    write_jsonl(&mut jsonl, &records).expect("in-memory write");
    out.write("estimates.jsonl", &jsonl)?;
    let mut csv = csv::Writer::from_writer(Vec::new());
    for r in &records {
        csv.serialize(r).map_err(|e| CliError::Data(e.to_string()))?;
    }
    out.write("estimates.csv", &csv.into_inner().expect("in-memory write"))?;
    let report = estimate_report(&records);
    out.write("report.txt", report.as_bytes())?;
    print!("{report}");

    let config = json!({
        "data": data_config(&a.data, &loaded),
        "rho": cfg.rho,
        "baseline": cfg.baseline,
        "strata": a.strata,
        "bootstrap": a.bootstrap,
    });
    let manifest = with_inputs(Manifest::new("estimate", config), &a.data)?.seed("bootstrap", a.seed);
    out.finish(manifest)
}

fn estimate_report(records: &[EstimateRecord]) -> String {
    let mut s = format!(
        "{:<12} {:>7} {:<9} {:>11} {:>11} {:>10} {:>6}  {}\n",
        "occupant", "default", "region", "theta_hat", "boot_mean", "boot_std", "rounds", "flags"
    );
    for r in records {
        let mut flags = Vec::new();
        if !r.reliable {
            flags.push("unreliable".to_string());
        }
        if r.excluded > 0 {
            flags.push(format!("excluded={}", r.excluded));
        }
        if let Some(why) = &r.skipped {
            flags.push(why.clone());
        }
        let _ = writeln!(
            s,
            "{:<12} {:>7} {:<9} {:>11} {:>11} {:>10} {:>6}  {}",
            r.occupant,
            opt(r.default_level, 0),
            r.region.map_or_else(|| "pooled".into(), |g| g.to_string()),
            opt(r.theta_hat, 3),
            opt(r.boot_mean, 3),
            opt(r.boot_std, 3),
            r.n_obs,
            flags.join(",")
        );
    }
    s
}

#[derive(Debug, Deserialize)]
struct PlayerRow {
    occupant: String,
    theta: f64,
    #[serde(default)]
    role: Option<String>,
    #[serde(default)]
    vote: Option<f64>,
}

#[derive(Debug, Serialize)]
struct PlayerOutcome {
    occupant: String,
    role: Role,
    theta: f64,
    start: f64,
    vote: f64,
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let cfg = game_config(&a.game)?;
    let params = solver_params(&a.solver)?;
    require_file(&a.theta)?;
    let text = read_to_string(&a.theta)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (k, row) in rdr.deserialize::<PlayerRow>().enumerate() {
        rows.push(row.map_err(|e| CliError::Data(format!("{} line {}: {e}", a.theta.display(), k + 2)))?);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no players", a.theta.display())));
    }
    let mut roles = Vec::new();
    let mut votes = Vec::new();
    for (k, r) in rows.iter().enumerate() {
        let role: Role = match r.role.as_deref().filter(|s| !s.is_empty()) {
            None => Role::Active,
            Some(s) => s
                .parse()
                .map_err(|e| CliError::Data(format!("{} line {}: {e}", a.theta.display(), k + 2)))?,
        };
        let vote = r.vote.unwrap_or(match role {
            Role::Active => cfg.project(a.default_level),
            _ => a.default_level,
        });
        roles.push(role);
        votes.push(vote);
    }
    let theta = ThetaVector::new(rows.iter().map(|r| r.theta).collect()).map_err(game_err)?;
    let init = VoteProfile::new(votes, roles).map_err(game_err)?;
    let result = solve_nash(&theta, &init, &cfg, &params).map_err(game_err)?;

    let players: Vec<PlayerOutcome> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| PlayerOutcome {
            occupant: r.occupant.clone(),
            role: init.roles[i],
            theta: r.theta,
            start: init.votes[i],
            vote: result.profile.votes[i],
        })
        .collect();
    let implemented = socialgame::game::implemented_setting(&result.profile).map_err(game_err)?;
    let report = json!({
        "players": players,
        "implemented": implemented,
        "iterations": result.iterations,
        "converged": result.converged,
        "max_gap": result.certificate.max_gap(),
        "certified": result.certificate.is_valid(),
        "stable": result.stable,
        "certificate": result.certificate,
    });
    let mut out = OutDir::create(&a.out)?;
    out.write_json("equilibrium.json", &report)?;
    for p in &players {
        println!("{:<12} {:<8} theta={:<10} vote={:.4}", p.occupant, p.role, p.theta, p.vote);
    }
    println!(
        "implemented {implemented:.4}; {} iterations, converged: {}, max gap {:.2e}",
        result.iterations,
        result.converged,
        result.certificate.max_gap()
    );
    let config = json!({
        "rho": cfg.rho,
        "baseline": cfg.baseline,
        "default_level": a.default_level,
        "solver": params,
    });
    out.finish(Manifest::new("simulate", config).input(&a.theta)?)?;
    if !result.converged {
        return Err(CliError::Numerical(format!(
            "solver stopped after {} iterations without converging",
            result.iterations
        )));
    }
    Ok(())
}

/// `predictions.json`: one forecast per scored day, occupants by roster index.
#[derive(Debug, Serialize, Deserialize)]
pub struct PredictionFile {
    pub roster: Vec<String>,
    pub days: Vec<DayForecast>,
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let cfg = game_config(&a.game)?;
    let params = solver_params(&a.solver)?;
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    if let Some(p) = &a.estimates {
        require_file(p)?;
    }
    let loaded = load(&a.data)?;
    let fixed = match &a.estimates {
        None => None,
        Some(p) => {
            let text = read_to_string(p)?;
            let rows: Vec<EstimateRecord> =
                read_jsonl(text.as_bytes()).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
            let f = FixedTheta::from_records(&rows, &loaded.set.roster);
            if f.is_empty() {
                return Err(CliError::Data(format!(
                    "{}: no estimates for any occupant in the vote log",
                    p.display()
                )));
            }
            Some(f)
        }
    };
    let rc = RollingConfig {
        sample_count: a.samples,
        seed: a.seed,
        params,
        strata: a.strata,
        ..RollingConfig::default()
    };
    let report = rolling_forecast_with(&loaded.set, &cfg, &rc, fixed.as_ref()).map_err(predict_err)?;
    if report.days.is_empty() {
        return Err(CliError::Data("the vote log covers a single day; nothing to predict".into()));
    }
    let file = PredictionFile {
        roster: loaded.set.roster.clone(),
        days: report.days,
    };
    let mut out = OutDir::create(&a.out)?;
    out.write_json("predictions.json", &file)?;
    println!("{:<10} {:>7} {:>8} {:>8} {:>8}", "day", "default", "truth", "nash", "std");
    for d in &file.days {
        println!(
            "{:<10} {:>7} {:>8.2} {:>8.2} {:>8.2}",
            d.day, d.default_level, d.truth, d.nash, d.nash_std
        );
    }
    let config = json!({
        "data": data_config(&a.data, &loaded),
        "rho": cfg.rho,
        "baseline": cfg.baseline,
        "solver": params,
        "samples": a.samples,
        "strata": a.strata,
        "estimates": a.estimates.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = with_inputs(Manifest::new("predict", config), &a.data)?.seed("prediction", a.seed);
    if let Some(p) = &a.estimates {
        manifest = manifest.input(p)?;
    }
    out.finish(manifest)
}

#[derive(Debug, Serialize)]
struct MseReport<'a> {
    implemented: &'a MseTable,
    votes: &'a MseTable,
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    require_file(&a.predictions)?;
    let loaded = load(&a.data)?;
    let text = read_to_string(&a.predictions)?;
    let mut file: PredictionFile =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", a.predictions.display())))?;
    let truth = daily_truth(&loaded.set).map_err(predict_err)?;
    let by_day: BTreeMap<NaiveDate, _> = truth.iter().map(|t| (t.day, t)).collect();

    let mut missing_days = Vec::new();
    let mut missing_votes = Vec::new();
    for d in &mut file.days {
        let Some(t) = by_day.get(&d.day) else {
            missing_days.push(d.day.to_string());
            continue;
        };
        d.truth = t.implemented;
        for v in &mut d.votes {
            let id = file.roster.get(v.occupant).ok_or_else(|| {
                CliError::Data(format!(
                    "{}: occupant index {} outside the roster",
                    a.predictions.display(),
                    v.occupant
                ))
            })?;
            match loaded.set.occupant_index(id).and_then(|i| t.votes[i]) {
                Some(x) => v.truth = x,
                None => missing_votes.push(format!("{} {id}", d.day)),
            }
        }
    }
    if !missing_days.is_empty() || !missing_votes.is_empty() {
        let mut msg = String::from("predictions and votes are misaligned");
        if !missing_days.is_empty() {
            let _ = write!(msg, "; days without observations: {}", missing_days.join(", "));
        }
        if !missing_votes.is_empty() {
            let _ = write!(msg, "; votes without observations: {}", missing_votes.join(", "));
        }
        return Err(CliError::Data(msg));
    }
    if file.days.is_empty() {
        return Err(CliError::Data(format!("{}: no predicted days", a.predictions.display())));
    }
    let implemented = score_implemented(&file.days).map_err(predict_err)?;
    let votes = score_votes(&file.days).map_err(predict_err)?;
    let text = format!(
        "{}\n{}",
        implemented.render("implemented"),
        votes.render("votes")
    );
    let mut out = OutDir::create(&a.out)?;
    out.write_json(
        "mse.json",
        &MseReport {
            implemented: &implemented,
            votes: &votes,
        },
    )?;
    out.write("mse.txt", text.as_bytes())?;
    print!("{text}");
    let config = json!({ "data": data_config(&a.data, &loaded), "predictions": a.predictions.display().to_string() });
    out.finish(with_inputs(Manifest::new("evaluate", config), &a.data)?.input(&a.predictions)?)
}

pub fn savings(a: &SavingsArgs) -> Result<()> {
    let params = EnergyParams {
        baseline: a.baseline,
        power_kw: a.power_kw,
        hours_per_day: a.hours,
        rate: a.rate,
    };
    let loaded = load(&a.data)?;
    let levels = daily_implemented(&loaded.set);
    let ledger = energy_savings(&levels, &params, Some(&loaded.schedule)).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut text = format!(
        "days {}\nconsumed {:.2} kWh\nsaved {:.2} kWh\nreduction {:.2}%\nsavings {:.2}\n",
        ledger.days.len(),
        ledger.total_consumed_kwh,
        ledger.total_saved_kwh,
        ledger.reduction_pct,
        ledger.currency_saved
    );
    for p in &ledger.periods {
        let _ = writeln!(
            text,
            "period {}..{} default {}: {} days, mean saved {:.2} kWh/day",
            p.start, p.end, p.default_level, p.days, p.mean_saved_kwh
        );
    }
    let over = ledger.days.iter().filter(|d| d.over_baseline).count();
    if over > 0 {
        let _ = writeln!(text, "{over} day(s) above the baseline (negative savings)");
    }
    let mut out = OutDir::create(&a.out)?;
    out.write_json("ledger.json", &ledger)?;
    out.write("savings.txt", text.as_bytes())?;
    print!("{text}");
    let config = json!({ "data": data_config(&a.data, &loaded), "energy": params });
    out.finish(with_inputs(Manifest::new("savings", config), &a.data)?)
}
