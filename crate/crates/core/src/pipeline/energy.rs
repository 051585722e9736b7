//! Lighting energy accounting against the pre-game baseline level.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::periods::DefaultSchedule;
use super::PipelineError;
use crate::game::implemented_setting;
use crate::observation::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Baseline lighting level in percent.
    pub baseline: f64,
    /// Installed lighting power at 100%, kW.
    pub power_kw: f64,
    pub hours_per_day: f64,
    /// Currency per kWh.
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyLevel {
    pub day: NaiveDate,
    pub implemented: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerDay {
    pub day: NaiveDate,
    pub implemented: f64,
    pub consumed_kwh: f64,
    pub saved_kwh: f64,
    /// The implemented level exceeded the baseline, so `saved_kwh < 0`.
    pub over_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodSavings {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub default_level: f64,
    pub days: usize,
    pub mean_saved_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub params: EnergyParams,
    pub days: Vec<LedgerDay>,
    pub total_consumed_kwh: f64,
    pub total_saved_kwh: f64,
    /// Savings as a percentage of the energy actually consumed.
    pub reduction_pct: f64,
    pub currency_saved: f64,
    pub periods: Vec<PeriodSavings>,
}

/// Per day, `saved = (baseline - implemented)/100 · power · hours`. Days
/// above the baseline keep their negative savings and are flagged.
pub fn energy_savings(
    levels: &[DailyLevel],
    params: &EnergyParams,
    schedule: Option<&DefaultSchedule>,
) -> Result<EnergyLedger, PipelineError> {
    if !(params.power_kw > 0.0) {
        return Err(PipelineError::Energy("power_kw must be positive".into()));
    }
    if !(params.baseline > 0.0 && params.baseline <= 100.0) {
        return Err(PipelineError::Energy("baseline must lie in (0, 100]".into()));
    }
    if !(params.hours_per_day >= 0.0 && params.rate >= 0.0) {
        return Err(PipelineError::Energy("hours and rate must be nonnegative".into()));
    }
    let kwh = |level: f64| level / 100.0 * params.power_kw * params.hours_per_day;
    let days: Vec<LedgerDay> = levels
        .iter()
        .map(|d| LedgerDay {
            day: d.day,
            implemented: d.implemented,
            consumed_kwh: kwh(d.implemented),
            saved_kwh: kwh(params.baseline - d.implemented),
            over_baseline: d.implemented > params.baseline,
        })
        .collect();
    let total_consumed_kwh: f64 = days.iter().map(|d| d.consumed_kwh).sum();
    let total_saved_kwh: f64 = days.iter().map(|d| d.saved_kwh).sum();
    let periods = schedule
        .map(|s| {
            s.periods()
                .iter()
                .filter_map(|p| {
                    let inside: Vec<f64> = days
                        .iter()
                        .filter(|d| p.start <= d.day && d.day <= p.end)
                        .map(|d| d.saved_kwh)
                        .collect();
                    (!inside.is_empty()).then(|| PeriodSavings {
                        start: p.start,
                        end: p.end,
                        default_level: p.default_level,
                        days: inside.len(),
                        mean_saved_kwh: inside.iter().sum::<f64>() / inside.len() as f64,
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    Ok(EnergyLedger {
        params: *params,
        days,
        total_consumed_kwh,
        total_saved_kwh,
        reduction_pct: reduction_pct(total_saved_kwh, total_consumed_kwh),
        currency_saved: total_saved_kwh * params.rate,
        periods,
    })
}

/// Saved energy relative to consumed energy, in percent.
pub fn reduction_pct(saved_kwh: f64, consumed_kwh: f64) -> f64 {
    if consumed_kwh > 0.0 {
        100.0 * saved_kwh / consumed_kwh
    } else {
        0.0
    }
}

/// Daily implemented level: mean over the day's rounds of each round's
/// implemented setting.
pub fn daily_implemented(set: &ObservationSet) -> Vec<DailyLevel> {
    let mut out: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for o in &set.observations {
        let Ok(level) = implemented_setting(&o.profile) else { continue };
        match out.last_mut() {
            Some((day, sum, n)) if *day == o.day => {
                *sum += level;
                *n += 1;
            }
            _ => out.push((o.day, level, 1)),
        }
    }
    out.into_iter()
        .map(|(day, sum, n)| DailyLevel {
            day,
            implemented: sum / n as f64,
        })
        .collect()
}
