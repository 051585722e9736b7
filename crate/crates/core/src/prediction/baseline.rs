//! Reference forecasters and the MSE comparison table.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub value: f64,
    /// The forecaster had no history and returned the default level.
    pub fell_back: bool,
}

/// Predicts the default level in force.
pub fn baseline_constant(default_level: f64) -> f64 {
    default_level
}

/// Predicts the last observed value, or the default level with no history.
pub fn baseline_persistent(history: &[f64], default_level: f64) -> Forecast {
    match history.last() {
        Some(&v) => Forecast {
            value: v,
            fell_back: false,
        },
        None => Forecast {
            value: default_level,
            fell_back: true,
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Arima,
    Nash,
    Constant,
    Persistent,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Arima,
        ModelKind::Nash,
        ModelKind::Constant,
        ModelKind::Persistent,
    ];
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Arima => "ARIMA(1,0,1)",
            ModelKind::Nash => "Nash",
            ModelKind::Constant => "Constant",
            ModelKind::Persistent => "Persistent",
        })
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MseError {
    #[error("no index where the truth and every model have a value")]
    EmptyIndex,
    #[error("model {model} has {got} predictions for {expected} truth values")]
    Length {
        model: ModelKind,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseTable {
    pub rows: Vec<(ModelKind, f64)>,
    /// Indices shared by the truth and every model.
    pub index: Vec<usize>,
}

impl MseTable {
    pub fn get(&self, model: ModelKind) -> Option<f64> {
        self.rows.iter().find(|(m, _)| *m == model).map(|(_, v)| *v)
    }

    pub fn render(&self, title: &str) -> String {
        let mut header = format!("| {title:<12} |");
        let mut values = format!("| {:<12} |", "MSE");
        for (m, v) in &self.rows {
            let name = m.to_string();
            let w = name.len().max(8);
            header.push_str(&format!(" {name:>w$} |"));
            values.push_str(&format!(" {v:>w$.2} |"));
        }
        format!("{header}\n{values}\n(n = {})\n", self.index.len())
    }
}

/// Mean squared error of every model over the positions where the truth and
/// all models have values.
pub fn evaluate_mse(
    predictions: &[(ModelKind, Vec<Option<f64>>)],
    truth: &[Option<f64>],
) -> Result<MseTable, MseError> {
    for (model, p) in predictions {
        if p.len() != truth.len() {
            return Err(MseError::Length {
                model: *model,
                expected: truth.len(),
                got: p.len(),
            });
        }
    }
    let index: Vec<usize> = (0..truth.len())
        .filter(|&k| truth[k].is_some() && predictions.iter().all(|(_, p)| p[k].is_some()))
        .collect();
    if index.is_empty() {
        return Err(MseError::EmptyIndex);
    }
    let rows = predictions
        .iter()
        .map(|(model, p)| {
            let se: f64 = index
                .iter()
                .map(|&k| (p[k].unwrap() - truth[k].unwrap()).powi(2))
                .sum();
            (*model, se / index.len() as f64)
        })
        .collect();
    Ok(MseTable { rows, index })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baselines() {
        assert_eq!(baseline_constant(60.0), 60.0);
        assert_eq!(baseline_persistent(&[10.0, 42.0], 60.0), Forecast { value: 42.0, fell_back: false });
        assert_eq!(baseline_persistent(&[], 60.0), Forecast { value: 60.0, fell_back: true });
    }

    #[test]
    fn mse_examples() {
        let truth: Vec<Option<f64>> = [50.0, 70.0, 50.0, 70.0].iter().map(|v| Some(*v)).collect();
        let t = evaluate_mse(
            &[
                (ModelKind::Nash, truth.clone()),
                (ModelKind::Constant, vec![Some(60.0); 4]),
            ],
            &truth,
        )
        .unwrap();
        assert_eq!(t.get(ModelKind::Nash), Some(0.0));
        assert_eq!(t.get(ModelKind::Constant), Some(100.0));
    }

    #[test]
    fn missing_values_shrink_index_for_everyone() {
        let truth = vec![Some(1.0), None, Some(3.0), Some(5.0)];
        let t = evaluate_mse(
            &[
                (ModelKind::Arima, vec![None, Some(0.0), Some(3.0), Some(4.0)]),
                (ModelKind::Persistent, vec![Some(0.0), Some(0.0), Some(1.0), Some(5.0)]),
            ],
            &truth,
        )
        .unwrap();
        assert_eq!(t.index, vec![2, 3]);
        assert_eq!(t.get(ModelKind::Arima), Some(0.5));
        assert_eq!(t.get(ModelKind::Persistent), Some(2.0));
        assert_eq!(
            evaluate_mse(&[(ModelKind::Nash, vec![None])], &[Some(1.0)]),
            Err(MseError::EmptyIndex)
        );
    }
}
