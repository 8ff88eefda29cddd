use std::path::{Path, PathBuf};

use clap::Args;
use ndarray::Array2;
use serde::Serialize;

use niece_core::envelope::{self, Dataset, Predictions, Response, Task};
use niece_core::tuning;

use crate::doc::{self, FitDocument};
use crate::error::{CliError, Result};
use crate::io::{self, Table};

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Fit file written by the fit command (<prefix>.json).
    pub model: PathBuf,

    /// New data CSV; predictor columns are matched by name, extra columns
    /// are ignored.
    pub data: PathBuf,

    /// Worker threads; 0 means one per core. NIECE_THREADS overrides.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    /// Prefix for the _predictions.csv and _loss.json outputs.
    #[arg(long, default_value = "niece_predict")]
    pub out_prefix: String,
}

#[derive(Serialize)]
struct LossDoc<'a> {
    metric: &'a str,
    value: f64,
    rows: usize,
}

fn write_predictions(path: &Path, preds: &Predictions, responses: &[String]) -> Result<()> {
    match preds {
        Predictions::Continuous(fitted) => {
            let mut header: Vec<&str> = vec!["row"];
            header.extend(responses.iter().map(String::as_str));
            let rows = fitted.rows().into_iter().enumerate().map(|(i, r)| {
                let mut row = vec![(i + 1).to_string()];
                row.extend(r.iter().map(|v| io::fmt_float(*v)));
                row
            });
            io::write_csv(path, &header, rows)
        }
        Predictions::Binary {
            probabilities,
            labels,
        } => {
            let rows = probabilities.iter().zip(labels).enumerate().map(|(i, (p, l))| {
                vec![(i + 1).to_string(), io::fmt_float(*p), io::fmt_float(*l)]
            });
            io::write_csv(path, &["row", "probability", "label"], rows)
        }
        Predictions::Risk(scores) => {
            let rows = scores
                .iter()
                .enumerate()
                .map(|(i, s)| vec![(i + 1).to_string(), io::fmt_float(*s)]);
            io::write_csv(path, &["row", "risk_score"], rows)
        }
    }
}

/// Builds a labeled dataset when every label column is present; `None` when
/// they are absent (prediction-only input).
fn labeled_dataset(
    table: &Table,
    document: &FitDocument,
    task: Task,
    x: &Array2<f64>,
) -> Result<Option<Dataset>> {
    let found: Vec<usize> = document
        .responses
        .iter()
        .filter_map(|name| table.column_index(name))
        .collect();
    if found.len() < document.responses.len() {
        return Ok(None);
    }
    let y = table.gather(&found);
    let response = match task {
        Task::Logistic => {
            let labels = y.column(0).to_owned();
            if let Some(bad) = labels.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(CliError::Input(format!(
                    "label column '{}' contains {bad}, expected 0 or 1",
                    document.responses[0]
                )));
            }
            Response::Binary(labels)
        }
        Task::Cox => {
            let status = y.column(1).to_owned();
            if let Some(bad) = status.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(CliError::Input(format!(
                    "event column '{}' contains {bad}, expected 0 or 1",
                    document.responses[1]
                )));
            }
            Response::Survival {
                time: y.column(0).to_owned(),
                status,
            }
        }
        _ => Response::Continuous(y),
    };
    let data =
        Dataset::new(x.clone(), response).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Some(data))
}

fn task_loss(
    fit: &envelope::EnvelopeFit,
    data: &Dataset,
    preds: &Predictions,
) -> Result<(&'static str, f64)> {
    match (fit.task, preds, &data.response) {
        (Task::Logistic, Predictions::Binary { labels, .. }, Response::Binary(y)) => {
            let wrong = labels
                .iter()
                .zip(y)
                .filter(|(a, b)| (*a - *b).abs() > 0.5)
                .count();
            let pct = 100.0 * wrong as f64 / y.len() as f64;
            Ok(("misclassification_percent", pct))
        }
        (Task::Cox, _, _) => {
            let value = tuning::cv_loss(fit, data)?;
            Ok(("negative_partial_log_likelihood", value))
        }
        _ => {
            let value = tuning::cv_loss(fit, data)?;
            Ok(("pmse", value))
        }
    }
}

pub fn run(args: &PredictArgs) -> Result<()> {
    let document: FitDocument = io::read_json(&args.model)?;
    let fit = doc::to_fit(&document)?;
    let table = io::read_table(&args.data)?;

    let x_idx = table.require_columns(&document.predictors, "predictor")?;
    let x = table.gather(&x_idx);
    let preds = envelope::predict(&fit, x.view())?;

    let pred_path = PathBuf::from(format!("{}_predictions.csv", args.out_prefix));
    write_predictions(&pred_path, &preds, &document.responses)?;
    println!("wrote {} rows to {}", x.nrows(), pred_path.display());

    match labeled_dataset(&table, &document, fit.task, &x)? {
        Some(data) => {
            let (metric, value) = task_loss(&fit, &data, &preds)?;
            let loss_path = PathBuf::from(format!("{}_loss.json", args.out_prefix));
            io::write_json(
                &loss_path,
                &LossDoc {
                    metric,
                    value,
                    rows: data.n(),
                },
            )?;
            println!("{metric}: {value}");
        }
        None => println!("label columns absent; skipped the loss report"),
    }
    Ok(())
}
