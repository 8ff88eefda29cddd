use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use niece_core::envelope::{EnvelopeFit, Hyperparams, Task};
use niece_core::niece::NieceResult;

use crate::error::{CliError, Result};

/// One reduced side of a fit: the chosen directions and their diagnostics.
#[derive(Debug, Serialize, Deserialize)]
pub struct ReductionDoc {
    pub selected_indices: Vec<usize>,
    /// Score phi_j per candidate, in candidate order.
    pub scores: Vec<f64>,
    /// Spectrum proxy per candidate (eigenvalues for dense candidates).
    pub candidate_values: Vec<f64>,
    pub eigen_gap: f64,
    pub score_gap: f64,
    pub u_max_norm: f64,
    pub effective_d: usize,
    /// Orthonormal basis, dimension rows by u columns.
    pub basis: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HyperDoc {
    pub u: Option<usize>,
    pub u_y: Option<usize>,
    pub d: Option<usize>,
    pub d_y: Option<usize>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
    pub folds: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UPointDoc {
    pub u: usize,
    pub d: usize,
    pub c: Option<f64>,
    pub loss: f64,
}

/// Cross-validation traces, present only for the stages that actually ran.
#[derive(Debug, Default, Serialize, Deserialize)]
pub struct CvDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_curve: Option<Vec<UPointDoc>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_table: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_table: Option<Vec<(f64, f64)>>,
}

/// Serialized form of a fitted model, written as `<prefix>.json`.
///
/// `created_at` is the only field allowed to differ between reruns with
/// identical inputs.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitDocument {
    pub created_at: String,
    pub task: String,
    pub n: usize,
    pub predictors: Vec<String>,
    /// Response column names; for Cox this is the time column then the
    /// event column.
    pub responses: Vec<String>,
    pub hyperparameters: HyperDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_x: Option<ReductionDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reduction_y: Option<ReductionDoc>,
    /// Reduced-model coefficients, design rows by response columns.
    pub eta: Vec<Vec<f64>>,
    /// Full-space coefficients, response rows by predictor columns.
    pub beta_env: Vec<Vec<f64>>,
    pub intercept: Vec<f64>,
    pub cross_validation: CvDoc,
    pub warnings: Vec<String>,
}

pub fn task_to_str(task: Task) -> &'static str {
    match task {
        Task::ResponseLinear => "response-linear",
        Task::PredictorLinear => "predictor-linear",
        Task::SimultaneousLinear => "simultaneous",
        Task::Logistic => "logistic",
        Task::Cox => "cox",
    }
}

pub fn task_from_str(name: &str) -> Result<Task> {
    match name {
        "response-linear" => Ok(Task::ResponseLinear),
        "predictor-linear" => Ok(Task::PredictorLinear),
        "simultaneous" => Ok(Task::SimultaneousLinear),
        "logistic" => Ok(Task::Logistic),
        "cox" => Ok(Task::Cox),
        other => Err(CliError::Input(format!("unknown task '{other}' in fit file"))),
    }
}

pub fn matrix_to_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CliError::Input(format!("{what}: ragged matrix in fit file")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| CliError::Input(format!("{what}: {e}")))
}

fn reduction_doc(r: &NieceResult) -> ReductionDoc {
    ReductionDoc {
        selected_indices: r.selected_indices.clone(),
        scores: r.score_table.scores.to_vec(),
        candidate_values: r.candidates.values.to_vec(),
        eigen_gap: r.score_table.eigen_gap,
        score_gap: r.score_table.score_gap,
        u_max_norm: r.score_table.u_max_norm,
        effective_d: r.effective_d,
        basis: matrix_to_rows(r.basis.as_array()),
    }
}

fn hyper_doc(h: &Hyperparams, folds: usize, seed: u64) -> HyperDoc {
    HyperDoc {
        u: h.u_x.or(h.u_y),
        u_y: if h.u_x.is_some() { h.u_y } else { None },
        d: h.d_x.or(h.d_y),
        d_y: if h.d_x.is_some() { h.d_y } else { None },
        c: h.c,
        lambda: h.lambda,
        folds,
        seed,
    }
}

pub fn from_fit(
    fit: &EnvelopeFit,
    predictors: Vec<String>,
    responses: Vec<String>,
    n: usize,
    cv: CvDoc,
    folds: usize,
    seed: u64,
    created_at: String,
) -> FitDocument {
    FitDocument {
        created_at,
        task: task_to_str(fit.task).to_owned(),
        n,
        predictors,
        responses,
        hyperparameters: hyper_doc(&fit.hyper, folds, seed),
        reduction_x: fit.reduction_x.as_ref().map(reduction_doc),
        reduction_y: fit.reduction_y.as_ref().map(reduction_doc),
        eta: matrix_to_rows(&fit.eta),
        beta_env: matrix_to_rows(&fit.beta_env),
        intercept: fit.intercept.to_vec(),
        cross_validation: cv,
        warnings: fit.warnings.clone(),
    }
}

/// Rebuilds the minimum of a fit that prediction needs: task, coefficients
/// and intercept. Reduction internals stay in the document only.
pub fn to_fit(doc: &FitDocument) -> Result<EnvelopeFit> {
    let task = task_from_str(&doc.task)?;
    let beta_env = rows_to_matrix(&doc.beta_env, "beta_env")?;
    if beta_env.ncols() != doc.predictors.len() {
        return Err(CliError::Input(format!(
            "beta_env has {} columns but the fit lists {} predictors",
            beta_env.ncols(),
            doc.predictors.len()
        )));
    }
    let eta = rows_to_matrix(&doc.eta, "eta")?;
    Ok(EnvelopeFit {
        task,
        reduction_x: None,
        reduction_y: None,
        eta,
        beta_env,
        intercept: Array1::from_vec(doc.intercept.clone()),
        glm_stage: None,
        hyper: Hyperparams {
            u_x: doc.hyperparameters.u,
            u_y: doc.hyperparameters.u_y,
            d_x: doc.hyperparameters.d,
            d_y: doc.hyperparameters.d_y,
            c: doc.hyperparameters.c,
            lambda: doc.hyperparameters.lambda,
        },
        warnings: Vec::new(),
    })
}
