//! Model adapters: build the kernel and outer-product pair for each
//! regression task, run the component selection, refit on the reduced
//! design, and predict.
//!
//! Coefficients are stored with response rows and predictor columns, so
//! every linear prediction is alpha + Xnew * beta_env'. The refit
//! (constrained) estimator beta_env = Gamma eta is the default everywhere;
//! [`project_full_estimator`] exposes the plain projection of an unreduced
//! coefficient matrix for comparison.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::glm::{self, GlmFit};
use crate::linalg::{self, Basis, SymmetricMatrix};
use crate::niece::{self, NieceResult};
use crate::pmd::PmdConfig;

/// Response block of a dataset.
#[derive(Debug, Clone)]
pub enum Response {
    /// n x r real responses.
    Continuous(Array2<f64>),
    /// Length-n 0/1 labels.
    Binary(Array1<f64>),
    /// Right-censored survival times with 0/1 event flags.
    Survival {
        time: Array1<f64>,
        status: Array1<f64>,
    },
}

impl Response {
    pub fn n(&self) -> usize {
        match self {
            Response::Continuous(y) => y.nrows(),
            Response::Binary(y) => y.len(),
            Response::Survival { time, .. } => time.len(),
        }
    }
}

/// Predictors plus a response block, with optional column names carried
/// through for reporting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub response: Response,
    pub x_names: Option<Vec<String>>,
    pub y_names: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, response: Response) -> Result<Self> {
        if x.nrows() != response.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} predictor rows but {} response rows",
                x.nrows(),
                response.n()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        match &response {
            Response::Continuous(y) => {
                if y.ncols() == 0 {
                    return Err(Error::InvalidArgument("response has no columns".into()));
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
            Response::Binary(y) => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite);
                }
            }
            Response::Survival { time, status } => {
                if time.len() != status.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "{} times for {} event flags",
                        time.len(),
                        status.len()
                    )));
                }
                for &t in time {
                    if !t.is_finite() {
                        return Err(Error::NonFinite);
                    }
                    if t <= 0.0 {
                        return Err(Error::NonPositiveTime(t));
                    }
                }
            }
        }
        Ok(Dataset {
            x,
            response,
            x_names: None,
            y_names: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Which regression the fit reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    ResponseLinear,
    PredictorLinear,
    SimultaneousLinear,
    Logistic,
    Cox,
}

/// Hyperparameters a fit was run with. Sides that were not reduced stay
/// `None`.
#[derive(Debug, Clone, Default)]
pub struct Hyperparams {
    pub u_x: Option<usize>,
    pub u_y: Option<usize>,
    pub d_x: Option<usize>,
    pub d_y: Option<usize>,
    pub c: Option<f64>,
    pub lambda: Option<f64>,
}

/// A fitted envelope model.
#[derive(Debug, Clone)]
pub struct EnvelopeFit {
    pub task: Task,
    /// Predictor-side reduction (basis is p x u_x), when that side was
    /// reduced.
    pub reduction_x: Option<NieceResult>,
    /// Response-side reduction (basis is r x u_y), when that side was
    /// reduced.
    pub reduction_y: Option<NieceResult>,
    /// Refit coefficients of the reduced model, design columns by response
    /// columns.
    pub eta: Array2<f64>,
    /// Full-space coefficients, response rows by predictor columns.
    pub beta_env: Array2<f64>,
    /// Intercepts, one per response column; length 1 for logistic, empty
    /// for Cox.
    pub intercept: Array1<f64>,
    /// The penalized pre-stage fit for logistic and Cox tasks.
    pub glm_stage: Option<GlmFit>,
    pub hyper: Hyperparams,
    pub warnings: Vec<String>,
}

impl EnvelopeFit {
    pub fn gamma_x(&self) -> Option<&Basis> {
        self.reduction_x.as_ref().map(|r| &r.basis)
    }

    pub fn gamma_y(&self) -> Option<&Basis> {
        self.reduction_y.as_ref().map(|r| &r.basis)
    }
}

/// Predictions for new data, in the shape the task calls for.
#[derive(Debug, Clone)]
pub enum Predictions {
    /// m x r fitted means.
    Continuous(Array2<f64>),
    /// Class-1 probabilities and hard labels at threshold 0.5.
    Binary {
        probabilities: Array1<f64>,
        labels: Array1<f64>,
    },
    /// Linear risk scores; larger means shorter expected survival.
    Risk(Array1<f64>),
}

/// Centered data matrix scaled so that its crossproduct is the sample
/// covariance: Xn = Xc / sqrt(n).
fn scaled_centered(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut out = linalg::center_columns(x);
    out.mapv_inplace(|v| v / n.sqrt());
    out
}

/// How the u directions are chosen from the candidate pool: by envelope
/// score (the estimator this crate is about) or by spectrum order (the
/// principal-component baseline).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selection {
    ByScore,
    BySpectrum,
}

/// Runs the dense or sparse component selection for one data block.
fn reduce_block(
    block: &Array2<f64>,
    u_hat: Option<&SymmetricMatrix>,
    u: usize,
    d: usize,
    c: Option<f64>,
    mode: Selection,
) -> Result<NieceResult> {
    match mode {
        Selection::ByScore => {
            let u_hat = u_hat.ok_or_else(|| {
                Error::InvalidArgument("score-based selection needs an outer-product matrix".into())
            })?;
            match c {
                Some(c) => {
                    let cfg = PmdConfig::new(c)?;
                    let xn = scaled_centered(block);
                    niece::sniece_fit(xn.view(), u_hat, u, d, &cfg)
                }
                None => {
                    let m_hat = linalg::sample_covariance(block)?;
                    niece::niece_fit(&m_hat, u_hat, u, d)
                }
            }
        }
        Selection::BySpectrum => match c {
            Some(c) => {
                let cfg = PmdConfig::new(c)?;
                let xn = scaled_centered(block);
                niece::pcr_select(niece::PcrInput::Sparse { xn: xn.view(), cfg: &cfg }, u_hat, u, d)
            }
            None => {
                let m_hat = linalg::sample_covariance(block)?;
                niece::pcr_select(niece::PcrInput::Dense(&m_hat), u_hat, u, d)
            }
        },
    }
}

fn continuous_response(data: &Dataset) -> Result<&Array2<f64>> {
    match &data.response {
        Response::Continuous(y) => Ok(y),
        _ => Err(Error::InvalidArgument(
            "this task needs a continuous response block".into(),
        )),
    }
}

/// Reduces the response block: M = Cov(Y), U = Cov(Y,X) Cov(X,Y). The refit
/// regresses the reduced responses on the raw predictors.
pub fn response_envelope(
    data: &Dataset,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    response_fit(data, u, d, sparse_c, Selection::ByScore)
}

fn response_fit(
    data: &Dataset,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
    mode: Selection,
) -> Result<EnvelopeFit> {
    let y = continuous_response(data)?;
    let n = data.n();
    let r = y.ncols();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need n >= 3, got {n}")));
    }
    if u > r {
        return Err(Error::InvalidArgument(format!(
            "u = {u} exceeds the response dimension {r}"
        )));
    }
    let syx = linalg::cross_covariance(y, &data.x)?;
    let u_hat = SymmetricMatrix::new(syx.dot(&syx.t()))?;
    let reduction = reduce_block(y, Some(&u_hat), u, d, sparse_c, mode)?;

    let z = y.dot(reduction.basis.as_array());
    let (eta, _) = glm::refit_linear(data.x.view(), z.view())?;
    // eta maps predictors to reduced responses; expand back to Y space.
    let beta_env = reduction.basis.as_array().dot(&eta.t());
    let x_means = linalg::column_means(&data.x);
    let y_means = linalg::column_means(y);
    let intercept = &y_means - &beta_env.dot(&x_means);

    Ok(EnvelopeFit {
        task: Task::ResponseLinear,
        reduction_x: None,
        reduction_y: Some(reduction),
        eta,
        beta_env,
        intercept,
        glm_stage: None,
        hyper: Hyperparams {
            u_y: Some(u),
            d_y: Some(d),
            c: sparse_c,
            ..Hyperparams::default()
        },
        warnings: Vec::new(),
    })
}

/// Reduces the predictor block: M = Cov(X), U = Cov(X,Y) Cov(Y,X). The refit
/// regresses the responses on the reduced predictors.
pub fn predictor_envelope(
    data: &Dataset,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    predictor_fit(data, u, d, sparse_c, Selection::ByScore)
}

fn predictor_fit(
    data: &Dataset,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
    mode: Selection,
) -> Result<EnvelopeFit> {
    let y = continuous_response(data)?;
    let n = data.n();
    let p = data.p();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need n >= 3, got {n}")));
    }
    if u > p {
        return Err(Error::InvalidArgument(format!(
            "u = {u} exceeds the predictor dimension {p}"
        )));
    }
    let sxy = linalg::cross_covariance(&data.x, y)?;
    let u_hat = SymmetricMatrix::new(sxy.dot(&sxy.t()))?;
    let reduction = reduce_block(&data.x, Some(&u_hat), u, d, sparse_c, mode)?;

    let z = data.x.dot(reduction.basis.as_array());
    let (eta, _) = glm::refit_linear(z.view(), y.view())?;
    let beta_env = eta.t().dot(&reduction.basis.as_array().t());
    let x_means = linalg::column_means(&data.x);
    let y_means = linalg::column_means(y);
    let intercept = &y_means - &beta_env.dot(&x_means);

    Ok(EnvelopeFit {
        task: Task::PredictorLinear,
        reduction_x: Some(reduction),
        reduction_y: None,
        eta,
        beta_env,
        intercept,
        glm_stage: None,
        hyper: Hyperparams {
            u_x: Some(u),
            d_x: Some(d),
            c: sparse_c,
            ..Hyperparams::default()
        },
        warnings: Vec::new(),
    })
}

/// Reduces both blocks independently and refits the doubly reduced
/// regression.
pub fn simultaneous_envelope(
    data: &Dataset,
    u_x: usize,
    u_y: usize,
    d_x: usize,
    d_y: usize,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    let y = continuous_response(data)?;
    let n = data.n();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("need n >= 3, got {n}")));
    }
    let sxy = linalg::cross_covariance(&data.x, y)?;
    let u_hat_x = SymmetricMatrix::new(sxy.dot(&sxy.t()))?;
    let u_hat_y = SymmetricMatrix::new(sxy.t().dot(&sxy))?;
    let red_x = reduce_block(&data.x, Some(&u_hat_x), u_x, d_x, sparse_c, Selection::ByScore)?;
    let red_y = reduce_block(y, Some(&u_hat_y), u_y, d_y, sparse_c, Selection::ByScore)?;

    let zx = data.x.dot(red_x.basis.as_array());
    let zy = y.dot(red_y.basis.as_array());
    let (eta, _) = glm::refit_linear(zx.view(), zy.view())?;
    let beta_env = red_y
        .basis
        .as_array()
        .dot(&eta.t())
        .dot(&red_x.basis.as_array().t());
    let x_means = linalg::column_means(&data.x);
    let y_means = linalg::column_means(y);
    let intercept = &y_means - &beta_env.dot(&x_means);

    Ok(EnvelopeFit {
        task: Task::SimultaneousLinear,
        reduction_x: Some(red_x),
        reduction_y: Some(red_y),
        eta,
        beta_env,
        intercept,
        glm_stage: None,
        hyper: Hyperparams {
            u_x: Some(u_x),
            u_y: Some(u_y),
            d_x: Some(d_x),
            d_y: Some(d_y),
            c: sparse_c,
            lambda: None,
        },
        warnings: Vec::new(),
    })
}

/// Shared tail of the logistic and Cox paths: outer product from the
/// penalized coefficients, reduction, and bookkeeping.
fn glm_reduction(
    data: &Dataset,
    stage: &GlmFit,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
) -> Result<(NieceResult, Vec<String>)> {
    if stage.beta.iter().all(|&b| b.abs() <= 1e-12) {
        return Err(Error::ZeroCoefficients {
            lambda: stage.lambda,
        });
    }
    let mut warnings = Vec::new();
    if !stage.converged {
        warnings.push(format!(
            "penalized pre-stage stopped after {} iterations without meeting its tolerance",
            stage.iterations
        ));
    }
    let b = stage.beta.view().insert_axis(Axis(1));
    let u_hat = SymmetricMatrix::new(b.dot(&b.t()))?;
    let reduction = reduce_block(&data.x, Some(&u_hat), u, d, sparse_c, Selection::ByScore)?;
    warnings.extend(reduction.warnings.iter().cloned());
    Ok((reduction, warnings))
}

/// Envelope-reduced logistic regression. The outer product comes from a
/// lasso fit at `lambda`; the refit is an unpenalized logistic MLE on the
/// reduced predictors.
pub fn logistic_envelope(
    data: &Dataset,
    u: usize,
    d: usize,
    lambda: f64,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    let y = match &data.response {
        Response::Binary(y) => y,
        _ => {
            return Err(Error::InvalidArgument(
                "logistic task needs a binary response".into(),
            ))
        }
    };
    let stage = glm::lasso_logistic(data.x.view(), y.view(), lambda, 1e-8, 200)?;
    logistic_envelope_with_stage(data, &stage, u, d, sparse_c)
}

/// [`logistic_envelope`] with the penalized stage precomputed. Tuning loops
/// reuse one stage fit across every combination sharing its training rows
/// and penalty, since the stage depends on neither u, d, nor the budget.
pub fn logistic_envelope_with_stage(
    data: &Dataset,
    stage: &glm::GlmFit,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    let y = match &data.response {
        Response::Binary(y) => y,
        _ => {
            return Err(Error::InvalidArgument(
                "logistic task needs a binary response".into(),
            ))
        }
    };
    let (reduction, warnings) = glm_reduction(data, stage, u, d, sparse_c)?;

    let z = data.x.dot(reduction.basis.as_array());
    let (eta_vec, b0) = glm::refit_logistic(z.view(), y.view())?;
    let beta_row = reduction.basis.as_array().dot(&eta_vec);
    let beta_env = beta_row.insert_axis(Axis(0)).to_owned();
    let eta = eta_vec.insert_axis(Axis(1)).to_owned();

    Ok(EnvelopeFit {
        task: Task::Logistic,
        reduction_x: Some(reduction),
        reduction_y: None,
        eta,
        beta_env,
        intercept: Array1::from_vec(vec![b0]),
        glm_stage: Some(stage.clone()),
        hyper: Hyperparams {
            u_x: Some(u),
            d_x: Some(d),
            c: sparse_c,
            lambda: Some(stage.lambda),
            ..Hyperparams::default()
        },
        warnings,
    })
}

/// Envelope-reduced Cox regression. The outer product comes from a lasso
/// partial-likelihood fit at `lambda`; the refit is an unpenalized Cox MLE
/// on the reduced predictors.
pub fn cox_envelope(
    data: &Dataset,
    u: usize,
    d: usize,
    lambda: f64,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    let (time, status) = match &data.response {
        Response::Survival { time, status } => (time, status),
        _ => {
            return Err(Error::InvalidArgument(
                "cox task needs a survival response".into(),
            ))
        }
    };
    let stage = glm::lasso_cox(data.x.view(), time.view(), status.view(), lambda, 1e-8, 200)?;
    cox_envelope_with_stage(data, &stage, u, d, sparse_c)
}

/// [`cox_envelope`] with the penalized stage precomputed; see
/// [`logistic_envelope_with_stage`].
pub fn cox_envelope_with_stage(
    data: &Dataset,
    stage: &glm::GlmFit,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    let (time, status) = match &data.response {
        Response::Survival { time, status } => (time, status),
        _ => {
            return Err(Error::InvalidArgument(
                "cox task needs a survival response".into(),
            ))
        }
    };
    let (reduction, warnings) = glm_reduction(data, stage, u, d, sparse_c)?;

    let z = data.x.dot(reduction.basis.as_array());
    let eta_vec = glm::refit_cox(z.view(), time.view(), status.view())?;
    let beta_row = reduction.basis.as_array().dot(&eta_vec);
    let beta_env = beta_row.insert_axis(Axis(0)).to_owned();
    let eta = eta_vec.insert_axis(Axis(1)).to_owned();

    Ok(EnvelopeFit {
        task: Task::Cox,
        reduction_x: Some(reduction),
        reduction_y: None,
        eta,
        beta_env,
        intercept: Array1::zeros(0),
        glm_stage: Some(stage.clone()),
        hyper: Hyperparams {
            u_x: Some(u),
            d_x: Some(d),
            c: sparse_c,
            lambda: Some(stage.lambda),
            ..Hyperparams::default()
        },
        warnings,
    })
}

/// Principal-component baseline sharing the envelope pipeline: the same
/// candidate construction and refit, but directions are kept in spectrum
/// order instead of score order. For the logistic and Cox tasks the
/// reduction is fully unsupervised, so no penalized pre-stage is run.
pub fn pcr_baseline(
    data: &Dataset,
    task: Task,
    u: usize,
    d: usize,
    sparse_c: Option<f64>,
) -> Result<EnvelopeFit> {
    match task {
        Task::ResponseLinear => response_fit(data, u, d, sparse_c, Selection::BySpectrum),
        Task::PredictorLinear => predictor_fit(data, u, d, sparse_c, Selection::BySpectrum),
        Task::SimultaneousLinear => Err(Error::InvalidArgument(
            "run the principal-component baseline on one block at a time".into(),
        )),
        Task::Logistic => {
            let y = match &data.response {
                Response::Binary(y) => y,
                _ => {
                    return Err(Error::InvalidArgument(
                        "logistic task needs a binary response".into(),
                    ))
                }
            };
            let reduction = reduce_block(&data.x, None, u, d, sparse_c, Selection::BySpectrum)?;
            let warnings = reduction.warnings.clone();
            let z = data.x.dot(reduction.basis.as_array());
            let (eta_vec, b0) = glm::refit_logistic(z.view(), y.view())?;
            let beta_row = reduction.basis.as_array().dot(&eta_vec);
            let beta_env = beta_row.insert_axis(Axis(0)).to_owned();
            let eta = eta_vec.insert_axis(Axis(1)).to_owned();
            Ok(EnvelopeFit {
                task: Task::Logistic,
                reduction_x: Some(reduction),
                reduction_y: None,
                eta,
                beta_env,
                intercept: Array1::from_vec(vec![b0]),
                glm_stage: None,
                hyper: Hyperparams {
                    u_x: Some(u),
                    d_x: Some(d),
                    c: sparse_c,
                    ..Hyperparams::default()
                },
                warnings,
            })
        }
        Task::Cox => {
            let (time, status) = match &data.response {
                Response::Survival { time, status } => (time, status),
                _ => {
                    return Err(Error::InvalidArgument(
                        "cox task needs a survival response".into(),
                    ))
                }
            };
            let reduction = reduce_block(&data.x, None, u, d, sparse_c, Selection::BySpectrum)?;
            let warnings = reduction.warnings.clone();
            let z = data.x.dot(reduction.basis.as_array());
            let eta_vec = glm::refit_cox(z.view(), time.view(), status.view())?;
            let beta_row = reduction.basis.as_array().dot(&eta_vec);
            let beta_env = beta_row.insert_axis(Axis(0)).to_owned();
            let eta = eta_vec.insert_axis(Axis(1)).to_owned();
            Ok(EnvelopeFit {
                task: Task::Cox,
                reduction_x: Some(reduction),
                reduction_y: None,
                eta,
                beta_env,
                intercept: Array1::zeros(0),
                glm_stage: None,
                hyper: Hyperparams {
                    u_x: Some(u),
                    d_x: Some(d),
                    c: sparse_c,
                    ..Hyperparams::default()
                },
                warnings,
            })
        }
    }
}

/// Projection estimator Gamma Gamma' theta for comparison against the
/// default refit estimator. `theta` must have as many rows as the basis.
pub fn project_full_estimator(basis: &Basis, theta: ArrayView2<f64>) -> Result<Array2<f64>> {
    if theta.nrows() != basis.rows() {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} rows but theta has {}",
            basis.rows(),
            theta.nrows()
        )));
    }
    let g = basis.as_array();
    Ok(g.dot(&g.t().dot(&theta)))
}

/// Applies a fitted model to new predictor rows.
pub fn predict(fit: &EnvelopeFit, xnew: ArrayView2<f64>) -> Result<Predictions> {
    let p = fit.beta_env.ncols();
    if xnew.ncols() != p {
        return Err(Error::DimensionMismatch(format!(
            "fit expects {} predictor columns, got {}",
            p,
            xnew.ncols()
        )));
    }
    if xnew.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let linear = xnew.dot(&fit.beta_env.t());
    match fit.task {
        Task::ResponseLinear | Task::PredictorLinear | Task::SimultaneousLinear => {
            let mut out = linear;
            for (j, mut col) in out.columns_mut().into_iter().enumerate() {
                col.mapv_inplace(|v| v + fit.intercept[j]);
            }
            Ok(Predictions::Continuous(out))
        }
        Task::Logistic => {
            let b0 = fit.intercept[0];
            let m = xnew.nrows();
            let mut probabilities = Array1::zeros(m);
            let mut labels = Array1::zeros(m);
            for i in 0..m {
                let eta = linear[[i, 0]] + b0;
                let p1 = if eta >= 0.0 {
                    1.0 / (1.0 + (-eta).exp())
                } else {
                    let e = eta.exp();
                    e / (1.0 + e)
                };
                probabilities[i] = p1;
                labels[i] = if p1 >= 0.5 { 1.0 } else { 0.0 };
            }
            Ok(Predictions::Binary {
                probabilities,
                labels,
            })
        }
        Task::Cox => Ok(Predictions::Risk(linear.column(0).to_owned())),
    }
}
