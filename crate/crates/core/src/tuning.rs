//! Cross-validation for the sparsity budget c, the penalty lambda, and the
//! reduced dimension u (with the coupled candidate count d = 2u).
//!
//! Fits are pure, so fold results do not depend on evaluation order; the
//! only randomness is the seeded shuffle inside [`kfold_split`].

use ndarray::Axis;

use crate::envelope::{self, Dataset, EnvelopeFit, Response, Task};
use crate::error::{Error, Result};
use crate::glm;

/// Hyperparameter grids a cross-validation plan may sweep.
#[derive(Debug, Clone, Default)]
pub struct Grids {
    pub c: Vec<f64>,
    pub lambda: Vec<f64>,
    pub u: Vec<usize>,
}

/// Fold assignment for one dataset.
#[derive(Debug, Clone)]
pub struct CvPlan {
    pub n: usize,
    pub folds: usize,
    /// Length-n fold label per observation, each in 0..folds.
    pub assignment: Vec<usize>,
    pub grids: Grids,
}

/// Chosen sparsity budget with the loss at every grid point.
#[derive(Debug, Clone)]
pub struct CSelection {
    pub chosen: f64,
    /// (c, mean CV loss) per retained grid point, in grid order.
    pub table: Vec<(f64, f64)>,
    /// Penalty used for the outer-product stage, when the task needed one.
    pub lambda: Option<f64>,
    pub warnings: Vec<String>,
}

/// One point of the dimension-selection curve.
#[derive(Debug, Clone)]
pub struct UPoint {
    pub u: usize,
    pub d: usize,
    pub c: Option<f64>,
    pub loss: f64,
}

/// Chosen dimension with the full loss curve.
#[derive(Debug, Clone)]
pub struct USelection {
    pub chosen: usize,
    pub curve: Vec<UPoint>,
    pub lambda: Option<f64>,
    pub warnings: Vec<String>,
}

/// Chosen penalty with the loss at every grid point.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub chosen: f64,
    pub table: Vec<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// How the component stage should be run while tuning.
#[derive(Debug, Clone)]
pub enum SparseMode {
    /// Dense eigenvector candidates.
    Dense,
    /// Sparse candidates with a fixed budget.
    Fixed(f64),
    /// Sparse candidates, budget re-selected by CV at every dimension.
    Tuned(Vec<f64>),
}

/// Eight geometric points from 1.1 up to sqrt(p).
pub fn default_c_grid(p: usize) -> Vec<f64> {
    let hi = (p as f64).sqrt();
    if hi <= 1.1 {
        return vec![hi.max(1.0)];
    }
    let lo = 1.1f64;
    (0..8)
        .map(|i| lo * (hi / lo).powf(i as f64 / 7.0))
        .collect()
}

/// Twenty log-spaced points from lambda_max down to 0.01 lambda_max.
pub fn default_lambda_grid(lambda_max: f64) -> Vec<f64> {
    (0..20)
        .map(|i| lambda_max * 0.01f64.powf(i as f64 / 19.0))
        .collect()
}

/// Balanced deterministic fold labels: a seeded shuffle followed by
/// round-robin assignment, so fold sizes differ by at most one.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<CvPlan> {
    if k < 2 || k > n {
        return Err(Error::InvalidArgument(format!(
            "need 2 <= K <= n, got K={k} with n={n}"
        )));
    }
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut assignment = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        assignment[idx] = pos % k;
    }
    Ok(CvPlan {
        n,
        folds: k,
        assignment,
        grids: Grids::default(),
    })
}

fn subset(data: &Dataset, idx: &[usize]) -> Dataset {
    let x = data.x.select(Axis(0), idx);
    let response = match &data.response {
        Response::Continuous(y) => Response::Continuous(y.select(Axis(0), idx)),
        Response::Binary(y) => Response::Binary(y.select(Axis(0), idx)),
        Response::Survival { time, status } => Response::Survival {
            time: time.select(Axis(0), idx),
            status: status.select(Axis(0), idx),
        },
    };
    Dataset {
        x,
        response,
        x_names: data.x_names.clone(),
        y_names: data.y_names.clone(),
    }
}

/// Dimension of the block the component stage decomposes: the response
/// width for response reduction, the predictor width otherwise.
fn reduced_block_dim(data: &Dataset, task: Task) -> Result<usize> {
    match task {
        Task::ResponseLinear => match &data.response {
            Response::Continuous(y) => Ok(y.ncols()),
            _ => Err(Error::InvalidArgument(
                "response reduction needs a continuous response".into(),
            )),
        },
        Task::PredictorLinear | Task::Logistic | Task::Cox => Ok(data.p()),
        Task::SimultaneousLinear => Err(Error::InvalidArgument(
            "tune the two sides of a simultaneous fit separately".into(),
        )),
    }
}

fn fit_task(
    task: Task,
    data: &Dataset,
    u: usize,
    d: usize,
    c: Option<f64>,
    lambda: Option<f64>,
) -> Result<EnvelopeFit> {
    match task {
        Task::ResponseLinear => envelope::response_envelope(data, u, d, c),
        Task::PredictorLinear => envelope::predictor_envelope(data, u, d, c),
        Task::Logistic => {
            let l = lambda.ok_or_else(|| {
                Error::InvalidArgument("logistic tuning needs a lambda".into())
            })?;
            envelope::logistic_envelope(data, u, d, l, c)
        }
        Task::Cox => {
            let l = lambda
                .ok_or_else(|| Error::InvalidArgument("cox tuning needs a lambda".into()))?;
            envelope::cox_envelope(data, u, d, l, c)
        }
        Task::SimultaneousLinear => Err(Error::InvalidArgument(
            "tune the two sides of a simultaneous fit separately".into(),
        )),
    }
}

/// Training and holdout subsets of every fold, with the penalized stage fit
/// for GLM tasks. The stage depends only on the training rows and the
/// penalty, never on (u, d, c), so tuning loops compute it once per fold
/// and reuse it across every combination they evaluate.
struct PreparedFolds {
    train: Vec<Dataset>,
    hold: Vec<Dataset>,
    stage: Vec<std::result::Result<Option<glm::GlmFit>, String>>,
}

fn stage_fit(
    task: Task,
    train: &Dataset,
    lambda: Option<f64>,
) -> std::result::Result<Option<glm::GlmFit>, String> {
    match task {
        Task::Logistic => {
            let l = lambda.ok_or_else(|| "logistic tuning needs a lambda".to_string())?;
            match &train.response {
                Response::Binary(y) => glm::lasso_logistic(train.x.view(), y.view(), l, 1e-8, 200)
                    .map(Some)
                    .map_err(|e| e.to_string()),
                _ => Err("logistic task needs a binary response".into()),
            }
        }
        Task::Cox => {
            let l = lambda.ok_or_else(|| "cox tuning needs a lambda".to_string())?;
            match &train.response {
                Response::Survival { time, status } => {
                    glm::lasso_cox(train.x.view(), time.view(), status.view(), l, 1e-8, 200)
                        .map(Some)
                        .map_err(|e| e.to_string())
                }
                _ => Err("cox task needs a survival response".into()),
            }
        }
        _ => Ok(None),
    }
}

fn prepare_folds(data: &Dataset, task: Task, plan: &CvPlan, lambda: Option<f64>) -> PreparedFolds {
    let mut train = Vec::with_capacity(plan.folds);
    let mut hold = Vec::with_capacity(plan.folds);
    for g in 0..plan.folds {
        let mut train_idx = Vec::new();
        let mut hold_idx = Vec::new();
        for (i, &a) in plan.assignment.iter().enumerate() {
            if a == g {
                hold_idx.push(i);
            } else {
                train_idx.push(i);
            }
        }
        train.push(subset(data, &train_idx));
        hold.push(subset(data, &hold_idx));
    }
    let stage = train.iter().map(|tr| stage_fit(task, tr, lambda)).collect();
    PreparedFolds { train, hold, stage }
}

fn fit_fold(
    task: Task,
    folds: &PreparedFolds,
    g: usize,
    u: usize,
    d: usize,
    c: Option<f64>,
    lambda: Option<f64>,
) -> std::result::Result<EnvelopeFit, String> {
    let train = &folds.train[g];
    match &folds.stage[g] {
        Ok(Some(stage)) => match task {
            Task::Logistic => envelope::logistic_envelope_with_stage(train, stage, u, d, c),
            Task::Cox => envelope::cox_envelope_with_stage(train, stage, u, d, c),
            _ => fit_task(task, train, u, d, c, lambda),
        }
        .map_err(|e| e.to_string()),
        Ok(None) => fit_task(task, train, u, d, c, lambda).map_err(|e| e.to_string()),
        Err(msg) => Err(msg.clone()),
    }
}

/// Holdout loss of one fit: mean squared prediction error for linear tasks,
/// mean held-out negative log-likelihood for logistic, and the negative
/// partial log-likelihood over the holdout risk sets for Cox.
pub fn cv_loss(fit: &EnvelopeFit, holdout: &Dataset) -> Result<f64> {
    if holdout.n() == 0 {
        return Err(Error::InvalidArgument("empty holdout".into()));
    }
    match (fit.task, &holdout.response) {
        (
            Task::ResponseLinear | Task::PredictorLinear | Task::SimultaneousLinear,
            Response::Continuous(y),
        ) => {
            let preds = envelope::predict(fit, holdout.x.view())?;
            let fitted = match preds {
                envelope::Predictions::Continuous(f) => f,
                _ => unreachable!("linear task yields continuous predictions"),
            };
            if fitted.ncols() != y.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "fit predicts {} response columns, holdout has {}",
                    fitted.ncols(),
                    y.ncols()
                )));
            }
            let n = y.nrows() as f64;
            let sq: f64 = (&fitted - y).iter().map(|v| v * v).sum();
            Ok(sq / n)
        }
        (Task::Logistic, Response::Binary(y)) => {
            let (value, _, _) = glm::logistic_nll(
                fit.beta_env.row(0),
                fit.intercept[0],
                holdout.x.view(),
                y.view(),
            )?;
            Ok(value)
        }
        (Task::Cox, Response::Survival { time, status }) => {
            let (value, _) = glm::cox_neg_partial_loglik(
                fit.beta_env.row(0),
                holdout.x.view(),
                time.view(),
                status.view(),
            )?;
            Ok(value)
        }
        _ => Err(Error::InvalidArgument(
            "holdout response does not match the fitted task".into(),
        )),
    }
}

/// Mean CV loss of one hyperparameter combination over the folds of a plan.
/// Folds whose fit or evaluation fails are skipped with a warning; if every
/// fold fails the combination is unusable.
pub fn mean_cv_loss(
    data: &Dataset,
    task: Task,
    plan: &CvPlan,
    u: usize,
    d: usize,
    c: Option<f64>,
    lambda: Option<f64>,
) -> Result<(f64, Vec<String>)> {
    if plan.n != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "plan covers {} rows, data has {}",
            plan.n,
            data.n()
        )));
    }
    let folds = prepare_folds(data, task, plan, lambda);
    mean_cv_loss_prepared(task, &folds, u, d, c, lambda)
}

fn mean_cv_loss_prepared(
    task: Task,
    folds: &PreparedFolds,
    u: usize,
    d: usize,
    c: Option<f64>,
    lambda: Option<f64>,
) -> Result<(f64, Vec<String>)> {
    let mut total = 0.0;
    let mut used = 0usize;
    let mut warnings = Vec::new();
    for g in 0..folds.train.len() {
        let loss_res = fit_fold(task, folds, g, u, d, c, lambda)
            .and_then(|fit| cv_loss(&fit, &folds.hold[g]).map_err(|e| e.to_string()));
        match loss_res {
            Ok(loss) if loss.is_finite() => {
                total += loss;
                used += 1;
            }
            Ok(loss) => warnings.push(format!("fold {g}: non-finite loss {loss}")),
            Err(e) => warnings.push(format!("fold {g}: {e}")),
        }
    }
    if used == 0 {
        return Err(Error::CvFailed(format!(
            "every fold failed at u={u}, d={d}: {}",
            warnings.join("; ")
        )));
    }
    Ok((total / used as f64, warnings))
}

fn validate_c_grid(grid: &[f64], block_dim: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty c grid".into()));
    }
    let hi = (block_dim as f64).sqrt();
    for &c in grid {
        if !c.is_finite() || c < 1.0 || c > hi + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "c = {c} outside [1, sqrt({block_dim})]"
            )));
        }
    }
    Ok(())
}

/// Resolves the penalty for the outer-product stage of a GLM task: the
/// caller's value if given, otherwise plain-lasso CV on the full data.
fn resolve_lambda(
    data: &Dataset,
    task: Task,
    k: usize,
    seed: u64,
    lambda: Option<f64>,
    warnings: &mut Vec<String>,
) -> Result<Option<f64>> {
    match task {
        Task::Logistic | Task::Cox => {
            if let Some(l) = lambda {
                return Ok(Some(l));
            }
            let sel = select_lambda(data, task, k, seed, None)?;
            warnings.extend(sel.warnings);
            Ok(Some(sel.chosen))
        }
        _ => Ok(None),
    }
}

/// Selects the sparsity budget by K-fold CV at fixed (u, d). Ties prefer
/// the smaller (sparser) budget.
pub fn select_c(
    data: &Dataset,
    task: Task,
    u: usize,
    d: usize,
    c_grid: &[f64],
    k: usize,
    seed: u64,
    lambda: Option<f64>,
) -> Result<CSelection> {
    let block_dim = reduced_block_dim(data, task)?;
    validate_c_grid(c_grid, block_dim)?;
    let mut warnings = Vec::new();
    let lambda = resolve_lambda(data, task, k, seed, lambda, &mut warnings)?;
    let plan = kfold_split(data.n(), k, seed)?;
    let folds = prepare_folds(data, task, &plan, lambda);
    select_c_prepared(task, &folds, u, d, c_grid, block_dim, lambda, warnings)
}

#[allow(clippy::too_many_arguments)]
fn select_c_prepared(
    task: Task,
    folds: &PreparedFolds,
    u: usize,
    d: usize,
    c_grid: &[f64],
    block_dim: usize,
    lambda: Option<f64>,
    mut warnings: Vec<String>,
) -> Result<CSelection> {
    validate_c_grid(c_grid, block_dim)?;
    let mut sorted = c_grid.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut table = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &c in &sorted {
        match mean_cv_loss_prepared(task, folds, u, d, Some(c), lambda) {
            Ok((loss, mut w)) => {
                warnings.append(&mut w);
                table.push((c, loss));
                if best.map_or(true, |(_, bl)| loss < bl) {
                    best = Some((c, loss));
                }
            }
            Err(e) => warnings.push(format!("c = {c} excluded: {e}")),
        }
    }
    match best {
        Some((chosen, _)) => Ok(CSelection {
            chosen,
            table,
            lambda,
            warnings,
        }),
        None => Err(Error::CvFailed(
            "every sparsity budget failed cross-validation".into(),
        )),
    }
}

/// Selects the reduced dimension by K-fold CV, coupling the candidate count
/// as d = min(2u, n-1, block dim). With [`SparseMode::Tuned`] the budget is
/// re-selected at every dimension. Ties prefer the smaller dimension.
pub fn select_u(
    data: &Dataset,
    task: Task,
    u_grid: &[usize],
    k: usize,
    seed: u64,
    sparse: &SparseMode,
    lambda: Option<f64>,
) -> Result<USelection> {
    let block_dim = reduced_block_dim(data, task)?;
    if u_grid.is_empty() {
        return Err(Error::InvalidArgument("empty u grid".into()));
    }
    let n = data.n();
    let u_cap = block_dim.min(n.saturating_sub(2));
    for &u in u_grid {
        if u < 1 || u > u_cap {
            return Err(Error::InvalidArgument(format!(
                "u = {u} outside 1..={u_cap}"
            )));
        }
    }
    let mut warnings = Vec::new();
    let lambda = resolve_lambda(data, task, k, seed, lambda, &mut warnings)?;
    let plan = kfold_split(n, k, seed)?;
    let folds = prepare_folds(data, task, &plan, lambda);

    let mut sorted = u_grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut curve = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &u in &sorted {
        let d = (2 * u).min(n - 1).min(block_dim);
        let evaluated: Result<(Option<f64>, f64)> = match sparse {
            SparseMode::Dense => {
                mean_cv_loss_prepared(task, &folds, u, d, None, lambda).map(|(loss, mut w)| {
                    warnings.append(&mut w);
                    (None, loss)
                })
            }
            SparseMode::Fixed(c) => {
                mean_cv_loss_prepared(task, &folds, u, d, Some(*c), lambda).map(
                    |(loss, mut w)| {
                        warnings.append(&mut w);
                        (Some(*c), loss)
                    },
                )
            }
            SparseMode::Tuned(grid) => {
                select_c_prepared(task, &folds, u, d, grid, block_dim, lambda, Vec::new()).map(
                    |sel| {
                        let loss = sel
                            .table
                            .iter()
                            .find(|(c, _)| *c == sel.chosen)
                            .map(|(_, l)| *l)
                            .unwrap_or(f64::INFINITY);
                        warnings.extend(sel.warnings);
                        (Some(sel.chosen), loss)
                    },
                )
            }
        };
        match evaluated {
            Ok((c, loss)) => {
                curve.push(UPoint { u, d, c, loss });
                if best.map_or(true, |(_, bl)| loss < bl) {
                    best = Some((u, loss));
                }
            }
            Err(e) => warnings.push(format!("u = {u} excluded: {e}")),
        }
    }
    match best {
        Some((chosen, _)) => Ok(USelection {
            chosen,
            curve,
            lambda,
            warnings,
        }),
        None => Err(Error::CvFailed(
            "every dimension failed cross-validation".into(),
        )),
    }
}

/// Selects the lasso penalty for a logistic or Cox task by K-fold CV of the
/// plain penalized fit, before any envelope stage. Ties prefer the larger
/// (sparser) penalty.
pub fn select_lambda(
    data: &Dataset,
    task: Task,
    k: usize,
    seed: u64,
    grid: Option<&[f64]>,
) -> Result<LambdaSelection> {
    let plan = kfold_split(data.n(), k, seed)?;
    let owned_grid: Vec<f64> = match grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|l| !l.is_finite() || *l <= 0.0) {
                return Err(Error::InvalidArgument(
                    "lambda grid must be non-empty and positive".into(),
                ));
            }
            let mut g = g.to_vec();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            g
        }
        None => {
            let lmax = match (task, &data.response) {
                (Task::Logistic, Response::Binary(y)) => {
                    glm::lambda_max_logistic(data.x.view(), y.view())?
                }
                (Task::Cox, Response::Survival { time, status }) => {
                    glm::lambda_max_cox(data.x.view(), time.view(), status.view())?
                }
                _ => {
                    return Err(Error::InvalidArgument(
                        "lambda selection applies to logistic and cox tasks".into(),
                    ))
                }
            };
            default_lambda_grid(lmax)
        }
    };

    let mut warnings = Vec::new();
    let mut totals = vec![0.0f64; owned_grid.len()];
    let mut used = vec![0usize; owned_grid.len()];
    for g in 0..plan.folds {
        let mut train_idx = Vec::new();
        let mut hold_idx = Vec::new();
        for (i, &a) in plan.assignment.iter().enumerate() {
            if a == g {
                hold_idx.push(i);
            } else {
                train_idx.push(i);
            }
        }
        let train = subset(data, &train_idx);
        let hold = subset(data, &hold_idx);
        // Walk the grid from the strongest penalty down, seeding each fit
        // with the previous solution.
        let mut warm: Option<glm::GlmFit> = None;
        for (li, &lambda) in owned_grid.iter().enumerate() {
            let fold_loss: Result<f64> = (|| match (&train.response, &hold.response) {
                (Response::Binary(ytr), Response::Binary(yho)) => {
                    let fit = glm::lasso_logistic_warm(
                        train.x.view(),
                        ytr.view(),
                        lambda,
                        1e-7,
                        200,
                        warm.as_ref(),
                    )?;
                    let (value, _, _) = glm::logistic_nll(
                        fit.beta.view(),
                        fit.intercept,
                        hold.x.view(),
                        yho.view(),
                    )?;
                    warm = Some(fit);
                    Ok(value)
                }
                (
                    Response::Survival { time, status },
                    Response::Survival {
                        time: tho,
                        status: sho,
                    },
                ) => {
                    let fit = glm::lasso_cox_warm(
                        train.x.view(),
                        time.view(),
                        status.view(),
                        lambda,
                        1e-7,
                        200,
                        warm.as_ref(),
                    )?;
                    let (value, _) = glm::cox_neg_partial_loglik(
                        fit.beta.view(),
                        hold.x.view(),
                        tho.view(),
                        sho.view(),
                    )?;
                    warm = Some(fit);
                    Ok(value)
                }
                _ => Err(Error::InvalidArgument(
                    "lambda selection applies to logistic and cox tasks".into(),
                )),
            })();
            match fold_loss {
                Ok(l) if l.is_finite() => {
                    totals[li] += l;
                    used[li] += 1;
                }
                Ok(l) => warnings.push(format!("lambda {lambda:.4e}, fold {g}: loss {l}")),
                Err(e) => warnings.push(format!("lambda {lambda:.4e}, fold {g}: {e}")),
            }
        }
    }

    let mut table = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for (li, &lambda) in owned_grid.iter().enumerate() {
        if used[li] == 0 {
            warnings.push(format!("lambda {lambda:.4e} excluded: every fold failed"));
            continue;
        }
        let loss = totals[li] / used[li] as f64;
        table.push((lambda, loss));
        if best.map_or(true, |(_, bl)| loss < bl) {
            best = Some((lambda, loss));
        }
    }
    match best {
        Some((chosen, _)) => Ok(LambdaSelection {
            chosen,
            table,
            warnings,
        }),
        None => Err(Error::CvFailed(
            "every penalty failed cross-validation".into(),
        )),
    }
}
