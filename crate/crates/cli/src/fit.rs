use std::path::{Path, PathBuf};

use clap::Args;

use niece_core::envelope::{self, Dataset, EnvelopeFit, Response, Task};
use niece_core::tuning::{self, SparseMode};

use crate::common::{self, TaskArg};
use crate::doc::{self, CvDoc, UPointDoc};
use crate::error::{CliError, Result};
use crate::io::{self, Table};

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training data CSV with a header row; all cells numeric.
    pub data: PathBuf,

    /// Which regression to reduce.
    #[arg(long, value_enum)]
    pub task: TaskArg,

    /// Response column name(s); repeat the flag or comma-separate.
    #[arg(long, value_delimiter = ',')]
    pub response: Vec<String>,

    /// Survival time column (cox task).
    #[arg(long)]
    pub time: Option<String>,

    /// Event indicator column, 1 = observed event (cox task).
    #[arg(long)]
    pub event: Option<String>,

    /// Envelope dimension; cross-validated over --u-grid when omitted.
    #[arg(long)]
    pub u: Option<usize>,

    /// Response-side dimension (simultaneous task only).
    #[arg(long)]
    pub u_y: Option<usize>,

    /// Candidate pool size; defaults to 2u capped at the block dimension.
    #[arg(long)]
    pub d: Option<usize>,

    /// Response-side pool size (simultaneous task only).
    #[arg(long)]
    pub d_y: Option<usize>,

    /// Sparsity budget in [1, sqrt(dim)]; turns on the sparse estimator.
    #[arg(long)]
    pub c: Option<f64>,

    /// Cross-validate the sparsity budget instead of fixing it.
    #[arg(long, default_value_t = false)]
    pub tune_c: bool,

    /// Budget grid for --tune-c; defaults to eight geometric points.
    #[arg(long, value_delimiter = ',')]
    pub c_grid: Vec<f64>,

    /// Dimension grid when --u is omitted; defaults to 1..=min(dim, n-2, 10).
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Vec<usize>,

    /// Lasso penalty for the logistic and cox pre-stage; cross-validated
    /// when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,

    /// Cross-validation folds.
    #[arg(long, default_value_t = 5)]
    pub folds: usize,

    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,

    /// Worker threads; 0 means one per core. NIECE_THREADS overrides.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    /// Prefix for the .json and _coefficients.csv outputs.
    #[arg(long, default_value = "niece_fit")]
    pub out_prefix: String,
}

/// Columns split into a dataset plus the names that went where.
struct Assembled {
    data: Dataset,
    x_names: Vec<String>,
    y_names: Vec<String>,
}

fn assemble(table: &Table, task: Task, args: &FitArgs) -> Result<Assembled> {
    let (y_idx, y_names) = match task {
        Task::Cox => {
            let time = args
                .time
                .clone()
                .ok_or_else(|| CliError::Input("the cox task needs --time".into()))?;
            let event = args
                .event
                .clone()
                .ok_or_else(|| CliError::Input("the cox task needs --event".into()))?;
            let names = vec![time, event];
            let idx = table.require_columns(&names, "survival")?;
            (idx, names)
        }
        Task::Logistic => {
            if args.response.len() != 1 {
                return Err(CliError::Input(
                    "the logistic task needs exactly one --response column".into(),
                ));
            }
            let idx = table.require_columns(&args.response, "response")?;
            (idx, args.response.clone())
        }
        _ => {
            if args.response.is_empty() {
                return Err(CliError::Input(
                    "pass at least one --response column".into(),
                ));
            }
            let idx = table.require_columns(&args.response, "response")?;
            (idx, args.response.clone())
        }
    };

    let x_idx: Vec<usize> = (0..table.names.len())
        .filter(|j| !y_idx.contains(j))
        .collect();
    if x_idx.is_empty() {
        return Err(CliError::Input(
            "no predictor columns left after removing the response columns".into(),
        ));
    }
    let x_names: Vec<String> = x_idx.iter().map(|&j| table.names[j].clone()).collect();
    let x = table.gather(&x_idx);
    let y = table.gather(&y_idx);

    let response = match task {
        Task::Logistic => {
            let labels = y.column(0).to_owned();
            if let Some(bad) = labels.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(CliError::Input(format!(
                    "label column '{}' contains {bad}, expected 0 or 1",
                    y_names[0]
                )));
            }
            Response::Binary(labels)
        }
        Task::Cox => {
            let status = y.column(1).to_owned();
            if let Some(bad) = status.iter().find(|v| **v != 0.0 && **v != 1.0) {
                return Err(CliError::Input(format!(
                    "event column '{}' contains {bad}, expected 0 or 1",
                    y_names[1]
                )));
            }
            Response::Survival {
                time: y.column(0).to_owned(),
                status,
            }
        }
        _ => Response::Continuous(y),
    };

    let data = Dataset::new(x, response).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Assembled {
        data,
        x_names,
        y_names,
    })
}

fn block_dim(data: &Dataset, task: Task) -> usize {
    match (task, &data.response) {
        (Task::ResponseLinear, Response::Continuous(y)) => y.ncols(),
        _ => data.p(),
    }
}

fn cap_d(u: usize, n: usize, dim: usize) -> usize {
    (2 * u).min(n.saturating_sub(1)).min(dim).max(u)
}

struct Resolved {
    u: usize,
    u_y: Option<usize>,
    d: usize,
    d_y: Option<usize>,
    c: Option<f64>,
    lambda: Option<f64>,
    cv: CvDoc,
    warnings: Vec<String>,
}

fn resolve_simultaneous(args: &FitArgs, data: &Dataset) -> Result<Resolved> {
    if args.tune_c || !args.c_grid.is_empty() || args.u.is_none() || args.u_y.is_none() {
        return Err(CliError::Input(
            "the simultaneous task has no cross-validation path; pass --u, --u-y and \
             optionally a fixed --c"
                .into(),
        ));
    }
    let (u, u_y) = (args.u.unwrap(), args.u_y.unwrap());
    let r = match &data.response {
        Response::Continuous(y) => y.ncols(),
        _ => unreachable!("simultaneous task always carries a continuous response"),
    };
    let n = data.n();
    check_dims("u", u, data.p())?;
    check_dims("u-y", u_y, r)?;
    let d = args.d.unwrap_or_else(|| cap_d(u, n, data.p()));
    let d_y = args.d_y.unwrap_or_else(|| cap_d(u_y, n, r));
    check_pool("d", d, u, data.p())?;
    check_pool("d-y", d_y, u_y, r)?;
    Ok(Resolved {
        u,
        u_y: Some(u_y),
        d,
        d_y: Some(d_y),
        c: args.c,
        lambda: None,
        cv: CvDoc::default(),
        warnings: Vec::new(),
    })
}

fn check_dims(flag: &str, value: usize, dim: usize) -> Result<()> {
    if value < 1 || value > dim {
        return Err(CliError::Input(format!(
            "--{flag} = {value} outside 1..={dim}"
        )));
    }
    Ok(())
}

fn check_pool(flag: &str, d: usize, u: usize, dim: usize) -> Result<()> {
    if d < u || d > dim {
        return Err(CliError::Input(format!(
            "--{flag} = {d} outside {u}..={dim}"
        )));
    }
    Ok(())
}

fn resolve(args: &FitArgs, data: &Dataset, task: Task) -> Result<Resolved> {
    if task == Task::SimultaneousLinear {
        return resolve_simultaneous(args, data);
    }
    if args.u_y.is_some() || args.d_y.is_some() {
        return Err(CliError::Input(
            "--u-y and --d-y apply to the simultaneous task only".into(),
        ));
    }
    let dim = block_dim(data, task);
    let n = data.n();

    let tuned_c = args.tune_c || !args.c_grid.is_empty();
    if args.c.is_some() && tuned_c {
        return Err(CliError::Input(
            "pass either a fixed --c or --tune-c/--c-grid, not both".into(),
        ));
    }
    let sparse = if tuned_c {
        let grid = if args.c_grid.is_empty() {
            tuning::default_c_grid(dim)
        } else {
            args.c_grid.clone()
        };
        SparseMode::Tuned(grid)
    } else {
        match args.c {
            Some(c) => SparseMode::Fixed(c),
            None => SparseMode::Dense,
        }
    };

    let mut cv = CvDoc::default();
    let mut warnings = Vec::new();
    let mut lambda = args.lambda;
    let mut c_from_curve = None;

    let u = match args.u {
        Some(u) => {
            check_dims("u", u, dim)?;
            u
        }
        None => {
            let grid: Vec<usize> = if args.u_grid.is_empty() {
                (1..=dim.min(n.saturating_sub(2)).min(10)).collect()
            } else {
                args.u_grid.clone()
            };
            let sel = tuning::select_u(data, task, &grid, args.folds, args.seed, &sparse, lambda)?;
            lambda = sel.lambda.or(lambda);
            c_from_curve = sel
                .curve
                .iter()
                .find(|p| p.u == sel.chosen)
                .and_then(|p| p.c);
            cv.u_curve = Some(
                sel.curve
                    .into_iter()
                    .map(|p| UPointDoc {
                        u: p.u,
                        d: p.d,
                        c: p.c,
                        loss: p.loss,
                    })
                    .collect(),
            );
            warnings.extend(sel.warnings);
            sel.chosen
        }
    };

    let d = match args.d {
        Some(d) => d,
        None => cap_d(u, n, dim),
    };
    check_pool("d", d, u, dim)?;

    let c = match &sparse {
        SparseMode::Dense => None,
        SparseMode::Fixed(c) => Some(*c),
        SparseMode::Tuned(grid) => match c_from_curve {
            Some(c) => Some(c),
            None => {
                let sel =
                    tuning::select_c(data, task, u, d, grid, args.folds, args.seed, lambda)?;
                lambda = sel.lambda.or(lambda);
                cv.c_table = Some(sel.table.clone());
                warnings.extend(sel.warnings);
                Some(sel.chosen)
            }
        },
    };

    if matches!(task, Task::Logistic | Task::Cox) && lambda.is_none() {
        let sel = tuning::select_lambda(data, task, args.folds, args.seed, None)?;
        cv.lambda_table = Some(sel.table.clone());
        warnings.extend(sel.warnings);
        lambda = Some(sel.chosen);
    }

    Ok(Resolved {
        u,
        u_y: None,
        d,
        d_y: None,
        c,
        lambda,
        cv,
        warnings,
    })
}

fn fit_resolved(data: &Dataset, task: Task, r: &Resolved) -> Result<EnvelopeFit> {
    let fit = match task {
        Task::ResponseLinear => envelope::response_envelope(data, r.u, r.d, r.c)?,
        Task::PredictorLinear => envelope::predictor_envelope(data, r.u, r.d, r.c)?,
        Task::SimultaneousLinear => envelope::simultaneous_envelope(
            data,
            r.u,
            r.u_y.expect("resolved simultaneous fit carries u_y"),
            r.d,
            r.d_y.expect("resolved simultaneous fit carries d_y"),
            r.c,
        )?,
        Task::Logistic => envelope::logistic_envelope(
            data,
            r.u,
            r.d,
            r.lambda.expect("lambda resolved for logistic"),
            r.c,
        )?,
        Task::Cox => envelope::cox_envelope(
            data,
            r.u,
            r.d,
            r.lambda.expect("lambda resolved for cox"),
            r.c,
        )?,
    };
    Ok(fit)
}

fn write_coefficients(
    path: &Path,
    fit: &EnvelopeFit,
    x_names: &[String],
    y_names: &[String],
) -> Result<()> {
    let (labels, with_intercept): (Vec<String>, bool) = match fit.task {
        Task::Cox => (vec!["log_hazard_ratio".into()], false),
        _ => (y_names.to_vec(), true),
    };
    let mut header: Vec<&str> = vec!["variable"];
    header.extend(labels.iter().map(String::as_str));

    let mut rows: Vec<Vec<String>> = Vec::with_capacity(x_names.len() + 1);
    if with_intercept {
        let mut row = vec!["(intercept)".to_owned()];
        row.extend(fit.intercept.iter().map(|v| io::fmt_float(*v)));
        rows.push(row);
    }
    for (j, name) in x_names.iter().enumerate() {
        let mut row = vec![name.clone()];
        row.extend((0..labels.len()).map(|k| io::fmt_float(fit.beta_env[[k, j]])));
        rows.push(row);
    }
    io::write_csv(path, &header, rows)
}

fn print_summary(fit: &EnvelopeFit, resolved: &Resolved, n: usize, p: usize, prefix: &str) {
    println!("task: {}", doc::task_to_str(fit.task));
    println!("rows: {n}, predictors: {p}");
    match resolved.u_y {
        Some(u_y) => println!(
            "u = {} (x side), u = {u_y} (y side), d = {}, d_y = {}",
            resolved.u,
            resolved.d,
            resolved.d_y.unwrap_or(0)
        ),
        None => println!("u = {}, d = {}", resolved.u, resolved.d),
    }
    match resolved.c {
        Some(c) => println!("sparsity budget c = {c}"),
        None => println!("dense candidates (no sparsity budget)"),
    }
    if let Some(l) = resolved.lambda {
        println!("lasso penalty lambda = {l}");
    }
    for red in [fit.reduction_x.as_ref(), fit.reduction_y.as_ref()]
        .into_iter()
        .flatten()
    {
        let picked: Vec<String> = red.selected_indices.iter().map(|i| i.to_string()).collect();
        println!(
            "selected components [{}], score gap {:.3e}",
            picked.join(", "),
            red.score_table.score_gap
        );
    }
    let warn_count = fit.warnings.len() + resolved.warnings.len();
    if warn_count > 0 {
        println!("warnings: {warn_count} (see the fit file)");
    }
    println!("wrote {prefix}.json and {prefix}_coefficients.csv");
}

pub fn run(args: &FitArgs) -> Result<()> {
    let table = io::read_table(&args.data)?;
    let task = args.task.to_task();
    let assembled = assemble(&table, task, args)?;
    let data = &assembled.data;

    let mut resolved = resolve(args, data, task)?;
    let mut fit = fit_resolved(data, task, &resolved)?;
    fit.warnings.extend(resolved.warnings.drain(..));

    let document = doc::from_fit(
        &fit,
        assembled.x_names.clone(),
        assembled.y_names.clone(),
        data.n(),
        std::mem::take(&mut resolved.cv),
        args.folds,
        args.seed,
        common::timestamp(),
    );
    let json_path = PathBuf::from(format!("{}.json", args.out_prefix));
    io::write_json(&json_path, &document)?;
    let coef_path = PathBuf::from(format!("{}_coefficients.csv", args.out_prefix));
    write_coefficients(&coef_path, &fit, &assembled.x_names, &assembled.y_names)?;

    print_summary(&fit, &resolved, data.n(), data.p(), &args.out_prefix);
    Ok(())
}
