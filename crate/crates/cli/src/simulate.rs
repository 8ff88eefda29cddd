use std::path::PathBuf;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use niece_core::envelope::{self, Dataset, EnvelopeFit, Task};
use niece_core::simgen::{self, CovKind, ModelId};
use niece_core::tuning;

use crate::common;
use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Data model: m1 (response), m2 (predictor), m3 (logistic), m4 (cox).
    #[arg(long)]
    pub model: Option<String>,

    /// Covariance family: sigma1, sigma2 or sigma3.
    #[arg(long)]
    pub cov: Option<String>,

    #[arg(long)]
    pub n: Option<usize>,

    /// Dimension of the reduced block.
    #[arg(long)]
    pub p: Option<usize>,

    /// Dimension of the other block (ignored for m3 and m4).
    #[arg(long)]
    pub q: Option<usize>,

    /// Envelope dimension used by every estimator.
    #[arg(long)]
    pub u: Option<usize>,

    /// Candidate pool size.
    #[arg(long)]
    pub d: Option<usize>,

    /// Number of replicates.
    #[arg(long)]
    pub reps: Option<usize>,

    /// Cross-validation folds for the budget and penalty stages.
    #[arg(long)]
    pub folds: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// JSON file with the same fields; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Worker threads; 0 means one per core. NIECE_THREADS overrides.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    #[arg(long, default_value = "niece_sim")]
    pub out_prefix: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    cov: Option<String>,
    n: Option<usize>,
    p: Option<usize>,
    q: Option<usize>,
    u: Option<usize>,
    d: Option<usize>,
    reps: Option<usize>,
    folds: Option<usize>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct RunConfig {
    #[serde(serialize_with = "ser_model")]
    model: ModelId,
    #[serde(serialize_with = "ser_cov")]
    cov: CovKind,
    n: usize,
    p: usize,
    q: usize,
    u: usize,
    d: usize,
    reps: usize,
    folds: usize,
    seed: u64,
}

fn ser_model<S: serde::Serializer>(m: &ModelId, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(model_name(*m))
}

fn ser_cov<S: serde::Serializer>(c: &CovKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(cov_name(*c))
}

pub fn model_name(m: ModelId) -> &'static str {
    match m {
        ModelId::M1 => "m1",
        ModelId::M2 => "m2",
        ModelId::M3 => "m3",
        ModelId::M4 => "m4",
    }
}

pub fn cov_name(c: CovKind) -> &'static str {
    match c {
        CovKind::Sigma1 => "sigma1",
        CovKind::Sigma2 => "sigma2",
        CovKind::Sigma3 => "sigma3",
    }
}

pub fn parse_model(name: &str) -> Result<ModelId> {
    match name.to_ascii_lowercase().as_str() {
        "m1" => Ok(ModelId::M1),
        "m2" => Ok(ModelId::M2),
        "m3" => Ok(ModelId::M3),
        "m4" => Ok(ModelId::M4),
        other => Err(CliError::Input(format!(
            "unknown model '{other}'; expected m1, m2, m3 or m4"
        ))),
    }
}

pub fn parse_cov(name: &str) -> Result<CovKind> {
    match name.to_ascii_lowercase().as_str() {
        "sigma1" | "1" => Ok(CovKind::Sigma1),
        "sigma2" | "2" => Ok(CovKind::Sigma2),
        "sigma3" | "3" => Ok(CovKind::Sigma3),
        other => Err(CliError::Input(format!(
            "unknown covariance '{other}'; expected sigma1, sigma2 or sigma3"
        ))),
    }
}

fn resolve_config(args: &SimulateArgs) -> Result<RunConfig> {
    let file: FileConfig = match &args.config {
        Some(path) => io::read_json(path)?,
        None => FileConfig::default(),
    };
    let model_name = args
        .model
        .clone()
        .or(file.model)
        .ok_or_else(|| CliError::Input("pick a model with --model (m1..m4)".into()))?;
    let model = parse_model(&model_name)?;
    let cov_name = args
        .cov
        .clone()
        .or(file.cov)
        .ok_or_else(|| CliError::Input("pick a covariance with --cov (sigma1..sigma3)".into()))?;
    let cov = parse_cov(&cov_name)?;

    let default_q = match model {
        ModelId::M1 => 10,
        ModelId::M2 => 5,
        ModelId::M3 | ModelId::M4 => 1,
    };
    let cfg = RunConfig {
        model,
        cov,
        n: args.n.or(file.n).unwrap_or(200),
        p: args.p.or(file.p).unwrap_or(400),
        q: args.q.or(file.q).unwrap_or(default_q),
        u: args.u.or(file.u).unwrap_or(simgen::TRUE_U),
        d: args.d.or(file.d).unwrap_or(10),
        reps: args.reps.or(file.reps).unwrap_or(50),
        folds: args.folds.or(file.folds).unwrap_or(5),
        seed: args.seed.or(file.seed).unwrap_or(20240101),
    };
    if cfg.reps == 0 {
        return Err(CliError::Input("--reps must be at least 1".into()));
    }
    if cfg.u == 0 || cfg.u > cfg.p {
        return Err(CliError::Input(format!(
            "--u = {} outside 1..={}",
            cfg.u, cfg.p
        )));
    }
    if cfg.d < cfg.u || cfg.d > cfg.p {
        return Err(CliError::Input(format!(
            "--d = {} outside {}..={}",
            cfg.d, cfg.u, cfg.p
        )));
    }
    Ok(cfg)
}

fn task_of(model: ModelId) -> Task {
    match model {
        ModelId::M1 => Task::ResponseLinear,
        ModelId::M2 => Task::PredictorLinear,
        ModelId::M3 => Task::Logistic,
        ModelId::M4 => Task::Cox,
    }
}

fn fit_one(
    data: &Dataset,
    task: Task,
    u: usize,
    d: usize,
    c: Option<f64>,
    lambda: Option<f64>,
) -> niece_core::Result<EnvelopeFit> {
    match task {
        Task::ResponseLinear => envelope::response_envelope(data, u, d, c),
        Task::PredictorLinear => envelope::predictor_envelope(data, u, d, c),
        Task::Logistic => envelope::logistic_envelope(
            data,
            u,
            d,
            lambda.expect("logistic replicate resolves lambda first"),
            c,
        ),
        Task::Cox => envelope::cox_envelope(
            data,
            u,
            d,
            lambda.expect("cox replicate resolves lambda first"),
            c,
        ),
        Task::SimultaneousLinear => Err(niece_core::Error::InvalidArgument(
            "the simulation models reduce one block only".into(),
        )),
    }
}

/// Metrics of one estimator on one replicate.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MetricPair {
    pub delta_beta: f64,
    pub delta_gamma: f64,
}

struct RepRow {
    replicate: usize,
    status: String,
    niece: Option<MetricPair>,
    sniece: Option<MetricPair>,
    pcr: Option<MetricPair>,
    spcr: Option<MetricPair>,
    c: Option<f64>,
    lambda: Option<f64>,
}

fn measure(
    truth: &simgen::SimTruth,
    fit: &EnvelopeFit,
    model: ModelId,
    u: usize,
) -> niece_core::Result<MetricPair> {
    let reduction = match model {
        ModelId::M1 => fit.reduction_y.as_ref(),
        _ => fit.reduction_x.as_ref(),
    };
    let basis = reduction
        .ok_or_else(|| {
            niece_core::Error::InvalidArgument("fit carries no reduction on the scored side".into())
        })?
        .basis
        .as_array();
    Ok(MetricPair {
        delta_beta: simgen::delta_beta(&truth.beta, &fit.beta_env)?,
        delta_gamma: simgen::delta_gamma(&truth.gamma, basis, u)?,
    })
}

fn run_replicate(cfg: &RunConfig, rep: usize) -> RepRow {
    let seed = common::replicate_seed(cfg.seed, rep as u64);
    let task = task_of(cfg.model);
    let outcome = (|| -> niece_core::Result<RepRow> {
        let (data, truth) = simgen::gen_model(cfg.model, cfg.cov, cfg.n, cfg.p, cfg.q, seed)?;
        let lambda = match task {
            Task::Logistic | Task::Cox => Some(
                tuning::select_lambda(&data, task, cfg.folds, seed, None)?.chosen,
            ),
            _ => None,
        };
        let niece = fit_one(&data, task, cfg.u, cfg.d, None, lambda)?;
        let grid = tuning::default_c_grid(cfg.p);
        let chosen_c =
            tuning::select_c(&data, task, cfg.u, cfg.d, &grid, cfg.folds, seed, lambda)?.chosen;
        let sniece = fit_one(&data, task, cfg.u, cfg.d, Some(chosen_c), lambda)?;
        let pcr = envelope::pcr_baseline(&data, task, cfg.u, cfg.d, None)?;
        let spcr = envelope::pcr_baseline(&data, task, cfg.u, cfg.d, Some(chosen_c))?;
        Ok(RepRow {
            replicate: rep,
            status: "ok".into(),
            niece: Some(measure(&truth, &niece, cfg.model, cfg.u)?),
            sniece: Some(measure(&truth, &sniece, cfg.model, cfg.u)?),
            pcr: Some(measure(&truth, &pcr, cfg.model, cfg.u)?),
            spcr: Some(measure(&truth, &spcr, cfg.model, cfg.u)?),
            c: Some(chosen_c),
            lambda,
        })
    })();
    outcome.unwrap_or_else(|e| RepRow {
        replicate: rep,
        status: format!("error: {e}"),
        niece: None,
        sniece: None,
        pcr: None,
        spcr: None,
        c: None,
        lambda: None,
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(io::fmt_float).unwrap_or_default()
}

fn pair_cells(pair: &Option<MetricPair>) -> [String; 2] {
    match pair {
        Some(m) => [io::fmt_float(m.delta_beta), io::fmt_float(m.delta_gamma)],
        None => [String::new(), String::new()],
    }
}

/// Median of the finite values; `None` when the slice is empty.
fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("metrics are finite"));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

fn median_pair(rows: &[RepRow], pick: impl Fn(&RepRow) -> Option<MetricPair>) -> Option<MetricPair> {
    let mut betas: Vec<f64> = rows.iter().filter_map(|r| pick(r).map(|m| m.delta_beta)).collect();
    let mut gammas: Vec<f64> = rows.iter().filter_map(|r| pick(r).map(|m| m.delta_gamma)).collect();
    Some(MetricPair {
        delta_beta: median(&mut betas)?,
        delta_gamma: median(&mut gammas)?,
    })
}

#[derive(Serialize)]
struct Summary {
    #[serde(flatten)]
    config: RunConfig,
    failed: usize,
    medians: MedianBlock,
}

#[derive(Serialize)]
struct MedianBlock {
    niece: Option<MetricPair>,
    sniece: Option<MetricPair>,
    pcr: Option<MetricPair>,
    spcr: Option<MetricPair>,
}

pub fn run(args: &SimulateArgs) -> Result<()> {
    let cfg = resolve_config(args)?;
    let threads = common::resolve_threads(args.threads)?;
    let pool = common::build_pool(threads)?;

    let rows: Vec<RepRow> =
        pool.install(|| (0..cfg.reps).into_par_iter().map(|r| run_replicate(&cfg, r)).collect());

    let header = [
        "replicate",
        "status",
        "niece_delta_beta",
        "niece_delta_gamma",
        "sniece_delta_beta",
        "sniece_delta_gamma",
        "pcr_delta_beta",
        "pcr_delta_gamma",
        "spcr_delta_beta",
        "spcr_delta_gamma",
        "c",
        "lambda",
    ];
    let csv_rows = rows.iter().map(|r| {
        let mut row = vec![r.replicate.to_string(), r.status.clone()];
        for cells in [
            pair_cells(&r.niece),
            pair_cells(&r.sniece),
            pair_cells(&r.pcr),
            pair_cells(&r.spcr),
        ] {
            row.extend(cells);
        }
        row.push(opt_cell(r.c));
        row.push(opt_cell(r.lambda));
        row
    });
    let csv_path = PathBuf::from(format!("{}_replicates.csv", args.out_prefix));
    io::write_csv(&csv_path, &header, csv_rows)?;

    let failed = rows.iter().filter(|r| r.status != "ok").count();
    let summary = Summary {
        config: cfg,
        failed,
        medians: MedianBlock {
            niece: median_pair(&rows, |r| r.niece),
            sniece: median_pair(&rows, |r| r.sniece),
            pcr: median_pair(&rows, |r| r.pcr),
            spcr: median_pair(&rows, |r| r.spcr),
        },
    };
    let json_path = PathBuf::from(format!("{}_summary.json", args.out_prefix));
    io::write_json(&json_path, &summary)?;

    println!(
        "{} {} n={} p={} q={} u={} d={} reps={} failed={}",
        model_name(cfg.model),
        cov_name(cfg.cov),
        cfg.n,
        cfg.p,
        cfg.q,
        cfg.u,
        cfg.d,
        cfg.reps,
        failed
    );
    for (name, block) in [
        ("niece", &summary.medians.niece),
        ("sniece", &summary.medians.sniece),
        ("pcr", &summary.medians.pcr),
        ("spcr", &summary.medians.spcr),
    ] {
        match block {
            Some(m) => println!(
                "{name:>7}: median delta_beta {:.4}, median delta_gamma {:.4}",
                m.delta_beta, m.delta_gamma
            ),
            None => println!("{name:>7}: no successful replicates"),
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());

    if failed * 10 > cfg.reps {
        return Err(CliError::Replicates {
            failed,
            total: cfg.reps,
        });
    }
    Ok(())
}
