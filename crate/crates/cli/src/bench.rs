use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use ndarray::Array2;
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use niece_core::linalg::{self, SymmetricMatrix};
use niece_core::niece;
use niece_core::simgen;

use crate::common;
use crate::error::{CliError, Result};
use crate::io;

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Wishart degrees of freedom (the nominal sample size).
    #[arg(long, default_value_t = 200)]
    pub n: usize,

    /// Ambient dimension.
    #[arg(long, default_value_t = 100)]
    pub p: usize,

    /// Envelope dimension.
    #[arg(long, default_value_t = 5)]
    pub u: usize,

    /// Candidate pool size.
    #[arg(long, default_value_t = 20)]
    pub d: usize,

    /// Signal strengths for the outer-product matrix.
    #[arg(long, value_delimiter = ',', default_values_t = [0.01, 1.0, 100.0])]
    pub delta_u: Vec<f64>,

    /// Replicates per signal strength.
    #[arg(long, default_value_t = 100)]
    pub reps: usize,

    /// 1-based eigenvector indices that span the true envelope; exactly u
    /// of them, interior picks make the problem non-trivial.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 10, 11, 19])]
    pub components: Vec<usize>,

    #[arg(long, default_value_t = 20240101)]
    pub seed: u64,

    /// Worker threads; 0 means one per core. NIECE_THREADS overrides.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,

    #[arg(long, default_value = "niece_bench")]
    pub out_prefix: String,
}

fn randn_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn symmetric(a: Array2<f64>) -> niece_core::Result<SymmetricMatrix> {
    let sym = 0.5 * (&a + &a.t());
    SymmetricMatrix::new(sym)
}

struct Row {
    delta_u: f64,
    replicate: usize,
    status: String,
    subspace_error: Option<f64>,
    seconds: Option<f64>,
}

#[derive(Serialize)]
struct StrengthSummary {
    delta_u: f64,
    replicates: usize,
    failed: usize,
    median_subspace_error: Option<f64>,
    median_seconds: Option<f64>,
    log10_median_seconds: Option<f64>,
}

#[derive(Serialize)]
struct Summary {
    n: usize,
    p: usize,
    u: usize,
    d: usize,
    components: Vec<usize>,
    seed: u64,
    strengths: Vec<StrengthSummary>,
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite metrics"));
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

fn validate(args: &BenchArgs) -> Result<()> {
    if args.p == 0 || args.u == 0 || args.reps == 0 {
        return Err(CliError::Input("--p, --u and --reps must be positive".into()));
    }
    if args.u > args.p || args.d < args.u || args.d > args.p {
        return Err(CliError::Input(format!(
            "need u <= d <= p, got u={}, d={}, p={}",
            args.u, args.d, args.p
        )));
    }
    if args.n < args.p {
        return Err(CliError::Input(format!(
            "the Wishart draw needs n >= p, got n={} with p={}",
            args.n, args.p
        )));
    }
    if args.components.len() != args.u {
        return Err(CliError::Input(format!(
            "--components lists {} indices but u = {}; pass exactly u of them",
            args.components.len(),
            args.u
        )));
    }
    let mut seen = args.components.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != args.components.len() {
        return Err(CliError::Input("--components has repeated indices".into()));
    }
    if args.components.iter().any(|&k| k < 1 || k > args.p) {
        return Err(CliError::Input(format!(
            "--components indices must sit in 1..={}",
            args.p
        )));
    }
    for &du in &args.delta_u {
        if !du.is_finite() || du <= 0.0 {
            return Err(CliError::Input(format!(
                "--delta-u entries must be positive, got {du}"
            )));
        }
    }
    if args.delta_u.is_empty() {
        return Err(CliError::Input("--delta-u needs at least one value".into()));
    }
    Ok(())
}

pub fn run(args: &BenchArgs) -> Result<()> {
    validate(args)?;
    let threads = common::resolve_threads(args.threads)?;
    let pool = common::build_pool(threads)?;
    let (p, u, d) = (args.p, args.u, args.d);

    // Population structure: a random orthonormal frame with a fast-decaying
    // spectrum up front and a flat noise floor behind it.
    let mut rng_v = ChaCha8Rng::seed_from_u64(args.seed);
    rng_v.set_stream(31);
    let v = linalg::orthonormalize(&randn_mat(p, p, &mut rng_v))?.into_inner();
    let lambda: Vec<f64> = (1..=p)
        .map(|k| if k <= 20 { (k as f64).powi(3) } else { 0.05 })
        .collect();
    let mut scaled = v.clone();
    for (j, mut col) in scaled.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x * lambda[j]);
    }
    let m = symmetric(scaled.dot(&v.t()))?;

    let gamma = Array2::from_shape_fn((p, u), |(i, j)| v[[i, args.components[j] - 1]]);
    let mut rng_o = ChaCha8Rng::seed_from_u64(args.seed);
    rng_o.set_stream(32);
    let o = linalg::orthonormalize(&randn_mat(u, u, &mut rng_o))?.into_inner();
    let mut phi_scaled = o.clone();
    for (j, mut col) in phi_scaled.columns_mut().into_iter().enumerate() {
        col.mapv_inplace(|x| x * (j + 1) as f64);
    }
    let phi = phi_scaled.dot(&o.t());

    let mut signals = Vec::with_capacity(args.delta_u.len());
    for &du in &args.delta_u {
        let core = gamma.dot(&phi).dot(&gamma.t());
        signals.push(symmetric(core.mapv(|x| x * du))?);
    }

    let jobs: Vec<(usize, usize)> = (0..args.delta_u.len())
        .flat_map(|gi| (0..args.reps).map(move |rep| (gi, rep)))
        .collect();
    let rows: Vec<Row> = pool.install(|| {
        jobs.par_iter()
            .map(|&(gi, rep)| {
                let seed = common::replicate_seed(args.seed, (gi * args.reps + rep) as u64);
                let outcome = (|| -> niece_core::Result<(f64, f64)> {
                    let (m_hat, u_hat) = simgen::wishart_pair(&m, &signals[gi], args.n, seed)?;
                    let start = Instant::now();
                    let fit = niece::niece_fit(&m_hat, &u_hat, u, d)?;
                    let seconds = start.elapsed().as_secs_f64().max(1e-9);
                    let err = simgen::delta_gamma(&gamma, fit.basis.as_array(), u)?;
                    Ok((err, seconds))
                })();
                match outcome {
                    Ok((err, seconds)) => Row {
                        delta_u: args.delta_u[gi],
                        replicate: rep,
                        status: "ok".into(),
                        subspace_error: Some(err),
                        seconds: Some(seconds),
                    },
                    Err(e) => Row {
                        delta_u: args.delta_u[gi],
                        replicate: rep,
                        status: format!("error: {e}"),
                        subspace_error: None,
                        seconds: None,
                    },
                }
            })
            .collect()
    });

    let csv_path = PathBuf::from(format!("{}_replicates.csv", args.out_prefix));
    io::write_csv(
        &csv_path,
        &["delta_u", "replicate", "status", "subspace_error", "seconds"],
        rows.iter().map(|r| {
            vec![
                io::fmt_float(r.delta_u),
                r.replicate.to_string(),
                r.status.clone(),
                r.subspace_error.map(io::fmt_float).unwrap_or_default(),
                r.seconds.map(io::fmt_float).unwrap_or_default(),
            ]
        }),
    )?;

    let mut strengths = Vec::new();
    for (gi, &du) in args.delta_u.iter().enumerate() {
        let mine: Vec<&Row> = rows
            .iter()
            .filter(|r| r.delta_u == args.delta_u[gi])
            .collect();
        let failed = mine.iter().filter(|r| r.status != "ok").count();
        let med_err = median(mine.iter().filter_map(|r| r.subspace_error).collect());
        let med_sec = median(mine.iter().filter_map(|r| r.seconds).collect());
        strengths.push(StrengthSummary {
            delta_u: du,
            replicates: args.reps,
            failed,
            median_subspace_error: med_err,
            median_seconds: med_sec,
            log10_median_seconds: med_sec.map(f64::log10),
        });
    }
    let summary = Summary {
        n: args.n,
        p,
        u,
        d,
        components: args.components.clone(),
        seed: args.seed,
        strengths,
    };
    let json_path = PathBuf::from(format!("{}_summary.json", args.out_prefix));
    io::write_json(&json_path, &summary)?;

    println!("n={} p={p} u={u} d={d}", args.n);
    for s in &summary.strengths {
        match (s.median_subspace_error, s.median_seconds) {
            (Some(err), Some(sec)) => println!(
                "delta_u {:>8}: median subspace error {err:.4}, median seconds {sec:.6}",
                io::fmt_float(s.delta_u)
            ),
            _ => println!(
                "delta_u {:>8}: no successful replicates",
                io::fmt_float(s.delta_u)
            ),
        }
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());

    let failed: usize = rows.iter().filter(|r| r.status != "ok").count();
    let total = rows.len();
    if failed * 10 > total {
        return Err(CliError::Replicates { failed, total });
    }
    Ok(())
}
