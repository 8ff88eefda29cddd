//! Penalized matrix decomposition with an L1-constrained right factor.
//!
//! Factors are extracted one at a time: the rank-one subproblem alternates a
//! closed-form left update u = Xv/||Xv|| with a soft-thresholded right update,
//! and the matrix is deflated multiplicatively, X <- X (I - v v'), before the
//! next factor. With the L1 budget inactive (c >= sqrt(p)) the alternation is
//! plain power iteration and the factors reproduce singular vectors.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::apply_sign_convention;

/// Controls for the alternating solver.
#[derive(Debug, Clone)]
pub struct PmdConfig {
    /// L1 budget on the right vector; meaningful range is [1, sqrt(p)].
    pub c: f64,
    pub max_alt_iters: usize,
    pub rel_tol: f64,
    pub bisect_tol: f64,
    pub bisect_max: usize,
}

impl PmdConfig {
    pub fn new(c: f64) -> Result<Self> {
        let cfg = Self {
            c,
            max_alt_iters: 200,
            rel_tol: 1e-6,
            bisect_tol: 1e-8,
            bisect_max: 60,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "L1 budget c must be >= 1, got {}",
                self.c
            )));
        }
        if self.rel_tol <= 0.0 || self.bisect_tol <= 0.0 {
            return Err(Error::InvalidArgument(
                "tolerances must be positive".into(),
            ));
        }
        if self.max_alt_iters == 0 || self.bisect_max == 0 {
            return Err(Error::InvalidArgument(
                "iteration limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One sparse rank-one factor sigma * u v'.
#[derive(Debug, Clone)]
pub struct PmdFactor {
    pub v: Array1<f64>,
    pub u_vec: Array1<f64>,
    pub sigma: f64,
    /// Set when the factor was produced from a numerically zero matrix.
    pub is_zero: bool,
    /// False when the alternation hit max_alt_iters before the stopping rule.
    pub converged: bool,
    /// Objective u'Xv after each alternation, for diagnostics.
    pub sigma_path: Vec<f64>,
}

impl PmdFactor {
    fn zero(n: usize, p: usize) -> Self {
        Self {
            v: Array1::zeros(p),
            u_vec: Array1::zeros(n),
            sigma: 0.0,
            is_zero: true,
            converged: true,
            sigma_path: Vec::new(),
        }
    }
}

/// Maximizes w'v over the intersection of the unit L2 ball and the L1 ball of
/// radius c. Returns the maximizer and a flag that is true when w = 0 (the
/// vector is then zero and the caller decides what to do).
pub fn soft_threshold_unit(
    w: ArrayView1<'_, f64>,
    c: f64,
    bisect_tol: f64,
    bisect_max: usize,
) -> (Array1<f64>, bool) {
    let p = w.len();
    let norm2 = w.dot(&w).sqrt();
    if norm2 == 0.0 {
        return (Array1::zeros(p), true);
    }
    let direct = &w / norm2;
    let l1: f64 = direct.iter().map(|x| x.abs()).sum();
    if l1 <= c {
        return (direct, false);
    }

    let wmax = w.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mut lo = 0.0f64;
    let mut hi = wmax;
    let mut best: Option<Array1<f64>> = None;
    for _ in 0..bisect_max {
        let mid = 0.5 * (lo + hi);
        match thresholded_unit(w, mid) {
            Some((v, vl1)) => {
                if vl1 > c {
                    lo = mid;
                } else {
                    hi = mid;
                    let exact = c - vl1 <= bisect_tol * 1e-7;
                    best = Some(v);
                    if exact {
                        break;
                    }
                }
            }
            None => {
                hi = mid;
            }
        }
    }
    if let Some(v) = best {
        return (v, false);
    }

    // Only reachable with exact ties at the maximum magnitude, where the
    // soft-threshold parameterization cannot reach ||v||_1 <= c. The optimum
    // then spreads evenly over the tied coordinates.
    let tied: Vec<usize> = w
        .iter()
        .enumerate()
        .filter(|(_, &x)| x.abs() == wmax)
        .map(|(i, _)| i)
        .collect();
    let m = tied.len() as f64;
    let t = (c / m).min(1.0 / m.sqrt());
    let mut v = Array1::zeros(p);
    for &i in &tied {
        v[i] = t * w[i].signum();
    }
    (v, false)
}

/// S(w, delta) normalized to unit L2, together with its L1 norm.
/// None when thresholding wipes out every coordinate.
fn thresholded_unit(w: ArrayView1<'_, f64>, delta: f64) -> Option<(Array1<f64>, f64)> {
    let mut s: Array1<f64> = w.mapv(|x| x.signum() * (x.abs() - delta).max(0.0));
    let n2 = s.dot(&s).sqrt();
    if n2 == 0.0 {
        return None;
    }
    s /= n2;
    let l1 = s.iter().map(|x| x.abs()).sum();
    Some((s, l1))
}

/// Extracts one sparse rank-one factor from Xk by alternating maximization.
pub fn pmd_rank_one(xk: ArrayView2<'_, f64>, cfg: &PmdConfig) -> Result<PmdFactor> {
    cfg.validate()?;
    let (n, p) = xk.dim();
    let xmax = xk.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if xmax == 0.0 {
        return Err(Error::ZeroMatrix);
    }

    let mut v = column_norm_start(xk);
    let mut sigma_prev = f64::NEG_INFINITY;
    let mut sigma_path = Vec::new();
    let mut converged = false;
    let mut restarted = false;

    let mut iter = 0;
    while iter < cfg.max_alt_iters {
        iter += 1;
        let xv = xk.dot(&v);
        let nxv = xv.dot(&xv).sqrt();
        if nxv <= 1e-300 {
            if restarted {
                return Ok(PmdFactor::zero(n, p));
            }
            v = perturbed_start(xk);
            restarted = true;
            continue;
        }
        let u = &xv / nxv;
        let w = xk.t().dot(&u);
        let (v_new, w_zero) = soft_threshold_unit(w.view(), cfg.c, cfg.bisect_tol, cfg.bisect_max);
        if w_zero {
            if restarted {
                return Ok(PmdFactor::zero(n, p));
            }
            v = perturbed_start(xk);
            restarted = true;
            continue;
        }
        v = v_new;
        let sigma = w.dot(&v);
        sigma_path.push(sigma);
        if sigma_prev.is_finite() && (sigma - sigma_prev).abs() <= cfg.rel_tol * sigma.abs().max(1.0)
        {
            converged = true;
            break;
        }
        sigma_prev = sigma;
    }

    apply_sign_convention(v.view_mut());
    let xv = xk.dot(&v);
    let sigma = xv.dot(&xv).sqrt();
    let u_vec = if sigma > 0.0 {
        &xv / sigma
    } else {
        Array1::zeros(n)
    };
    Ok(PmdFactor {
        v,
        u_vec,
        sigma,
        is_zero: false,
        converged,
        sigma_path,
    })
}

fn column_norm_start(xk: ArrayView2<'_, f64>) -> Array1<f64> {
    let p = xk.ncols();
    let mut v = Array1::zeros(p);
    for j in 0..p {
        let col = xk.column(j);
        v[j] = col.dot(&col).sqrt();
    }
    let n2 = v.dot(&v).sqrt();
    if n2 > 0.0 {
        v /= n2;
    }
    v
}

fn perturbed_start(xk: ArrayView2<'_, f64>) -> Array1<f64> {
    let mut v = column_norm_start(xk);
    let mut arg = 0usize;
    let mut best = -1.0f64;
    for (j, &x) in v.iter().enumerate() {
        if x > best {
            best = x;
            arg = j;
        }
    }
    v[arg] += 1e-6;
    let n2 = v.dot(&v).sqrt();
    if n2 > 0.0 {
        v /= n2;
    }
    v
}

/// Multiplicative deflation Xk (I - v v').
pub fn deflate(xk: ArrayView2<'_, f64>, v: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
    if xk.ncols() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "deflate: matrix has {} columns, vector has {}",
            xk.ncols(),
            v.len()
        )));
    }
    let xv = xk.dot(&v);
    let mut out = xk.to_owned();
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        row.scaled_add(-xv[i], &v);
    }
    Ok(out)
}

/// Sequential sparse factors with deflation between extractions. Factors past
/// the numerical rank come back zero-flagged.
pub fn pmd_decompose(
    xn: ArrayView2<'_, f64>,
    d: usize,
    cfg: &PmdConfig,
) -> Result<Vec<PmdFactor>> {
    cfg.validate()?;
    let (n, p) = xn.dim();
    if d == 0 || d > n.min(p) {
        return Err(Error::InvalidArgument(format!(
            "d={d} factors requested from a {n}x{p} matrix"
        )));
    }
    let zero_tol = 1e-12 * xn.iter().fold(0.0f64, |m, &x| m.max(x.abs())).max(1.0);
    let mut x = xn.to_owned();
    let mut factors = Vec::with_capacity(d);
    for _ in 0..d {
        let xmax = x.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if xmax <= zero_tol {
            factors.push(PmdFactor::zero(n, p));
            continue;
        }
        let f = pmd_rank_one(x.view(), cfg)?;
        if f.is_zero {
            factors.push(f);
            continue;
        }
        x = deflate(x.view(), f.v.view())?;
        factors.push(f);
    }
    Ok(factors)
}
