//! Envelope component scoring and selection.
//!
//! Candidate directions come from either a dense eigendecomposition of the
//! estimated kernel matrix or from sparse penalized matrix decomposition of
//! the centered data. Each candidate v is scored by the quadratic form
//! phi = v' U v against the outer-product matrix U, and the envelope basis
//! is assembled from the u highest-scoring candidates.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::linalg::{self, Basis, SymmetricMatrix};
use crate::pmd::{self, PmdConfig};

/// Relative tolerance below which a score may dip negative before the
/// outer-product matrix is declared indefinite.
const SCORE_PSD_RTOL: f64 = 1e-8;

/// Relative tolerance on the kernel spectrum for the positive definiteness
/// check in [`niece_fit`].
const KERNEL_PSD_RTOL: f64 = 1e-8;

/// Relative cutoff under which trailing kernel eigenvalues are treated as
/// numerically zero and the candidate set is shortened.
const KERNEL_RANK_RTOL: f64 = 1e-10;

/// Candidate directions together with their spectrum proxies.
///
/// For dense candidates the values are kernel eigenvalues; for sparse
/// candidates they are squared singular values from the penalized
/// decomposition. Columns of `vectors` have unit 2-norm.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// p x d matrix whose columns are the candidate directions.
    pub vectors: Array2<f64>,
    /// Length-d spectrum proxy, nonincreasing for dense candidates.
    pub values: Array1<f64>,
}

impl CandidateSet {
    /// Number of rows (ambient dimension).
    pub fn p(&self) -> usize {
        self.vectors.nrows()
    }

    /// Number of candidate directions.
    pub fn d(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Scores and ranking diagnostics for a candidate set.
#[derive(Debug, Clone)]
pub struct EnvelopeScoreTable {
    /// Score phi_j = v_j' U v_j per candidate, clipped at zero.
    pub scores: Array1<f64>,
    /// Candidate indices sorted by descending score; ties keep the smaller
    /// index first.
    pub order: Vec<usize>,
    /// Smallest consecutive difference of the candidate spectrum values,
    /// clamped at zero. Zero when there is a single candidate.
    pub eigen_gap: f64,
    /// Difference between the u-th and (u+1)-th largest scores; zero when
    /// u equals the number of candidates.
    pub score_gap: f64,
    /// Operator norm of the outer-product matrix U.
    pub u_max_norm: f64,
}

/// Result of an envelope component fit.
#[derive(Debug, Clone)]
pub struct NieceResult {
    /// Orthonormal p x u basis of the estimated envelope.
    pub basis: Basis,
    /// Indices into the candidate set, in selection order.
    pub selected_indices: Vec<usize>,
    /// Scores and gaps for every candidate.
    pub score_table: EnvelopeScoreTable,
    /// The full candidate set the selection was made from.
    pub candidates: CandidateSet,
    /// Number of candidates actually available. Smaller than the requested
    /// d when the kernel is numerically rank deficient or sparse factors
    /// vanish.
    pub effective_d: usize,
    /// Human-readable notes about reductions or non-convergence.
    pub warnings: Vec<String>,
}

/// Scores every candidate direction against the outer-product matrix.
///
/// Errors with [`Error::NotPsd`] when any raw score falls below
/// `-1e-8 * ||U||_op`; smaller negative dips are clipped to zero.
pub fn envelope_scores(
    candidates: &CandidateSet,
    u_hat: &SymmetricMatrix,
    u: usize,
) -> Result<EnvelopeScoreTable> {
    let p = candidates.p();
    let d = candidates.d();
    if d == 0 {
        return Err(Error::InvalidArgument("empty candidate set".into()));
    }
    if u_hat.dim() != p {
        return Err(Error::DimensionMismatch(format!(
            "outer-product matrix is {}x{} but candidates have {} rows",
            u_hat.dim(),
            u_hat.dim(),
            p
        )));
    }
    if candidates.values.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} candidate values for {} candidate vectors",
            candidates.values.len(),
            d
        )));
    }
    if u == 0 || u > d {
        return Err(Error::InvalidArgument(format!(
            "u must lie in 1..={} (got {})",
            d, u
        )));
    }
    for (j, col) in candidates.vectors.axis_iter(Axis(1)).enumerate() {
        let norm = col.dot(&col).sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "candidate {} has 2-norm {:.3e}, expected unit length",
                j, norm
            )));
        }
    }

    let nu = u_hat.operator_norm_psd();
    let uv = u_hat.as_array().dot(&candidates.vectors);
    let mut scores = Array1::zeros(d);
    for j in 0..d {
        let phi = candidates.vectors.column(j).dot(&uv.column(j));
        if phi < -SCORE_PSD_RTOL * nu {
            return Err(Error::NotPsd(format!(
                "candidate score {:.3e} is negative beyond tolerance {:.3e}",
                phi,
                SCORE_PSD_RTOL * nu
            )));
        }
        scores[j] = phi.max(0.0);
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));

    let eigen_gap = if d == 1 {
        0.0
    } else {
        let mut gap = f64::INFINITY;
        for j in 0..d - 1 {
            gap = gap.min(candidates.values[j] - candidates.values[j + 1]);
        }
        gap.max(0.0)
    };
    let score_gap = if u == d {
        0.0
    } else {
        scores[order[u - 1]] - scores[order[u]]
    };

    Ok(EnvelopeScoreTable {
        scores,
        order,
        eigen_gap,
        score_gap,
        u_max_norm: nu,
    })
}

/// Extracts dense eigenvector candidates from the kernel matrix, enforcing
/// positive definiteness within tolerance and trimming the candidate count
/// to the numerical rank.
fn dense_candidates(
    m_hat: &SymmetricMatrix,
    d: usize,
) -> Result<(CandidateSet, Vec<String>)> {
    let p = m_hat.dim();
    if d == 0 || d > p {
        return Err(Error::InvalidArgument(format!(
            "d must lie in 1..={} (got {})",
            p, d
        )));
    }
    let (raw_values, raw_vectors) = linalg::full_sym_eigen(m_hat)?;
    let lambda_max = raw_values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_min = raw_values.iter().cloned().fold(f64::INFINITY, f64::min);
    if lambda_max <= 0.0 {
        return Err(Error::NotPsd(format!(
            "largest kernel eigenvalue {:.3e} is not positive",
            lambda_max
        )));
    }
    if lambda_min < -KERNEL_PSD_RTOL * lambda_max {
        return Err(Error::NotPsd(format!(
            "kernel eigenvalue {:.3e} is negative beyond tolerance {:.3e}",
            lambda_min,
            KERNEL_PSD_RTOL * lambda_max
        )));
    }

    let rank = raw_values
        .iter()
        .filter(|&&v| v > KERNEL_RANK_RTOL * lambda_max)
        .count();
    let mut warnings = Vec::new();
    let d_eff = if rank < d {
        warnings.push(format!(
            "kernel has numerical rank {}, candidate count reduced from {} to {}",
            rank, d, rank
        ));
        rank
    } else {
        d
    };
    if d_eff == 0 {
        return Err(Error::NotPsd(
            "kernel has numerical rank zero".into(),
        ));
    }

    let eig = linalg::sorted_eigen_from_parts(&raw_values, &raw_vectors, d_eff);
    Ok((
        CandidateSet {
            vectors: eig.vectors,
            values: eig.values,
        },
        warnings,
    ))
}

/// Extracts sparse candidates from the centered data matrix, dropping
/// factors that vanished during deflation.
fn sparse_candidates(
    xn: ArrayView2<f64>,
    d: usize,
    cfg: &PmdConfig,
) -> Result<(CandidateSet, Vec<String>)> {
    let factors = pmd::pmd_decompose(xn, d, cfg)?;
    let p = xn.ncols();
    let mut warnings = Vec::new();
    let mut kept = Vec::new();
    for (k, f) in factors.iter().enumerate() {
        if f.is_zero {
            warnings.push(format!(
                "sparse factor {} vanished during deflation, candidate count reduced to {}",
                k + 1,
                kept.len()
            ));
            break;
        }
        if !f.converged {
            warnings.push(format!(
                "sparse factor {} stopped before the tolerance was met",
                k + 1
            ));
        }
        kept.push(f);
    }
    if kept.is_empty() {
        return Err(Error::ZeroMatrix);
    }

    let mut vectors = Array2::zeros((p, kept.len()));
    let mut values = Array1::zeros(kept.len());
    for (j, f) in kept.iter().enumerate() {
        vectors.column_mut(j).assign(&f.v);
        values[j] = f.sigma * f.sigma;
    }
    Ok((CandidateSet { vectors, values }, warnings))
}

/// Assembles a fit result from a candidate set by scoring, ranking, and
/// orthonormalizing the chosen columns.
fn assemble(
    candidates: CandidateSet,
    u_hat: &SymmetricMatrix,
    u: usize,
    warnings: Vec<String>,
    requested_d: usize,
) -> Result<NieceResult> {
    let d_eff = candidates.d();
    if u > d_eff {
        return Err(Error::InvalidArgument(format!(
            "u = {} exceeds the {} available candidates (requested d = {})",
            u, d_eff, requested_d
        )));
    }
    let table = envelope_scores(&candidates, u_hat, u)?;
    let selected: Vec<usize> = table.order[..u].to_vec();
    let mut chosen = Array2::zeros((candidates.p(), u));
    for (k, &j) in selected.iter().enumerate() {
        chosen.column_mut(k).assign(&candidates.vectors.column(j));
    }
    let basis = linalg::orthonormalize(&chosen)?;
    Ok(NieceResult {
        basis,
        selected_indices: selected,
        score_table: table,
        candidates,
        effective_d: d_eff,
        warnings,
    })
}

/// Non-iterative envelope estimation from a kernel matrix and an
/// outer-product matrix.
///
/// Takes the top d eigenvectors of `m_hat` as candidates, scores them
/// against `u_hat`, and returns the span of the u best scorers.
pub fn niece_fit(
    m_hat: &SymmetricMatrix,
    u_hat: &SymmetricMatrix,
    u: usize,
    d: usize,
) -> Result<NieceResult> {
    if u == 0 || u > d {
        return Err(Error::InvalidArgument(format!(
            "u must lie in 1..={} (got {})",
            d, u
        )));
    }
    let (candidates, warnings) = dense_candidates(m_hat, d)?;
    assemble(candidates, u_hat, u, warnings, d)
}

/// Sparse envelope estimation: candidates come from penalized matrix
/// decomposition of the centered data instead of a dense eigendecomposition.
pub fn sniece_fit(
    xn: ArrayView2<f64>,
    u_hat: &SymmetricMatrix,
    u: usize,
    d: usize,
    cfg: &PmdConfig,
) -> Result<NieceResult> {
    if u == 0 || u > d {
        return Err(Error::InvalidArgument(format!(
            "u must lie in 1..={} (got {})",
            d, u
        )));
    }
    if u_hat.dim() != xn.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "outer-product matrix is {}x{} but data has {} columns",
            u_hat.dim(),
            u_hat.dim(),
            xn.ncols()
        )));
    }
    let (candidates, warnings) = sparse_candidates(xn, d, cfg)?;
    assemble(candidates, u_hat, u, warnings, d)
}

/// Candidate source for [`pcr_select`].
#[derive(Debug, Clone, Copy)]
pub enum PcrInput<'a> {
    /// Dense eigenvector candidates from a kernel matrix.
    Dense(&'a SymmetricMatrix),
    /// Sparse candidates from penalized decomposition of centered data.
    Sparse {
        xn: ArrayView2<'a, f64>,
        cfg: &'a PmdConfig,
    },
}

/// Principal-component selection baseline: keeps the u leading candidates
/// by spectrum order instead of by score.
///
/// When `u_hat` is supplied the score table is still populated for
/// diagnostics; otherwise scores are reported as zero.
pub fn pcr_select(
    input: PcrInput<'_>,
    u_hat: Option<&SymmetricMatrix>,
    u: usize,
    d: usize,
) -> Result<NieceResult> {
    if u == 0 || u > d {
        return Err(Error::InvalidArgument(format!(
            "u must lie in 1..={} (got {})",
            d, u
        )));
    }
    let (candidates, warnings) = match input {
        PcrInput::Dense(m_hat) => dense_candidates(m_hat, d)?,
        PcrInput::Sparse { xn, cfg } => sparse_candidates(xn, d, cfg)?,
    };
    let d_eff = candidates.d();
    if u > d_eff {
        return Err(Error::InvalidArgument(format!(
            "u = {} exceeds the {} available candidates (requested d = {})",
            u, d_eff, d
        )));
    }

    let table = match u_hat {
        Some(m) => envelope_scores(&candidates, m, u)?,
        None => {
            let eigen_gap = if d_eff == 1 {
                0.0
            } else {
                let mut gap = f64::INFINITY;
                for j in 0..d_eff - 1 {
                    gap = gap.min(candidates.values[j] - candidates.values[j + 1]);
                }
                gap.max(0.0)
            };
            EnvelopeScoreTable {
                scores: Array1::zeros(d_eff),
                order: (0..d_eff).collect(),
                eigen_gap,
                score_gap: 0.0,
                u_max_norm: 0.0,
            }
        }
    };

    let selected: Vec<usize> = (0..u).collect();
    let mut chosen = Array2::zeros((candidates.p(), u));
    for (k, &j) in selected.iter().enumerate() {
        chosen.column_mut(k).assign(&candidates.vectors.column(j));
    }
    let basis = linalg::orthonormalize(&chosen)?;
    Ok(NieceResult {
        basis,
        selected_indices: selected,
        score_table: table,
        candidates,
        effective_d: d_eff,
        warnings,
    })
}
