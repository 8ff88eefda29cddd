//! Dense symmetric linear algebra shared by the estimators.
//!
//! Everything here is deterministic: the eigen-solver is a Householder
//! tridiagonalization followed by implicitly shifted QL sweeps, eigenvalues
//! are returned in descending order, and every reported column obeys the same
//! sign convention (the entry of largest absolute value is positive, ties
//! going to the lowest index). Covariances divide by n, not n-1.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, Axis};

use crate::error::{Error, Result};

/// Dense symmetric matrix. Construction symmetrizes via (A + A')/2 so the
/// stored entries satisfy `m[i][j] == m[j][i]` exactly.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    data: Array2<f64>,
}

impl SymmetricMatrix {
    pub fn new(a: Array2<f64>) -> Result<Self> {
        let (r, c) = a.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "symmetric matrix must be square, got {r}x{c}"
            )));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let mut data = a;
        for i in 0..r {
            for j in (i + 1)..r {
                let s = 0.5 * (data[[i, j]] + data[[j, i]]);
                data[[i, j]] = s;
                data[[j, i]] = s;
            }
        }
        Ok(Self { data })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.data
    }

    /// Largest eigenvalue magnitude, estimated by power iteration with a
    /// deterministic start. Exact enough for tolerances and diagnostics.
    pub fn operator_norm_psd(&self) -> f64 {
        let p = self.dim();
        if p == 0 {
            return 0.0;
        }
        // start from the column with the largest norm
        let mut best = 0usize;
        let mut best_norm = -1.0;
        for j in 0..p {
            let nj = self.data.column(j).dot(&self.data.column(j));
            if nj > best_norm {
                best_norm = nj;
                best = j;
            }
        }
        if best_norm <= 0.0 {
            return 0.0;
        }
        let mut x = self.data.column(best).to_owned();
        let nx = x.dot(&x).sqrt();
        if nx == 0.0 {
            return 0.0;
        }
        x /= nx;
        let mut lambda = 0.0f64;
        for _ in 0..500 {
            let y = self.data.dot(&x);
            let ny = y.dot(&y).sqrt();
            if ny == 0.0 {
                return 0.0;
            }
            let next = x.dot(&y);
            x = y / ny;
            if (next - lambda).abs() <= 1e-12 * next.abs().max(1.0) {
                return next.abs();
            }
            lambda = next;
        }
        lambda.abs()
    }
}

/// Top-d eigenpairs of a symmetric matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Eigenvalues, non-increasing.
    pub values: Array1<f64>,
    /// Column j is the eigenvector for `values[j]`, sign-normalized.
    pub vectors: Array2<f64>,
    pub d: usize,
}

/// Orthonormal p×u basis. The constructor rejects anything whose Gram matrix
/// strays from the identity by more than 1e-10.
#[derive(Debug, Clone)]
pub struct Basis {
    matrix: Array2<f64>,
}

impl Basis {
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let (p, u) = matrix.dim();
        if u == 0 || p < u {
            return Err(Error::InvalidArgument(format!(
                "basis must be tall with at least one column, got {p}x{u}"
            )));
        }
        let gram = matrix.t().dot(&matrix);
        for i in 0..u {
            for j in 0..u {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[[i, j]] - target).abs() > 1e-10 {
                    return Err(Error::InvalidArgument(format!(
                        "columns are not orthonormal: gram[{i}][{j}] = {}",
                        gram[[i, j]]
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub(crate) fn from_orthonormal(matrix: Array2<f64>) -> Self {
        Self { matrix }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.matrix
    }
}

/// Flips a column so that its largest-magnitude entry is positive. Ties on
/// magnitude resolve to the lowest index.
pub(crate) fn apply_sign_convention(mut col: ArrayViewMut1<'_, f64>) {
    let mut ref_idx = 0usize;
    let mut ref_abs = -1.0f64;
    for (i, &x) in col.iter().enumerate() {
        let a = x.abs();
        if a > ref_abs {
            ref_abs = a;
            ref_idx = i;
        }
    }
    if col[ref_idx] < 0.0 {
        col.mapv_inplace(|x| -x);
    }
}

/// Full symmetric eigendecomposition, truncated to the top `d` pairs.
///
/// Residuals satisfy ||S v_j - lambda_j v_j|| <= 1e-9 (1 + |lambda_1|).
pub fn sym_eigen(s: &SymmetricMatrix, d: usize) -> Result<EigenSystem> {
    let p = s.dim();
    if d == 0 || d > p {
        return Err(Error::InvalidArgument(format!(
            "requested d={d} eigenpairs of a {p}x{p} matrix"
        )));
    }
    let (values, vectors) = full_sym_eigen(s)?;
    Ok(sorted_eigen_from_parts(&values, &vectors, d))
}

/// Sorts raw eigenpairs descending and packs the top d with the sign
/// convention applied.
pub(crate) fn sorted_eigen_from_parts(
    values: &[f64],
    vectors: &[Vec<f64>],
    d: usize,
) -> EigenSystem {
    let p = values.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));

    let mut top_values = Array1::zeros(d);
    let mut top_vectors = Array2::zeros((p, d));
    for (k, &idx) in order.iter().take(d).enumerate() {
        top_values[k] = values[idx];
        for i in 0..p {
            top_vectors[[i, k]] = vectors[i][idx];
        }
        apply_sign_convention(top_vectors.column_mut(k));
    }
    EigenSystem {
        values: top_values,
        vectors: top_vectors,
        d,
    }
}

/// All eigenvalues of `s`, unordered, plus eigenvectors as jagged rows
/// (vectors[i][j] = i-th component of the j-th eigenvector).
pub(crate) fn full_sym_eigen(s: &SymmetricMatrix) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = s.dim();
    let mut z: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| s.data[[i, j]]).collect())
        .collect();
    let mut diag = vec![0.0f64; p];
    let mut off = vec![0.0f64; p];
    tred2(&mut z, &mut diag, &mut off);
    tql2(&mut diag, &mut off, &mut z).map_err(|_| Error::EigenFailure { dim: p })?;
    Ok((diag, z))
}

/// Householder reduction of a real symmetric matrix to tridiagonal form,
/// accumulating the orthogonal transform in `z`.
fn tred2(z: &mut [Vec<f64>], d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0f64;
        if l > 0 {
            let scale: f64 = z[i][..=l].iter().map(|x| x.abs()).sum();
            if scale == 0.0 {
                e[i] = z[i][l];
            } else {
                for k in 0..=l {
                    z[i][k] /= scale;
                    h += z[i][k] * z[i][k];
                }
                let f = z[i][l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[i][l] = f - g;
                let mut f_acc = 0.0f64;
                for j in 0..=l {
                    z[j][i] = z[i][j] / h;
                    let mut g_acc = 0.0f64;
                    for k in 0..=j {
                        g_acc += z[j][k] * z[i][k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += z[k][j] * z[i][k];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z[i][j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let (head, tail) = z.split_at_mut(i);
                    let row_i = &tail[0];
                    let f = row_i[j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    let row_j = &mut head[j];
                    for k in 0..=j {
                        row_j[k] -= f * e[k] + g * row_i[k];
                    }
                }
            }
        } else {
            e[i] = z[i][l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0f64;
                for k in 0..i {
                    g += z[i][k] * z[k][j];
                }
                for k in 0..i {
                    let delta = g * z[k][i];
                    z[k][j] -= delta;
                }
            }
        }
        d[i] = z[i][i];
        z[i][i] = 1.0;
        for j in 0..i {
            z[j][i] = 0.0;
            z[i][j] = 0.0;
        }
    }
}

const MAX_QL_SWEEPS: usize = 50;

/// Implicitly shifted QL iteration on a symmetric tridiagonal matrix,
/// rotating the accumulated transform so that column j of `z` ends up as the
/// eigenvector of `d[j]`.
fn tql2(d: &mut [f64], e: &mut [f64], z: &mut [Vec<f64>]) -> std::result::Result<(), ()> {
    let n = d.len();
    if n == 0 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_SWEEPS {
                return Err(());
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(if g != 0.0 { g } else { 1.0 }));
            let (mut s, mut c) = (1.0f64, 1.0f64);
            let mut p_shift = 0.0f64;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p_shift;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p_shift;
                r = (d[i] - g) * s + 2.0 * c * b;
                p_shift = s * r;
                d[i + 1] = g + p_shift;
                g = c * r - b;
                for row in z.iter_mut() {
                    f = row[i + 1];
                    row[i + 1] = s * row[i] + c * f;
                    row[i] = c * row[i] - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p_shift;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Residual of b after projecting out the span of a: b - a (a' b).
fn projection_residual(a: &Basis, b: &Basis) -> Array2<f64> {
    let g = a.view().t().dot(&b.view());
    let mut r = b.as_array().clone();
    r -= &a.view().dot(&g);
    r
}

/// Frobenius distance between the projections onto two subspaces,
/// ||A A' - B B'||_F.
///
/// Uses the residual identity ||P_A - P_B||_F^2 =
/// ||(I - P_A) B||_F^2 + ||(I - P_B) A||_F^2, which stays accurate near
/// zero where the trace expansion loses all significant digits.
pub fn projection_distance(a: &Basis, b: &Basis) -> Result<f64> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "bases live in different spaces: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    let ra = projection_residual(a, b);
    let rb = projection_residual(b, a);
    let total: f64 = ra.iter().map(|x| x * x).sum::<f64>()
        + rb.iter().map(|x| x * x).sum::<f64>();
    Ok(total.sqrt())
}

/// Sines of the principal angles between two u-dimensional subspaces,
/// largest angle last. sin(theta_j) is the j-th singular value of
/// (I - A A') B, which keeps small angles accurate.
pub fn principal_sines(a: &Basis, b: &Basis) -> Result<Array1<f64>> {
    if a.rows() != b.rows() {
        return Err(Error::DimensionMismatch(format!(
            "bases live in different spaces: {} vs {}",
            a.rows(),
            b.rows()
        )));
    }
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!(
            "principal angles need equal column counts, got {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let u = a.cols();
    let r = projection_residual(a, b);
    let rtr = SymmetricMatrix::new(r.t().dot(&r))?;
    let eig = sym_eigen(&rtr, u)?;
    let mut sines = Array1::zeros(u);
    for j in 0..u {
        sines[u - 1 - j] = eig.values[j].clamp(0.0, 1.0).sqrt();
    }
    Ok(sines)
}

/// Gram-Schmidt orthonormalization in column order (two passes for numerical
/// hygiene), with the usual sign convention applied to each output column.
pub fn orthonormalize(v: &Array2<f64>) -> Result<Basis> {
    let (p, k) = v.dim();
    if k == 0 || p < k {
        return Err(Error::InvalidArgument(format!(
            "cannot orthonormalize a {p}x{k} matrix"
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut max_norm = 0.0f64;
    for j in 0..k {
        let nj = v.column(j).dot(&v.column(j)).sqrt();
        max_norm = max_norm.max(nj);
    }
    let tol = 1e-10 * max_norm;

    let mut q = v.to_owned();
    for j in 0..k {
        for _pass in 0..2 {
            for prev in 0..j {
                let proj = q.column(prev).dot(&q.column(j));
                let prev_col = q.column(prev).to_owned();
                let mut col = q.column_mut(j);
                col.scaled_add(-proj, &prev_col);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if norm <= tol {
            return Err(Error::RankDeficient { column: j });
        }
        q.column_mut(j).mapv_inplace(|x| x / norm);
        apply_sign_convention(q.column_mut(j));
    }
    Ok(Basis::from_orthonormal(q))
}

/// Cholesky factor L (lower triangular, A = L L') of a symmetric positive
/// definite matrix, stored densely. Pivots at or below 1e-12 times the
/// largest diagonal entry are treated as rank deficiency.
pub(crate) fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let max_diag = (0..n).map(|i| a[[i, i]].abs()).fold(0.0f64, f64::max);
    let tol = 1e-12 * max_diag.max(1e-300);
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if diag <= tol {
            return Err(Error::RankDeficient { column: j });
        }
        let root = diag.sqrt();
        l[[j, j]] = root;
        for i in j + 1..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / root;
        }
    }
    Ok(l)
}

/// Solves A X = B for symmetric positive definite A via Cholesky, one
/// column of B at a time.
pub fn solve_spd_multi(a: &Array2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "right-hand side has {} rows for a {}x{} system",
            b.nrows(),
            n,
            n
        )));
    }
    let l = cholesky(a)?;
    let mut x = b.to_owned();
    for mut col in x.columns_mut() {
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[[i, k]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in i + 1..n {
                s -= l[[k, i]] * col[k];
            }
            col[i] = s / l[[i, i]];
        }
    }
    Ok(x)
}

/// Solves A x = b for symmetric positive definite A.
pub fn solve_spd(a: &Array2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let rhs = b.insert_axis(Axis(1));
    let x = solve_spd_multi(a, rhs)?;
    Ok(x.column(0).to_owned())
}

/// Sample covariance with divisor 1/n: (1/n) Xc' Xc, columns centered.
pub fn sample_covariance(xn: &Array2<f64>) -> Result<SymmetricMatrix> {
    let n = xn.nrows();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "sample covariance needs n >= 2, got {n}"
        )));
    }
    let centered = center_columns(xn);
    let cov = centered.t().dot(&centered) / n as f64;
    SymmetricMatrix::new(cov)
}

/// Cross covariance (1/n) Xc' Yc with both blocks centered.
pub fn cross_covariance(xn: &Array2<f64>, yn: &Array2<f64>) -> Result<Array2<f64>> {
    let n = xn.nrows();
    if yn.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "row counts differ: {n} vs {}",
            yn.nrows()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "cross covariance needs n >= 2, got {n}"
        )));
    }
    let xc = center_columns(xn);
    let yc = center_columns(yn);
    Ok(xc.t().dot(&yc) / n as f64)
}

/// Subtracts the column means. Returns the centered copy.
pub fn center_columns(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut out = x.to_owned();
    for mut col in out.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
    out
}

/// Column means as a vector.
pub fn column_means(x: &Array2<f64>) -> Array1<f64> {
    let n = x.nrows() as f64;
    let mut out = Array1::zeros(x.ncols());
    for (j, col) in x.columns().into_iter().enumerate() {
        out[j] = col.sum() / n;
    }
    out
}
