//! Small dense linear algebra used by the smoothing and coefficient solvers.
//!
//! Every system in this crate is tiny (a few dozen rows, at most six
//! columns), so a plain Householder QR and a Thomas tridiagonal solve cover
//! everything. Solving through an orthogonal factorization instead of
//! forming and inverting the normal equations keeps the near-boundary
//! windows, where designs get ill-conditioned, numerically honest.

/// Row-major dense matrix with `nrows x ncols` entries.
#[derive(Debug, Clone)]
pub(crate) struct Dense {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.ncols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.ncols + c] = v;
    }

    pub fn push_row(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.ncols);
        self.data.extend_from_slice(row);
        self.nrows += 1;
    }

    pub fn with_capacity(nrows: usize, ncols: usize) -> Self {
        Dense {
            nrows: 0,
            ncols,
            data: Vec::with_capacity(nrows * ncols),
        }
    }
}

/// Least-squares solution of `a x = b` by Householder QR, consuming both.
///
/// Returns the solution together with the absolute values of R's diagonal;
/// callers use the diagonal for rank/conditioning checks. `None` is returned
/// only when back-substitution would divide by an exact zero.
#[allow(clippy::needless_range_loop)] // indexed Householder sweeps
pub(crate) fn lstsq(mut a: Dense, mut b: Vec<f64>) -> Option<(Vec<f64>, Vec<f64>)> {
    let (m, n) = (a.nrows, a.ncols);
    debug_assert!(m >= n);
    debug_assert_eq!(b.len(), m);

    for k in 0..n {
        // Householder vector for column k below the diagonal.
        let mut norm = 0.0;
        for i in k..m {
            let v = a.at(i, k);
            norm += v * v;
        }
        norm = norm.sqrt();
        if norm == 0.0 {
            continue; // zero column; R_kk stays 0 and is reported below
        }
        let alpha = if a.at(k, k) >= 0.0 { -norm } else { norm };
        let v0 = a.at(k, k) - alpha;
        let mut vnorm2 = v0 * v0;
        for i in (k + 1)..m {
            let v = a.at(i, k);
            vnorm2 += v * v;
        }
        if vnorm2 == 0.0 {
            continue;
        }
        // Apply I - 2 v v^T / (v^T v) to the trailing columns and to b.
        for j in (k + 1)..n {
            let mut dot = v0 * a.at(k, j);
            for i in (k + 1)..m {
                dot += a.at(i, k) * a.at(i, j);
            }
            let scale = 2.0 * dot / vnorm2;
            let cur = a.at(k, j);
            a.set(k, j, cur - scale * v0);
            for i in (k + 1)..m {
                let cur = a.at(i, j);
                a.set(i, j, cur - scale * a.at(i, k));
            }
        }
        let mut dot = v0 * b[k];
        for i in (k + 1)..m {
            dot += a.at(i, k) * b[i];
        }
        let scale = 2.0 * dot / vnorm2;
        b[k] -= scale * v0;
        for i in (k + 1)..m {
            b[i] -= scale * a.at(i, k);
        }
        a.set(k, k, alpha);
    }

    let rdiag: Vec<f64> = (0..n).map(|k| a.at(k, k).abs()).collect();

    // Back-substitution on the upper triangle.
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = b[k];
        for j in (k + 1)..n {
            s -= a.at(k, j) * x[j];
        }
        let d = a.at(k, k);
        if d == 0.0 {
            return None;
        }
        x[k] = s / d;
    }
    Some((x, rdiag))
}

/// Relative rank check on R's diagonal: true when the design is effectively
/// rank-deficient at tolerance `rel_tol`.
pub(crate) fn rank_deficient(rdiag: &[f64], rel_tol: f64) -> bool {
    let max = rdiag.iter().cloned().fold(0.0_f64, f64::max);
    if max == 0.0 {
        return true;
    }
    rdiag.iter().any(|&d| d <= rel_tol * max)
}

/// Thomas algorithm for a tridiagonal system. `lower` and `upper` have
/// `n - 1` entries, `diag` and `rhs` have `n`. The matrix must not require
/// pivoting (true for the diagonally dominant spline systems here).
pub(crate) fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Vec<f64> {
    let n = diag.len();
    debug_assert_eq!(lower.len() + 1, n);
    debug_assert_eq!(upper.len() + 1, n);
    debug_assert_eq!(rhs.len(), n);
    let mut c = vec![0.0; n.saturating_sub(1)];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}
