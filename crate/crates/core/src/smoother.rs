//! State-variable estimation from noisy samples.
//!
//! The primary estimator is kernel-weighted local polynomial regression: at
//! each evaluation time a degree-`p` Taylor polynomial is fit to the samples
//! inside the kernel's support window by weighted least squares, and the
//! fitted coefficients give the state and its derivatives (coefficient `k`
//! times `k!` is the k-th derivative). A natural cubic spline interpolant is
//! provided as the comparison baseline.
//!
//! The weighted designs are solved through a Householder QR of the
//! square-root-weighted design, never an explicit inverse. The ridge term is
//! applied on the bandwidth-scaled basis `((t - t0)/h)^k`, which keeps its
//! stabilizing effect independent of the bandwidth's magnitude.

use thiserror::Error;

use crate::exec;
use crate::ingest::LeadSignal;
use crate::linalg::{lstsq, rank_deficient, Dense};

#[derive(Debug, Error)]
pub enum SmoothError {
    #[error("insufficient kernel support at t0 = {t0}: {got} weighted samples, need {needed}")]
    InsufficientSupport { t0: f64, needed: usize, got: usize },
    #[error("singular local design at t0 = {t0}")]
    SingularDesign { t0: f64 },
    #[error("too few knots: got {got}, need {needed}")]
    TooFewKnots { needed: usize, got: usize },
    #[error("invalid smoother config: {0}")]
    InvalidConfig(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Kernel for the local weights `K((t_j - t0)/h) / h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelKind {
    /// `0.75 (1 - u^2)` on `|u| <= 1`; compact support makes every local
    /// solve a small window, the key cost lever on long records.
    #[default]
    Epanechnikov,
    /// Standard normal density; truncated at 4 bandwidths for windowing.
    Gaussian,
}

impl KernelKind {
    /// Kernel value at scaled offset `u`.
    pub fn k(&self, u: f64) -> f64 {
        match self {
            KernelKind::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
        }
    }

    /// Support radius in units of the bandwidth.
    fn support(&self) -> f64 {
        match self {
            KernelKind::Epanechnikov => 1.0,
            KernelKind::Gaussian => 4.0,
        }
    }

    pub fn parse(s: &str) -> Result<Self, SmoothError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "epanechnikov" => Ok(KernelKind::Epanechnikov),
            "gaussian" => Ok(KernelKind::Gaussian),
            other => Err(SmoothError::InvalidConfig(format!(
                "unknown kernel '{other}'"
            ))),
        }
    }
}

/// The weight a sample at offset `dt` seconds receives at bandwidth `h`.
pub fn kernel_weight(kernel: KernelKind, dt: f64, h: f64) -> f64 {
    kernel.k(dt / h) / h
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmootherConfig {
    /// Taylor polynomial degree, at least 2 (the second derivative is needed).
    pub poly_order: usize,
    /// Kernel bandwidth in seconds.
    pub bandwidth: f64,
    pub kernel: KernelKind,
    /// Estimate at every `eval_stride`-th sample time.
    pub eval_stride: usize,
    /// Ridge stabilizer on the scaled normal equations.
    pub ridge: f64,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        SmootherConfig {
            poly_order: 3,
            bandwidth: 0.025,
            kernel: KernelKind::Epanechnikov,
            eval_stride: 10,
            ridge: 1e-8,
        }
    }
}

impl SmootherConfig {
    pub fn validate(&self) -> Result<(), SmoothError> {
        if self.poly_order < 2 {
            return Err(SmoothError::InvalidConfig(format!(
                "poly_order must be >= 2, got {}",
                self.poly_order
            )));
        }
        if !self.bandwidth.is_finite() || self.bandwidth <= 0.0 {
            return Err(SmoothError::InvalidConfig(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth
            )));
        }
        if self.eval_stride == 0 {
            return Err(SmoothError::InvalidConfig(
                "eval_stride must be >= 1".into(),
            ));
        }
        if self.ridge < 0.0 || !self.ridge.is_finite() {
            return Err(SmoothError::InvalidConfig(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        Ok(())
    }
}

/// Fitted local polynomial at one evaluation time: `derivatives[k]` is the
/// estimated k-th derivative (`k! * alpha_k`), `k = 0..=poly_order`.
#[derive(Debug, Clone)]
pub struct LocalFit {
    pub derivatives: Vec<f64>,
}

impl LocalFit {
    pub fn x(&self) -> f64 {
        self.derivatives[0]
    }
    pub fn dx(&self) -> f64 {
        self.derivatives[1]
    }
    pub fn d2x(&self) -> f64 {
        self.derivatives[2]
    }
}

/// Estimated state and derivatives on an evaluation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedState {
    pub grid: Vec<f64>,
    pub x: Vec<f64>,
    pub dx: Vec<f64>,
    pub d2x: Vec<f64>,
    /// Mean squared residual `y - x` over the evaluation grid.
    pub residual_variance: f64,
}

impl SmoothedState {
    pub fn new(
        grid: Vec<f64>,
        x: Vec<f64>,
        dx: Vec<f64>,
        d2x: Vec<f64>,
        residual_variance: f64,
    ) -> Result<Self, SmoothError> {
        let n = grid.len();
        if x.len() != n || dx.len() != n || d2x.len() != n {
            return Err(SmoothError::InvalidState("array length mismatch".into()));
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        if !(finite(&grid) && finite(&x) && finite(&dx) && finite(&d2x)) {
            return Err(SmoothError::InvalidState("non-finite value".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SmoothError::InvalidState(
                "grid must be strictly increasing".into(),
            ));
        }
        if residual_variance.is_nan() || residual_variance < 0.0 {
            return Err(SmoothError::InvalidState(format!(
                "residual variance must be >= 0, got {residual_variance}"
            )));
        }
        Ok(SmoothedState {
            grid,
            x,
            dx,
            d2x,
            residual_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Serialize as CSV `t,x,dx,d2x` (full precision).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,dx,d2x\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                self.grid[i], self.x[i], self.dx[i], self.d2x[i]
            ));
        }
        out
    }
}

/// Fit the local polynomial at a single evaluation time `t0` (seconds from
/// the first sample; samples sit on the uniform grid `j / fs`).
pub fn local_poly_fit(
    samples: &LeadSignal,
    fs: f64,
    t0: f64,
    cfg: &SmootherConfig,
) -> Result<LocalFit, SmoothError> {
    cfg.validate()?;
    let y = samples.samples();
    fit_window(y, fs, t0, cfg)
}

fn fit_window(y: &[f64], fs: f64, t0: f64, cfg: &SmootherConfig) -> Result<LocalFit, SmoothError> {
    let p = cfg.poly_order;
    let h = cfg.bandwidth;
    let radius = cfg.kernel.support() * h;
    // Tiny slack so float rounding at the window boundary cannot drop a
    // sample; zero-weight rows are skipped below anyway.
    let lo = ((t0 - radius) * fs - 1e-9).ceil().max(0.0) as usize;
    let hi_f = ((t0 + radius) * fs + 1e-9).floor();
    let hi = if hi_f < 0.0 {
        0
    } else {
        (hi_f as usize).min(y.len().saturating_sub(1))
    };
    let ncols = p + 1;

    let mut rows = Dense::with_capacity(hi.saturating_sub(lo) + 1 + ncols, ncols);
    let mut rhs = Vec::with_capacity(hi.saturating_sub(lo) + 1 + ncols);
    let mut got = 0usize;
    let mut row_buf = vec![0.0; ncols];
    for (j, &yj) in y.iter().enumerate().take(hi + 1).skip(lo) {
        let dt = j as f64 / fs - t0;
        let w = kernel_weight(cfg.kernel, dt, h);
        if w <= 0.0 {
            continue;
        }
        got += 1;
        let rw = w.sqrt();
        let u = dt / h;
        let mut pw = 1.0;
        for c in row_buf.iter_mut() {
            *c = rw * pw;
            pw *= u;
        }
        rows.push_row(&row_buf);
        rhs.push(rw * yj);
    }
    if got < ncols {
        return Err(SmoothError::InsufficientSupport {
            t0,
            needed: ncols,
            got,
        });
    }

    // Rank check on the data design alone: the ridge rows below would mask
    // a genuinely singular window.
    let data_solve = lstsq(rows.clone(), rhs.clone());
    let data_rdiag = match &data_solve {
        Some((_, rdiag)) => rdiag.clone(),
        None => return Err(SmoothError::SingularDesign { t0 }),
    };
    if rank_deficient(&data_rdiag, 1e-10) {
        return Err(SmoothError::SingularDesign { t0 });
    }

    let alpha_scaled = if cfg.ridge > 0.0 {
        let sqrt_ridge = cfg.ridge.sqrt();
        for k in 0..ncols {
            let mut row = vec![0.0; ncols];
            row[k] = sqrt_ridge;
            rows.push_row(&row);
            rhs.push(0.0);
        }
        match lstsq(rows, rhs) {
            Some((sol, _)) => sol,
            None => return Err(SmoothError::SingularDesign { t0 }),
        }
    } else {
        data_solve.unwrap().0
    };

    // Back out of the scaled basis: alpha_k = alpha_scaled_k / h^k, and the
    // k-th derivative is k! * alpha_k.
    let mut derivatives = Vec::with_capacity(ncols);
    let mut hk = 1.0;
    let mut fact = 1.0;
    for (k, &a) in alpha_scaled.iter().enumerate() {
        if k > 0 {
            hk *= h;
            fact *= k as f64;
        }
        derivatives.push(fact * a / hk);
    }
    Ok(LocalFit { derivatives })
}

/// Smooth a whole lead: the local fit evaluated at every `eval_stride`-th
/// sample time. Evaluation points are independent and run in parallel.
pub fn smooth_lead(
    samples: &LeadSignal,
    fs: f64,
    cfg: &SmootherConfig,
) -> Result<SmoothedState, SmoothError> {
    smooth_lead_impl(samples, fs, cfg, true)
}

/// Sequential twin of [`smooth_lead`], kept for benchmark comparison.
#[doc(hidden)]
pub fn smooth_lead_seq(
    samples: &LeadSignal,
    fs: f64,
    cfg: &SmootherConfig,
) -> Result<SmoothedState, SmoothError> {
    smooth_lead_impl(samples, fs, cfg, false)
}

fn smooth_lead_impl(
    samples: &LeadSignal,
    fs: f64,
    cfg: &SmootherConfig,
    parallel: bool,
) -> Result<SmoothedState, SmoothError> {
    cfg.validate()?;
    let y = samples.samples();
    let n_points = y.len();
    if n_points < cfg.poly_order + 1 {
        return Err(SmoothError::InsufficientSupport {
            t0: 0.0,
            needed: cfg.poly_order + 1,
            got: n_points,
        });
    }
    let eval_indices: Vec<usize> = (0..n_points).step_by(cfg.eval_stride).collect();
    let n_eval = eval_indices.len();
    let fit_at = |i: usize| -> Result<(f64, f64, f64, f64), SmoothError> {
        let j = eval_indices[i];
        let t0 = j as f64 / fs;
        let fit = fit_window(y, fs, t0, cfg)?;
        let residual = y[j] - fit.x();
        Ok((fit.x(), fit.dx(), fit.d2x(), residual * residual))
    };
    let fits: Vec<(f64, f64, f64, f64)> = if parallel {
        exec::try_map_indexed(n_eval, fit_at)?
    } else {
        exec::map_indexed_seq(n_eval, fit_at)
            .into_iter()
            .collect::<Result<_, _>>()?
    };

    let grid: Vec<f64> = eval_indices.iter().map(|&j| j as f64 / fs).collect();
    let mut x = Vec::with_capacity(n_eval);
    let mut dx = Vec::with_capacity(n_eval);
    let mut d2x = Vec::with_capacity(n_eval);
    let mut rss = 0.0;
    for (xi, dxi, d2xi, r2) in fits {
        x.push(xi);
        dx.push(dxi);
        d2x.push(d2xi);
        rss += r2;
    }
    SmoothedState::new(grid, x, dx, d2x, rss / n_eval as f64)
}

/// Natural cubic spline through every `knot_stride`-th sample (the last
/// sample is always a knot), with state and derivatives read analytically
/// from each cubic piece on the full sample grid. `S'' = 0` at both ends.
pub fn cubic_spline_fit(
    samples: &LeadSignal,
    fs: f64,
    knot_stride: usize,
) -> Result<SmoothedState, SmoothError> {
    if knot_stride == 0 {
        return Err(SmoothError::InvalidConfig(
            "knot_stride must be >= 1".into(),
        ));
    }
    let y = samples.samples();
    let n = y.len();
    let mut knot_idx: Vec<usize> = (0..n).step_by(knot_stride).collect();
    if let Some(&last) = knot_idx.last() {
        if last != n - 1 {
            knot_idx.push(n - 1);
        }
    }
    let m = knot_idx.len();
    if m < 4 {
        return Err(SmoothError::TooFewKnots { needed: 4, got: m });
    }
    let xs: Vec<f64> = knot_idx.iter().map(|&j| j as f64 / fs).collect();
    let ys: Vec<f64> = knot_idx.iter().map(|&j| y[j]).collect();

    // Second derivatives at the knots; natural boundary pins the ends to 0.
    let mut m2 = vec![0.0; m];
    if m > 2 {
        let k = m - 2;
        let mut lower = vec![0.0; k.saturating_sub(1)];
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k.saturating_sub(1)];
        let mut rhs = vec![0.0; k];
        for i in 1..=k {
            let h0 = xs[i] - xs[i - 1];
            let h1 = xs[i + 1] - xs[i];
            diag[i - 1] = 2.0 * (h0 + h1);
            if i > 1 {
                lower[i - 2] = h0;
            }
            if i < k {
                upper[i - 1] = h1;
            }
            rhs[i - 1] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
        }
        let sol = crate::linalg::solve_tridiagonal(&lower, &diag, &upper, &rhs);
        m2[1..=k].copy_from_slice(&sol);
    }

    let n_grid = n;
    let mut x = Vec::with_capacity(n_grid);
    let mut dx = Vec::with_capacity(n_grid);
    let mut d2x = Vec::with_capacity(n_grid);
    let mut grid = Vec::with_capacity(n_grid);
    let mut seg = 0usize;
    let mut rss = 0.0;
    for (j, &yj) in y.iter().enumerate().take(n_grid) {
        let t = j as f64 / fs;
        while seg + 2 < m && t > xs[seg + 1] {
            seg += 1;
        }
        let h = xs[seg + 1] - xs[seg];
        let a = (xs[seg + 1] - t) / h;
        let b = 1.0 - a;
        let s = a * ys[seg]
            + b * ys[seg + 1]
            + ((a * a * a - a) * m2[seg] + (b * b * b - b) * m2[seg + 1]) * h * h / 6.0;
        let sd = (ys[seg + 1] - ys[seg]) / h
            + h / 6.0 * (-(3.0 * a * a - 1.0) * m2[seg] + (3.0 * b * b - 1.0) * m2[seg + 1]);
        let sdd = a * m2[seg] + b * m2[seg + 1];
        grid.push(t);
        x.push(s);
        dx.push(sd);
        d2x.push(sdd);
        let r = yj - s;
        rss += r * r;
    }
    SmoothedState::new(grid, x, dx, d2x, rss / n_grid as f64)
}
