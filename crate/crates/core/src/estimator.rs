//! Time-varying coefficient recovery and feature extraction.
//!
//! Given a smoothed state (x, x', x''), the coefficient functions of
//! `x'' + b1(t) x' + b0(t) x = 0` are recovered pointwise: around each grid
//! time the coefficients are modeled as locally linear, and the four local
//! parameters (two intercepts, two slopes) solve a windowed least squares
//! with response `-x''` and regressors built from x and x'. The intercepts
//! at each window center are the coefficient estimates.
//!
//! A record's features are the per-lead maxima of the two recovered
//! coefficient functions over the edge-trimmed grid, which is what makes a
//! 100k-sample lead collapse into two numbers.

use thiserror::Error;

use crate::exec;
use crate::fmt::format_sig;
use crate::ingest::SignalRecord;
use crate::linalg::{lstsq, rank_deficient, Dense};
use crate::ode::{CoefficientTrack, OdeError};
use crate::smoother::{self, SmoothError, SmoothedState, SmootherConfig};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("window at t0 = {t0} has {got} points, need at least 4")]
    InsufficientWindow { t0: f64, got: usize },
    #[error("singular coefficient design at t0 = {t0}")]
    SingularDesign { t0: f64 },
    #[error("coefficient track empty after edge trimming")]
    EmptyAfterTrim,
    #[error("lead '{0}' not present in record")]
    MissingLead(String),
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("malformed features CSV: {0}")]
    MalformedFeatures(String),
    #[error(transparent)]
    Smooth(#[from] SmoothError),
    #[error(transparent)]
    Track(#[from] OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// Local window half-width in seconds: grid points within this distance
    /// of the window center enter the solve.
    pub window_halfwidth: f64,
    /// Ridge stabilizer on the scaled normal equations.
    pub ridge: f64,
    /// Fraction of the grid excluded at each end before taking maxima;
    /// one-sided smoothing windows inflate derivative estimates at the
    /// boundaries and the max statistic is maximally sensitive to that.
    pub edge_trim: f64,
    /// Take the maximum of |b| instead of the signed maximum.
    pub abs_max: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            window_halfwidth: 0.05,
            ridge: 1e-8,
            edge_trim: 0.05,
            abs_max: false,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !self.window_halfwidth.is_finite() || self.window_halfwidth <= 0.0 {
            return Err(EstimatorError::InvalidConfig(format!(
                "window_halfwidth must be positive, got {}",
                self.window_halfwidth
            )));
        }
        if self.ridge < 0.0 || !self.ridge.is_finite() {
            return Err(EstimatorError::InvalidConfig(format!(
                "ridge must be >= 0, got {}",
                self.ridge
            )));
        }
        if !(0.0..0.5).contains(&self.edge_trim) {
            return Err(EstimatorError::InvalidConfig(format!(
                "edge_trim must be in [0, 0.5), got {}",
                self.edge_trim
            )));
        }
        Ok(())
    }
}

// Slack for window-membership comparisons; far below any grid spacing.
const WINDOW_EPS: f64 = 1e-9;

/// Estimate `b0(t)` and `b1(t)` on the state's evaluation grid.
pub fn fit_coefficients(
    state: &SmoothedState,
    cfg: &EstimatorConfig,
) -> Result<CoefficientTrack, EstimatorError> {
    cfg.validate()?;
    let n = state.len();
    let results = exec::try_map_indexed(n, |i| fit_at(state, cfg, i))?;
    let (b0, b1): (Vec<f64>, Vec<f64>) = results.into_iter().unzip();
    Ok(CoefficientTrack::new(state.grid.clone(), b0, b1)?)
}

/// Solve the 4-parameter local model at grid index `i`; returns `(b0, b1)`.
fn fit_at(
    state: &SmoothedState,
    cfg: &EstimatorConfig,
    i: usize,
) -> Result<(f64, f64), EstimatorError> {
    let t0 = state.grid[i];
    let w = cfg.window_halfwidth;
    let lo = state.grid.partition_point(|&t| t < t0 - w - WINDOW_EPS);
    let hi = state.grid.partition_point(|&t| t <= t0 + w + WINDOW_EPS);
    let count = hi - lo;
    if count < 4 {
        return Err(EstimatorError::InsufficientWindow { t0, got: count });
    }

    let mut a = Dense::with_capacity(count + 4, 4);
    let mut rhs = Vec::with_capacity(count + 4);
    for j in lo..hi {
        let u = (state.grid[j] - t0) / w;
        let (x, dx, d2x) = (state.x[j], state.dx[j], state.d2x[j]);
        a.push_row(&[dx, dx * u, x, x * u]);
        rhs.push(-d2x);
    }

    let data_solve = lstsq(a.clone(), rhs.clone());
    match &data_solve {
        Some((_, rdiag)) if !rank_deficient(rdiag, 1e-10) => {}
        _ => return Err(EstimatorError::SingularDesign { t0 }),
    }

    let beta = if cfg.ridge > 0.0 {
        let s = cfg.ridge.sqrt();
        for k in 0..4 {
            let mut row = [0.0; 4];
            row[k] = s;
            a.push_row(&row);
            rhs.push(0.0);
        }
        match lstsq(a, rhs) {
            Some((sol, _)) => sol,
            None => return Err(EstimatorError::SingularDesign { t0 }),
        }
    } else {
        data_solve.unwrap().0
    };

    // beta = [theta2, theta2' * w, theta1, theta1' * w]; the intercepts are
    // the coefficient estimates: b1 = theta2, b0 = theta1.
    Ok((beta[2], beta[0]))
}

/// Feature pair for one lead: maxima of the two coefficient functions over
/// the trimmed grid, with their argmax times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeaturePair {
    pub max_b0: f64,
    pub argmax_b0_t: f64,
    pub max_b1: f64,
    pub argmax_b1_t: f64,
}

/// Reduce a coefficient track to its feature pair. Ties in the argmax break
/// toward the earliest time.
pub fn extract_features(
    track: &CoefficientTrack,
    cfg: &EstimatorConfig,
) -> Result<FeaturePair, EstimatorError> {
    cfg.validate()?;
    let n = track.len();
    let cut = (cfg.edge_trim * n as f64).floor() as usize;
    if 2 * cut >= n {
        return Err(EstimatorError::EmptyAfterTrim);
    }
    let range = cut..(n - cut);
    let score = |v: f64| if cfg.abs_max { v.abs() } else { v };
    let max_of = |vals: &[f64]| -> (f64, f64) {
        let mut best_i = range.start;
        let mut best = score(vals[range.start]);
        for i in range.clone() {
            let s = score(vals[i]);
            if s > best {
                best = s;
                best_i = i;
            }
        }
        (best, track.grid()[best_i])
    };
    let (max_b0, argmax_b0_t) = max_of(track.b0());
    let (max_b1, argmax_b1_t) = max_of(track.b1());
    Ok(FeaturePair {
        max_b0,
        argmax_b0_t,
        max_b1,
        argmax_b1_t,
    })
}

/// Features for one lead of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct LeadFeatures {
    pub lead: String,
    pub pair: FeaturePair,
}

/// Per-record feature vector: one pair per selected lead.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub record_id: String,
    pub label: String,
    pub leads: Vec<LeadFeatures>,
}

impl FeatureVector {
    /// Flatten to one row per lead, the unit of the features CSV.
    pub fn rows(&self) -> Vec<FeatureRow> {
        self.leads
            .iter()
            .map(|lf| FeatureRow {
                record_id: self.record_id.clone(),
                label: self.label.clone(),
                lead: lf.lead.clone(),
                max_b0: lf.pair.max_b0,
                argmax_b0_t: lf.pair.argmax_b0_t,
                max_b1: lf.pair.max_b1,
                argmax_b1_t: lf.pair.argmax_b1_t,
            })
            .collect()
    }
}

/// Smooth, fit and reduce every requested lead of a record. Leads run in
/// parallel; the result is deterministic either way.
pub fn featurize_record(
    record: &SignalRecord,
    leads: &[String],
    smoother_cfg: &SmootherConfig,
    estimator_cfg: &EstimatorConfig,
) -> Result<FeatureVector, EstimatorError> {
    smoother_cfg.validate()?;
    estimator_cfg.validate()?;
    for name in leads {
        if record.lead(name).is_none() {
            return Err(EstimatorError::MissingLead(name.clone()));
        }
    }
    let fits = exec::try_map_indexed(leads.len(), |i| {
        let lead = record.lead(&leads[i]).expect("presence checked above");
        let state = smoother::smooth_lead(lead, record.fs(), smoother_cfg)?;
        let track = fit_coefficients(&state, estimator_cfg)?;
        let pair = extract_features(&track, estimator_cfg)?;
        Ok::<LeadFeatures, EstimatorError>(LeadFeatures {
            lead: leads[i].clone(),
            pair,
        })
    })?;
    Ok(FeatureVector {
        record_id: record.record_id().to_string(),
        label: record.label().to_string(),
        leads: fits,
    })
}

/// One row of the features file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub record_id: String,
    pub label: String,
    pub lead: String,
    pub max_b0: f64,
    pub argmax_b0_t: f64,
    pub max_b1: f64,
    pub argmax_b1_t: f64,
}

pub const FEATURES_CSV_HEADER: &str = "record_id,label,lead,max_b0,argmax_b0_t,max_b1,argmax_b1_t";

/// Serialize feature rows (floats at 10 significant digits).
pub fn features_to_csv(rows: &[FeatureRow]) -> String {
    let mut out = String::from(FEATURES_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.record_id,
            r.label,
            r.lead,
            format_sig(r.max_b0, 10),
            format_sig(r.argmax_b0_t, 10),
            format_sig(r.max_b1, 10),
            format_sig(r.argmax_b1_t, 10),
        ));
    }
    out
}

/// Parse a features CSV produced by [`features_to_csv`].
pub fn features_from_csv(text: &str) -> Result<Vec<FeatureRow>, EstimatorError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == FEATURES_CSV_HEADER => {}
        other => {
            return Err(EstimatorError::MalformedFeatures(format!(
                "expected header '{FEATURES_CSV_HEADER}', got '{}'",
                other.unwrap_or("")
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(EstimatorError::MalformedFeatures(format!(
                "row {} has {} fields, expected 7",
                i + 2,
                f.len()
            )));
        }
        let num = |s: &str| -> Result<f64, EstimatorError> {
            s.trim()
                .parse()
                .map_err(|_| EstimatorError::MalformedFeatures(format!("bad number '{s}'")))
        };
        rows.push(FeatureRow {
            record_id: f[0].to_string(),
            label: f[1].to_string(),
            lead: f[2].to_string(),
            max_b0: num(f[3])?,
            argmax_b0_t: num(f[4])?,
            max_b1: num(f[5])?,
            argmax_b1_t: num(f[6])?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::LeadSignal;
    use crate::ode::{solve_ode, OdeInitialState};

    /// Analytic state on a uniform grid.
    fn analytic_state(
        f: impl Fn(f64) -> (f64, f64, f64),
        start: f64,
        step: f64,
        n: usize,
    ) -> SmoothedState {
        let grid: Vec<f64> = (0..n).map(|i| start + i as f64 * step).collect();
        let mut x = Vec::new();
        let mut dx = Vec::new();
        let mut d2x = Vec::new();
        for &t in &grid {
            let (a, b, c) = f(t);
            x.push(a);
            dx.push(b);
            d2x.push(c);
        }
        SmoothedState::new(grid, x, dx, d2x, 0.0).unwrap()
    }

    fn exact_cfg() -> EstimatorConfig {
        EstimatorConfig {
            ridge: 0.0,
            ..EstimatorConfig::default()
        }
    }

    fn interior(track: &CoefficientTrack, w: f64) -> Vec<usize> {
        let (start, end) = (track.start(), track.end());
        (0..track.len())
            .filter(|&i| track.grid()[i] >= start + w && track.grid()[i] <= end - w)
            .collect()
    }

    #[test]
    fn recovers_harmonic_constants() {
        // x = sin t solves x'' + x = 0: b0 = 1, b1 = 0.
        let state = analytic_state(|t| (t.sin(), t.cos(), -t.sin()), 0.0, 0.01, 629);
        let cfg = exact_cfg();
        let track = fit_coefficients(&state, &cfg).unwrap();
        for i in interior(&track, cfg.window_halfwidth) {
            assert!((track.b0()[i] - 1.0).abs() < 1e-6, "b0 = {}", track.b0()[i]);
            assert!(track.b1()[i].abs() < 1e-6, "b1 = {}", track.b1()[i]);
        }
    }

    #[test]
    fn recovers_damped_oscillator_constants() {
        // x = e^{-0.5 t} cos(3 t) solves x'' + x' + 9.25 x = 0.
        let (a, w) = (-0.5, 3.0);
        let state = analytic_state(
            |t| {
                let e = (a * t).exp();
                (
                    e * (w * t).cos(),
                    e * (a * (w * t).cos() - w * (w * t).sin()),
                    e * ((a * a - w * w) * (w * t).cos() - 2.0 * a * w * (w * t).sin()),
                )
            },
            0.0,
            0.01,
            500,
        );
        let cfg = exact_cfg();
        let track = fit_coefficients(&state, &cfg).unwrap();
        for i in interior(&track, cfg.window_halfwidth) {
            assert!(
                (track.b0()[i] - 9.25).abs() < 1e-6,
                "b0 = {}",
                track.b0()[i]
            );
            assert!((track.b1()[i] - 1.0).abs() < 1e-6, "b1 = {}", track.b1()[i]);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)] // literal matrix assembly
    fn agrees_with_dense_kronecker_normal_equations() {
        // Oracle: assemble sum_j R'R (x) z z' and sum_j R' (x) z * d2x
        // literally, with raw z = [1, dt], and solve by Gaussian elimination.
        // The grid step is 0.1 s so the raw normal equations stay well
        // conditioned and the oracle itself is good to ~1e-12.
        let state = analytic_state(
            |t| {
                let e = (-0.3 * t).exp();
                (
                    e * (2.0 * t).cos(),
                    e * (-0.3 * (2.0 * t).cos() - 2.0 * (2.0 * t).sin()),
                    e * ((0.09 - 4.0) * (2.0 * t).cos() + 1.2 * (2.0 * t).sin()),
                )
            },
            0.0,
            0.1,
            11,
        );
        let cfg = EstimatorConfig {
            window_halfwidth: 0.55, // all 11 points enter the window
            ridge: 0.0,
            ..EstimatorConfig::default()
        };
        let t0 = state.grid[5];

        let mut m = [[0.0f64; 4]; 4];
        let mut v = [0.0f64; 4];
        for j in 0..state.len() {
            let dt = state.grid[j] - t0;
            if dt.abs() > cfg.window_halfwidth + 1e-9 {
                continue;
            }
            let r = [state.dx[j], state.x[j]];
            let z = [1.0, dt];
            // row vector R (x) z' = [r0*z0, r0*z1, r1*z0, r1*z1]
            let k = [r[0] * z[0], r[0] * z[1], r[1] * z[0], r[1] * z[1]];
            for a in 0..4 {
                for b in 0..4 {
                    m[a][b] += k[a] * k[b];
                }
                v[a] += k[a] * state.d2x[j];
            }
        }
        // beta = -M^{-1} v by Gaussian elimination with partial pivoting.
        let mut aug = [[0.0f64; 5]; 4];
        for a in 0..4 {
            aug[a][..4].copy_from_slice(&m[a]);
            aug[a][4] = -v[a];
        }
        for col in 0..4 {
            let piv = (col..4)
                .max_by(|&i, &j| aug[i][col].abs().total_cmp(&aug[j][col].abs()))
                .unwrap();
            aug.swap(col, piv);
            for row in (col + 1)..4 {
                let f = aug[row][col] / aug[col][col];
                for c in col..5 {
                    aug[row][c] -= f * aug[col][c];
                }
            }
        }
        let mut beta = [0.0f64; 4];
        for row in (0..4).rev() {
            let mut s = aug[row][4];
            for c in (row + 1)..4 {
                s -= aug[row][c] * beta[c];
            }
            beta[row] = s / aug[row][row];
        }

        let track = fit_coefficients(&state, &cfg).unwrap();
        assert!(
            (track.b1()[5] - beta[0]).abs() < 1e-9,
            "b1 {} vs {}",
            track.b1()[5],
            beta[0]
        );
        assert!(
            (track.b0()[5] - beta[2]).abs() < 1e-9,
            "b0 {} vs {}",
            track.b0()[5],
            beta[2]
        );
    }

    #[test]
    fn zero_state_is_singular() {
        let state = analytic_state(|_| (0.0, 0.0, 0.0), 0.0, 0.01, 50);
        let err = fit_coefficients(&state, &EstimatorConfig::default()).unwrap_err();
        assert!(matches!(err, EstimatorError::SingularDesign { .. }));
    }

    #[test]
    fn window_locality() {
        let state = analytic_state(|t| (t.sin(), t.cos(), -t.sin()), 0.0, 0.01, 300);
        let cfg = exact_cfg();
        let t0_idx = 150;
        let t0 = state.grid[t0_idx];
        let base = fit_at(&state, &cfg, t0_idx).unwrap();
        let mut bent = state.clone();
        for j in 0..bent.len() {
            if (bent.grid[j] - t0).abs() > cfg.window_halfwidth + 0.005 {
                bent.x[j] += 40.0;
                bent.dx[j] -= 7.0;
                bent.d2x[j] *= -3.0;
            }
        }
        let moved = fit_at(&bent, &cfg, t0_idx).unwrap();
        assert_eq!(base, moved);
    }

    #[test]
    fn too_small_window_errors() {
        let state = analytic_state(|t| (t.sin(), t.cos(), -t.sin()), 0.0, 0.1, 30);
        let cfg = EstimatorConfig {
            window_halfwidth: 0.05, // only the center point falls inside
            ..EstimatorConfig::default()
        };
        let err = fit_coefficients(&state, &cfg).unwrap_err();
        assert!(matches!(err, EstimatorError::InsufficientWindow { .. }));
    }

    #[test]
    fn feature_extraction_trivials() {
        let cfg = EstimatorConfig::default();
        // Constant track.
        let grid: Vec<f64> = (0..101).map(|i| i as f64 / 100.0).collect();
        let track = CoefficientTrack::new(grid, vec![9.25; 101], vec![1.0; 101]).unwrap();
        let p = extract_features(&track, &cfg).unwrap();
        assert_eq!(p.max_b0, 9.25);
        assert_eq!(p.max_b1, 1.0);

        // Monotone ramp b0 = 4 + 2 t on [0, 5], trim 10% per side: the max
        // sits at the largest retained grid time, 4.5.
        let grid: Vec<f64> = (0..51).map(|i| i as f64 * 0.1).collect();
        let b0: Vec<f64> = grid.iter().map(|t| 4.0 + 2.0 * t).collect();
        let track = CoefficientTrack::new(grid, b0, vec![0.1; 51]).unwrap();
        let cfg_trim = EstimatorConfig {
            edge_trim: 0.1,
            ..cfg
        };
        let p = extract_features(&track, &cfg_trim).unwrap();
        assert!((p.max_b0 - 13.0).abs() < 1e-12);
        assert!((p.argmax_b0_t - 4.5).abs() < 1e-12);
    }

    #[test]
    fn boundary_spike_outside_trim_is_ignored() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 0.01).collect();
        let base: Vec<f64> = grid.iter().map(|t| 1.0 + (3.0 * t).sin()).collect();
        let track_a = CoefficientTrack::new(grid.clone(), base.clone(), vec![0.5; 100]).unwrap();
        let mut spiked = base;
        spiked[1] = 1e6; // inside the trimmed 5% band
        let track_b = CoefficientTrack::new(grid, spiked, vec![0.5; 100]).unwrap();
        let cfg = EstimatorConfig::default();
        assert_eq!(
            extract_features(&track_a, &cfg).unwrap(),
            extract_features(&track_b, &cfg).unwrap()
        );
    }

    #[test]
    fn argmax_tie_breaks_earliest() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut b0 = vec![0.0; 10];
        b0[3] = 5.0;
        b0[7] = 5.0;
        let track = CoefficientTrack::new(grid, b0, vec![0.0; 10]).unwrap();
        let cfg = EstimatorConfig {
            edge_trim: 0.0,
            ..EstimatorConfig::default()
        };
        let p = extract_features(&track, &cfg).unwrap();
        assert_eq!(p.argmax_b0_t, 3.0);
    }

    #[test]
    fn abs_max_flag() {
        let grid: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let mut b0 = vec![0.0; 10];
        b0[4] = -9.0;
        b0[5] = 3.0;
        let track = CoefficientTrack::new(grid, b0, vec![0.0; 10]).unwrap();
        let signed = EstimatorConfig {
            edge_trim: 0.0,
            ..EstimatorConfig::default()
        };
        let absolute = EstimatorConfig {
            abs_max: true,
            ..signed
        };
        assert_eq!(extract_features(&track, &signed).unwrap().max_b0, 3.0);
        assert_eq!(extract_features(&track, &absolute).unwrap().max_b0, 9.0);
    }

    #[test]
    fn trim_bounds_and_config_validation() {
        // edge_trim < 0.5 always retains at least one grid point.
        for n in [1usize, 2, 3, 10, 51] {
            let grid: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let track = CoefficientTrack::new(grid, vec![1.0; n], vec![0.0; n]).unwrap();
            let cfg = EstimatorConfig {
                edge_trim: 0.4999,
                ..EstimatorConfig::default()
            };
            assert!(extract_features(&track, &cfg).is_ok(), "n = {n}");
        }
        // A trim of 0.5 or more is an invalid config.
        let track = CoefficientTrack::constant(0.0, 1.0, 1.0, 0.0).unwrap();
        let bad = EstimatorConfig {
            edge_trim: 0.5,
            ..EstimatorConfig::default()
        };
        assert!(matches!(
            extract_features(&track, &bad),
            Err(EstimatorError::InvalidConfig(_))
        ));
    }

    #[test]
    fn featurize_counts_and_missing_lead() {
        // A 12-lead synthetic record yields a 24-entry feature vector. The
        // default eval stride needs 1 kHz sampling for its boundary windows.
        let fs = 1000.0;
        let dur = 1.0;
        let track = CoefficientTrack::constant(0.0, dur + 0.01, 40.0, 0.5).unwrap();
        let init = OdeInitialState::new(0.0, 1.0, 0.0).unwrap();
        let names: Vec<String> = [
            "i", "ii", "iii", "avr", "avl", "avf", "v1", "v2", "v3", "v4", "v5", "v6",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        let traj = solve_ode(&track, &init, fs, dur).unwrap();
        let leads: Vec<LeadSignal> = names
            .iter()
            .map(|n| LeadSignal::new(n.clone(), traj.x.clone(), 1.0, 0).unwrap())
            .collect();
        let rec = SignalRecord::new("r1".into(), "MI".into(), fs, leads).unwrap();
        let scfg = SmootherConfig::default();
        let ecfg = EstimatorConfig::default();
        let fv = featurize_record(&rec, &names, &scfg, &ecfg).unwrap();
        assert_eq!(fv.leads.len(), 12);
        assert_eq!(fv.rows().len(), 12); // 24 numbers: two per lead
        let single = featurize_record(&rec, &["iii".to_string()], &scfg, &ecfg).unwrap();
        assert_eq!(single.leads.len(), 1);

        let err = featurize_record(&rec, &["vx".to_string()], &scfg, &ecfg).unwrap_err();
        assert!(matches!(err, EstimatorError::MissingLead(name) if name == "vx"));
    }

    #[test]
    fn features_csv_roundtrip() {
        let rows = vec![FeatureRow {
            record_id: "r1".into(),
            label: "MI".into(),
            lead: "v6".into(),
            max_b0: 1934.442335,
            argmax_b0_t: 0.85,
            max_b1: 0.2,
            argmax_b1_t: 1.15,
        }];
        let csv = features_to_csv(&rows);
        let parsed = features_from_csv(&csv).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].record_id, "r1");
        assert_eq!(parsed[0].lead, "v6");
        assert!((parsed[0].max_b0 - 1934.442335).abs() < 1e-6);
        assert!(features_from_csv("wrong,header\n").is_err());
    }
}
