//! Forward solver for the second-order homogeneous ODE with time-varying
//! coefficients,
//!
//! ```text
//! x''(t) + b1(t) x'(t) + b0(t) x(t) = 0,
//! ```
//!
//! integrated as the first-order system (x, v) by classical fixed-step RK4,
//! plus a seeded synthetic-record generator on top of it. These are the
//! ground truth the state and coefficient estimators are tested against.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::ingest::{IngestError, LeadSignal, SignalRecord};
use crate::seeds;

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(
        "coefficient track [{track_start}, {track_end}] does not cover [{need_start}, {need_end}]"
    )]
    GridCoverage {
        track_start: f64,
        track_end: f64,
        need_start: f64,
        need_end: f64,
    },
    #[error("solution became non-finite at t = {t}")]
    NonFinite { t: f64 },
    #[error("invalid solver input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Record(#[from] IngestError),
}

/// Time-varying ODE coefficients sampled on a strictly increasing grid;
/// values between grid points are linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTrack {
    grid: Vec<f64>,
    b0: Vec<f64>,
    b1: Vec<f64>,
}

impl CoefficientTrack {
    pub fn new(grid: Vec<f64>, b0: Vec<f64>, b1: Vec<f64>) -> Result<Self, OdeError> {
        if grid.is_empty() || grid.len() != b0.len() || grid.len() != b1.len() {
            return Err(OdeError::InvalidInput(
                "track arrays must be non-empty and equal length".into(),
            ));
        }
        if grid
            .iter()
            .chain(b0.iter())
            .chain(b1.iter())
            .any(|v| !v.is_finite())
        {
            return Err(OdeError::InvalidInput("track values must be finite".into()));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OdeError::InvalidInput(
                "track grid must be strictly increasing".into(),
            ));
        }
        Ok(CoefficientTrack { grid, b0, b1 })
    }

    /// Constant coefficients over `[start, end]`.
    pub fn constant(start: f64, end: f64, b0: f64, b1: f64) -> Result<Self, OdeError> {
        CoefficientTrack::new(vec![start, end], vec![b0, b0], vec![b1, b1])
    }

    /// Linear ramp from `(b0_start, b1_start)` to `(b0_end, b1_end)`.
    pub fn ramp(
        start: f64,
        end: f64,
        b0_start: f64,
        b0_end: f64,
        b1_start: f64,
        b1_end: f64,
    ) -> Result<Self, OdeError> {
        CoefficientTrack::new(
            vec![start, end],
            vec![b0_start, b0_end],
            vec![b1_start, b1_end],
        )
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn b0(&self) -> &[f64] {
        &self.b0
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// Interpolated `(b0, b1)` at time `t`; clamped at the grid ends.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let g = &self.grid;
        if t <= g[0] {
            return (self.b0[0], self.b1[0]);
        }
        if t >= *g.last().unwrap() {
            return (*self.b0.last().unwrap(), *self.b1.last().unwrap());
        }
        let idx = match g.binary_search_by(|p| p.partial_cmp(&t).unwrap()) {
            Ok(i) => return (self.b0[i], self.b1[i]),
            Err(i) => i, // first index with g[idx] > t, >= 1 here
        };
        let (t0, t1) = (g[idx - 1], g[idx]);
        let w = (t - t0) / (t1 - t0);
        (
            self.b0[idx - 1] + w * (self.b0[idx] - self.b0[idx - 1]),
            self.b1[idx - 1] + w * (self.b1[idx] - self.b1[idx - 1]),
        )
    }

    /// Serialize as CSV `t,b0,b1` (full precision).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,b0,b1\n");
        for i in 0..self.grid.len() {
            out.push_str(&format!("{},{},{}\n", self.grid[i], self.b0[i], self.b1[i]));
        }
        out
    }

    /// Parse the CSV produced by [`CoefficientTrack::to_csv`].
    pub fn from_csv(text: &str) -> Result<Self, OdeError> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "t,b0,b1" => {}
            _ => {
                return Err(OdeError::InvalidInput(
                    "track CSV must start with header 't,b0,b1'".into(),
                ))
            }
        }
        let (mut grid, mut b0, mut b1) = (Vec::new(), Vec::new(), Vec::new());
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(OdeError::InvalidInput(format!(
                    "track CSV row {} has {} fields, expected 3",
                    i + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<f64, OdeError> {
                s.trim()
                    .parse()
                    .map_err(|_| OdeError::InvalidInput(format!("bad number '{s}' in track CSV")))
            };
            grid.push(parse(fields[0])?);
            b0.push(parse(fields[1])?);
            b1.push(parse(fields[2])?);
        }
        CoefficientTrack::new(grid, b0, b1)
    }
}

/// Initial state for the forward solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeInitialState {
    /// Start time in seconds.
    pub t0: f64,
    /// Initial amplitude in mV.
    pub x0: f64,
    /// Initial first derivative in mV/s.
    pub v0: f64,
}

impl OdeInitialState {
    pub fn new(t0: f64, x0: f64, v0: f64) -> Result<Self, OdeError> {
        if !(t0.is_finite() && x0.is_finite() && v0.is_finite()) {
            return Err(OdeError::InvalidInput(
                "initial state must be finite".into(),
            ));
        }
        Ok(OdeInitialState { t0, x0, v0 })
    }
}

/// Trajectory sampled on the uniform grid `t0 + k/fs`, `k = 0..=n`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

/// Integrate the ODE forward with classical RK4 at step `1/fs`, sampling
/// `round(duration * fs) + 1` points including both endpoints.
pub fn solve_ode(
    track: &CoefficientTrack,
    init: &OdeInitialState,
    fs: f64,
    duration: f64,
) -> Result<Trajectory, OdeError> {
    if !fs.is_finite() || fs <= 0.0 || !duration.is_finite() || duration <= 0.0 {
        return Err(OdeError::InvalidInput(
            "fs and duration must be positive".into(),
        ));
    }
    let n = (duration * fs).round() as usize;
    if n == 0 {
        return Err(OdeError::InvalidInput(
            "duration shorter than one sample".into(),
        ));
    }
    let h = 1.0 / fs;
    let t_end = init.t0 + n as f64 * h;
    let cover_tol = 1e-9 * (1.0 + t_end.abs());
    if track.start() > init.t0 + cover_tol || track.end() < t_end - cover_tol {
        return Err(OdeError::GridCoverage {
            track_start: track.start(),
            track_end: track.end(),
            need_start: init.t0,
            need_end: t_end,
        });
    }

    let deriv = |t: f64, x: f64, v: f64| -> (f64, f64) {
        let (b0, b1) = track.eval(t);
        (v, -b1 * v - b0 * x)
    };

    let mut times = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let mut vs = Vec::with_capacity(n + 1);
    let (mut x, mut v) = (init.x0, init.v0);
    times.push(init.t0);
    xs.push(x);
    vs.push(v);
    for k in 0..n {
        let t = init.t0 + k as f64 * h;
        let (k1x, k1v) = deriv(t, x, v);
        let (k2x, k2v) = deriv(t + 0.5 * h, x + 0.5 * h * k1x, v + 0.5 * h * k1v);
        let (k3x, k3v) = deriv(t + 0.5 * h, x + 0.5 * h * k2x, v + 0.5 * h * k2v);
        let (k4x, k4v) = deriv(t + h, x + h * k3x, v + h * k3v);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        let t_next = init.t0 + (k + 1) as f64 * h;
        if !(x.is_finite() && v.is_finite()) {
            return Err(OdeError::NonFinite { t: t_next });
        }
        times.push(t_next);
        xs.push(x);
        vs.push(v);
    }
    Ok(Trajectory {
        times,
        x: xs,
        v: vs,
    })
}

/// Generate a multi-lead record: per lead, the clean RK4 trajectory plus
/// i.i.d. Gaussian noise (mean 0, sd `noise_sd`), deterministic for a fixed
/// seed. Leads draw from independent seed-derived streams.
#[allow(clippy::too_many_arguments)]
pub fn synth_record(
    record_id: &str,
    label: &str,
    lead_names: &[String],
    tracks: &[CoefficientTrack],
    inits: &[OdeInitialState],
    fs: f64,
    duration: f64,
    noise_sd: f64,
    seed: u64,
) -> Result<SignalRecord, OdeError> {
    if lead_names.len() != tracks.len() || lead_names.len() != inits.len() {
        return Err(OdeError::InvalidInput(
            "lead_names, tracks and inits must have equal length".into(),
        ));
    }
    if noise_sd < 0.0 || !noise_sd.is_finite() {
        return Err(OdeError::InvalidInput("noise_sd must be >= 0".into()));
    }
    let mut leads = Vec::with_capacity(lead_names.len());
    for (li, name) in lead_names.iter().enumerate() {
        let traj = solve_ode(&tracks[li], &inits[li], fs, duration)?;
        let mut samples = traj.x;
        if noise_sd > 0.0 {
            let mut rng = ChaCha12Rng::seed_from_u64(seeds::derive(seed, li as u64));
            let normal = Normal::new(0.0, noise_sd).expect("finite sd");
            for s in samples.iter_mut() {
                *s += normal.sample(&mut rng);
            }
        }
        leads.push(LeadSignal::new(name.clone(), samples, 1.0, 0)?);
    }
    Ok(SignalRecord::new(
        record_id.to_string(),
        label.to_string(),
        fs,
        leads,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic_track(end: f64) -> CoefficientTrack {
        CoefficientTrack::constant(0.0, end, 1.0, 0.0).unwrap()
    }

    #[test]
    fn harmonic_oscillator_hits_sine() {
        // x'' + x = 0, x(0)=0, x'(0)=1 -> x(t) = sin t.
        let track = harmonic_track(2.0);
        let init = OdeInitialState::new(0.0, 0.0, 1.0).unwrap();
        let traj = solve_ode(&track, &init, 1000.0, 2.0).unwrap();
        let idx = (std::f64::consts::FRAC_PI_2 * 1000.0).round() as usize;
        assert!((traj.x[idx] - 1.0).abs() < 1e-6, "x = {}", traj.x[idx]);
    }

    #[test]
    fn constant_solution_is_exact() {
        let track = CoefficientTrack::constant(0.0, 1.0, 0.0, 0.0).unwrap();
        let init = OdeInitialState::new(0.0, 1.0, 0.0).unwrap();
        let traj = solve_ode(&track, &init, 500.0, 1.0).unwrap();
        assert!(traj.x.iter().all(|&x| x == 1.0));
        assert!(traj.v.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn richardson_step_halving_agrees() {
        // Time-varying b0(t) = 4 + 2t with light damping: the full-step and
        // half-step solves must agree far below the stated 1e-7.
        let track = CoefficientTrack::ramp(0.0, 5.0, 4.0, 14.0, 0.1, 0.1).unwrap();
        let init = OdeInitialState::new(0.0, 1.0, 0.0).unwrap();
        let full = solve_ode(&track, &init, 1000.0, 5.0).unwrap();
        let half = solve_ode(&track, &init, 2000.0, 5.0).unwrap();
        let mut max_diff = 0.0_f64;
        for (k, &x) in full.x.iter().enumerate() {
            max_diff = max_diff.max((x - half.x[2 * k]).abs());
        }
        assert!(max_diff < 1e-7, "max diff {max_diff}");
    }

    #[test]
    fn fourth_order_convergence_on_harmonic() {
        // Halving the step shrinks the max error by ~2^4 over [0, 2*pi].
        let two_pi = 2.0 * std::f64::consts::PI;
        let track = harmonic_track(two_pi + 0.01);
        let init = OdeInitialState::new(0.0, 0.0, 1.0).unwrap();
        let err = |fs: f64| -> f64 {
            let traj = solve_ode(&track, &init, fs, two_pi).unwrap();
            traj.times
                .iter()
                .zip(traj.x.iter())
                .map(|(&t, &x)| (x - t.sin()).abs())
                .fold(0.0, f64::max)
        };
        let ratio = err(100.0) / err(200.0);
        assert!(
            (14.0..=18.0).contains(&ratio),
            "convergence ratio {ratio} outside [14, 18]"
        );
    }

    #[test]
    fn linearity_in_initial_state() {
        let track = harmonic_track(3.0);
        let a = solve_ode(
            &track,
            &OdeInitialState::new(0.0, 0.3, -0.7).unwrap(),
            1000.0,
            3.0,
        )
        .unwrap();
        let b = solve_ode(
            &track,
            &OdeInitialState::new(0.0, 0.3 * 2.5, -0.7 * 2.5).unwrap(),
            1000.0,
            3.0,
        )
        .unwrap();
        for (xa, xb) in a.x.iter().zip(b.x.iter()) {
            let scaled = xa * 2.5;
            let denom = scaled.abs().max(1e-12);
            assert!(((xb - scaled) / denom).abs() < 1e-9);
        }
    }

    #[test]
    fn energy_is_conserved_without_damping() {
        // b1 = 0, b0 = w^2: x^2 + (v/w)^2 constant to 1e-5 relative over 10 periods.
        let w = 2.0 * std::f64::consts::PI;
        let dur = 10.0;
        let track = CoefficientTrack::constant(0.0, dur + 0.01, w * w, 0.0).unwrap();
        let init = OdeInitialState::new(0.0, 1.0, 0.0).unwrap();
        let traj = solve_ode(&track, &init, 1000.0, dur).unwrap();
        let e0 = 1.0;
        for (x, v) in traj.x.iter().zip(traj.v.iter()) {
            let e = x * x + (v / w) * (v / w);
            assert!(((e - e0) / e0).abs() < 1e-5);
        }
    }

    #[test]
    fn grid_coverage_is_enforced() {
        let track = harmonic_track(1.0);
        let init = OdeInitialState::new(0.0, 0.0, 1.0).unwrap();
        let err = solve_ode(&track, &init, 1000.0, 2.0).unwrap_err();
        assert!(matches!(err, OdeError::GridCoverage { .. }));
    }

    #[test]
    fn blowup_is_reported() {
        // Strong negative damping explodes quickly.
        let track = CoefficientTrack::constant(0.0, 50.0, 1.0, -50.0).unwrap();
        let init = OdeInitialState::new(0.0, 1.0, 0.0).unwrap();
        let err = solve_ode(&track, &init, 100.0, 50.0).unwrap_err();
        assert!(matches!(err, OdeError::NonFinite { .. }));
    }

    #[test]
    fn synth_without_noise_equals_clean_solution() {
        let track = harmonic_track(1.0);
        let init = OdeInitialState::new(0.0, 0.5, 0.0).unwrap();
        let rec = synth_record(
            "r0",
            "A",
            &["i".to_string()],
            std::slice::from_ref(&track),
            &[init],
            250.0,
            1.0,
            0.0,
            9,
        )
        .unwrap();
        let traj = solve_ode(&track, &init, 250.0, 1.0).unwrap();
        assert_eq!(rec.leads()[0].samples(), traj.x.as_slice());
    }

    #[test]
    fn synth_is_deterministic_per_seed() {
        let track = harmonic_track(1.0);
        let init = OdeInitialState::new(0.0, 0.5, 0.0).unwrap();
        let mk = |seed| {
            synth_record(
                "r0",
                "A",
                &["i".to_string(), "ii".to_string()],
                &[track.clone(), track.clone()],
                &[init, init],
                250.0,
                1.0,
                0.05,
                seed,
            )
            .unwrap()
        };
        let a = mk(42);
        let b = mk(42);
        let c = mk(43);
        assert_eq!(a.leads()[0].samples(), b.leads()[0].samples());
        assert_eq!(a.leads()[1].samples(), b.leads()[1].samples());
        assert_ne!(a.leads()[0].samples(), c.leads()[0].samples());
        // Leads use independent noise streams.
        assert_ne!(a.leads()[0].samples(), a.leads()[1].samples());
    }

    #[test]
    fn noise_variance_matches_nominal() {
        // sd = 0.05 over 10_000 samples: sample variance of (y - x) within
        // the 99% chi-square band [0.0023, 0.0027].
        let dur = 10.0;
        let track = harmonic_track(dur + 0.01);
        let init = OdeInitialState::new(0.0, 1.0, 0.0).unwrap();
        let fs = 1000.0;
        let rec = synth_record(
            "r0",
            "A",
            &["i".to_string()],
            std::slice::from_ref(&track),
            &[init],
            fs,
            dur,
            0.05,
            1234,
        )
        .unwrap();
        let clean = solve_ode(&track, &init, fs, dur).unwrap();
        let n = 10_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for k in 0..n {
            let d = rec.leads()[0].samples()[k] - clean.x[k];
            sum += d;
            sum2 += d * d;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(
            (0.0023..=0.0027).contains(&var),
            "noise variance {var} outside [0.0023, 0.0027]"
        );
    }

    #[test]
    fn track_csv_roundtrip() {
        let track = CoefficientTrack::ramp(0.0, 5.0, 4.0, 14.0, 0.1, 0.2).unwrap();
        let parsed = CoefficientTrack::from_csv(&track.to_csv()).unwrap();
        assert_eq!(track, parsed);
    }

    #[test]
    fn interpolation_is_piecewise_linear() {
        let track = CoefficientTrack::new(
            vec![0.0, 1.0, 3.0],
            vec![0.0, 2.0, 2.0],
            vec![1.0, 1.0, 5.0],
        )
        .unwrap();
        assert_eq!(track.eval(0.5), (1.0, 1.0));
        assert_eq!(track.eval(2.0), (2.0, 3.0));
        assert_eq!(track.eval(-1.0), (0.0, 1.0)); // clamped
        assert_eq!(track.eval(9.0), (2.0, 5.0)); // clamped
    }
}
