//! Flat key-value config files with CLI overrides, plus the sectioned spec
//! format for corpus synthesis.
//!
//! Config lines are `key = value`; `#` starts a comment. Unknown keys are
//! rejected so typos can't silently fall back to defaults. The effective
//! settings (defaults included) are echoed into every output directory.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use odecg_core::corpus::{ClassSpec, CorpusSpec};
use odecg_core::estimator::EstimatorConfig;
use odecg_core::ode::CoefficientTrack;
use odecg_core::smoother::{KernelKind, SmootherConfig};
use odecg_core::svm::{ClassWeights, KernelChoice, SvmConfig};

/// The 12 standard leads, in conventional order.
pub const STANDARD_12: [&str; 12] = [
    "i", "ii", "iii", "avr", "avl", "avf", "v1", "v2", "v3", "v4", "v5", "v6",
];

#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    map: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {} is not 'key = value': '{raw}'", ln + 1))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(KvConfig { map })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text)
    }

    /// Apply `key=value` overrides from the command line.
    pub fn apply_overrides(&mut self, sets: &[String]) -> Result<()> {
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| anyhow!("--set needs key=value, got '{s}'"))?;
            self.map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }
}

/// Which leads a command works on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LeadSelection {
    All12,
    Named(Vec<String>),
}

impl LeadSelection {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all12") {
            return Ok(LeadSelection::All12);
        }
        let names: Vec<String> = s
            .split(',')
            .map(|n| n.trim().to_lowercase())
            .filter(|n| !n.is_empty())
            .collect();
        if names.is_empty() {
            bail!("empty lead selection '{s}'");
        }
        Ok(LeadSelection::Named(names))
    }

    pub fn names(&self) -> Vec<String> {
        match self {
            LeadSelection::All12 => STANDARD_12.iter().map(|s| s.to_string()).collect(),
            LeadSelection::Named(n) => n.clone(),
        }
    }
}

/// SVM settings expanded into the selection grid.
#[derive(Debug, Clone)]
pub struct SvmGrid {
    pub kernel: String,
    pub c_grid: Vec<f64>,
    pub gamma_grid: Option<Vec<f64>>, // None = auto (1 / n_features)
    pub tol: f64,
    pub max_passes: usize,
    pub standardize: bool,
    pub balanced_weights: bool,
}

impl SvmGrid {
    pub fn configs(&self) -> Result<Vec<SvmConfig>> {
        let kernels: Vec<KernelChoice> = match self.kernel.as_str() {
            "linear" => vec![KernelChoice::Linear],
            "rbf" => match &self.gamma_grid {
                None => vec![KernelChoice::Rbf { gamma: None }],
                Some(gs) => gs
                    .iter()
                    .map(|&g| KernelChoice::Rbf { gamma: Some(g) })
                    .collect(),
            },
            other => bail!("svm_kernel must be 'rbf' or 'linear', got '{other}'"),
        };
        let mut out = Vec::new();
        for &c in &self.c_grid {
            for &kernel in &kernels {
                out.push(SvmConfig {
                    kernel,
                    c,
                    tol: self.tol,
                    max_passes: self.max_passes,
                    standardize: self.standardize,
                    class_weights: if self.balanced_weights {
                        ClassWeights::Balanced
                    } else {
                        ClassWeights::Uniform
                    },
                });
            }
        }
        Ok(out)
    }
}

/// Every knob of the pipeline, resolved from defaults + config + overrides.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub smoother: SmootherConfig,
    pub estimator: EstimatorConfig,
    pub leads: LeadSelection,
    pub csv_fs: f64,
    pub svm: SvmGrid,
    pub cv_folds: usize,
    pub seed: u64,
    pub positive_label: String,
    pub group_by_subject: bool,
    pub knot_stride: usize,
}

const KNOWN_KEYS: [&str; 22] = [
    "poly_order",
    "bandwidth",
    "kernel",
    "eval_stride",
    "smoother_ridge",
    "window_halfwidth",
    "estimator_ridge",
    "edge_trim",
    "abs_max",
    "leads",
    "csv_fs",
    "svm_kernel",
    "svm_c_grid",
    "svm_gamma_grid",
    "svm_tol",
    "svm_max_passes",
    "standardize",
    "class_weight",
    "positive_label",
    "cv_folds",
    "seed",
    "knot_stride",
];
const KNOWN_EXTRA: [&str; 1] = ["group_by_subject"];

fn parse_num<T: std::str::FromStr>(kv: &KvConfig, key: &str, default: T) -> Result<T> {
    match kv.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| anyhow!("bad value '{v}' for config key '{key}'")),
    }
}

fn parse_bool(kv: &KvConfig, key: &str, default: bool) -> Result<bool> {
    match kv.get(key) {
        None => Ok(default),
        Some("true") | Some("1") | Some("yes") => Ok(true),
        Some("false") | Some("0") | Some("no") => Ok(false),
        Some(v) => bail!("bad boolean '{v}' for config key '{key}'"),
    }
}

fn parse_f64_list(s: &str, key: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| anyhow!("bad number '{p}' in '{key}'"))
        })
        .collect()
}

impl PipelineConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) && !KNOWN_EXTRA.contains(&key.as_str()) {
                bail!(
                    "unknown config key '{key}' (known keys: {})",
                    KNOWN_KEYS
                        .iter()
                        .chain(KNOWN_EXTRA.iter())
                        .cloned()
                        .collect::<Vec<_>>()
                        .join(", ")
                );
            }
        }
        let sd = SmootherConfig::default();
        let ed = EstimatorConfig::default();
        let smoother = SmootherConfig {
            poly_order: parse_num(kv, "poly_order", sd.poly_order)?,
            bandwidth: parse_num(kv, "bandwidth", sd.bandwidth)?,
            kernel: match kv.get("kernel") {
                None => KernelKind::Epanechnikov,
                Some(k) => KernelKind::parse(k).map_err(|e| anyhow!("{e}"))?,
            },
            eval_stride: parse_num(kv, "eval_stride", sd.eval_stride)?,
            ridge: parse_num(kv, "smoother_ridge", sd.ridge)?,
        };
        let estimator = EstimatorConfig {
            window_halfwidth: parse_num(kv, "window_halfwidth", ed.window_halfwidth)?,
            ridge: parse_num(kv, "estimator_ridge", ed.ridge)?,
            edge_trim: parse_num(kv, "edge_trim", ed.edge_trim)?,
            abs_max: parse_bool(kv, "abs_max", ed.abs_max)?,
        };
        let leads = LeadSelection::parse(kv.get("leads").unwrap_or("all12"))?;
        let svm = SvmGrid {
            kernel: kv.get("svm_kernel").unwrap_or("rbf").to_string(),
            c_grid: match kv.get("svm_c_grid") {
                None => vec![1.0, 10.0, 100.0],
                Some(s) => parse_f64_list(s, "svm_c_grid")?,
            },
            gamma_grid: match kv.get("svm_gamma_grid") {
                None => None,
                Some("auto") => None,
                Some(s) => Some(parse_f64_list(s, "svm_gamma_grid")?),
            },
            tol: parse_num(kv, "svm_tol", 1e-3)?,
            max_passes: parse_num(kv, "svm_max_passes", 50_000)?,
            standardize: parse_bool(kv, "standardize", true)?,
            balanced_weights: match kv.get("class_weight") {
                None | Some("uniform") => false,
                Some("balanced") => true,
                Some(v) => bail!("class_weight must be 'uniform' or 'balanced', got '{v}'"),
            },
        };
        Ok(PipelineConfig {
            smoother,
            estimator,
            leads,
            csv_fs: parse_num(kv, "csv_fs", 1000.0)?,
            svm,
            cv_folds: parse_num(kv, "cv_folds", 10)?,
            seed: parse_num(kv, "seed", 17)?,
            positive_label: kv.get("positive_label").unwrap_or("MI").to_string(),
            group_by_subject: parse_bool(kv, "group_by_subject", false)?,
            knot_stride: parse_num(kv, "knot_stride", 25)?,
        })
    }

    /// Every effective setting, one `key = value` per line; written into
    /// output directories for provenance.
    pub fn echo(&self) -> String {
        let kernel = match self.smoother.kernel {
            KernelKind::Epanechnikov => "epanechnikov",
            KernelKind::Gaussian => "gaussian",
        };
        let leads = match &self.leads {
            LeadSelection::All12 => "all12".to_string(),
            LeadSelection::Named(n) => n.join(","),
        };
        let gamma = match &self.svm.gamma_grid {
            None => "auto".to_string(),
            Some(g) => g
                .iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
        };
        format!(
            "abs_max = {}\nbandwidth = {}\nclass_weight = {}\ncsv_fs = {}\ncv_folds = {}\nedge_trim = {}\nestimator_ridge = {}\neval_stride = {}\ngroup_by_subject = {}\nkernel = {}\nknot_stride = {}\nleads = {}\npoly_order = {}\npositive_label = {}\nseed = {}\nsmoother_ridge = {}\nstandardize = {}\nsvm_c_grid = {}\nsvm_gamma_grid = {}\nsvm_kernel = {}\nsvm_max_passes = {}\nsvm_tol = {}\nwindow_halfwidth = {}\n",
            self.estimator.abs_max,
            self.smoother.bandwidth,
            if self.svm.balanced_weights { "balanced" } else { "uniform" },
            self.csv_fs,
            self.cv_folds,
            self.estimator.edge_trim,
            self.estimator.ridge,
            self.smoother.eval_stride,
            self.group_by_subject,
            kernel,
            self.knot_stride,
            leads,
            self.smoother.poly_order,
            self.positive_label,
            self.seed,
            self.smoother.ridge,
            self.svm.standardize,
            self.svm.c_grid.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(","),
            gamma,
            self.svm.kernel,
            self.svm.max_passes,
            self.svm.tol,
            self.estimator.window_halfwidth,
        )
    }

    /// Resolve from an optional config file plus `--set` overrides.
    pub fn resolve(config_path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let mut kv = match config_path {
            Some(p) => KvConfig::from_file(p)?,
            None => KvConfig::default(),
        };
        kv.apply_overrides(sets)?;
        Self::from_kv(&kv)
    }
}

/// Parse the sectioned synthesis spec. Global keys come before the first
/// `[class NAME]` section; each class defines a coefficient track either as
/// `track = path.csv` (resolved against the spec file's directory) or as
/// linear-ramp endpoints `b0_start`/`b0_end`/`b1_start`/`b1_end`.
pub fn parse_synth_spec(text: &str, base: &Path) -> Result<CorpusSpec> {
    let mut globals: BTreeMap<String, String> = BTreeMap::new();
    let mut sections: Vec<(String, BTreeMap<String, String>)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(inner) = line.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("unclosed section header on line {}", ln + 1))?;
            let name = inner
                .strip_prefix("class ")
                .ok_or_else(|| anyhow!("section '[{inner}]' must be '[class NAME]'"))?
                .trim()
                .to_string();
            if name.is_empty() {
                bail!("empty class name on line {}", ln + 1);
            }
            sections.push((name, BTreeMap::new()));
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("spec line {} is not 'key = value': '{raw}'", ln + 1))?;
        let target = match sections.last_mut() {
            Some((_, map)) => map,
            None => &mut globals,
        };
        target.insert(k.trim().to_string(), v.trim().to_string());
    }
    if sections.is_empty() {
        bail!("synthesis spec declares no [class NAME] sections");
    }

    let g = |key: &str| globals.get(key).map(|s| s.as_str());
    let num = |key: &str, default: f64| -> Result<f64> {
        match g(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| anyhow!("bad number '{v}' for '{key}'")),
        }
    };
    let fs = num("fs", 1000.0)?;
    let duration = match g("duration") {
        Some(v) => v
            .parse()
            .map_err(|_| anyhow!("bad number '{v}' for 'duration'"))?,
        None => bail!("synthesis spec needs 'duration'"),
    };
    let noise_sd = num("noise_sd", 0.0)?;
    let seed: u64 = match g("seed") {
        None => 0,
        Some(v) => v.parse().map_err(|_| anyhow!("bad seed '{v}'"))?,
    };
    let leads: Vec<String> = g("leads")
        .unwrap_or("i,ii")
        .split(',')
        .map(|s| s.trim().to_lowercase())
        .filter(|s| !s.is_empty())
        .collect();
    let gain = num("gain", 2000.0)?;

    let mut classes = Vec::new();
    for (label, map) in &sections {
        let get = |key: &str| map.get(key).map(|s| s.as_str());
        let cnum = |key: &str, default: Option<f64>| -> Result<f64> {
            match get(key) {
                Some(v) => v
                    .parse()
                    .map_err(|_| anyhow!("bad number '{v}' for '{key}' in class {label}")),
                None => default.ok_or_else(|| anyhow!("class {label} needs '{key}'")),
            }
        };
        let count: usize = match get("count") {
            Some(v) => v
                .parse()
                .map_err(|_| anyhow!("bad count '{v}' in class {label}"))?,
            None => bail!("class {label} needs 'count'"),
        };
        let track = match get("track") {
            Some(rel) => {
                let path = base.join(rel);
                let text = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading track {}", path.display()))?;
                CoefficientTrack::from_csv(&text).map_err(|e| anyhow!("{e}"))?
            }
            None => {
                let b0_start = cnum("b0_start", None)?;
                let b0_end = cnum("b0_end", Some(b0_start))?;
                let b1_start = cnum("b1_start", Some(0.0))?;
                let b1_end = cnum("b1_end", Some(b1_start))?;
                CoefficientTrack::ramp(0.0, duration, b0_start, b0_end, b1_start, b1_end)
                    .map_err(|e| anyhow!("{e}"))?
            }
        };
        classes.push(ClassSpec {
            label: label.clone(),
            count,
            track,
            x0: cnum("x0", Some(1.0))?,
            v0: cnum("v0", Some(0.0))?,
        });
    }
    Ok(CorpusSpec {
        fs,
        duration,
        noise_sd,
        seed,
        leads,
        gain,
        classes,
    })
}
