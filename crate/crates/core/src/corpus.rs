//! Synthetic labeled corpora: per-class coefficient tracks drive the ODE
//! solver, records go out in the same WFDB-style format the ingest side
//! reads, so the whole pipeline can be exercised against known ground truth.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::exec;
use crate::ingest::{self, IngestError, LeadSignal, ManifestEntry, SignalRecord};
use crate::ode::{self, CoefficientTrack, OdeError, OdeInitialState};
use crate::seeds;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One class of records: every record solves the same track, distinguished
/// by its noise stream.
#[derive(Debug, Clone)]
pub struct ClassSpec {
    pub label: String,
    pub count: usize,
    pub track: CoefficientTrack,
    pub x0: f64,
    pub v0: f64,
}

#[derive(Debug, Clone)]
pub struct CorpusSpec {
    pub fs: f64,
    pub duration: f64,
    pub noise_sd: f64,
    pub seed: u64,
    pub leads: Vec<String>,
    /// ADU-per-mV gain used when encoding to WFDB.
    pub gain: f64,
    pub classes: Vec<ClassSpec>,
}

impl CorpusSpec {
    fn validate(&self) -> Result<(), CorpusError> {
        if !self.fs.is_finite()
            || self.fs <= 0.0
            || !self.duration.is_finite()
            || self.duration <= 0.0
        {
            return Err(CorpusError::InvalidSpec(
                "fs and duration must be positive".into(),
            ));
        }
        if self.noise_sd < 0.0 {
            return Err(CorpusError::InvalidSpec("noise_sd must be >= 0".into()));
        }
        if self.leads.is_empty() {
            return Err(CorpusError::InvalidSpec(
                "at least one lead required".into(),
            ));
        }
        if !self.gain.is_finite() || self.gain <= 0.0 {
            return Err(CorpusError::InvalidSpec("gain must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(CorpusError::InvalidSpec(
                "at least one class required".into(),
            ));
        }
        if self.classes.iter().any(|c| c.count == 0) {
            return Err(CorpusError::InvalidSpec(
                "every class needs count >= 1".into(),
            ));
        }
        let mut ids: Vec<String> = self.classes.iter().map(|c| sanitize(&c.label)).collect();
        ids.sort();
        let before = ids.len();
        ids.dedup();
        if ids.len() != before {
            return Err(CorpusError::InvalidSpec(
                "class labels collide after sanitizing to record-id prefixes".into(),
            ));
        }
        Ok(())
    }
}

fn sanitize(label: &str) -> String {
    let s: String = label
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    if s.is_empty() {
        "class".to_string()
    } else {
        s
    }
}

/// Record id of class `ci`, index `i` within the class.
pub fn record_id(spec: &CorpusSpec, ci: usize, i: usize) -> String {
    format!("{}_{:03}", sanitize(&spec.classes[ci].label), i)
}

/// Generate all records in memory. Deterministic: each record's noise comes
/// from a stream derived from (seed, class index, record index).
pub fn generate(spec: &CorpusSpec) -> Result<Vec<SignalRecord>, CorpusError> {
    spec.validate()?;
    let flat: Vec<(usize, usize)> = spec
        .classes
        .iter()
        .enumerate()
        .flat_map(|(ci, c)| (0..c.count).map(move |i| (ci, i)))
        .collect();
    let records = exec::try_map_indexed(flat.len(), |fi| {
        let (ci, i) = flat[fi];
        let class = &spec.classes[ci];
        let tracks: Vec<CoefficientTrack> = vec![class.track.clone(); spec.leads.len()];
        let init = OdeInitialState::new(class.track.start(), class.x0, class.v0)?;
        let inits = vec![init; spec.leads.len()];
        let rec = ode::synth_record(
            &record_id(spec, ci, i),
            &class.label,
            &spec.leads,
            &tracks,
            &inits,
            spec.fs,
            spec.duration,
            spec.noise_sd,
            seeds::derive2(spec.seed, ci as u64, i as u64),
        )?;
        // Re-tag leads with the encode gain so WFDB emission quantizes at
        // the configured resolution.
        let leads = rec
            .leads()
            .iter()
            .map(|l| LeadSignal::new(l.name().to_string(), l.samples().to_vec(), spec.gain, 0))
            .collect::<Result<Vec<_>, _>>()?;
        Ok::<SignalRecord, CorpusError>(SignalRecord::new(
            rec.record_id().to_string(),
            rec.label().to_string(),
            spec.fs,
            leads,
        )?)
    })?;
    Ok(records)
}

/// Serialize a manifest (header `record_id,label`).
pub fn manifest_to_csv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("record_id,label\n");
    for e in entries {
        out.push_str(&format!("{},{}\n", e.record_id, e.label));
    }
    out
}

/// Generate and write the corpus as `<id>.hea` / `<id>.dat` pairs plus
/// `manifest.csv` under `out_dir`. Returns the manifest entries.
pub fn write_wfdb_corpus(
    spec: &CorpusSpec,
    out_dir: &Path,
) -> Result<Vec<ManifestEntry>, CorpusError> {
    let records = generate(spec)?;
    fs::create_dir_all(out_dir)?;
    let mut entries = Vec::with_capacity(records.len());
    for rec in &records {
        let dat_name = format!("{}.dat", rec.record_id());
        let header = ingest::encode_header(rec, &dat_name);
        let dat = ingest::encode_dat(rec)?;
        fs::write(out_dir.join(format!("{}.hea", rec.record_id())), header)?;
        fs::write(out_dir.join(&dat_name), dat)?;
        entries.push(ManifestEntry {
            record_id: rec.record_id().to_string(),
            label: rec.label().to_string(),
            subject: None,
        });
    }
    fs::write(out_dir.join("manifest.csv"), manifest_to_csv(&entries))?;
    Ok(entries)
}
