//! Waveform ingestion: WFDB-style header/signal parsing (format 16 only),
//! CSV waveforms, sidecar label manifests, and single-file HTTP fetch.
//!
//! Amplitudes are converted to millivolts at parse time via
//! `(raw - baseline) / gain`, so everything downstream works in physical
//! units and is independent of the recording gain.
//!
//! On-disk formats:
//!
//! * Header (`.hea`): line 1 `RECORD NSIG FS NSAMP`; then one line per
//!   signal, `FILE FORMAT GAIN(BASELINE)/UNITS ... NAME` — the name is the
//!   last whitespace-separated token and fields in between are ignored.
//! * Signals (`.dat`): little-endian signed 16-bit, sample-interleaved
//!   across signals.
//! * Waveform CSV: header row of lead names, one sample per row.
//! * Manifest CSV: `record_id,label` with an optional third `subject` column.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported signal format {0} (only format 16 is supported)")]
    UnsupportedFormat(u32),
    #[error("truncated signal data: expected {expected} bytes, got {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("ragged CSV row {row}: expected {expected} fields, got {actual}")]
    RaggedRows {
        row: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-numeric CSV cell at row {row}, column {col}: '{text}'")]
    NonNumericCell {
        row: usize,
        col: usize,
        text: String,
    },
    #[error("non-finite sample in lead '{lead}' at index {index}")]
    NonFiniteSample { lead: String, index: usize },
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("sample out of encodable range in lead '{lead}': {value} mV at gain {gain}")]
    AmplitudeOutOfRange { lead: String, value: f64, gain: f64 },
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("network error: {0}")]
    NetworkError(String),
    #[error("checksum mismatch: expected {expected}, got {actual}")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One decoded lead: samples in millivolts plus the decode-time gain and
/// baseline (kept so records can be re-encoded bit-exactly).
#[derive(Debug, Clone, PartialEq)]
pub struct LeadSignal {
    name: String,
    samples: Vec<f64>,
    gain: f64,
    baseline: i32,
}

impl LeadSignal {
    pub fn new(
        name: String,
        samples: Vec<f64>,
        gain: f64,
        baseline: i32,
    ) -> Result<Self, IngestError> {
        if !gain.is_finite() || gain <= 0.0 {
            return Err(IngestError::InvalidRecord(format!(
                "lead '{name}' has non-positive gain {gain}"
            )));
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(IngestError::NonFiniteSample { lead: name, index });
        }
        Ok(LeadSignal {
            name,
            samples,
            gain,
            baseline,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn baseline(&self) -> i32 {
        self.baseline
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A validated multi-lead record.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalRecord {
    record_id: String,
    label: String,
    fs: f64,
    leads: Vec<LeadSignal>,
    duration_samples: usize,
}

impl SignalRecord {
    pub fn new(
        record_id: String,
        label: String,
        fs: f64,
        leads: Vec<LeadSignal>,
    ) -> Result<Self, IngestError> {
        if !fs.is_finite() || fs <= 0.0 {
            return Err(IngestError::InvalidRecord(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if leads.is_empty() {
            return Err(IngestError::InvalidRecord("record has no leads".into()));
        }
        let duration_samples = leads[0].len();
        if duration_samples < 2 {
            return Err(IngestError::InvalidRecord(format!(
                "record must have at least 2 samples, got {duration_samples}"
            )));
        }
        if let Some(bad) = leads.iter().find(|l| l.len() != duration_samples) {
            return Err(IngestError::InvalidRecord(format!(
                "lead '{}' has {} samples, expected {}",
                bad.name(),
                bad.len(),
                duration_samples
            )));
        }
        for i in 0..leads.len() {
            for j in (i + 1)..leads.len() {
                if leads[i].name() == leads[j].name() {
                    return Err(IngestError::InvalidRecord(format!(
                        "duplicate lead name '{}'",
                        leads[i].name()
                    )));
                }
            }
        }
        Ok(SignalRecord {
            record_id,
            label,
            fs,
            leads,
            duration_samples,
        })
    }

    pub fn record_id(&self) -> &str {
        &self.record_id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn set_label(&mut self, label: String) {
        self.label = label;
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn leads(&self) -> &[LeadSignal] {
        &self.leads
    }

    pub fn lead(&self, name: &str) -> Option<&LeadSignal> {
        self.leads.iter().find(|l| l.name() == name)
    }

    pub fn duration_samples(&self) -> usize {
        self.duration_samples
    }
}

/// Per-signal entry of a parsed header.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file: String,
    pub format_code: u32,
    pub gain: f64,
    pub baseline: i32,
    pub units: String,
    pub name: String,
}

/// Parsed `.hea` content.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_id: String,
    pub n_signals: usize,
    pub fs: f64,
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

/// Parse a header file. Every signal must declare format 16.
pub fn parse_header(text: &str) -> Result<RecordHeader, IngestError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let first = lines
        .next()
        .ok_or_else(|| IngestError::MalformedHeader("empty header".into()))?;
    let toks: Vec<&str> = first.split_whitespace().collect();
    if toks.len() < 4 {
        return Err(IngestError::MalformedHeader(format!(
            "record line needs 'RECORD NSIG FS NSAMP', got '{first}'"
        )));
    }
    let record_id = toks[0].to_string();
    let n_signals: usize = toks[1]
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("bad signal count '{}'", toks[1])))?;
    if n_signals == 0 {
        return Err(IngestError::MalformedHeader(
            "record declares 0 signals".into(),
        ));
    }
    let fs: f64 = toks[2]
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("bad sampling rate '{}'", toks[2])))?;
    if !fs.is_finite() || fs <= 0.0 {
        return Err(IngestError::MalformedHeader(format!(
            "sampling rate must be positive, got {fs}"
        )));
    }
    let n_samples: usize = toks[3]
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("bad sample count '{}'", toks[3])))?;

    let mut signals = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let line = lines.next().ok_or_else(|| {
            IngestError::MalformedHeader(format!(
                "expected {n_signals} signal lines, found {}",
                signals.len()
            ))
        })?;
        signals.push(parse_signal_line(line)?);
    }
    Ok(RecordHeader {
        record_id,
        n_signals,
        fs,
        n_samples,
        signals,
    })
}

fn parse_signal_line(line: &str) -> Result<SignalSpec, IngestError> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() < 4 {
        return Err(IngestError::MalformedHeader(format!(
            "signal line needs 'FILE FORMAT GAIN ... NAME', got '{line}'"
        )));
    }
    let format_code: u32 = toks[1]
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("bad format code '{}'", toks[1])))?;
    if format_code != 16 {
        return Err(IngestError::UnsupportedFormat(format_code));
    }
    let (gain, baseline, units) = parse_gain_token(toks[2])?;
    Ok(SignalSpec {
        file: toks[0].to_string(),
        format_code,
        gain,
        baseline,
        units,
        name: toks[toks.len() - 1].to_string(),
    })
}

/// Gain token grammar: `GAIN`, `GAIN(BASELINE)`, `GAIN/UNITS`, or
/// `GAIN(BASELINE)/UNITS`. Baseline defaults to 0 and units to mV.
fn parse_gain_token(tok: &str) -> Result<(f64, i32, String), IngestError> {
    let (head, units) = match tok.split_once('/') {
        Some((h, u)) => (h, u.to_string()),
        None => (tok, "mV".to_string()),
    };
    let (gain_str, baseline) = match head.split_once('(') {
        Some((g, rest)) => {
            let inner = rest.strip_suffix(')').ok_or_else(|| {
                IngestError::MalformedHeader(format!("unclosed baseline in gain token '{tok}'"))
            })?;
            let b: i32 = inner.parse().map_err(|_| {
                IngestError::MalformedHeader(format!("bad baseline '{inner}' in '{tok}'"))
            })?;
            (g, b)
        }
        None => (head, 0),
    };
    let gain: f64 = gain_str
        .parse()
        .map_err(|_| IngestError::MalformedHeader(format!("bad gain '{gain_str}' in '{tok}'")))?;
    if !gain.is_finite() || gain <= 0.0 {
        return Err(IngestError::MalformedHeader(format!(
            "gain must be positive, got {gain}"
        )));
    }
    Ok((gain, baseline, units))
}

/// Decode a format-16 `.dat` body against its header. The label is left
/// empty; callers attach it from the manifest.
pub fn parse_signals(bytes: &[u8], header: &RecordHeader) -> Result<SignalRecord, IngestError> {
    let expected = 2 * header.n_signals * header.n_samples;
    if bytes.len() != expected {
        return Err(IngestError::TruncatedData {
            expected,
            actual: bytes.len(),
        });
    }
    let mut leads: Vec<(String, Vec<f64>, f64, i32)> = header
        .signals
        .iter()
        .map(|s| {
            (
                s.name.clone(),
                Vec::with_capacity(header.n_samples),
                s.gain,
                s.baseline,
            )
        })
        .collect();
    for sample in 0..header.n_samples {
        for (sig, lead) in leads.iter_mut().enumerate() {
            let off = 2 * (sample * header.n_signals + sig);
            let raw = i16::from_le_bytes([bytes[off], bytes[off + 1]]);
            lead.1.push((raw as f64 - lead.3 as f64) / lead.2);
        }
    }
    let leads = leads
        .into_iter()
        .map(|(name, samples, gain, baseline)| LeadSignal::new(name, samples, gain, baseline))
        .collect::<Result<Vec<_>, _>>()?;
    SignalRecord::new(header.record_id.clone(), String::new(), header.fs, leads)
}

/// Parse a waveform CSV: header row of lead names, one sample per row.
/// Decoded leads get gain 1 and baseline 0.
pub fn parse_csv(text: &str, fs: f64, label: &str) -> Result<SignalRecord, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::InvalidRecord(format!("bad CSV header: {e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(IngestError::InvalidRecord("CSV has no lead names".into()));
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (ri, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::InvalidRecord(format!("CSV read error: {e}")))?;
        if rec.len() != names.len() {
            return Err(IngestError::RaggedRows {
                row: ri + 2,
                expected: names.len(),
                actual: rec.len(),
            });
        }
        for (ci, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| IngestError::NonNumericCell {
                    row: ri + 2,
                    col: ci + 1,
                    text: field.to_string(),
                })?;
            columns[ci].push(v);
        }
    }
    let leads = names
        .into_iter()
        .zip(columns)
        .map(|(name, samples)| LeadSignal::new(name, samples, 1.0, 0))
        .collect::<Result<Vec<_>, _>>()?;
    SignalRecord::new(String::new(), label.to_string(), fs, leads)
}

/// Emit a record as a waveform CSV (full precision, round-trips through
/// [`parse_csv`] exactly).
pub fn emit_csv(record: &SignalRecord) -> String {
    let mut out = String::new();
    let names: Vec<&str> = record.leads().iter().map(|l| l.name()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for i in 0..record.duration_samples() {
        let row: Vec<String> = record
            .leads()
            .iter()
            .map(|l| format!("{}", l.samples()[i]))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

/// Encode a record back to header text. `dat_file` is the signal file name
/// written into every signal line.
pub fn encode_header(record: &SignalRecord, dat_file: &str) -> String {
    let mut out = format!(
        "{} {} {} {}\n",
        record.record_id(),
        record.leads().len(),
        fmt_num(record.fs()),
        record.duration_samples()
    );
    for lead in record.leads() {
        out.push_str(&format!(
            "{} 16 {}({})/mV {}\n",
            dat_file,
            fmt_num(lead.gain()),
            lead.baseline(),
            lead.name()
        ));
    }
    out
}

fn fmt_num(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

/// Encode a record's samples as format-16 bytes, quantizing each sample to
/// `round(mV * gain + baseline)`. Values outside the signed 16-bit range
/// are an error rather than being clamped.
pub fn encode_dat(record: &SignalRecord) -> Result<Vec<u8>, IngestError> {
    let n = record.duration_samples();
    let mut out = Vec::with_capacity(2 * n * record.leads().len());
    for i in 0..n {
        for lead in record.leads() {
            let raw = (lead.samples()[i] * lead.gain() + lead.baseline() as f64).round();
            if !raw.is_finite() || raw < i16::MIN as f64 || raw > i16::MAX as f64 {
                return Err(IngestError::AmplitudeOutOfRange {
                    lead: lead.name().to_string(),
                    value: lead.samples()[i],
                    gain: lead.gain(),
                });
            }
            out.extend_from_slice(&(raw as i16).to_le_bytes());
        }
    }
    Ok(out)
}

/// One row of the label manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub record_id: String,
    pub label: String,
    pub subject: Option<String>,
}

/// Parse a manifest CSV: `record_id,label` with an optional `subject` column.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| IngestError::MalformedManifest(format!("{e}")))?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();
    let with_subject = match headers.as_slice() {
        [a, b] if a == "record_id" && b == "label" => false,
        [a, b, c] if a == "record_id" && b == "label" && c == "subject" => true,
        _ => {
            return Err(IngestError::MalformedManifest(format!(
                "manifest header must be 'record_id,label[,subject]', got '{}'",
                headers.join(",")
            )))
        }
    };
    let mut entries = Vec::new();
    for (ri, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| IngestError::MalformedManifest(format!("{e}")))?;
        let want = if with_subject { 3 } else { 2 };
        if rec.len() != want {
            return Err(IngestError::MalformedManifest(format!(
                "manifest row {} has {} fields, expected {want}",
                ri + 2,
                rec.len()
            )));
        }
        let record_id = rec[0].trim().to_string();
        let label = rec[1].trim().to_string();
        if record_id.is_empty() || label.is_empty() {
            return Err(IngestError::MalformedManifest(format!(
                "manifest row {} has an empty record_id or label",
                ri + 2
            )));
        }
        entries.push(ManifestEntry {
            record_id,
            label,
            subject: if with_subject {
                Some(rec[2].trim().to_string())
            } else {
                None
            },
        });
    }
    Ok(entries)
}

/// Load `<base>/<record_id>.hea` + its `.dat` and attach `label`. The data
/// file named in the header resolves relative to the header's directory,
/// and all signals must live in one file.
pub fn load_wfdb(base: &Path, record_id: &str, label: &str) -> Result<SignalRecord, IngestError> {
    let hea_path = base.join(format!("{record_id}.hea"));
    let header = parse_header(&fs::read_to_string(&hea_path)?)?;
    let dat_name = &header.signals[0].file;
    if header.signals.iter().any(|s| &s.file != dat_name) {
        return Err(IngestError::MalformedHeader(
            "signals split across multiple data files are not supported".into(),
        ));
    }
    let dat_path = hea_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(dat_name);
    let bytes = fs::read(&dat_path)?;
    let mut record = parse_signals(&bytes, &header)?;
    record.set_label(label.to_string());
    Ok(record)
}

/// Load `<base>/<record_id>.csv` at sampling rate `fs` and attach `label`.
pub fn load_csv_record(
    base: &Path,
    record_id: &str,
    fs: f64,
    label: &str,
) -> Result<SignalRecord, IngestError> {
    let path = base.join(format!("{record_id}.csv"));
    let mut record = parse_csv(&fs::read_to_string(&path)?, fs, label)?;
    record.set_label(label.to_string());
    record.record_id = record_id.to_string();
    Ok(record)
}

/// Download `url` to `dest`, verifying a hex SHA-256 checksum when given.
/// On checksum mismatch the destination file is removed.
pub fn fetch_file(
    url: &str,
    dest: &Path,
    expected_sha256: Option<&str>,
) -> Result<PathBuf, IngestError> {
    if !(url.starts_with("http://") || url.starts_with("https://")) {
        return Err(IngestError::NetworkError(format!(
            "unsupported URL scheme in '{url}'"
        )));
    }
    let mut response = match ureq::get(url).call() {
        Ok(r) => r,
        Err(ureq::Error::StatusCode(code)) => {
            return Err(IngestError::NetworkError(format!(
                "HTTP status {code} for {url}"
            )))
        }
        Err(e) => return Err(IngestError::NetworkError(format!("{e}"))),
    };
    let mut bytes = Vec::new();
    response
        .body_mut()
        .as_reader()
        .read_to_end(&mut bytes)
        .map_err(|e| IngestError::NetworkError(format!("body read failed: {e}")))?;
    if let Some(parent) = dest.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(dest, &bytes)?;
    if let Some(expected) = expected_sha256 {
        let actual = hex(&Sha256::digest(&bytes));
        if !actual.eq_ignore_ascii_case(expected.trim()) {
            let _ = fs::remove_file(dest);
            return Err(IngestError::ChecksumMismatch {
                expected: expected.trim().to_lowercase(),
                actual,
            });
        }
    }
    Ok(dest.to_path_buf())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "r001 2 1000 5000\n\
        r001.dat 16 2000(0)/mV 16 0 0 0 0 i\n\
        r001.dat 16 2000(0)/mV 16 0 0 0 0 ii\n";

    #[test]
    fn parses_basic_header() {
        let h = parse_header(HEADER).unwrap();
        assert_eq!(h.record_id, "r001");
        assert_eq!(h.n_signals, 2);
        assert_eq!(h.fs, 1000.0);
        assert_eq!(h.n_samples, 5000);
        assert_eq!(h.signals[0].gain, 2000.0);
        assert_eq!(h.signals[0].baseline, 0);
        assert_eq!(h.signals[0].units, "mV");
        assert_eq!(h.signals[0].name, "i");
        assert_eq!(h.signals[1].name, "ii");
    }

    #[test]
    fn rejects_non_format_16() {
        let text = "r001 1 1000 10\nr001.dat 212 200 MLII\n";
        match parse_header(text).unwrap_err() {
            IngestError::UnsupportedFormat(code) => assert_eq!(code, 212),
            other => panic!("expected UnsupportedFormat, got {other:?}"),
        }
    }

    #[test]
    fn gain_token_variants() {
        assert_eq!(
            parse_gain_token("2000(0)/mV").unwrap(),
            (2000.0, 0, "mV".into())
        );
        assert_eq!(parse_gain_token("2000").unwrap(), (2000.0, 0, "mV".into()));
        assert_eq!(
            parse_gain_token("1000(12)").unwrap(),
            (1000.0, 12, "mV".into())
        );
        assert_eq!(parse_gain_token("500/uV").unwrap(), (500.0, 0, "uV".into()));
        assert!(parse_gain_token("0").is_err());
        assert!(parse_gain_token("2000(1/mV").is_err());
    }

    #[test]
    fn rejects_malformed_headers() {
        assert!(matches!(
            parse_header(""),
            Err(IngestError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_header("r001 2 1000"),
            Err(IngestError::MalformedHeader(_))
        ));
        // Declares 2 signals but provides 1 line.
        let text = "r001 2 1000 10\nr001.dat 16 2000 i\n";
        assert!(matches!(
            parse_header(text),
            Err(IngestError::MalformedHeader(_))
        ));
    }

    fn two_sig_header(n_samples: usize) -> RecordHeader {
        parse_header(&format!(
            "r001 2 1000 {n_samples}\nr001.dat 16 2000(0)/mV i\nr001.dat 16 2000(0)/mV ii\n"
        ))
        .unwrap()
    }

    #[test]
    fn decodes_unit_values() {
        // Samples interleaved: (sig0, sig1) per time step.
        let header = two_sig_header(2);
        let bytes: Vec<u8> = vec![
            0x00, 0x00, // t0 sig0: raw 0
            0x01, 0x00, // t0 sig1: raw 1
            0xff, 0x7f, // t1 sig0: raw 32767
            0x00, 0x80, // t1 sig1: raw -32768
        ];
        let rec = parse_signals(&bytes, &header).unwrap();
        assert_eq!(rec.leads()[0].samples()[0], 0.0);
        assert_eq!(rec.leads()[1].samples()[0], 0.0005);
        // Full scale at gain 2000 matches a +/-16.384 mV range.
        assert_eq!(rec.leads()[0].samples()[1], 16.3835);
        assert_eq!(rec.leads()[1].samples()[1], -16.384);
    }

    #[test]
    fn rejects_truncated_data() {
        let header = two_sig_header(5000);
        let err = parse_signals(&[0u8; 10], &header).unwrap_err();
        assert!(matches!(
            err,
            IngestError::TruncatedData {
                expected: 20000,
                actual: 10
            }
        ));
    }

    #[test]
    fn wfdb_roundtrip_is_bit_exact() {
        let raws: Vec<i16> = vec![0, 1, -1, 32767, -32768, 1234, -4321, 77, -9999, 500];
        let header = two_sig_header(raws.len() / 2);
        let mut bytes = Vec::new();
        for r in &raws {
            bytes.extend_from_slice(&r.to_le_bytes());
        }
        let rec = parse_signals(&bytes, &header).unwrap();
        let re_encoded = encode_dat(&rec).unwrap();
        assert_eq!(re_encoded, bytes);
        let hea = encode_header(&rec, "r001.dat");
        let re_header = parse_header(&hea).unwrap();
        let rec2 = parse_signals(&re_encoded, &re_header).unwrap();
        for (a, b) in rec.leads().iter().zip(rec2.leads()) {
            assert_eq!(a.samples(), b.samples());
        }
    }

    #[test]
    fn csv_roundtrip_and_errors() {
        let rec = parse_csv("i,ii\n0.1,0.2\n0.3,0.4\n", 500.0, "HC").unwrap();
        assert_eq!(rec.leads().len(), 2);
        assert_eq!(rec.duration_samples(), 2);
        assert_eq!(rec.label(), "HC");
        assert_eq!(rec.leads()[0].samples(), &[0.1, 0.3]);
        let back = parse_csv(&emit_csv(&rec), 500.0, "HC").unwrap();
        assert_eq!(back.leads()[0].samples(), rec.leads()[0].samples());
        assert_eq!(back.leads()[1].samples(), rec.leads()[1].samples());

        assert!(matches!(
            parse_csv("i,ii\n0.1\n", 500.0, "HC"),
            Err(IngestError::RaggedRows { row: 2, .. })
        ));
        assert!(matches!(
            parse_csv("i,ii\n0.1,abc\n", 500.0, "HC"),
            Err(IngestError::NonNumericCell { row: 2, col: 2, .. })
        ));
        // Empty body -> fewer than 2 samples -> rejected by the record invariant.
        assert!(matches!(
            parse_csv("i,ii\n", 500.0, "HC"),
            Err(IngestError::InvalidRecord(_))
        ));
        // NaN cells parse as f64 NaN and are a hard error, never imputed.
        assert!(matches!(
            parse_csv("i,ii\n0.1,NaN\n0.2,0.3\n", 500.0, "HC"),
            Err(IngestError::NonFiniteSample { .. })
        ));
    }

    #[test]
    fn record_invariants_enforced() {
        let l1 = LeadSignal::new("i".into(), vec![0.0, 1.0], 1.0, 0).unwrap();
        let l2 = LeadSignal::new("i".into(), vec![0.0, 1.0], 1.0, 0).unwrap();
        assert!(matches!(
            SignalRecord::new("r".into(), "HC".into(), 100.0, vec![l1.clone(), l2]),
            Err(IngestError::InvalidRecord(_))
        ));
        assert!(matches!(
            SignalRecord::new("r".into(), "HC".into(), 0.0, vec![l1]),
            Err(IngestError::InvalidRecord(_))
        ));
        assert!(matches!(
            LeadSignal::new("i".into(), vec![0.0, f64::NAN], 1.0, 0),
            Err(IngestError::NonFiniteSample { .. })
        ));
        assert!(LeadSignal::new("i".into(), vec![0.0], 0.0, 0).is_err());
    }

    #[test]
    fn manifest_parsing() {
        let m = parse_manifest("record_id,label\nr001,MI\nr002,HC\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].record_id, "r001");
        assert_eq!(m[0].label, "MI");
        assert_eq!(m[0].subject, None);

        let m = parse_manifest("record_id,label,subject\nr001,MI,s1\n").unwrap();
        assert_eq!(m[0].subject.as_deref(), Some("s1"));

        assert!(parse_manifest("id,label\nr001,MI\n").is_err());
        assert!(parse_manifest("record_id,label\nr001\n").is_err());
    }

    #[test]
    fn decode_is_order_independent_across_leads() {
        // Lead k's samples depend only on its own interleave slots.
        let header = two_sig_header(3);
        let mut bytes = Vec::new();
        for v in [5i16, 100, 6, 200, 7, 300] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let rec = parse_signals(&bytes, &header).unwrap();
        // Change only lead ii's slots; lead i must decode identically.
        let mut bytes2 = bytes.clone();
        for (i, v) in [(2usize, 999i16), (6, 888), (10, 777)] {
            bytes2[i..i + 2].copy_from_slice(&v.to_le_bytes());
        }
        let rec2 = parse_signals(&bytes2, &header).unwrap();
        assert_eq!(rec.leads()[0].samples(), rec2.leads()[0].samples());
        assert_ne!(rec.leads()[1].samples(), rec2.leads()[1].samples());
    }
}
