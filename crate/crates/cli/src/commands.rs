//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use odecg_core::corpus;
use odecg_core::estimator::{self, FeatureRow};
use odecg_core::eval::{self, CvOptions, Dataset, ReportRow};
use odecg_core::exec;
use odecg_core::fmt::format_sig;
use odecg_core::ingest::{self, ManifestEntry, SignalRecord};
use odecg_core::ode::{solve_ode, OdeInitialState};
use odecg_core::smoother;

use crate::config::{parse_synth_spec, LeadSelection, PipelineConfig, STANDARD_12};

fn write_config_echo(cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    fs::write(out_dir.join("config_used.txt"), cfg.echo())
        .with_context(|| format!("writing config echo into {}", out_dir.display()))
}

fn load_record(base: &Path, entry: &ManifestEntry, csv_fs: f64) -> Result<SignalRecord> {
    let hea = base.join(format!("{}.hea", entry.record_id));
    if hea.exists() {
        return Ok(ingest::load_wfdb(base, &entry.record_id, &entry.label)?);
    }
    let csv = base.join(format!("{}.csv", entry.record_id));
    if csv.exists() {
        return Ok(ingest::load_csv_record(
            base,
            &entry.record_id,
            csv_fs,
            &entry.label,
        )?);
    }
    bail!(
        "record '{}': neither {} nor {} exists",
        entry.record_id,
        hea.display(),
        csv.display()
    )
}

/// `featurize`: manifest in, features CSV out. Per-record failures go to a
/// rejects file and never abort the batch.
pub fn cmd_featurize(manifest_path: &Path, cfg: &PipelineConfig, out_dir: &Path) -> Result<()> {
    let manifest_text = fs::read_to_string(manifest_path)
        .with_context(|| format!("reading manifest {}", manifest_path.display()))?;
    let entries = ingest::parse_manifest(&manifest_text)?;
    if entries.is_empty() {
        bail!("manifest {} has no rows", manifest_path.display());
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let lead_names = cfg.leads.names();

    fs::create_dir_all(out_dir)?;
    let results = exec::map_indexed(entries.len(), |i| {
        let entry = &entries[i];
        load_record(base, entry, cfg.csv_fs)
            .and_then(|record| {
                estimator::featurize_record(&record, &lead_names, &cfg.smoother, &cfg.estimator)
                    .map_err(|e| anyhow!("{e}"))
            })
            .map_err(|e| format!("{e:#}").replace('\n', " "))
    });

    let mut rows: Vec<FeatureRow> = Vec::new();
    let mut rejects: Vec<(String, String)> = Vec::new();
    for (entry, result) in entries.iter().zip(results) {
        match result {
            Ok(fv) => rows.extend(fv.rows()),
            Err(reason) => rejects.push((entry.record_id.clone(), reason)),
        }
    }

    let mut rejects_csv = String::from("record_id,reason\n");
    for (id, reason) in &rejects {
        rejects_csv.push_str(&format!("{},{}\n", id, reason.replace(',', ";")));
    }
    fs::write(out_dir.join("rejects.csv"), rejects_csv)?;
    fs::write(
        out_dir.join("features.csv"),
        estimator::features_to_csv(&rows),
    )?;
    write_config_echo(cfg, out_dir)?;

    eprintln!(
        "featurize: {} records in, {} feature rows out, {} rejected",
        entries.len(),
        rows.len(),
        rejects.len()
    );
    if rows.is_empty() {
        bail!(
            "no feature rows produced ({} records all rejected)",
            rejects.len()
        );
    }
    Ok(())
}

/// Lead sets to evaluate, resolved from the `--leads` argument.
fn resolve_lead_sets(arg: &str, available: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    let canon_order = |names: &mut Vec<String>| {
        names.sort_by_key(|n| {
            STANDARD_12
                .iter()
                .position(|s| s == n)
                .map(|p| (0, p, String::new()))
                .unwrap_or((1, 0, n.clone()))
        });
    };
    let arg = arg.trim();
    if arg.eq_ignore_ascii_case("all12") {
        // Table-1 layout: each standard lead, the limb-lead trio, all 12.
        let mut sets: Vec<(String, Vec<String>)> = STANDARD_12
            .iter()
            .map(|l| (l.to_string(), vec![l.to_string()]))
            .collect();
        sets.push((
            "i,ii,iii combined".to_string(),
            vec!["i".into(), "ii".into(), "iii".into()],
        ));
        sets.push((
            "12 leads combined".to_string(),
            STANDARD_12.iter().map(|s| s.to_string()).collect(),
        ));
        return Ok(sets);
    }
    if arg.eq_ignore_ascii_case("each") {
        let mut names = available.to_vec();
        canon_order(&mut names);
        return Ok(names.into_iter().map(|l| (l.clone(), vec![l])).collect());
    }
    let sel = LeadSelection::parse(arg)?;
    let names = sel.names();
    let display = names.join(",");
    if names.len() == 1 {
        Ok(vec![(display, names)])
    } else {
        Ok(vec![(format!("{display} combined"), names)])
    }
}

/// Per-record feature lookup: record -> (label, lead -> (max_b0, max_b1)),
/// in first-appearance order.
struct FeatureTable {
    order: Vec<String>,
    labels: BTreeMap<String, String>,
    by_record: BTreeMap<String, BTreeMap<String, (f64, f64)>>,
    leads_present: Vec<String>,
}

fn index_features(rows: &[FeatureRow]) -> FeatureTable {
    let mut order = Vec::new();
    let mut labels = BTreeMap::new();
    let mut by_record: BTreeMap<String, BTreeMap<String, (f64, f64)>> = BTreeMap::new();
    let mut leads_present = Vec::new();
    for r in rows {
        if !labels.contains_key(&r.record_id) {
            order.push(r.record_id.clone());
            labels.insert(r.record_id.clone(), r.label.clone());
        }
        by_record
            .entry(r.record_id.clone())
            .or_default()
            .insert(r.lead.clone(), (r.max_b0, r.max_b1));
        if !leads_present.contains(&r.lead) {
            leads_present.push(r.lead.clone());
        }
    }
    FeatureTable {
        order,
        labels,
        by_record,
        leads_present,
    }
}

/// Assemble the per-lead-set dataset: features concatenated across the
/// set's leads in order; records missing any lead of the set are skipped.
fn dataset_for(table: &FeatureTable, leads: &[String]) -> Dataset {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    for id in &table.order {
        let per_lead = &table.by_record[id];
        if let Some(feat) = leads
            .iter()
            .map(|l| per_lead.get(l).map(|&(b0, b1)| [b0, b1]))
            .collect::<Option<Vec<[f64; 2]>>>()
        {
            rows.push(feat.into_iter().flatten().collect());
            labels.push(table.labels[id].clone());
            ids.push(id.clone());
        }
    }
    Dataset { rows, labels, ids }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_evaluate(
    features_path: &Path,
    task: &str,
    leads_arg: &str,
    cfg: &PipelineConfig,
    subjects_path: Option<&Path>,
    out_dir: &Path,
) -> Result<()> {
    let text = fs::read_to_string(features_path)
        .with_context(|| format!("reading features {}", features_path.display()))?;
    let rows = estimator::features_from_csv(&text)?;
    if rows.is_empty() {
        bail!("features file {} has no rows", features_path.display());
    }
    let table = index_features(&rows);

    let mut classes: Vec<String> = table.labels.values().cloned().collect();
    classes.sort();
    classes.dedup();
    let binary = match task {
        "binary" => {
            if classes.len() != 2 {
                bail!(
                    "task 'binary' needs exactly 2 classes, found {}: {}",
                    classes.len(),
                    classes.join(",")
                );
            }
            true
        }
        "multiclass" => {
            if classes.len() < 3 {
                bail!(
                    "task 'multiclass' needs at least 3 classes, found {}",
                    classes.len()
                );
            }
            false
        }
        "auto" => {
            if classes.len() < 2 {
                bail!(
                    "features contain a single class '{}'",
                    classes.first().cloned().unwrap_or_default()
                );
            }
            classes.len() == 2
        }
        other => bail!("task must be binary, multiclass or auto, got '{other}'"),
    };

    let subjects: Option<BTreeMap<String, String>> = match subjects_path {
        Some(p) => {
            let stext = fs::read_to_string(p)
                .with_context(|| format!("reading subjects {}", p.display()))?;
            let entries = ingest::parse_manifest(&stext)?;
            // Reuse the manifest shape: record_id,label holds record_id,subject.
            Some(
                entries
                    .into_iter()
                    .map(|e| (e.record_id, e.label))
                    .collect(),
            )
        }
        None => None,
    };
    if cfg.group_by_subject && subjects.is_none() {
        bail!("group_by_subject = true needs --subjects FILE (CSV record_id,label-as-subject)");
    }

    let grid = cfg.svm.configs()?;
    let sets = resolve_lead_sets(leads_arg, &table.leads_present)?;
    fs::create_dir_all(out_dir)?;

    let mut report_rows = Vec::new();
    for (name, leads) in &sets {
        let data = dataset_for(&table, leads);
        if data.is_empty() {
            bail!(
                "lead set '{name}': no record has all of [{}]",
                leads.join(",")
            );
        }
        let groups = match (&subjects, cfg.group_by_subject) {
            (Some(map), true) => {
                let g: Result<Vec<String>> = data
                    .ids
                    .iter()
                    .map(|id| {
                        map.get(id)
                            .cloned()
                            .ok_or_else(|| anyhow!("record '{id}' missing from subjects file"))
                    })
                    .collect();
                Some(g?)
            }
            _ => None,
        };
        let opts = CvOptions {
            k: cfg.cv_folds,
            seed: cfg.seed,
            positive: data
                .labels
                .contains(&cfg.positive_label)
                .then(|| cfg.positive_label.clone()),
            groups,
            inner_folds: 3,
        };
        let report = eval::run_cv(&data, &grid, &opts)
            .with_context(|| format!("cross-validation for lead set '{name}'"))?;
        eprintln!(
            "evaluate: lead set '{name}' done ({} rows, {} features)",
            data.len(),
            data.rows[0].len()
        );
        report_rows.push(ReportRow {
            lead_set: name.clone(),
            report,
        });
    }

    if binary {
        fs::write(
            out_dir.join("report_binary.csv"),
            eval::render_binary_csv(&report_rows),
        )?;
        fs::write(
            out_dir.join("report_binary.txt"),
            eval::render_binary_text(&report_rows),
        )?;
    } else {
        fs::write(
            out_dir.join("report_multiclass_train.csv"),
            eval::render_multiclass_csv(&report_rows, false),
        )?;
        fs::write(
            out_dir.join("report_multiclass_test.csv"),
            eval::render_multiclass_csv(&report_rows, true),
        )?;
        let txt = format!(
            "Training dataset\n{}\nTest dataset\n{}",
            eval::render_multiclass_text(&report_rows, false),
            eval::render_multiclass_text(&report_rows, true)
        );
        fs::write(out_dir.join("report_multiclass.txt"), txt)?;
    }
    write_config_echo(cfg, out_dir)?;
    Ok(())
}

/// `synth`: spec file in, WFDB corpus + manifest out.
pub fn cmd_synth(spec_path: &Path, out_dir: &Path) -> Result<()> {
    let text = fs::read_to_string(spec_path)
        .with_context(|| format!("reading synthesis spec {}", spec_path.display()))?;
    let base = spec_path.parent().unwrap_or_else(|| Path::new("."));
    let spec = parse_synth_spec(&text, base)?;
    let entries = corpus::write_wfdb_corpus(&spec, out_dir)?;
    eprintln!(
        "synth: wrote {} records ({} classes) into {}",
        entries.len(),
        spec.classes.len(),
        out_dir.display()
    );
    Ok(())
}

/// `compare-spline`: reconstruct one lead from its fitted ODE and compare
/// against the natural cubic spline baseline, both scored against the raw
/// samples.
pub fn cmd_compare_spline(
    record_path: &Path,
    lead_name: &str,
    cfg: &PipelineConfig,
    out_dir: &Path,
) -> Result<()> {
    let record = load_record_path(record_path, cfg)?;
    let lead = record.lead(lead_name).ok_or_else(|| {
        anyhow!(
            "lead '{lead_name}' not in record (has: {})",
            lead_names(&record)
        )
    })?;
    let fs_hz = record.fs();

    let state = smoother::smooth_lead(lead, fs_hz, &cfg.smoother)?;
    let track = estimator::fit_coefficients(&state, &cfg.estimator)?;

    // Reconstruction starts at the first interior grid point, with initial
    // conditions read from the smoothed state there.
    let n = state.len();
    let cut = (cfg.estimator.edge_trim * n as f64).floor() as usize;
    if 2 * cut >= n {
        bail!("edge trim leaves no interior grid");
    }
    let t_first = state.grid[cut];
    let t_last = state.grid[n - 1 - cut];
    let init =
        OdeInitialState::new(t_first, state.x[cut], state.dx[cut]).map_err(|e| anyhow!("{e}"))?;
    let recon = solve_ode(&track, &init, fs_hz, t_last - t_first)?;

    let spline = smoother::cubic_spline_fit(lead, fs_hz, cfg.knot_stride)?;

    let k_first = (t_first * fs_hz).round() as usize;
    let samples = lead.samples();
    let mut out = String::from("t,y,x_ode_recon,x_spline\n");
    let mut se_ode = 0.0;
    let mut se_spline = 0.0;
    let mut count = 0usize;
    for (ri, &t) in recon.times.iter().enumerate() {
        let k = k_first + ri;
        if k >= samples.len() {
            break;
        }
        let y = samples[k];
        let x_ode = recon.x[ri];
        let x_spline = spline.x[k];
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_sig(t, 10),
            format_sig(y, 10),
            format_sig(x_ode, 10),
            format_sig(x_spline, 10)
        ));
        se_ode += (y - x_ode) * (y - x_ode);
        se_spline += (y - x_spline) * (y - x_spline);
        count += 1;
    }
    let rmse_ode = (se_ode / count as f64).sqrt();
    let rmse_spline = (se_spline / count as f64).sqrt();
    out.push_str(&format!(
        "# rmse_ode={},rmse_spline={}\n",
        format_sig(rmse_ode, 10),
        format_sig(rmse_spline, 10)
    ));

    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("compare.csv"), out)?;
    write_config_echo(cfg, out_dir)?;
    eprintln!("compare-spline: rmse_ode={rmse_ode:.6} rmse_spline={rmse_spline:.6}");
    Ok(())
}

fn lead_names(record: &SignalRecord) -> String {
    record
        .leads()
        .iter()
        .map(|l| l.name())
        .collect::<Vec<_>>()
        .join(",")
}

/// Load a record given a path to its `.hea` or `.csv` file.
fn load_record_path(path: &Path, cfg: &PipelineConfig) -> Result<SignalRecord> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| anyhow!("record path {} has no file stem", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    match ext {
        "hea" => Ok(ingest::load_wfdb(base, stem, "unlabeled")?),
        "csv" => Ok(ingest::load_csv_record(
            base,
            stem,
            cfg.csv_fs,
            "unlabeled",
        )?),
        other => bail!("record path must end in .hea or .csv, got '.{other}'"),
    }
}

pub fn cmd_fetch(url: &str, sha256: Option<&str>, out: &Path) -> Result<()> {
    let path = ingest::fetch_file(url, out, sha256)?;
    eprintln!("fetch: wrote {}", path.display());
    Ok(())
}
