//! Report files written after a run.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::biot::{Unknown, UNKNOWN_COUNT};
use crate::error::Result;
use crate::experiment::NoiseStudy;
use crate::network::{AdamState, ScaledMlp};
use crate::residual::COMPONENT_COUNT;
use crate::trainer::{SnapEvent, StopReason, TrainTrace};

pub const TRACE_FILE: &str = "trace.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "network.json";
pub const NOISE_STUDY_FILE: &str = "noise_study.json";

/// Final state of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub name: String,
    pub truth: BTreeMap<String, f64>,
    pub prediction: BTreeMap<String, f64>,
    pub xi: BTreeMap<String, f64>,
    pub scales: BTreeMap<String, f64>,
    pub weights: [f64; COMPONENT_COUNT],
}

/// Contents of `summary.json`. Holds no timestamps so reruns compare equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub seed: u64,
    pub epochs_run: usize,
    pub stop: StopReason,
    pub final_total_loss: Option<f64>,
    pub max_xi: f64,
    pub max_abs_weight: f64,
    pub regions: Vec<RegionSummary>,
    pub snaps: Vec<SnapEvent>,
    pub config: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    network: ScaledMlp<f64>,
    optimizer: AdamState<f64>,
}

fn by_symbol(values: &[f64; UNKNOWN_COUNT]) -> BTreeMap<String, f64> {
    Unknown::ALL.iter().map(|u| (u.symbol().to_owned(), values[u.index()])).collect()
}

/// Builds the summary; `config` is echoed verbatim.
pub fn summarize(trace: &TrainTrace, config: serde_json::Value) -> Summary {
    let regions = (0..trace.region_names.len())
        .map(|r| RegionSummary {
            name: trace.region_names[r].clone(),
            truth: by_symbol(&trace.truth[r]),
            prediction: by_symbol(&trace.final_theta[r]),
            xi: by_symbol(&trace.xi[r]),
            scales: by_symbol(&trace.final_scales[r]),
            weights: trace.final_weights[r],
        })
        .collect();
    Summary {
        strategy: trace.strategy.name().to_owned(),
        seed: trace.seed,
        epochs_run: trace.records.len(),
        stop: trace.stop,
        final_total_loss: trace.records.last().map(|r| r.total),
        max_xi: trace.max_xi(),
        max_abs_weight: trace.max_abs_weight,
        regions,
        snaps: trace.snaps.clone(),
        config,
    }
}

fn trace_header(trace: &TrainTrace) -> Vec<String> {
    let mut h = vec!["epoch".to_owned(), "total".to_owned()];
    for r in 1..=trace.region_names.len() {
        h.extend((1..=COMPONENT_COUNT).map(|k| format!("r{r}_loss{k}")));
        h.extend(Unknown::ALL.iter().map(|u| format!("r{r}_{}", u.symbol())));
    }
    h
}

fn weights_header(trace: &TrainTrace) -> Vec<String> {
    let mut h = vec!["epoch".to_owned()];
    for r in 1..=trace.region_names.len() {
        h.extend((1..=COMPONENT_COUNT).map(|k| format!("r{r}_w{k}")));
    }
    h
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Writes `trace.csv` (weighted component losses and predictions per epoch),
/// `weights.csv`, `summary.json` and `network.json` into `dir`.
pub fn emit_reports(trace: &TrainTrace, config: serde_json::Value, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let trace_path = dir.join(TRACE_FILE);
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&trace_path)?));
    w.write_record(trace_header(trace))?;
    let mut row = Vec::new();
    for rec in &trace.records {
        row.clear();
        row.push(rec.epoch.to_string());
        row.push(rec.total.to_string());
        for reg in &rec.regions {
            row.extend(reg.weighted.iter().map(f64::to_string));
            row.extend(reg.theta.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let weights_path = dir.join(WEIGHTS_FILE);
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&weights_path)?));
    w.write_record(weights_header(trace))?;
    for rec in &trace.records {
        row.clear();
        row.push(rec.epoch.to_string());
        for reg in &rec.regions {
            row.extend(reg.weights.iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let summary_path = dir.join(SUMMARY_FILE);
    write_json(&summary_path, &summarize(trace, config))?;
    let checkpoint_path = dir.join(CHECKPOINT_FILE);
    write_json(&checkpoint_path, &Checkpoint { network: trace.network.clone(), optimizer: trace.optimizer.clone() })?;
    Ok(vec![trace_path, weights_path, summary_path, checkpoint_path])
}

/// Writes the noise-study table.
pub fn emit_noise_study(study: &NoiseStudy, config: serde_json::Value, dir: &Path) -> Result<PathBuf> {
    #[derive(Serialize)]
    struct Doc<'a> {
        study: &'a NoiseStudy,
        config: serde_json::Value,
    }
    std::fs::create_dir_all(dir)?;
    let path = dir.join(NOISE_STUDY_FILE);
    write_json(&path, &Doc { study, config })?;
    Ok(path)
}

/// Formats a region-by-unknown table of percentages.
pub fn xi_table(names: &[String], xi: &[[f64; UNKNOWN_COUNT]]) -> String {
    let mut out = format!("{:<20}", "region");
    for u in Unknown::ALL {
        out.push_str(&format!("{:>12}", u.symbol()));
    }
    out.push('\n');
    for (name, row) in names.iter().zip(xi) {
        out.push_str(&format!("{name:<20}"));
        for v in row {
            out.push_str(&format!("{:>11.3}%", 100.0 * v));
        }
        out.push('\n');
    }
    out
}

/// Human-readable digest of a run directory, given its `trace.csv`.
pub fn describe_trace(trace_csv: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(trace_csv)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let total_col = header.iter().position(|h| h == "total");
    let mut rows = 0usize;
    let (mut first, mut last, mut min) = (None, None, f64::INFINITY);
    let mut last_record = None;
    for rec in r.records() {
        let rec = rec?;
        rows += 1;
        if let Some(v) = total_col.and_then(|c| rec.get(c)).and_then(|s| s.parse::<f64>().ok()) {
            first.get_or_insert(v);
            last = Some(v);
            min = min.min(v);
        }
        last_record = Some(rec);
    }
    let mut out = format!("{}: {rows} epochs\n", trace_csv.display());
    if let (Some(f), Some(l)) = (first, last) {
        out.push_str(&format!("total weighted loss: first {f:.4e}, last {l:.4e}, min {min:.4e}\n"));
    }
    let summary = trace_csv.with_file_name(SUMMARY_FILE);
    if summary.exists() {
        let s: Summary = serde_json::from_reader(File::open(&summary)?)?;
        out.push_str(&format!("strategy {}, seed {}, stop {:?}\n", s.strategy, s.seed, s.stop));
        let names: Vec<String> = s.regions.iter().map(|r| r.name.clone()).collect();
        let xi: Vec<[f64; UNKNOWN_COUNT]> = s
            .regions
            .iter()
            .map(|r| std::array::from_fn(|n| r.xi.get(Unknown::ALL[n].symbol()).copied().unwrap_or(f64::NAN)))
            .collect();
        out.push_str("reconstruction error:\n");
        out.push_str(&xi_table(&names, &xi));
    } else if let Some(rec) = last_record {
        out.push_str("final predictions:\n");
        for (h, v) in header.iter().zip(rec.iter()) {
            if Unknown::ALL.iter().any(|u| h.ends_with(&format!("_{}", u.symbol()))) {
                out.push_str(&format!("  {h} = {v}\n"));
            }
        }
    }
    Ok(out)
}
