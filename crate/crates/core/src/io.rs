//! File formats for click data, photon distributions, and retrieval reports.
//!
//! * Click data: CSV with header `m,value`, plus a JSON sidecar `{M, eta, mode, R}`;
//!   or a single JSON object `{M, eta, mode, R, values}`.
//! * Photon distributions: CSV with header `n,p`, or a JSON array of probabilities.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detector::{ClickDistribution, ClickMode};
use crate::error::{Error, Result};
use crate::fock::PhotonDistribution;

/// Header of the click CSV format.
pub const CLICK_CSV_HEADER: [&str; 2] = ["m", "value"];
/// Header of the distribution CSV format.
pub const DISTRIBUTION_CSV_HEADER: [&str; 2] = ["n", "p"];

/// Metadata stored next to a click CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClickMeta {
    #[serde(rename = "M")]
    pub channels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub mode: ClickMode,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<u64>,
}

/// Self-contained JSON encoding of click data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClickFile {
    #[serde(flatten)]
    pub meta: ClickMeta,
    pub values: Vec<f64>,
}

impl ClickFile {
    pub fn new(clicks: &ClickDistribution, eta: Option<f64>) -> Self {
        Self {
            meta: ClickMeta {
                channels: clicks.channels(),
                eta,
                mode: clicks.mode(),
                runs: clicks.runs(),
            },
            values: clicks.values().to_vec(),
        }
    }

    pub fn to_clicks(&self) -> Result<ClickDistribution> {
        build_clicks(self.meta.mode, self.values.clone(), Some(&self.meta))
    }
}

fn build_clicks(
    mode: ClickMode,
    values: Vec<f64>,
    meta: Option<&ClickMeta>,
) -> Result<ClickDistribution> {
    if let Some(meta) = meta {
        if meta.channels + 1 != values.len() {
            return Err(Error::DimensionMismatch {
                expected: meta.channels + 1,
                found: values.len(),
                context: "click values vs M + 1",
            });
        }
    }
    match mode {
        ClickMode::Probabilities => ClickDistribution::unnormalized(values),
        ClickMode::Counts => {
            if let Some(v) = values.iter().find(|v| v.fract() != 0.0 || **v < 0.0) {
                return Err(Error::Parse(format!(
                    "count {v} is not a nonnegative integer"
                )));
            }
            let clicks = ClickDistribution::counts(values.iter().map(|&v| v as u64).collect())?;
            if let (Some(runs), Some(total)) = (meta.and_then(|m| m.runs), clicks.runs()) {
                if runs != total {
                    return Err(Error::Parse(format!(
                        "sidecar declares R = {runs} but counts sum to {total}"
                    )));
                }
            }
            Ok(clicks)
        }
    }
}

pub fn clicks_to_csv(clicks: &ClickDistribution) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CLICK_CSV_HEADER)?;
    for (m, v) in clicks.values().iter().enumerate() {
        w.write_record([m.to_string(), format_value(*v, clicks.mode())])?;
    }
    finish(w)
}

fn format_value(v: f64, mode: ClickMode) -> String {
    match mode {
        ClickMode::Counts => format!("{}", v as u64),
        ClickMode::Probabilities => format!("{v:e}"),
    }
}

/// Parses the `m,value` CSV. Without metadata the values are taken as counts when they
/// are all integers summing to more than one, and as probabilities otherwise.
pub fn clicks_from_csv(text: &str, meta: Option<&ClickMeta>) -> Result<ClickDistribution> {
    let rows = read_indexed_csv(text, CLICK_CSV_HEADER)?;
    let values: Vec<f64> = rows.into_iter().map(|(_, v)| v).collect();
    let mode = match meta {
        Some(m) => m.mode,
        None => {
            let integral = values.iter().all(|v| v.fract() == 0.0);
            if integral && values.iter().sum::<f64>() > 1.0 {
                ClickMode::Counts
            } else {
                ClickMode::Probabilities
            }
        }
    };
    build_clicks(mode, values, meta)
}

pub fn distribution_to_csv(p: &PhotonDistribution) -> Result<String> {
    signed_to_csv(p.probs())
}

/// Writes an arbitrary (possibly signed) photon-number vector in the `n,p` format.
pub fn signed_to_csv(values: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DISTRIBUTION_CSV_HEADER)?;
    for (n, p) in values.iter().enumerate() {
        w.write_record([n.to_string(), format!("{p:e}")])?;
    }
    finish(w)
}

pub fn distribution_from_csv(text: &str) -> Result<PhotonDistribution> {
    let rows = read_indexed_csv(text, DISTRIBUTION_CSV_HEADER)?;
    PhotonDistribution::from_weights(rows.into_iter().map(|(_, p)| p).collect())
}

pub fn distribution_to_json(p: &PhotonDistribution) -> Result<String> {
    Ok(serde_json::to_string(p)?)
}

pub fn distribution_from_json(text: &str) -> Result<PhotonDistribution> {
    let raw: Vec<f64> = serde_json::from_str(text)?;
    PhotonDistribution::from_weights(raw)
}

/// Reads a distribution from a `.json` or CSV file, chosen by extension.
pub fn read_distribution(path: &Path) -> Result<PhotonDistribution> {
    let text = std::fs::read_to_string(path)?;
    if has_extension(path, "json") {
        distribution_from_json(&text)
    } else {
        distribution_from_csv(&text)
    }
}

/// Reads click data from a `.json` file or from a CSV with an optional sidecar
/// (`<stem>.json` next to the CSV).
pub fn read_clicks(path: &Path) -> Result<(ClickDistribution, Option<ClickMeta>)> {
    let text = std::fs::read_to_string(path)?;
    if has_extension(path, "json") {
        let file: ClickFile = serde_json::from_str(&text)?;
        return Ok((file.to_clicks()?, Some(file.meta)));
    }
    let sidecar = sidecar_path(path);
    let meta = if sidecar.exists() {
        Some(serde_json::from_str::<ClickMeta>(
            &std::fs::read_to_string(&sidecar)?,
        )?)
    } else {
        None
    };
    Ok((clicks_from_csv(&text, meta.as_ref())?, meta))
}

/// Writes click data as CSV plus sidecar.
pub fn write_clicks_csv(path: &Path, clicks: &ClickDistribution, eta: Option<f64>) -> Result<()> {
    std::fs::write(path, clicks_to_csv(clicks)?)?;
    let meta = ClickFile::new(clicks, eta).meta;
    std::fs::write(
        sidecar_path(path),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    Ok(())
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn read_indexed_csv(text: &str, header: [&str; 2]) -> Result<Vec<(usize, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers()?.clone();
    if found.len() != 2 || found[0] != *header[0] || found[1] != *header[1] {
        return Err(Error::Parse(format!(
            "expected header `{}`, found `{}`",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let idx: usize = record[0]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: index: {e}", line + 1)))?;
        if idx != rows.len() {
            return Err(Error::Parse(format!(
                "row {}: index {idx} out of sequence",
                line + 1
            )));
        }
        let v: f64 = record[1]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: value: {e}", line + 1)))?;
        rows.push((idx, v));
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(rows)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
}
