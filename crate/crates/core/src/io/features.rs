use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{line_err, FormatError};
use crate::model::FeatureBundle;

/// Feature bundles keyed by `(frame, det_index)`.
pub type FeatureTable = BTreeMap<(u32, usize), FeatureBundle>;

/// Optional first line of a sidecar, identified by its `sidecar` key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarHeader {
    pub sidecar: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deep_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hist_bins_per_channel: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor_dim: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureLine {
    frame: u32,
    det: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    histogram: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    descriptors: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    deep: Option<Vec<f64>>,
}

/// Parses the JSON-lines sidecar. Blank lines are skipped; an optional
/// header object may precede the feature lines and its dimensions are then
/// enforced.
pub fn parse_features<R: std::io::Read>(reader: R) -> Result<(Option<SidecarHeader>, FeatureTable), FormatError> {
    let reader = std::io::BufReader::new(reader);
    let mut table = FeatureTable::new();
    let mut header: Option<SidecarHeader> = None;
    let mut first = true;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        if line.trim().is_empty() {
            continue;
        }
        if std::mem::replace(&mut first, false) && line.contains("\"sidecar\"") {
            header = Some(serde_json::from_str(&line).map_err(|e| line_err(lineno, format!("bad header: {e}")))?);
            continue;
        }
        let parsed: FeatureLine =
            serde_json::from_str(&line).map_err(|e| line_err(lineno, format!("bad feature line: {e}")))?;
        let bundle = FeatureBundle {
            histogram: parsed.histogram,
            descriptors: parsed.descriptors,
            deep_vector: parsed.deep,
        };
        validate(&bundle, header.as_ref()).map_err(|m| line_err(lineno, m))?;
        if table.insert((parsed.frame, parsed.det), bundle).is_some() {
            return Err(line_err(
                lineno,
                format!("duplicate entry for frame {} detection {}", parsed.frame, parsed.det),
            ));
        }
    }
    Ok((header, table))
}

fn validate(b: &FeatureBundle, header: Option<&SidecarHeader>) -> Result<(), String> {
    let dim = b
        .descriptor_dim()
        .map_err(|i| format!("descriptor {i} has a different dimension from the first"))?;
    if let Some(h) = &b.histogram {
        if h.iter().any(|v| *v < 0.0) {
            return Err("histogram entries must be non-negative".into());
        }
    }
    let Some(header) = header else { return Ok(()) };
    if let (Some(want), Some(v)) = (header.deep_dim, &b.deep_vector) {
        if v.len() != want {
            return Err(format!("deep vector has {} entries, header says {want}", v.len()));
        }
    }
    if let (Some(bins), Some(h)) = (header.hist_bins_per_channel, &b.histogram) {
        if h.len() != bins.pow(3) {
            return Err(format!("histogram has {} bins, header says {}", h.len(), bins.pow(3)));
        }
    }
    if let (Some(want), Some(got)) = (header.descriptor_dim, dim) {
        if want != got {
            return Err(format!("descriptors have dimension {got}, header says {want}"));
        }
    }
    Ok(())
}

/// Writes one line per bundle in key order, omitting absent fields.
pub fn write_features(header: Option<&SidecarHeader>, table: &FeatureTable) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&serde_json::to_string(h).expect("header serializes"));
        out.push('\n');
    }
    for (&(frame, det), b) in table {
        let line = FeatureLine {
            frame,
            det,
            histogram: b.histogram.clone(),
            descriptors: b.descriptors.clone(),
            deep: b.deep_vector.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("feature line serializes"));
        out.push('\n');
    }
    out
}
