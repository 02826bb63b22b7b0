//! Text formats: MOT-style CSV for detections, ground truth and tracks, a
//! JSON-lines feature sidecar, a flat `key = value` config file, the
//! scenario generator and a UA-DETRAC annotation adapter.

mod config;
mod detections;
mod detrac;
mod features;
mod gt;
mod synth;
mod tracks;

pub use config::{parse_config, write_config};
pub use detections::{parse_detections, write_detections, DetectionFrames};
pub use detrac::parse_detrac_xml;
pub use features::{parse_features, write_features, FeatureTable, SidecarHeader};
pub use gt::{parse_gt, write_gt};
pub use synth::{synth_generate, ObjectSpec, ScenarioSpec};
pub use tracks::{parse_tracks, track_rows, write_tracks, TrackRow, TRACKS_HEADER};

use thiserror::Error;

use crate::metrics::GtEntry;
use crate::model::{Detection, FeatureBundle};

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Line { line: u64, message: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn line_err(line: u64, message: impl Into<String>) -> FormatError {
    FormatError::Line {
        line,
        message: message.into(),
    }
}

/// Reads a CSV record stream, handing each record and its 1-based line to
/// `f`. Blank lines are skipped.
pub(crate) fn for_each_record<R, F>(mut reader: R, mut f: F) -> Result<(), FormatError>
where
    R: std::io::Read,
    F: FnMut(u64, &csv::StringRecord) -> Result<(), FormatError>,
{
    let mut data = Vec::new();
    reader.read_to_end(&mut data)?;
    // the reader's own line counter ignores skipped blank lines, and a
    // record's byte offset may point at blank lines preceding it
    let line_of = |pos: Option<&csv::Position>| {
        pos.map_or(0, |p| {
            let mut at = p.byte() as usize;
            while at < data.len() && matches!(data[at], b'\n' | b'\r') {
                at += 1;
            }
            1 + data[..at].iter().filter(|b| **b == b'\n').count() as u64
        })
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(data.as_slice());
    let mut record = csv::StringRecord::new();
    loop {
        match rdr.read_record(&mut record) {
            Ok(false) => return Ok(()),
            Ok(true) => f(line_of(record.position()), &record)?,
            Err(e) => return Err(line_err(line_of(e.position()), e.to_string())),
        }
    }
}

pub(crate) fn parse_f64(line: u64, field: &str, what: &str) -> Result<f64, FormatError> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(line_err(line, format!("{what}: `{field}` is not a finite number"))),
    }
}

pub(crate) fn parse_int<T: std::str::FromStr>(line: u64, field: &str, what: &str) -> Result<T, FormatError> {
    field
        .parse::<T>()
        .map_err(|_| line_err(line, format!("{what}: `{field}` is not a valid integer")))
}

/// One sequence ready to be tracked: detections and aligned features per
/// frame (index 0 holds frame 1), plus optional ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBundle {
    pub name: String,
    pub frame_count: u32,
    pub frame_width: f64,
    pub frame_height: f64,
    pub detections: Vec<Vec<Detection>>,
    pub features: Vec<Vec<FeatureBundle>>,
    pub gt: Option<Vec<GtEntry>>,
}

impl SequenceBundle {
    /// Assembles a bundle from parsed inputs. `frame_count` defaults to the
    /// largest frame index seen.
    pub fn assemble(
        name: impl Into<String>,
        detections: &DetectionFrames,
        features: Option<&FeatureTable>,
        frame_count: Option<u32>,
        frame_size: (f64, f64),
    ) -> Result<Self, FormatError> {
        let last = detections.keys().next_back().copied().unwrap_or(0);
        let frame_count = frame_count.unwrap_or(last);
        if last > frame_count {
            return Err(FormatError::Scenario(format!(
                "detections reach frame {last} beyond frame count {frame_count}"
            )));
        }
        let mut dets = vec![Vec::new(); frame_count as usize];
        let mut feats = vec![Vec::new(); frame_count as usize];
        for (frame, list) in detections {
            let slot = (*frame - 1) as usize;
            feats[slot] = list
                .iter()
                .map(|d| {
                    features
                        .and_then(|t| t.get(&(d.frame_index, d.det_index)).cloned())
                        .unwrap_or_default()
                })
                .collect();
            dets[slot] = list.clone();
        }
        Ok(Self {
            name: name.into(),
            frame_count,
            frame_width: frame_size.0,
            frame_height: frame_size.1,
            detections: dets,
            features: feats,
            gt: None,
        })
    }

    pub fn detection_frames(&self) -> DetectionFrames {
        self.detections
            .iter()
            .filter(|d| !d.is_empty())
            .map(|d| (d[0].frame_index, d.clone()))
            .collect()
    }

    pub fn feature_table(&self) -> FeatureTable {
        self.detections
            .iter()
            .flatten()
            .zip(self.features.iter().flatten())
            .map(|(d, f)| ((d.frame_index, d.det_index), f.clone()))
            .collect()
    }
}
