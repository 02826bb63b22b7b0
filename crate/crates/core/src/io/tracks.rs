use std::fmt::Write as _;

use super::{for_each_record, line_err, parse_f64, parse_int, FormatError};
use crate::metrics::HypothesisBox;
use crate::model::{BoundingBox, ObservationSource, Track, TrackId};

pub const TRACKS_HEADER: &str = "frame,track_id,x,y,w,h,source";

/// One row of the track output file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub frame_index: u32,
    pub track_id: TrackId,
    pub bbox: BoundingBox,
    pub source: ObservationSource,
}

impl TrackRow {
    pub fn hypothesis(&self) -> HypothesisBox {
        HypothesisBox {
            frame_index: self.frame_index,
            track_id: self.track_id,
            bbox: self.bbox,
        }
    }
}

/// Flattens tracks into rows sorted by `(frame, track_id)`.
pub fn track_rows(tracks: &[Track]) -> Vec<TrackRow> {
    let mut rows: Vec<TrackRow> = tracks
        .iter()
        .flat_map(|t| {
            t.observations.iter().map(move |o| TrackRow {
                frame_index: o.frame_index,
                track_id: t.id,
                bbox: o.bbox,
                source: o.source,
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame_index, r.track_id));
    rows
}

/// Writes `frame,track_id,x,y,w,h,source` with a header line; `source` is
/// `O` for observed and `H` for hypothetical rows.
pub fn write_tracks(tracks: &[Track]) -> String {
    let mut out = String::from(TRACKS_HEADER);
    out.push('\n');
    for r in track_rows(tracks) {
        let b = &r.bbox;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.frame_index,
            r.track_id,
            b.x,
            b.y,
            b.w,
            b.h,
            r.source.code()
        );
    }
    out
}

pub fn parse_tracks<R: std::io::Read>(reader: R) -> Result<Vec<TrackRow>, FormatError> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for_each_record(reader, |line, rec| {
        if !saw_header {
            let header: Vec<&str> = rec.iter().collect();
            if header.join(",") != TRACKS_HEADER {
                return Err(line_err(line, format!("expected header `{TRACKS_HEADER}`")));
            }
            saw_header = true;
            return Ok(());
        }
        if rec.len() != 7 {
            return Err(line_err(line, format!("expected 7 fields, found {}", rec.len())));
        }
        let frame: u32 = parse_int(line, &rec[0], "frame")?;
        let id: u64 = parse_int(line, &rec[1], "track_id")?;
        let x = parse_f64(line, &rec[2], "x")?;
        let y = parse_f64(line, &rec[3], "y")?;
        let w = parse_f64(line, &rec[4], "w")?;
        let h = parse_f64(line, &rec[5], "h")?;
        let source = match &rec[6] {
            "O" => ObservationSource::Observed,
            "H" => ObservationSource::Hypothetical,
            other => return Err(line_err(line, format!("source must be O or H, found `{other}`"))),
        };
        rows.push(TrackRow {
            frame_index: frame,
            track_id: TrackId(id),
            bbox: BoundingBox::new(x, y, w, h).map_err(|e| line_err(line, e.to_string()))?,
            source,
        });
        Ok(())
    })?;
    if !saw_header {
        return Err(line_err(1, format!("missing header `{TRACKS_HEADER}`")));
    }
    Ok(rows)
}
