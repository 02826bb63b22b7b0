use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::{for_each_record, line_err, parse_f64, parse_int, FormatError};
use crate::metrics::GtEntry;
use crate::model::BoundingBox;

/// Parses `frame,gt_id,x,y,w,h` lines.
pub fn parse_gt<R: std::io::Read>(reader: R) -> Result<Vec<GtEntry>, FormatError> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for_each_record(reader, |line, rec| {
        if rec.len() != 6 {
            return Err(line_err(
                line,
                format!("expected 6 fields (frame,gt_id,x,y,w,h), found {}", rec.len()),
            ));
        }
        let frame: u32 = parse_int(line, &rec[0], "frame")?;
        if frame < 1 {
            return Err(line_err(line, "frame index must be >= 1"));
        }
        let gt_id: u64 = parse_int(line, &rec[1], "gt_id")?;
        let x = parse_f64(line, &rec[2], "x")?;
        let y = parse_f64(line, &rec[3], "y")?;
        let w = parse_f64(line, &rec[4], "w")?;
        let h = parse_f64(line, &rec[5], "h")?;
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| line_err(line, e.to_string()))?;
        if !seen.insert((frame, gt_id)) {
            return Err(line_err(
                line,
                format!("duplicate ground truth id {gt_id} in frame {frame}"),
            ));
        }
        out.push(GtEntry {
            frame_index: frame,
            gt_id,
            bbox,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn write_gt(entries: &[GtEntry]) -> String {
    let mut out = String::new();
    for g in entries {
        let b = &g.bbox;
        let _ = writeln!(out, "{},{},{},{},{},{}", g.frame_index, g.gt_id, b.x, b.y, b.w, b.h);
    }
    out
}
