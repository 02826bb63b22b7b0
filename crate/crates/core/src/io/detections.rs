use std::collections::BTreeMap;
use std::fmt::Write as _;

use super::{for_each_record, line_err, parse_f64, parse_int, FormatError};
use crate::model::{BoundingBox, Detection};

/// Detections grouped by frame index; within a frame in file order.
pub type DetectionFrames = BTreeMap<u32, Vec<Detection>>;

/// Parses `frame,id,x,y,w,h,conf` lines. The id column is ignored.
pub fn parse_detections<R: std::io::Read>(reader: R) -> Result<DetectionFrames, FormatError> {
    let mut frames = DetectionFrames::new();
    for_each_record(reader, |line, rec| {
        if rec.len() != 7 {
            return Err(line_err(
                line,
                format!("expected 7 fields (frame,id,x,y,w,h,conf), found {}", rec.len()),
            ));
        }
        let frame: u32 = parse_int(line, &rec[0], "frame")?;
        if frame < 1 {
            return Err(line_err(line, "frame index must be >= 1"));
        }
        let _: i64 = parse_int(line, &rec[1], "id")?;
        let x = parse_f64(line, &rec[2], "x")?;
        let y = parse_f64(line, &rec[3], "y")?;
        let w = parse_f64(line, &rec[4], "w")?;
        let h = parse_f64(line, &rec[5], "h")?;
        let confidence = parse_f64(line, &rec[6], "conf")?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(line_err(line, format!("confidence {confidence} outside [0, 1]")));
        }
        let bbox = BoundingBox::new(x, y, w, h).map_err(|e| line_err(line, e.to_string()))?;
        let list = frames.entry(frame).or_default();
        list.push(Detection {
            frame_index: frame,
            det_index: list.len(),
            bbox,
            confidence,
        });
        Ok(())
    })?;
    Ok(frames)
}

/// Writes detections in frame order with `-1` in the id column.
pub fn write_detections(frames: &DetectionFrames) -> String {
    let mut out = String::new();
    for d in frames.values().flatten() {
        let b = &d.bbox;
        let _ = writeln!(
            out,
            "{},-1,{},{},{},{},{}",
            d.frame_index, b.x, b.y, b.w, b.h, d.confidence
        );
    }
    out
}
