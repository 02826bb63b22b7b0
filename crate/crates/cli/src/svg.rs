//! Per-frame SVG overlays: detections in grey, tracks in a colour derived
//! from their id, hypothetical boxes dashed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use trackgraph::io::track_rows;
use trackgraph::{ObservationSource, SequenceBundle, Track};

fn colour(id: u64) -> String {
    let hue = (id.wrapping_mul(137)) % 360;
    format!("hsl({hue},80%,45%)")
}

pub fn render_frame(bundle: &SequenceBundle, frame: u32, rows: &[&trackgraph::io::TrackRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = bundle.frame_width,
        h = bundle.frame_height
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="4" y="14" font-size="12">frame {frame}</text>"#);
    if let Some(dets) = bundle.detections.get(frame as usize - 1) {
        for d in dets {
            let b = &d.bbox;
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="grey" stroke-width="1"/>"#,
                b.x, b.y, b.w, b.h
            );
        }
    }
    for r in rows {
        let b = &r.bbox;
        let dash = if r.source == ObservationSource::Hypothetical {
            r#" stroke-dasharray="4 3""#
        } else {
            ""
        };
        let c = colour(r.track_id.0);
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="{c}" stroke-width="2"{dash}/>"#,
            b.x, b.y, b.w, b.h
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{c}">{}</text>"#,
            b.x,
            b.y - 2.0,
            r.track_id
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_overlays(dir: &Path, bundle: &SequenceBundle, tracks: &[Track]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let rows = track_rows(tracks);
    let mut by_frame: BTreeMap<u32, Vec<_>> = BTreeMap::new();
    for r in &rows {
        by_frame.entry(r.frame_index).or_default().push(r);
    }
    for frame in 1..=bundle.frame_count {
        let svg = render_frame(bundle, frame, by_frame.get(&frame).map_or(&[][..], Vec::as_slice));
        let path = dir.join(format!("frame_{frame:06}.svg"));
        fs::write(&path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
