//! UA-DETRAC annotation XML to ground truth entries.
//!
//! Only `frame[@num]/target_list/target[@id]/box[@left,@top,@width,@height]`
//! is read; attributes and ignored regions are skipped.

use std::collections::BTreeSet;

use super::{line_err, FormatError};
use crate::metrics::GtEntry;
use crate::model::BoundingBox;

fn attr<T: std::str::FromStr>(doc: &roxmltree::Document, node: roxmltree::Node, name: &str) -> Result<T, FormatError> {
    let line = u64::from(doc.text_pos_at(node.range().start).row);
    let raw = node
        .attribute(name)
        .ok_or_else(|| line_err(line, format!("<{}> lacks `{name}`", node.tag_name().name())))?;
    raw.parse().map_err(|_| {
        line_err(
            line,
            format!("<{}> {name}=`{raw}` is not a number", node.tag_name().name()),
        )
    })
}

pub fn parse_detrac_xml(text: &str) -> Result<Vec<GtEntry>, FormatError> {
    let doc = roxmltree::Document::parse(text).map_err(|e| line_err(u64::from(e.pos().row), e.to_string()))?;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for frame in doc.descendants().filter(|n| n.has_tag_name("frame")) {
        let num: u32 = attr(&doc, frame, "num")?;
        for target in frame.descendants().filter(|n| n.has_tag_name("target")) {
            let line = u64::from(doc.text_pos_at(target.range().start).row);
            let id: u64 = attr(&doc, target, "id")?;
            let b = target
                .children()
                .find(|n| n.has_tag_name("box"))
                .ok_or_else(|| line_err(line, "<target> without <box>"))?;
            let bbox = BoundingBox::new(
                attr(&doc, b, "left")?,
                attr(&doc, b, "top")?,
                attr(&doc, b, "width")?,
                attr(&doc, b, "height")?,
            )
            .map_err(|e| line_err(line, e.to_string()))?;
            if !seen.insert((num, id)) {
                return Err(line_err(line, format!("duplicate target {id} in frame {num}")));
            }
            out.push(GtEntry {
                frame_index: num,
                gt_id: id,
                bbox,
            });
        }
    }
    Ok(out)
}
