use std::fmt::Write as _;
use std::io::BufRead;

use super::{line_err, FormatError};
use crate::model::{AppearanceMode, MatchSolver, TrackerConfig};

/// Applies `key = value` lines onto `base`. Keys are the `TrackerConfig`
/// field names; `#` starts a comment. Unknown keys and repeated keys are
/// errors.
pub fn parse_config<R: std::io::Read>(reader: R, base: TrackerConfig) -> Result<TrackerConfig, FormatError> {
    let mut cfg = base;
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in std::io::BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = i as u64 + 1;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let Some((key, value)) = text.split_once('=') else {
            return Err(line_err(lineno, format!("expected `key = value`, found `{text}`")));
        };
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(line_err(lineno, format!("key `{key}` given twice")));
        }
        set(&mut cfg, key, value).map_err(|m| line_err(lineno, m))?;
    }
    cfg.validate().map_err(|e| line_err(0, e.to_string()))?;
    Ok(cfg)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse `{value}`"))
}

fn real(key: &str, value: &str) -> Result<f64, String> {
    let v: f64 = num(key, value)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{key}: `{value}` is not finite"))
    }
}

fn set(cfg: &mut TrackerConfig, key: &str, value: &str) -> Result<(), String> {
    match key {
        "alpha" => cfg.alpha = real(key, value)?,
        "beta" => cfg.beta = real(key, value)?,
        "iou_prune_threshold" => cfg.iou_prune_threshold = real(key, value)?,
        "appearance_mode" => {
            cfg.appearance_mode = AppearanceMode::parse(value)
                .ok_or_else(|| format!("{key}: expected sift, deep or none, found `{value}`"))?
        }
        "fps" => cfg.fps = real(key, value)?,
        "max_lost_frames" => cfg.max_lost_frames = num(key, value)?,
        "border_margin_frac" => cfg.border_margin_frac = real(key, value)?,
        "hist_bins_per_channel" => cfg.hist_bins_per_channel = num(key, value)?,
        "knn_ratio" => cfg.knn_ratio = real(key, value)?,
        "pca_fraction" => cfg.pca_fraction = real(key, value)?,
        "pca_fit_frames" => cfg.pca_fit_frames = num(key, value)?,
        "sift_match_normalization" => cfg.sift_match_normalization = num(key, value)?,
        "frame_width" => cfg.frame_width = real(key, value)?,
        "frame_height" => cfg.frame_height = real(key, value)?,
        "min_match_weight" => cfg.min_match_weight = real(key, value)?,
        "literal_eq10" => cfg.literal_eq10 = num(key, value)?,
        "solver" => {
            cfg.solver = match value {
                "exact" => MatchSolver::Exact,
                "greedy" => MatchSolver::Greedy,
                _ => return Err(format!("{key}: expected exact or greedy, found `{value}`")),
            }
        }
        _ => return Err(format!("unknown key `{key}`")),
    }
    Ok(())
}

/// Writes every field so that `parse_config(write_config(c), _) == c`.
pub fn write_config(cfg: &TrackerConfig) -> String {
    let mut out = String::new();
    let solver = match cfg.solver {
        MatchSolver::Exact => "exact",
        MatchSolver::Greedy => "greedy",
    };
    let _ = writeln!(out, "alpha = {}", cfg.alpha);
    let _ = writeln!(out, "beta = {}", cfg.beta);
    let _ = writeln!(out, "iou_prune_threshold = {}", cfg.iou_prune_threshold);
    let _ = writeln!(out, "appearance_mode = {}", cfg.appearance_mode.as_str());
    let _ = writeln!(out, "fps = {}", cfg.fps);
    let _ = writeln!(out, "max_lost_frames = {}", cfg.max_lost_frames);
    let _ = writeln!(out, "border_margin_frac = {}", cfg.border_margin_frac);
    let _ = writeln!(out, "hist_bins_per_channel = {}", cfg.hist_bins_per_channel);
    let _ = writeln!(out, "knn_ratio = {}", cfg.knn_ratio);
    let _ = writeln!(out, "pca_fraction = {}", cfg.pca_fraction);
    let _ = writeln!(out, "pca_fit_frames = {}", cfg.pca_fit_frames);
    let _ = writeln!(out, "sift_match_normalization = {}", cfg.sift_match_normalization);
    let _ = writeln!(out, "frame_width = {}", cfg.frame_width);
    let _ = writeln!(out, "frame_height = {}", cfg.frame_height);
    let _ = writeln!(out, "min_match_weight = {}", cfg.min_match_weight);
    let _ = writeln!(out, "literal_eq10 = {}", cfg.literal_eq10);
    let _ = writeln!(out, "solver = {solver}");
    out
}
