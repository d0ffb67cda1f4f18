//! Detection JSON-lines: one image per line,
//! `{"image": "...", "gt": [[x0,y0,x1,y1], ...], "pred": [[x0,y0,x1,y1,conf], ...]}`.

use std::path::Path;

use nuce_core::detection::{BBox, DetectionSet, ScoredBox};
use serde::Deserialize;

use crate::error::{LabError, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    image: String,
    #[serde(default)]
    gt: Vec<[f64; 4]>,
    #[serde(default)]
    pred: Vec<[f64; 5]>,
}

/// Parses JSON-lines text; blank lines are skipped.
pub fn parse_jsonl(text: &str, path: &Path) -> Result<Vec<DetectionSet>> {
    let mut sets = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let err = |message: String| LabError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let line: Line = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let bbox = |c: &[f64]| BBox::new(c[0], c[1], c[2], c[3]).map_err(|e| err(e.to_string()));
        let gt = line
            .gt
            .iter()
            .map(|c| bbox(c))
            .collect::<Result<Vec<_>>>()?;
        let pred = line
            .pred
            .iter()
            .map(|c| {
                Ok(ScoredBox {
                    bbox: bbox(c)?,
                    confidence: c[4],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sets.push(DetectionSet::new(line.image, gt, pred).map_err(|e| err(e.to_string()))?);
    }
    Ok(sets)
}

pub fn load_jsonl(path: &Path) -> Result<Vec<DetectionSet>> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_jsonl(&text, path)
}
