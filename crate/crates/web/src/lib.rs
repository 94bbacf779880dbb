//! WebAssembly bindings for the static demo page in `www/`.
//!
//! The plain functions carry the logic and are tested natively; the
//! `#[wasm_bindgen]` wrappers only convert errors.

use serde::{Deserialize, Serialize};
use shelfscan::encoder::{pool, Detection, EncodingMode};
use shelfscan::geometry::Rect;
use shelfscan::textmap::{segment_text_regions, TextScoreMap, WordClassIndex, WordMatch};
use wasm_bindgen::prelude::*;

/// Text regions of a score map as flat `[x, y, w, h, ...]`.
pub fn segment_regions(width: usize, height: usize, scores: &[f32]) -> Result<Vec<u32>, String> {
    let map = TextScoreMap::new(width, height, scores.to_vec()).map_err(|e| e.to_string())?;
    Ok(segment_text_regions(&map)
        .into_iter()
        .flat_map(|r| [r.x, r.y, r.w, r.h])
        .map(|v| v as u32)
        .collect())
}

/// Looks a word up in a `{class: {token: count}}` index, answering with the
/// same JSON shape as the service's `/words/{token}`.
pub fn lookup_word(index_json: &str, word: &str) -> Result<String, String> {
    let index = WordClassIndex::from_json(index_json).map_err(|e| e.to_string())?;
    let answer = match index.query(word) {
        WordMatch::AutoMapped { name, .. } => serde_json::json!({ "auto": name }),
        WordMatch::Ranked(ranked) => serde_json::json!({ "ranked": ranked }),
        WordMatch::Unknown => serde_json::json!({ "unknown": word }),
    };
    serde_json::to_string(&answer).map_err(|e| e.to_string())
}

#[derive(Debug, Deserialize, Serialize)]
pub struct DemoDetection {
    pub class: usize,
    pub score: f32,
    pub x: f32,
    pub y: f32,
}

/// Whole-image and quadrant max pooling of point detections; returns the
/// `5 * num_classes` vector, region-major.
pub fn pool_points(
    num_classes: usize,
    width: usize,
    height: usize,
    floor: f32,
    detections_json: &str,
) -> Result<Vec<f32>, String> {
    let points: Vec<DemoDetection> = serde_json::from_str(detections_json).map_err(|e| e.to_string())?;
    if num_classes == 0 {
        return Err("need at least one class".into());
    }
    let mut dets = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        if p.class >= num_classes {
            return Err(format!("detection {i}: class {} out of range", p.class));
        }
        if !p.score.is_finite() {
            return Err(format!("detection {i}: score must be finite"));
        }
        dets.push(Detection {
            detector: i,
            class_id: p.class,
            score: p.score,
            rect: Rect::new(p.x.max(0.0) as usize, p.y.max(0.0) as usize, 1, 1),
            center: (p.x, p.y),
        });
    }
    Ok(pool(&dets, num_classes, EncodingMode::Pyramid, floor, width, height).values)
}

#[wasm_bindgen]
pub fn segment(width: usize, height: usize, scores: &[f32]) -> Result<Vec<u32>, JsError> {
    segment_regions(width, height, scores).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = queryWord)]
pub fn query_word(index_json: &str, word: &str) -> Result<String, JsError> {
    lookup_word(index_json, word).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = poolDetections)]
pub fn pool_detections(
    num_classes: usize,
    width: usize,
    height: usize,
    floor: f32,
    detections_json: &str,
) -> Result<Vec<f32>, JsError> {
    pool_points(num_classes, width, height, floor, detections_json).map_err(|e| JsError::new(&e))
}
