//! Single-pass metrics: Average Drop, Increase in Confidence, binarized
//! Average Drop and the Pointing Game.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{argmax_first, ColorSpace, ImageTensor, SaliencyMap};

/// Inclusive pixel box in the resized annotation frame. `x` is the column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub class_id: usize,
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoundingBox {
    pub fn new(class_id: usize, x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Result<Self> {
        if x_min > x_max || y_min > y_max {
            return Err(Error::invalid_argument(format!(
                "degenerate box ({x_min},{y_min})-({x_max},{y_max})"
            )));
        }
        Ok(Self {
            class_id,
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.x_min..=self.x_max).contains(&col) && (self.y_min..=self.y_max).contains(&row)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    pub drop: f64,
    pub confidence_increased: bool,
}

/// Saliency-weighted image: every channel of pixel `p` scaled by `map[p]`.
pub fn mask_image(image: &ImageTensor, map: &SaliencyMap) -> Result<ImageTensor> {
    map.check_matches(image)?;
    map.require_postprocessed()?;
    if image.space() != ColorSpace::Raw01 {
        return Err(Error::InvalidState("masking works on raw images".into()));
    }
    let ch = image.channels();
    let data = image
        .data()
        .chunks_exact(ch)
        .zip(map.data())
        .flat_map(|(px, m)| px.iter().map(move |v| v * m))
        .collect();
    ImageTensor::new(image.height(), image.width(), ch, data, ColorSpace::Raw01)
}

/// `max(0, orig - masked) / orig`, plus whether the masked score went up.
pub fn average_drop(orig: f32, masked: f32) -> Result<DropResult> {
    if !(0.0..=1.0).contains(&orig) || !(0.0..=1.0).contains(&masked) {
        return Err(Error::invalid_argument(format!(
            "scores must lie in [0, 1], got {orig} and {masked}"
        )));
    }
    if orig == 0.0 {
        return Err(Error::UndefinedDrop);
    }
    let (o, m) = (orig as f64, masked as f64);
    Ok(DropResult {
        drop: (o - m).max(0.0) / o,
        confidence_increased: masked > orig,
    })
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f32], pct: f64) -> f64 {
    let mut sorted: Vec<f64> = values.iter().map(|v| *v as f64).collect();
    sorted.sort_unstable_by(f64::total_cmp);
    let pos = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// 1 where the value reaches the `pct`-th percentile of the map, else 0.
pub fn binarize(map: &SaliencyMap, pct: f32) -> Result<SaliencyMap> {
    map.require_postprocessed()?;
    if !(0.0..100.0).contains(&pct) {
        return Err(Error::invalid_argument(format!(
            "percentile must be in [0, 100), got {pct}"
        )));
    }
    let threshold = percentile(map.data(), pct as f64);
    let data = map
        .data()
        .iter()
        .map(|v| if *v as f64 >= threshold { 1.0 } else { 0.0 })
        .collect();
    SaliencyMap::postprocessed(map.height(), map.width(), data)
}

/// Whether the map's first maximum falls inside a box of `target`.
pub fn pointing_game(map: &SaliencyMap, boxes: &[BoundingBox], target: usize) -> Result<bool> {
    let relevant: Vec<&BoundingBox> = boxes.iter().filter(|b| b.class_id == target).collect();
    if relevant.is_empty() {
        return Err(Error::MissingAnnotation(target));
    }
    let peak = argmax_first(map.data());
    let (row, col) = (peak / map.width(), peak % map.width());
    Ok(relevant.iter().any(|b| b.contains(row, col)))
}

/// Dataset-level percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointAggregate {
    pub avg_drop_pct: Option<f64>,
    pub iic_pct: Option<f64>,
    pub pointing_pct: Option<f64>,
    /// Samples left out of the drop mean because their original score was 0.
    pub excluded: usize,
}

/// Aggregates per-sample drops (`None` = excluded sample) and pointing hits.
pub fn aggregate(drops: &[Option<DropResult>], hits: &[bool]) -> Result<PointAggregate> {
    let valid: Vec<&DropResult> = drops.iter().flatten().collect();
    if valid.is_empty() && hits.is_empty() {
        return Err(Error::EmptyAggregate);
    }
    let pct = |n: f64, d: usize| 100.0 * n / d as f64;
    let (avg_drop_pct, iic_pct) = if valid.is_empty() {
        (None, None)
    } else {
        let total: f64 = valid.iter().map(|d| d.drop).sum();
        let increased = valid.iter().filter(|d| d.confidence_increased).count();
        (
            Some(pct(total, valid.len())),
            Some(pct(increased as f64, valid.len())),
        )
    };
    let pointing_pct = (!hits.is_empty())
        .then(|| pct(hits.iter().filter(|h| **h).count() as f64, hits.len()));
    Ok(PointAggregate {
        avg_drop_pct,
        iic_pct,
        pointing_pct,
        excluded: drops.len() - valid.len(),
    })
}
