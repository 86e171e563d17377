use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, SaliencyMap};
use crate::model::Scorer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OcclusionConfig {
    pub window: usize,
    pub stride: usize,
    /// Raw-space value written into every channel of the occluded window.
    pub fill: f32,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            window: 16,
            stride: 8,
            fill: 0.0,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::invalid_argument("occlusion window must be >= 1"));
        }
        if self.stride == 0 || self.stride > self.window {
            return Err(Error::invalid_argument(format!(
                "stride {} must be in [1, window={}]",
                self.stride, self.window
            )));
        }
        if !(0.0..=1.0).contains(&self.fill) {
            return Err(Error::invalid_argument(format!(
                "fill {} outside [0, 1]",
                self.fill
            )));
        }
        Ok(())
    }
}

/// Window start offsets along one axis; the last window is clamped to end at
/// the border.
pub fn window_starts(extent: usize, window: usize, stride: usize) -> Vec<usize> {
    let last = extent - window;
    let mut starts = Vec::new();
    let mut pos = 0;
    loop {
        starts.push(pos.min(last));
        if pos >= last {
            break;
        }
        pos += stride;
    }
    starts.dedup();
    starts
}

/// Sliding-window occlusion. Each window's score drop is spread over the
/// pixels it covers and averaged by coverage count. Returns the raw grid.
pub fn occlusion(
    scorer: &Scorer<'_>,
    image: &ImageTensor,
    cfg: &OcclusionConfig,
    target: usize,
) -> Result<SaliencyMap> {
    cfg.validate()?;
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    if cfg.window > h.min(w) {
        return Err(Error::invalid_argument(format!(
            "window {} larger than {h}x{w} image",
            cfg.window
        )));
    }
    let base = scorer.score_one(image, target)? as f64;

    let positions: Vec<(usize, usize)> = window_starts(h, cfg.window, cfg.stride)
        .into_iter()
        .flat_map(|r| {
            window_starts(w, cfg.window, cfg.stride)
                .into_iter()
                .map(move |c| (r, c))
        })
        .collect();

    let mut sum = vec![0.0f64; h * w];
    let mut count = vec![0u32; h * w];
    for chunk in positions.chunks(scorer.batch_size()) {
        let occluded: Vec<ImageTensor> = chunk
            .iter()
            .map(|&(r0, c0)| {
                let mut img = image.clone();
                let data = img.data_mut();
                for r in r0..r0 + cfg.window {
                    for c in c0..c0 + cfg.window {
                        let i = (r * w + c) * ch;
                        data[i..i + ch].fill(cfg.fill);
                    }
                }
                img
            })
            .collect();
        let scores = scorer.score(&occluded, target)?;
        for (&(r0, c0), s) in chunk.iter().zip(scores) {
            let diff = base - s as f64;
            for r in r0..r0 + cfg.window {
                for c in c0..c0 + cfg.window {
                    sum[r * w + c] += diff;
                    count[r * w + c] += 1;
                }
            }
        }
    }

    let data = sum
        .iter()
        .zip(&count)
        .map(|(s, n)| (s / *n as f64) as f32)
        .collect();
    SaliencyMap::raw(h, w, data)
}
