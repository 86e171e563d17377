use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{resize_plane, ImageTensor, SaliencyMap};
use crate::model::Scorer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiseConfig {
    pub n_masks: usize,
    pub grid_h: usize,
    pub grid_w: usize,
    pub keep_prob: f32,
    pub seed: u64,
}

impl Default for RiseConfig {
    fn default() -> Self {
        Self {
            n_masks: 4000,
            grid_h: 7,
            grid_w: 7,
            keep_prob: 0.5,
            seed: 0,
        }
    }
}

impl RiseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_masks == 0 {
            return Err(Error::invalid_argument("n_masks must be >= 1"));
        }
        if self.grid_h == 0 || self.grid_w == 0 {
            return Err(Error::invalid_argument("RISE grid dims must be >= 1"));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob < 1.0) {
            return Err(Error::invalid_argument(format!(
                "keep_prob must be in (0, 1), got {}",
                self.keep_prob
            )));
        }
        Ok(())
    }
}

/// Mask number `index` for an `height x width` image.
///
/// Each mask draws from its own ChaCha8 stream (`seed`, stream = `index`),
/// so masks can be generated in any order or on any thread. A coarse
/// Bernoulli(`keep_prob`) grid is bilinearly stretched to one cell larger than
/// the image, then cropped at a random sub-cell offset.
pub fn rise_mask(cfg: &RiseConfig, index: usize, height: usize, width: usize) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);

    let keep = cfg.keep_prob as f64;
    let grid: Vec<f32> = (0..cfg.grid_h * cfg.grid_w)
        .map(|_| if rng.random::<f64>() < keep { 1.0 } else { 0.0 })
        .collect();

    let cell_h = height.div_ceil(cfg.grid_h);
    let cell_w = width.div_ceil(cfg.grid_w);
    let up_h = (cfg.grid_h + 1) * cell_h;
    let up_w = (cfg.grid_w + 1) * cell_w;
    let shift_r = rng.random_range(0..cell_h);
    let shift_c = rng.random_range(0..cell_w);

    let up = resize_plane(&grid, cfg.grid_h, cfg.grid_w, up_h, up_w);
    let mut mask = Vec::with_capacity(height * width);
    for r in 0..height {
        let row = (r + shift_r) * up_w + shift_c;
        mask.extend_from_slice(&up[row..row + width]);
    }
    mask
}

/// Sum of `score(mask * image) * mask` over all masks, divided by `normalizer`.
///
/// Masks are consumed in batches; per-batch sums are folded in mask order so
/// the result does not depend on thread scheduling.
pub fn weighted_mask_sum<I>(
    scorer: &Scorer<'_>,
    image: &ImageTensor,
    masks: I,
    normalizer: f64,
    target: usize,
) -> Result<SaliencyMap>
where
    I: IntoIterator<Item = Vec<f32>>,
{
    let n_pix = image.n_pixels();
    let ch = image.channels();
    let mut acc = vec![0.0f64; n_pix];
    let mut masks = masks.into_iter().peekable();

    while masks.peek().is_some() {
        let chunk: Vec<Vec<f32>> = masks.by_ref().take(scorer.batch_size()).collect();
        if let Some(bad) = chunk.iter().find(|m| m.len() != n_pix) {
            return Err(Error::invalid_argument(format!(
                "mask has {} cells, image has {n_pix} pixels",
                bad.len()
            )));
        }
        let masked: Vec<ImageTensor> = chunk
            .par_iter()
            .map(|m| apply_mask(image, m, ch))
            .collect();
        let scores = scorer.score(&masked, target)?;
        for (mask, s) in chunk.iter().zip(scores) {
            let s = s as f64;
            for (a, m) in acc.iter_mut().zip(mask) {
                *a += s * *m as f64;
            }
        }
    }

    let data = acc.iter().map(|v| (v / normalizer) as f32).collect();
    SaliencyMap::raw(image.height(), image.width(), data)
}

fn apply_mask(image: &ImageTensor, mask: &[f32], ch: usize) -> ImageTensor {
    let data = image
        .data()
        .chunks_exact(ch)
        .zip(mask)
        .flat_map(|(px, m)| px.iter().map(move |v| v * m))
        .collect();
    ImageTensor::from_parts_unchecked(image.height(), image.width(), ch, data, image.space())
}

/// Randomized input sampling: relevance is the score-weighted average of
/// random soft masks. Returns the raw (unprocessed) grid.
pub fn rise(
    scorer: &Scorer<'_>,
    image: &ImageTensor,
    cfg: &RiseConfig,
    target: usize,
) -> Result<SaliencyMap> {
    cfg.validate()?;
    let (h, w) = (image.height(), image.width());
    let masks = (0..cfg.n_masks).map(|i| rise_mask(cfg, i, h, w));
    let normalizer = cfg.n_masks as f64 * cfg.keep_prob as f64;
    weighted_mask_sum(scorer, image, masks, normalizer, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ColorSpace;
    use crate::model::{ConstantModel, RegionMeanModel};
    use crate::saliency::postprocess;

    fn small_cfg() -> RiseConfig {
        RiseConfig {
            n_masks: 64,
            grid_h: 3,
            grid_w: 3,
            keep_prob: 0.5,
            seed: 11,
        }
    }

    #[test]
    fn masks_are_soft_and_bounded() {
        let cfg = small_cfg();
        for i in 0..20 {
            let m = rise_mask(&cfg, i, 17, 13);
            assert_eq!(m.len(), 17 * 13);
            assert!(m.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert_eq!(rise_mask(&cfg, 3, 8, 8), rise_mask(&cfg, 3, 8, 8));
        assert_ne!(rise_mask(&cfg, 3, 8, 8), rise_mask(&cfg, 4, 8, 8));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let model = RegionMeanModel::new(vec![(2, 2), (3, 3)], 2).unwrap();
        let scorer = Scorer::new(&model).with_batch_size(7);
        let img = ImageTensor::filled(8, 8, 3, 0.9, ColorSpace::Raw01).unwrap();
        let a = rise(&scorer, &img, &small_cfg(), 0).unwrap();
        let b = rise(&Scorer::new(&model), &img, &small_cfg(), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_model_leaves_no_ranking_in_expectation() {
        let model = ConstantModel::new(0.7).unwrap();
        let img = ImageTensor::filled(6, 6, 3, 0.5, ColorSpace::Raw01).unwrap();
        // With a constant score the map is 0.7 * mean(mask) / keep_prob;
        // an all-ones mask set makes it exactly constant.
        let ones = (0..5).map(|_| vec![1.0f32; 36]);
        let raw = weighted_mask_sum(&Scorer::new(&model), &img, ones, 5.0, 0).unwrap();
        assert!(raw.data().iter().all(|v| (*v - 0.7).abs() < 1e-6));
        assert!(postprocess(&raw).unwrap().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_bad_config() {
        let model = ConstantModel::new(0.7).unwrap();
        let img = ImageTensor::filled(4, 4, 1, 0.5, ColorSpace::Raw01).unwrap();
        for cfg in [
            RiseConfig { n_masks: 0, ..small_cfg() },
            RiseConfig { keep_prob: 1.0, ..small_cfg() },
            RiseConfig { grid_w: 0, ..small_cfg() },
        ] {
            assert!(rise(&Scorer::new(&model), &img, &cfg, 0).is_err());
        }
    }
}
