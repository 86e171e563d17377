//! Synthetic datasets with a known relevant region, for demos and tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{ColorSpace, ImageTensor, SaliencyMap};
use crate::pointmetrics::BoundingBox;

use super::dataset::{encode_png, write_bboxes, Dataset, DatasetManifest, ManifestEntry, Sample};
use super::io::save_smap;

/// Random RGB image whose values are multiples of 1/255, so that it
/// survives a PNG round trip unchanged.
pub fn random_image(h: usize, w: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * 3)
        .map(|_| rng.random_range(0..=255u8) as f32 / 255.0)
        .collect();
    ImageTensor::new(h, w, 3, data, ColorSpace::Raw01).expect("valid shape")
}

/// Square block of `size x size` pixels with its top-left corner at `(r0, c0)`.
pub fn block(r0: usize, c0: usize, size: usize) -> Vec<(usize, usize)> {
    (r0..r0 + size)
        .flat_map(|r| (c0..c0 + size).map(move |c| (r, c)))
        .collect()
}

/// Smallest box around `region`, labelled `class_id`.
pub fn bounding_box(region: &[(usize, usize)], class_id: usize) -> Result<BoundingBox> {
    let rows = region.iter().map(|p| p.0);
    let cols = region.iter().map(|p| p.1);
    BoundingBox::new(
        class_id,
        cols.clone().min().ok_or_else(|| Error::invalid_argument("empty region"))?,
        rows.clone().min().unwrap(),
        cols.max().unwrap(),
        rows.max().unwrap(),
    )
}

/// 1 on `region`, 0 elsewhere.
pub fn indicator_map(h: usize, w: usize, region: &[(usize, usize)]) -> SaliencyMap {
    let mut d = vec![0.0f32; h * w];
    for (r, c) in region {
        d[r * w + c] = 1.0;
    }
    SaliencyMap::postprocessed(h, w, d).expect("indicator is postprocessed")
}

/// Uniform random map with at least one value of exactly 1.
pub fn random_map(h: usize, w: usize, seed: u64) -> SaliencyMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f32> = (0..h * w).map(|_| rng.random::<f32>()).collect();
    let peak = rng.random_range(0..h * w);
    d[peak] = 1.0;
    SaliencyMap::postprocessed(h, w, d).expect("values in [0, 1]")
}

/// Indicator of `region` blended with uniform noise of weight `noise`.
pub fn noisy_map(h: usize, w: usize, region: &[(usize, usize)], noise: f32, seed: u64) -> SaliencyMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d: Vec<f32> = (0..h * w).map(|_| noise * rng.random::<f32>()).collect();
    for (r, c) in region {
        d[r * w + c] += 1.0 - noise;
    }
    let max = d.iter().cloned().fold(0.0f32, f32::max);
    SaliencyMap::postprocessed(h, w, d.iter().map(|v| v / max).collect()).expect("scaled map")
}

/// `k` random spikes inside `region`, the rest zero: the shape of a sparse
/// gradient-style explanation.
pub fn sparse_map(h: usize, w: usize, region: &[(usize, usize)], k: usize, seed: u64) -> SaliencyMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = k.clamp(1, region.len());
    let mut d = vec![0.0f32; h * w];
    for (n, i) in sample(&mut rng, region.len(), k).into_iter().enumerate() {
        let (r, c) = region[i];
        d[r * w + c] = if n == 0 { 1.0 } else { rng.random_range(0.05f32..1.0) };
    }
    SaliencyMap::postprocessed(h, w, d).expect("spikes in [0, 1]")
}

/// `n` random images sharing one relevant block, all labelled class 0 with
/// a matching bounding box.
#[derive(Debug, Clone)]
pub struct SyntheticSet {
    pub dataset: Dataset,
    pub region: Vec<(usize, usize)>,
    pub height: usize,
    pub width: usize,
}

pub fn synthetic_set(n: usize, h: usize, w: usize, block_size: usize, seed: u64) -> Result<SyntheticSet> {
    if block_size == 0 || block_size > h.min(w) {
        return Err(Error::invalid_argument(format!(
            "block {block_size} does not fit a {h}x{w} image"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r0 = rng.random_range(0..=h - block_size);
    let c0 = rng.random_range(0..=w - block_size);
    let region = block(r0, c0, block_size);
    let bbox = bounding_box(&region, 0)?;
    let width = n.max(1).to_string().len();
    let samples = (0..n)
        .map(|i| Sample {
            image_id: format!("img{i:0width$}"),
            image: random_image(h, w, seed.wrapping_add(1 + i as u64)),
            label: 0,
            boxes: vec![bbox],
        })
        .collect();
    Ok(SyntheticSet {
        dataset: Dataset {
            samples,
            has_boxes: true,
        },
        region,
        height: h,
        width: w,
    })
}

impl SyntheticSet {
    /// Writes PNGs, `bboxes.csv` and `manifest.json` under `dir`; returns the
    /// manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let images = dir.join("images");
        std::fs::create_dir_all(&images)?;
        let mut entries = Vec::new();
        let mut boxes = BTreeMap::new();
        for s in &self.dataset.samples {
            let rel = PathBuf::from("images").join(format!("{}.png", s.image_id));
            encode_png(&s.image, &dir.join(&rel))?;
            entries.push(ManifestEntry {
                image_id: s.image_id.clone(),
                path: rel,
                label: s.label,
            });
            boxes.insert(s.image_id.clone(), s.boxes.clone());
        }
        write_bboxes(&dir.join("bboxes.csv"), &boxes)?;
        let manifest = DatasetManifest {
            root: PathBuf::from("."),
            entries,
            bboxes: Some(PathBuf::from("bboxes.csv")),
            image_size: [self.height, self.width],
        };
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }

    /// Saves one map per sample as `<image_id>.<method>.smap`.
    pub fn write_maps(&self, dir: &Path, method: &str, maps: &[SaliencyMap]) -> Result<()> {
        if maps.len() != self.dataset.len() {
            return Err(Error::invalid_argument("one map per sample required"));
        }
        std::fs::create_dir_all(dir)?;
        for (s, m) in self.dataset.samples.iter().zip(maps) {
            save_smap(m, &dir.join(format!("{}.{method}.smap", s.image_id)))?;
        }
        Ok(())
    }
}
