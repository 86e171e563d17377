//! Batched scoring interface and the built-in synthetic models.

pub mod protocol;
mod remote;

pub use remote::{Endpoint, RemoteScorer};

use crate::error::{Error, Result};
use crate::image::{normalize, ClassScoreVector, ColorSpace, ImageTensor, NormalizationSpec};

/// A batch of same-shape images scored for one class.
#[derive(Debug, Clone, Copy)]
pub struct ScoreRequest<'a> {
    pub batch: &'a [ImageTensor],
    pub target_class: usize,
}

impl<'a> ScoreRequest<'a> {
    pub fn new(batch: &'a [ImageTensor], target_class: usize) -> Result<Self> {
        let first = batch
            .first()
            .ok_or_else(|| Error::invalid_argument("score request batch is empty"))?;
        if let Some(bad) = batch
            .iter()
            .find(|img| !img.same_shape(first) || img.space() != first.space())
        {
            return Err(Error::invalid_argument(format!(
                "batch mixes shapes or spaces: {}x{}x{} vs {}x{}x{}",
                first.height(),
                first.width(),
                first.channels(),
                bad.height(),
                bad.width(),
                bad.channels()
            )));
        }
        Ok(Self {
            batch,
            target_class,
        })
    }
}

/// Black-box classifier `F`: images in, per-class scores in `[0, 1]` out.
pub trait ModelAdapter: Send + Sync {
    /// Space the model expects its inputs in.
    fn input_space(&self) -> ColorSpace;

    fn n_classes(&self) -> usize;

    fn deterministic(&self) -> bool {
        true
    }

    /// One score vector per image, in request order.
    fn score_batch(&self, req: &ScoreRequest<'_>) -> Result<Vec<ClassScoreVector>>;
}

fn require_raw(req: &ScoreRequest<'_>) -> Result<()> {
    match req.batch[0].space() {
        ColorSpace::Raw01 => Ok(()),
        ColorSpace::Normalized => Err(Error::invalid_argument(
            "synthetic models take raw [0, 1] images",
        )),
    }
}

/// Scores every image with the mean intensity over a fixed pixel region.
///
/// The target class gets the region mean, every other class `1 - mean`.
#[derive(Debug, Clone)]
pub struct RegionMeanModel {
    region: Vec<(usize, usize)>,
    n_classes: usize,
}

impl RegionMeanModel {
    pub fn new(region: Vec<(usize, usize)>, n_classes: usize) -> Result<Self> {
        if region.is_empty() {
            return Err(Error::invalid_argument("region must be non-empty"));
        }
        if n_classes < 2 {
            return Err(Error::invalid_argument("region model needs >= 2 classes"));
        }
        let mut region = region;
        region.sort_unstable();
        region.dedup();
        Ok(Self { region, n_classes })
    }

    pub fn region(&self) -> &[(usize, usize)] {
        &self.region
    }

    /// Target-class score of a single raw image.
    pub fn region_mean(&self, img: &ImageTensor) -> Result<f32> {
        let (h, w, ch) = (img.height(), img.width(), img.channels());
        let mut acc = 0.0f64;
        for &(r, c) in &self.region {
            if r >= h || c >= w {
                return Err(Error::invalid_argument(format!(
                    "region pixel ({r}, {c}) outside {h}x{w} image"
                )));
            }
            acc += img.pixel(r * w + c).iter().map(|v| *v as f64).sum::<f64>();
        }
        let mean = acc / (self.region.len() * ch) as f64;
        Ok((mean as f32).clamp(0.0, 1.0))
    }
}

impl ModelAdapter for RegionMeanModel {
    fn input_space(&self) -> ColorSpace {
        ColorSpace::Raw01
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn score_batch(&self, req: &ScoreRequest<'_>) -> Result<Vec<ClassScoreVector>> {
        require_raw(req)?;
        req.batch
            .iter()
            .map(|img| {
                let mean = self.region_mean(img)?;
                let mut scores = vec![1.0 - mean; self.n_classes];
                scores[req.target_class] = mean;
                ClassScoreVector::new(scores, req.target_class)
            })
            .collect()
    }
}

/// Returns the same score for every class of every image.
#[derive(Debug, Clone)]
pub struct ConstantModel {
    value: f32,
    n_classes: usize,
}

impl ConstantModel {
    pub fn new(value: f32) -> Result<Self> {
        Self::with_classes(value, 2)
    }

    pub fn with_classes(value: f32, n_classes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid_argument(format!(
                "constant score {value} outside [0, 1]"
            )));
        }
        if n_classes == 0 {
            return Err(Error::invalid_argument("n_classes must be >= 1"));
        }
        Ok(Self { value, n_classes })
    }
}

impl ModelAdapter for ConstantModel {
    fn input_space(&self) -> ColorSpace {
        ColorSpace::Raw01
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn score_batch(&self, req: &ScoreRequest<'_>) -> Result<Vec<ClassScoreVector>> {
        require_raw(req)?;
        req.batch
            .iter()
            .map(|_| ClassScoreVector::new(vec![self.value; self.n_classes], req.target_class))
            .collect()
    }
}

pub const DEFAULT_BATCH_SIZE: usize = 32;

/// Scores raw images against a model, converting to the model's input space
/// and splitting into fixed-size batches.
#[derive(Clone, Copy)]
pub struct Scorer<'m> {
    model: &'m dyn ModelAdapter,
    norm: NormalizationSpec,
    batch_size: usize,
}

impl<'m> Scorer<'m> {
    pub fn new(model: &'m dyn ModelAdapter) -> Self {
        Self {
            model,
            norm: NormalizationSpec::IMAGENET,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn with_normalization(mut self, norm: NormalizationSpec) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    pub fn model(&self) -> &'m dyn ModelAdapter {
        self.model
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn normalization(&self) -> &NormalizationSpec {
        &self.norm
    }

    /// Raw pixel value that the model sees as zero: the dataset mean for
    /// normalized models, black for raw-space models.
    pub fn zero_point(&self, channels: usize) -> Vec<f32> {
        match (self.model.input_space(), channels) {
            (ColorSpace::Normalized, 3) => self.norm.mean.to_vec(),
            (ColorSpace::Normalized, _) => {
                vec![self.norm.mean.iter().sum::<f32>() / 3.0; channels]
            }
            (ColorSpace::Raw01, _) => vec![0.0; channels],
        }
    }

    /// Full score vectors for raw images.
    pub fn score_vectors(
        &self,
        images: &[ImageTensor],
        target_class: usize,
    ) -> Result<Vec<ClassScoreVector>> {
        if target_class >= self.model.n_classes() {
            return Err(Error::invalid_argument(format!(
                "target class {target_class} out of range for {} classes",
                self.model.n_classes()
            )));
        }
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(self.batch_size) {
            let scored = match self.model.input_space() {
                ColorSpace::Raw01 => self
                    .model
                    .score_batch(&ScoreRequest::new(chunk, target_class)?)?,
                ColorSpace::Normalized => {
                    let normalized = chunk
                        .iter()
                        .map(|img| normalize(img, &self.norm))
                        .collect::<Result<Vec<_>>>()?;
                    self.model
                        .score_batch(&ScoreRequest::new(&normalized, target_class)?)?
                }
            };
            if scored.len() != chunk.len() {
                return Err(Error::Protocol(format!(
                    "model returned {} score vectors for {} images",
                    scored.len(),
                    chunk.len()
                )));
            }
            out.extend(scored);
        }
        Ok(out)
    }

    /// Target-class scores for raw images.
    pub fn score(&self, images: &[ImageTensor], target_class: usize) -> Result<Vec<f32>> {
        Ok(self
            .score_vectors(images, target_class)?
            .iter()
            .map(ClassScoreVector::target)
            .collect())
    }

    pub fn score_one(&self, image: &ImageTensor, target_class: usize) -> Result<f32> {
        Ok(self.score(std::slice::from_ref(image), target_class)?[0])
    }
}
