//! Insertion and deletion curves.
//!
//! Pixels are perturbed most-relevant first, either one at a time or in
//! square neighbourhoods around the current most relevant pixel. The
//! perturbation happens in raw space; the [`Scorer`] converts each
//! intermediate image to the model's input space.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{gaussian_blur, ColorSpace, ImageTensor, SaliencyMap};
use crate::model::Scorer;

pub const DEFAULT_STEP_FRACTION: f32 = 0.01;
pub const DEFAULT_BLUR_KERNEL: usize = 11;
pub const DEFAULT_BLUR_SIGMA: f32 = 5.0;

/// Replacement content for perturbed pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaselineKind {
    /// The raw value the model reads as zero (dataset mean after normalization).
    DatasetMean,
    Blur { kernel_size: usize, sigma: f32 },
    UniformNoise { seed: u64 },
}

impl BaselineKind {
    pub fn blur() -> Self {
        BaselineKind::Blur {
            kernel_size: DEFAULT_BLUR_KERNEL,
            sigma: DEFAULT_BLUR_SIGMA,
        }
    }

    /// Short label used in file names and table headers.
    pub fn label(&self) -> &'static str {
        match self {
            BaselineKind::DatasetMean => "mean",
            BaselineKind::Blur { .. } => "blur",
            BaselineKind::UniformNoise { .. } => "uniform",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Granularity {
    Pixel,
    /// `(2 * radius + 1)^2` neighbourhood; radius 4 is a 9x9 window.
    Region { radius: usize },
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Granularity::Pixel => write!(f, "pixel"),
            Granularity::Region { radius } => write!(f, "region{radius}"),
        }
    }
}

/// Score as a function of the perturbed pixel fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub xs: Vec<f32>,
    pub ys: Vec<f32>,
}

impl Curve {
    pub fn new(xs: Vec<f32>, ys: Vec<f32>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::invalid_argument(format!(
                "curve needs >= 2 matching points, got {} xs and {} ys",
                xs.len(),
                ys.len()
            )));
        }
        if xs[0] != 0.0 || *xs.last().unwrap() != 1.0 {
            return Err(Error::invalid_argument("curve xs must span [0, 1]"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid_argument("curve xs must be strictly increasing"));
        }
        Ok(Self { xs, ys })
    }
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &Curve) -> f64 {
    curve
        .xs
        .windows(2)
        .zip(curve.ys.windows(2))
        .map(|(x, y)| (x[1] as f64 - x[0] as f64) * (y[0] as f64 + y[1] as f64) / 2.0)
        .sum()
}

/// Builds the fully perturbed image for `kind`.
///
/// `zero_point` is the raw value per channel the model reads as zero; see
/// [`Scorer::zero_point`].
pub fn make_baseline(image: &ImageTensor, kind: &BaselineKind, zero_point: &[f32]) -> Result<ImageTensor> {
    if image.space() != ColorSpace::Raw01 {
        return Err(Error::InvalidState("baselines are built from raw images".into()));
    }
    match kind {
        BaselineKind::DatasetMean => {
            if zero_point.len() != image.channels() {
                return Err(Error::invalid_argument(format!(
                    "zero point has {} channels, image has {}",
                    zero_point.len(),
                    image.channels()
                )));
            }
            ImageTensor::from_pixel(image.height(), image.width(), zero_point)
        }
        BaselineKind::Blur { kernel_size, sigma } => gaussian_blur(image, *kernel_size, *sigma),
        BaselineKind::UniformNoise { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let data = (0..image.data().len())
                .map(|_| rng.random::<f32>())
                .collect();
            ImageTensor::new(
                image.height(),
                image.width(),
                image.channels(),
                data,
                ColorSpace::Raw01,
            )
        }
    }
}

/// Pixel indices sorted by descending relevance, ties in row-major order.
pub fn pixel_order(map: &SaliencyMap) -> Vec<usize> {
    let data = map.data();
    let mut idx: Vec<usize> = (0..data.len()).collect();
    // Stable sort keeps row-major order among equal values.
    idx.sort_by(|a, b| data[*b].total_cmp(&data[*a]));
    idx
}

/// Groups of row-major pixel indices in perturbation order. Groups are
/// disjoint and together cover every pixel.
pub fn perturbation_order(map: &SaliencyMap, granularity: Granularity) -> Vec<Vec<usize>> {
    let order = pixel_order(map);
    match granularity {
        Granularity::Pixel => order.into_iter().map(|i| vec![i]).collect(),
        Granularity::Region { radius } => {
            let (h, w) = (map.height(), map.width());
            let mut taken = vec![false; h * w];
            let mut groups = Vec::new();
            for seed in order {
                if taken[seed] {
                    continue;
                }
                let (r, c) = (seed / w, seed % w);
                let mut group = Vec::new();
                for rr in r.saturating_sub(radius)..(r + radius + 1).min(h) {
                    for cc in c.saturating_sub(radius)..(c + radius + 1).min(w) {
                        let i = rr * w + cc;
                        if !taken[i] {
                            taken[i] = true;
                            group.push(i);
                        }
                    }
                }
                groups.push(group);
            }
            groups
        }
    }
}

/// Settings shared by insertion and deletion runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveConfig {
    pub baseline: BaselineKind,
    pub granularity: Granularity,
    pub step_fraction: f32,
}

impl CurveConfig {
    pub fn new(baseline: BaselineKind, granularity: Granularity) -> Self {
        Self {
            baseline,
            granularity,
            step_fraction: DEFAULT_STEP_FRACTION,
        }
    }

    pub fn with_step(mut self, step_fraction: f32) -> Self {
        self.step_fraction = step_fraction;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_fraction > 0.0 && self.step_fraction <= 1.0) {
            return Err(Error::invalid_argument(format!(
                "step_fraction must be in (0, 1], got {}",
                self.step_fraction
            )));
        }
        if let Granularity::Region { radius: 0 } = self.granularity {
            return Err(Error::invalid_argument("region radius must be >= 1"));
        }
        Ok(())
    }
}

/// Walks `groups`, copying pixels from `source` into `start`, and scores
/// the image at 0, at every crossing of a `step_fraction` multiple, and at 1.
fn walk_curve(
    scorer: &Scorer<'_>,
    start: ImageTensor,
    source: &ImageTensor,
    groups: &[Vec<usize>],
    step_fraction: f32,
    target: usize,
) -> Result<Curve> {
    let n = start.n_pixels();
    // Widen through the shortest decimal form so 0.3f32 means 0.3, not 0.30000001.
    let step = step_fraction.to_string().parse::<f64>().unwrap_or(step_fraction as f64);
    let step_pixels = step * n as f64;
    // Smallest count that crosses the j-th multiple. The relative slack
    // absorbs f32 representation error, so a step of 1/n means one pixel.
    let threshold = |j: u64| {
        let t = j as f64 * step_pixels;
        (t - 1e-6 * t - 1e-9).ceil() as usize
    };

    let mut xs = vec![0.0f32];
    let mut pending = vec![start.clone()];
    let mut ys = Vec::new();
    let mut current = start;
    let mut done = 0usize;
    let mut next_mark = 1u64;

    for (gi, group) in groups.iter().enumerate() {
        for &p in group {
            current.copy_pixel_from(source, p);
        }
        done += group.len();
        let last = gi + 1 == groups.len();
        if done >= threshold(next_mark) || last {
            xs.push((done as f64 / n as f64) as f32);
            pending.push(current.clone());
            while threshold(next_mark) <= done {
                next_mark += 1;
            }
        }
        if pending.len() >= scorer.batch_size() {
            ys.extend(scorer.score(&pending, target)?);
            pending.clear();
        }
    }
    if !pending.is_empty() {
        ys.extend(scorer.score(&pending, target)?);
    }
    Curve::new(xs, ys)
}

fn check_inputs(image: &ImageTensor, map: &SaliencyMap, cfg: &CurveConfig) -> Result<()> {
    cfg.validate()?;
    map.check_matches(image)?;
    map.require_postprocessed()?;
    if image.space() != ColorSpace::Raw01 {
        return Err(Error::InvalidState("curves perturb raw images".into()));
    }
    Ok(())
}

/// Starts from `image` and replaces pixels with baseline content.
pub fn deletion_curve(
    scorer: &Scorer<'_>,
    image: &ImageTensor,
    map: &SaliencyMap,
    cfg: &CurveConfig,
    target: usize,
) -> Result<Curve> {
    check_inputs(image, map, cfg)?;
    let baseline = make_baseline(image, &cfg.baseline, &scorer.zero_point(image.channels()))?;
    let groups = perturbation_order(map, cfg.granularity);
    walk_curve(scorer, image.clone(), &baseline, &groups, cfg.step_fraction, target)
}

/// Starts from the baseline and restores original pixels.
pub fn insertion_curve(
    scorer: &Scorer<'_>,
    image: &ImageTensor,
    map: &SaliencyMap,
    cfg: &CurveConfig,
    target: usize,
) -> Result<Curve> {
    check_inputs(image, map, cfg)?;
    let baseline = make_baseline(image, &cfg.baseline, &scorer.zero_point(image.channels()))?;
    let groups = perturbation_order(map, cfg.granularity);
    walk_curve(scorer, baseline, image, &groups, cfg.step_fraction, target)
}
