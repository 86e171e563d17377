//! Image and saliency primitives shared by every metric.
//!
//! Images are stored row-major, channel-last, in 32-bit floats. Kernel sums
//! and other accumulations run in 64-bit and are rounded on output.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorSpace {
    /// Intensities in `[0, 1]`.
    Raw01,
    /// Per-channel standardized with a [`NormalizationSpec`].
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    space: ColorSpace,
}

impl ImageTensor {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        space: ColorSpace,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid_argument(format!(
                "image dims must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid_argument(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(Error::invalid_argument(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        match space {
            ColorSpace::Raw01 => {
                if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return Err(Error::InvalidData(format!(
                        "raw image value {v} outside [0, 1]"
                    )));
                }
            }
            ColorSpace::Normalized => {
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidData("non-finite image value".into()));
                }
            }
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            space,
        })
    }

    pub fn filled(
        height: usize,
        width: usize,
        channels: usize,
        value: f32,
        space: ColorSpace,
    ) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
            space,
        )
    }

    /// Raw image whose every pixel holds `pixel` (one value per channel).
    pub fn from_pixel(height: usize, width: usize, pixel: &[f32]) -> Result<Self> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(height * width * pixel.len())
            .collect();
        Self::new(height, width, pixel.len(), data, ColorSpace::Raw01)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Channel values of the pixel with row-major index `idx`.
    pub fn pixel(&self, idx: usize) -> &[f32] {
        &self.data[idx * self.channels..(idx + 1) * self.channels]
    }

    /// Copies pixel `idx` (all channels) from `src`. Shapes must agree.
    pub(crate) fn copy_pixel_from(&mut self, src: &ImageTensor, idx: usize) {
        let c = self.channels;
        self.data[idx * c..(idx + 1) * c].copy_from_slice(&src.data[idx * c..(idx + 1) * c]);
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Builds an image without validation. Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<f32>,
        space: ColorSpace,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
            space,
        }
    }

    fn plane(&self, channel: usize) -> Vec<f32> {
        self.data
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    fn from_planes(
        height: usize,
        width: usize,
        planes: &[Vec<f32>],
        space: ColorSpace,
    ) -> ImageTensor {
        let channels = planes.len();
        let mut data = vec![0.0f32; height * width * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = *v;
            }
        }
        ImageTensor::from_parts_unchecked(height, width, channels, data, space)
    }
}

/// Per-pixel relevance grid. Before postprocessing it may hold any finite
/// values; afterwards every value is in `[0, 1]` and the maximum is 1 unless
/// the map is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
    postprocessed: bool,
}

impl SaliencyMap {
    /// Unprocessed relevance grid.
    pub fn raw(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid_argument(format!(
                "map dims must be positive, got {height}x{width}"
            )));
        }
        if data.len() != height * width {
            return Err(Error::invalid_argument(format!(
                "map data length {} does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
            postprocessed: false,
        })
    }

    /// Wraps values that already satisfy the postprocessed invariant.
    pub fn postprocessed(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        let mut map = Self::raw(height, width, data)?;
        check_postprocessed(&map.data)?;
        map.postprocessed = true;
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_postprocessed(&self) -> bool {
        self.postprocessed
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    pub(crate) fn require_postprocessed(&self) -> Result<()> {
        if self.postprocessed {
            Ok(())
        } else {
            Err(Error::InvalidState("saliency map is not postprocessed".into()))
        }
    }

    /// Errors unless the map has the spatial size of `image`.
    pub fn check_matches(&self, image: &ImageTensor) -> Result<()> {
        if self.height != image.height() || self.width != image.width() {
            return Err(Error::invalid_argument(format!(
                "map is {}x{} but image is {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        Ok(())
    }
}

fn check_postprocessed(data: &[f32]) -> Result<()> {
    if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidData(format!(
            "postprocessed value {v} outside [0, 1]"
        )));
    }
    let max = data.iter().copied().fold(0.0f32, f32::max);
    if max != 1.0 && max != 0.0 {
        return Err(Error::InvalidData(format!(
            "postprocessed map has maximum {max}, expected 1 or an all-zero map"
        )));
    }
    Ok(())
}

/// Per-class scores for one image, with the class being explained.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScoreVector {
    pub scores: Vec<f32>,
    pub target_class: usize,
}

impl ClassScoreVector {
    pub fn new(scores: Vec<f32>, target_class: usize) -> Result<Self> {
        if target_class >= scores.len() {
            return Err(Error::invalid_argument(format!(
                "target class {target_class} out of range for {} classes",
                scores.len()
            )));
        }
        if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidData(format!("score {s} outside [0, 1]")));
        }
        Ok(Self {
            scores,
            target_class,
        })
    }

    pub fn target(&self) -> f32 {
        self.scores[self.target_class]
    }

    /// Class with the highest score, lowest id on ties.
    pub fn predicted(&self) -> usize {
        argmax_first(&self.scores)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl NormalizationSpec {
    pub const IMAGENET: NormalizationSpec = NormalizationSpec {
        mean: [0.485, 0.456, 0.406],
        std: [0.229, 0.224, 0.225],
    };

    pub fn new(mean: [f32; 3], std: [f32; 3]) -> Result<Self> {
        if std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid_argument("normalization std must be > 0"));
        }
        Ok(Self { mean, std })
    }
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self::IMAGENET
    }
}

/// Index of the first maximum.
pub(crate) fn argmax_first(values: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Normalized 1-D Gaussian kernel of odd length.
pub fn gaussian_kernel(kernel_size: usize, sigma: f32) -> Result<Vec<f64>> {
    if kernel_size == 0 || kernel_size % 2 == 0 {
        return Err(Error::invalid_argument(format!(
            "kernel size must be odd and >= 1, got {kernel_size}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::invalid_argument(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let radius = (kernel_size / 2) as i64;
    let s = sigma as f64;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * s * s)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / z).collect())
}

/// Separable convolution of one plane with replicate-edge padding.
fn blur_plane(plane: &[f32], height: usize, width: usize, kernel: &[f64]) -> Vec<f32> {
    let radius = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut horizontal = vec![0.0f64; height * width];
    for r in 0..height {
        let row = &plane[r * width..(r + 1) * width];
        for c in 0..width {
            let mut acc = 0.0f64;
            for (k, w) in kernel.iter().enumerate() {
                let cc = clamp(c as isize + k as isize - radius, width);
                acc += w * row[cc] as f64;
            }
            horizontal[r * width + c] = acc;
        }
    }

    let mut out = vec![0.0f32; height * width];
    for r in 0..height {
        for c in 0..width {
            let mut acc = 0.0f64;
            for (k, w) in kernel.iter().enumerate() {
                let rr = clamp(r as isize + k as isize - radius, height);
                acc += w * horizontal[rr * width + c];
            }
            out[r * width + c] = acc as f32;
        }
    }
    out
}

pub fn gaussian_blur(img: &ImageTensor, kernel_size: usize, sigma: f32) -> Result<ImageTensor> {
    let kernel = gaussian_kernel(kernel_size, sigma)?;
    let planes: Vec<Vec<f32>> = (0..img.channels)
        .map(|c| {
            let mut p = blur_plane(&img.plane(c), img.height, img.width, &kernel);
            if img.space == ColorSpace::Raw01 {
                // A convex combination can still round a hair past the bounds.
                p.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
            }
            p
        })
        .collect();
    Ok(ImageTensor::from_planes(
        img.height, img.width, &planes, img.space,
    ))
}

/// Blurs a saliency map's values. The result is a raw (unprocessed) map.
pub(crate) fn blur_map(map: &SaliencyMap, kernel_size: usize, sigma: f32) -> Result<SaliencyMap> {
    let kernel = gaussian_kernel(kernel_size, sigma)?;
    let data = blur_plane(&map.data, map.height, map.width, &kernel);
    SaliencyMap::raw(map.height, map.width, data)
}

pub fn normalize(img: &ImageTensor, spec: &NormalizationSpec) -> Result<ImageTensor> {
    if img.space != ColorSpace::Raw01 {
        return Err(Error::InvalidState("image is already normalized".into()));
    }
    if img.channels != 3 {
        return Err(Error::invalid_argument(format!(
            "normalization needs 3 channels, got {}",
            img.channels
        )));
    }
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|px| {
            (0..3).map(move |c| {
                ((px[c] as f64 - spec.mean[c] as f64) / spec.std[c] as f64) as f32
            })
        })
        .collect();
    Ok(ImageTensor::from_parts_unchecked(
        img.height,
        img.width,
        3,
        data,
        ColorSpace::Normalized,
    ))
}

/// Inverse of [`normalize`]. The result is clamped to `[0, 1]`.
pub fn denormalize(img: &ImageTensor, spec: &NormalizationSpec) -> Result<ImageTensor> {
    if img.space != ColorSpace::Normalized {
        return Err(Error::InvalidState("image is not normalized".into()));
    }
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|px| {
            (0..3).map(move |c| {
                let v = px[c] as f64 * spec.std[c] as f64 + spec.mean[c] as f64;
                (v as f32).clamp(0.0, 1.0)
            })
        })
        .collect();
    Ok(ImageTensor::from_parts_unchecked(
        img.height,
        img.width,
        3,
        data,
        ColorSpace::Raw01,
    ))
}

/// Rescales finite values to `[0, 1]`. A constant grid maps to all zeros.
pub fn minmax_scale(map: &SaliencyMap) -> Result<SaliencyMap> {
    if map.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("relevance grid contains NaN or Inf".into()));
    }
    let (min, max) = map
        .data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        });
    let data = if max > min {
        let (lo, span) = (min as f64, max as f64 - min as f64);
        map.data
            .iter()
            .map(|v| ((*v as f64 - lo) / span) as f32)
            .collect()
    } else {
        vec![0.0; map.data.len()]
    };
    Ok(SaliencyMap {
        height: map.height,
        width: map.width,
        data,
        postprocessed: true,
    })
}

/// Bilinear resampling with half-pixel centers (align-corners off); source
/// coordinates are clamped at the borders.
pub fn resize_bilinear(img: &ImageTensor, out_h: usize, out_w: usize) -> Result<ImageTensor> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid_argument(format!(
            "output dims must be positive, got {out_h}x{out_w}"
        )));
    }
    if out_h == img.height && out_w == img.width {
        return Ok(img.clone());
    }
    let rows = sample_positions(img.height, out_h);
    let cols = sample_positions(img.width, out_w);
    let ch = img.channels;
    let mut data = Vec::with_capacity(out_h * out_w * ch);
    for &(r0, r1, fr) in &rows {
        for &(c0, c1, fc) in &cols {
            for c in 0..ch {
                let at = |r: usize, col: usize| img.data[(r * img.width + col) * ch + c] as f64;
                let top = at(r0, c0) * (1.0 - fc) + at(r0, c1) * fc;
                let bottom = at(r1, c0) * (1.0 - fc) + at(r1, c1) * fc;
                data.push((top * (1.0 - fr) + bottom * fr) as f32);
            }
        }
    }
    Ok(ImageTensor::from_parts_unchecked(
        out_h, out_w, ch, data, img.space,
    ))
}

/// Resizes a single-plane grid, used for mask upsampling.
pub(crate) fn resize_plane(
    plane: &[f32],
    height: usize,
    width: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    let img = ImageTensor::from_parts_unchecked(
        height,
        width,
        1,
        plane.to_vec(),
        ColorSpace::Normalized,
    );
    resize_bilinear(&img, out_h, out_w)
        .expect("output dims are positive")
        .data
}

/// For each output index: (lower source index, upper source index, weight of upper).
fn sample_positions(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn gray(h: usize, w: usize, data: Vec<f32>) -> ImageTensor {
        ImageTensor::new(h, w, 1, data, ColorSpace::Raw01).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageTensor::new(0, 2, 1, vec![], ColorSpace::Raw01).is_err());
        assert!(ImageTensor::new(2, 2, 2, vec![0.0; 8], ColorSpace::Raw01).is_err());
        assert!(ImageTensor::new(2, 2, 1, vec![0.0; 3], ColorSpace::Raw01).is_err());
        assert!(ImageTensor::new(1, 1, 1, vec![1.5], ColorSpace::Raw01).is_err());
        assert!(ImageTensor::new(1, 1, 1, vec![1.5], ColorSpace::Normalized).is_ok());
    }

    #[test]
    fn blur_preserves_constants() {
        let img = ImageTensor::filled(9, 7, 3, 0.4, ColorSpace::Raw01).unwrap();
        for (k, s) in [(1, 1.0), (3, 0.5), (11, 5.0), (21, 2.0)] {
            let out = gaussian_blur(&img, k, s).unwrap();
            for v in out.data() {
                assert_abs_diff_eq!(*v, 0.4, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn blur_impulse_matches_closed_form_kernel() {
        let n = 31;
        let mut data = vec![0.0; n * n];
        data[15 * n + 15] = 1.0;
        let out = gaussian_blur(&gray(n, n, data), 11, 5.0).unwrap();

        // Independent evaluation of exp(-k^2 / (2 * 25)) / Z.
        let g: Vec<f64> = (-5i32..=5).map(|k| (-(k * k) as f64 / 50.0).exp()).collect();
        let z: f64 = g.iter().sum();
        for dr in -5i32..=5 {
            for dc in -5i32..=5 {
                let expected = g[(dr + 5) as usize] * g[(dc + 5) as usize] / (z * z);
                let r = (15 + dr) as usize;
                let c = (15 + dc) as usize;
                assert_abs_diff_eq!(out.data()[r * n + c] as f64, expected, epsilon = 1e-7);
            }
        }
        // Outside the support nothing leaks.
        assert_eq!(out.data()[9 * n + 15], 0.0);
    }

    #[test]
    fn blur_rejects_bad_params() {
        let img = ImageTensor::filled(4, 4, 1, 0.0, ColorSpace::Raw01).unwrap();
        assert!(matches!(
            gaussian_blur(&img, 4, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            gaussian_blur(&img, 3, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            gaussian_blur(&img, 3, -1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let spec = NormalizationSpec::IMAGENET;
        let img = ImageTensor::from_pixel(1, 1, &[0.485, 0.456, 0.406]).unwrap();
        assert_eq!(normalize(&img, &spec).unwrap().data(), &[0.0, 0.0, 0.0]);

        let img = ImageTensor::from_pixel(1, 1, &[1.0, 0.0, 0.0]).unwrap();
        let out = normalize(&img, &spec).unwrap();
        assert_abs_diff_eq!(out.data()[0], (1.0 - 0.485) / 0.229, epsilon = 1e-6);
        assert_eq!(out.space(), ColorSpace::Normalized);

        let img = ImageTensor::filled(2, 2, 3, 0.0, ColorSpace::Raw01).unwrap();
        let out = normalize(&img, &spec).unwrap();
        for px in out.data().chunks(3) {
            for c in 0..3 {
                assert_abs_diff_eq!(px[c], -spec.mean[c] / spec.std[c], epsilon = 1e-6);
            }
        }
        assert!(matches!(normalize(&out, &spec), Err(Error::InvalidState(_))));
    }

    #[test]
    fn minmax_examples() {
        let m = |d: Vec<f32>| SaliencyMap::raw(1, d.len(), d).unwrap();
        assert_eq!(minmax_scale(&m(vec![0.0, 2.0, 4.0])).unwrap().data(), &[0.0, 0.5, 1.0]);
        assert_eq!(minmax_scale(&m(vec![3.0; 4])).unwrap().data(), &[0.0; 4]);
        assert_eq!(minmax_scale(&m(vec![-1.0, 3.0])).unwrap().data(), &[0.0, 1.0]);
        assert!(matches!(
            minmax_scale(&m(vec![0.0, f32::NAN])),
            Err(Error::InvalidData(_))
        ));
        assert!(minmax_scale(&m(vec![1.0])).unwrap().is_postprocessed());
    }

    #[test]
    fn resize_examples() {
        let img = gray(2, 2, vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(resize_bilinear(&img, 2, 2).unwrap(), img);
        // Output column centers map to source x = -0.25, 0.25, 0.75, 1.25.
        let out = resize_bilinear(&img, 2, 4).unwrap();
        assert_eq!(out.data(), &[0.0, 0.25, 0.75, 1.0, 0.0, 0.25, 0.75, 1.0]);

        let c = ImageTensor::filled(5, 3, 3, 0.3, ColorSpace::Raw01).unwrap();
        let out = resize_bilinear(&c, 11, 2).unwrap();
        assert!(out.data().iter().all(|v| (*v - 0.3).abs() < 1e-7));
    }

    #[test]
    fn postprocessed_constructor_checks_invariant() {
        assert!(SaliencyMap::postprocessed(1, 2, vec![0.0, 0.5]).is_err());
        assert!(SaliencyMap::postprocessed(1, 2, vec![0.0, 1.0]).is_ok());
        assert!(SaliencyMap::postprocessed(1, 2, vec![0.0, 0.0]).is_ok());
    }

    fn grid(max_side: usize) -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
        (1..=max_side, 1..=max_side).prop_flat_map(|(h, w)| {
            (Just(h), Just(w), prop::collection::vec(0.0f32..=1.0, h * w))
        })
    }

    proptest! {
        #[test]
        fn blur_is_linear((h, w, x) in grid(12), y in prop::collection::vec(0.0f32..=1.0, 144),
                          a in -2.0f32..2.0, b in -2.0f32..2.0) {
            let y = &y[..h * w];
            let mk = |d: Vec<f32>| ImageTensor::new(h, w, 1, d, ColorSpace::Normalized).unwrap();
            let combo: Vec<f32> = x.iter().zip(y).map(|(p, q)| a * p + b * q).collect();
            let lhs = gaussian_blur(&mk(combo), 5, 1.5).unwrap();
            let bx = gaussian_blur(&mk(x.clone()), 5, 1.5).unwrap();
            let by = gaussian_blur(&mk(y.to_vec()), 5, 1.5).unwrap();
            for i in 0..h * w {
                let rhs = a * bx.data()[i] + b * by.data()[i];
                prop_assert!((lhs.data()[i] - rhs).abs() <= 1e-6);
            }
        }

        #[test]
        fn minmax_is_idempotent((h, w, x) in grid(10), scale in 0.1f32..50.0, shift in -5.0f32..5.0) {
            let raw: Vec<f32> = x.iter().map(|v| v * scale + shift).collect();
            let once = minmax_scale(&SaliencyMap::raw(h, w, raw).unwrap()).unwrap();
            let twice = minmax_scale(&once).unwrap();
            prop_assert_eq!(once.data(), twice.data());
        }

        #[test]
        fn normalize_round_trips((h, w, x) in grid(6)) {
            let data: Vec<f32> = x.iter().flat_map(|v| [*v, 1.0 - *v, *v * 0.5]).collect();
            let img = ImageTensor::new(h, w, 3, data, ColorSpace::Raw01).unwrap();
            let spec = NormalizationSpec::IMAGENET;
            let back = denormalize(&normalize(&img, &spec).unwrap(), &spec).unwrap();
            for (p, q) in img.data().iter().zip(back.data()) {
                prop_assert!((p - q).abs() <= 1e-6);
            }
        }

        #[test]
        fn resize_stays_within_bounds((h, w, x) in grid(8), oh in 1usize..20, ow in 1usize..20) {
            let img = gray(h, w, x.clone());
            let lo = x.iter().copied().fold(f32::INFINITY, f32::min);
            let hi = x.iter().copied().fold(f32::NEG_INFINITY, f32::max);
            let out = resize_bilinear(&img, oh, ow).unwrap();
            prop_assert!(out.data().iter().all(|v| *v >= lo && *v <= hi));
        }
    }
}
