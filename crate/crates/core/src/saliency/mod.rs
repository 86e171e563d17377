//! Black-box explanation generation and map postprocessing.

mod kde;
mod occlusion;
mod rise;

pub use kde::{default_eval_points, sparsity_kde, KdeCurve, DEFAULT_BANDWIDTH, DEFAULT_EVAL_POINTS};
pub use occlusion::{occlusion, window_starts, OcclusionConfig};
pub use rise::{rise, rise_mask, weighted_mask_sum, RiseConfig};

use crate::error::{Error, Result};
use crate::image::{blur_map, minmax_scale, SaliencyMap};

/// Drops negative relevance, then min-max scales to `[0, 1]`.
pub fn postprocess(raw: &SaliencyMap) -> Result<SaliencyMap> {
    if raw.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("relevance grid contains NaN or Inf".into()));
    }
    let clamped: Vec<f32> = raw.data().iter().map(|v| v.max(0.0)).collect();
    minmax_scale(&SaliencyMap::raw(raw.height(), raw.width(), clamped)?)
}

/// Gaussian-blurs a postprocessed map and rescales it, turning isolated
/// spikes into smooth blobs.
pub fn coarsen(map: &SaliencyMap, kernel_size: usize, sigma: f32) -> Result<SaliencyMap> {
    map.require_postprocessed()?;
    minmax_scale(&blur_map(map, kernel_size, sigma)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(d: Vec<f32>) -> SaliencyMap {
        SaliencyMap::raw(1, d.len(), d).unwrap()
    }

    #[test]
    fn postprocess_examples() {
        assert_eq!(postprocess(&raw(vec![-3.0, 0.0, 6.0])).unwrap().data(), &[0.0, 0.0, 1.0]);
        assert_eq!(postprocess(&raw(vec![-3.0, -1.0])).unwrap().data(), &[0.0, 0.0]);
        assert_eq!(postprocess(&raw(vec![1.0, 3.0])).unwrap().data(), &[0.0, 1.0]);
        assert!(matches!(
            postprocess(&raw(vec![1.0, f32::NAN])),
            Err(Error::InvalidData(_))
        ));
    }

    #[test]
    fn coarsen_plateau_interior_unchanged() {
        let n = 40;
        let mut d = vec![0.0f32; n * n];
        for r in 5..35 {
            for c in 5..35 {
                d[r * n + c] = 1.0;
            }
        }
        let map = SaliencyMap::postprocessed(n, n, d).unwrap();
        let out = coarsen(&map, 11, 5.0).unwrap();
        // Points at least 5 pixels inside the plateau see only plateau values.
        for r in 10..30 {
            for c in 10..30 {
                assert!((out.get(r, c) - 1.0).abs() < 1e-6, "({r},{c}) = {}", out.get(r, c));
            }
        }
    }

    #[test]
    fn coarsen_spike_becomes_gaussian_bump() {
        let n = 21;
        let mut d = vec![0.0f32; n * n];
        d[10 * n + 10] = 1.0;
        let out = coarsen(&SaliencyMap::postprocessed(n, n, d).unwrap(), 11, 5.0).unwrap();
        assert_eq!(out.get(10, 10), 1.0);
        // Impulse response after min-max: g(dr) g(dc) / g(0)^2, shifted by the zero floor.
        let g = |k: i32| (-(k * k) as f64 / 50.0).exp();
        let z: f64 = (-5..=5).map(g).sum();
        let peak = 1.0 / (z * z);
        let at = |dr: i32, dc: i32| g(dr) * g(dc) / (z * z) / peak;
        for (dr, dc) in [(0, 3), (2, 2), (-4, 1), (5, 5)] {
            let v = out.get((10 + dr) as usize, (10 + dc) as usize) as f64;
            assert!((v - at(dr, dc)).abs() < 1e-6);
        }
        assert_eq!(out.get(0, 0), 0.0);
    }

    #[test]
    fn coarsen_zero_map_stays_zero() {
        let map = SaliencyMap::postprocessed(5, 5, vec![0.0; 25]).unwrap();
        assert_eq!(coarsen(&map, 3, 1.0).unwrap().data(), &[0.0; 25]);
        let unprocessed = SaliencyMap::raw(5, 5, vec![0.0; 25]).unwrap();
        assert!(coarsen(&unprocessed, 3, 1.0).is_err());
    }
}
