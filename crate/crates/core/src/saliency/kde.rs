use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::SaliencyMap;

pub const DEFAULT_BANDWIDTH: f32 = 0.05;
pub const DEFAULT_EVAL_POINTS: usize = 201;

/// Gaussian kernel density estimate of relevance values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub eval_points: Vec<f32>,
    pub densities: Vec<f32>,
    pub bandwidth: f32,
}

/// `n` evenly spaced points on `[0, 1]`.
pub fn default_eval_points(n: usize) -> Vec<f32> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..n).map(|i| (i as f64 / (n - 1) as f64) as f32).collect(),
    }
}

/// Density of every pixel value of every map, pooled:
/// `f(t) = 1/(n h) * sum_i phi((t - x_i) / h)`.
pub fn sparsity_kde(maps: &[SaliencyMap], bandwidth: f32, eval_points: &[f32]) -> Result<KdeCurve> {
    if maps.is_empty() {
        return Err(Error::invalid_argument("KDE needs at least one map"));
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::invalid_argument(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }

    // Postprocessed maps repeat values heavily (zeros especially), so the sum
    // runs over distinct values weighted by multiplicity.
    let mut values: Vec<f32> = maps.iter().flat_map(|m| m.data().iter().copied()).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("map contains NaN or Inf".into()));
    }
    let n = values.len() as f64;
    values.sort_unstable_by(f32::total_cmp);
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for v in values {
        match distinct.last_mut() {
            Some((x, count)) if *x == v as f64 => *count += 1.0,
            _ => distinct.push((v as f64, 1.0)),
        }
    }

    let h = bandwidth as f64;
    let norm = 1.0 / (n * h * (2.0 * PI).sqrt());
    let densities = eval_points
        .par_iter()
        .map(|t| {
            let t = *t as f64;
            let s: f64 = distinct
                .iter()
                .map(|(x, count)| {
                    let u = (t - x) / h;
                    count * (-0.5 * u * u).exp()
                })
                .sum();
            (s * norm) as f32
        })
        .collect();

    Ok(KdeCurve {
        eval_points: eval_points.to_vec(),
        densities,
        bandwidth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(values: Vec<f32>) -> SaliencyMap {
        SaliencyMap::raw(1, values.len(), values).unwrap()
    }

    fn phi(u: f64) -> f64 {
        (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
    }

    #[test]
    fn single_value_peak() {
        let h = 0.05f32;
        let kde = sparsity_kde(&[map(vec![0.3])], h, &[0.3]).unwrap();
        let expected = 1.0 / (h as f64 * (2.0 * PI).sqrt());
        assert!((kde.densities[0] as f64 - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn symmetric_pair_at_midpoint() {
        let h = 0.1f64;
        let kde = sparsity_kde(&[map(vec![0.2]), map(vec![0.8])], h as f32, &[0.5]).unwrap();
        let expected = 2.0 * (1.0 / (2.0 * h)) * phi(0.3 / h);
        assert!((kde.densities[0] as f64 - expected).abs() < 1e-6 * expected.max(1e-3));
    }

    #[test]
    fn integrates_to_one() {
        let values: Vec<f32> = (0..100).map(|i| (i as f32 / 99.0).powi(3)).collect();
        let grid: Vec<f32> = (0..4001).map(|i| -1.0 + 3.0 * i as f32 / 4000.0).collect();
        let kde = sparsity_kde(&[map(values)], 0.05, &grid).unwrap();
        let step = 3.0 / 4000.0;
        let integral: f64 = kde
            .densities
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]) as f64 * step)
            .sum();
        assert!((integral - 1.0).abs() < 1e-2, "integral {integral}");
    }

    #[test]
    fn matches_naive_sum() {
        let maps = vec![map(vec![0.0, 0.0, 0.5, 1.0]), map(vec![0.25, 0.0, 1.0, 0.7])];
        let points = default_eval_points(11);
        let kde = sparsity_kde(&maps, 0.08, &points).unwrap();
        let all: Vec<f64> = maps.iter().flat_map(|m| m.data().iter().map(|v| *v as f64)).collect();
        for (t, d) in points.iter().zip(&kde.densities) {
            let naive: f64 = all.iter().map(|x| phi((*t as f64 - x) / 0.08)).sum::<f64>()
                / (all.len() as f64 * 0.08);
            assert!((*d as f64 - naive).abs() < 1e-5 * naive.max(1.0));
        }
    }

    #[test]
    fn rejects_empty_and_bad_bandwidth() {
        assert!(sparsity_kde(&[], 0.1, &[0.0]).is_err());
        assert!(sparsity_kde(&[map(vec![0.1])], 0.0, &[0.0]).is_err());
    }

    #[test]
    fn default_grid() {
        let g = default_eval_points(DEFAULT_EVAL_POINTS);
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[200], 1.0);
        assert_eq!(g[100], 0.5);
    }
}
