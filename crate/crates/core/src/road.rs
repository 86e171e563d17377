//! Noisy linear interpolation and the ROAD deletion metric.
//!
//! Every masked pixel must equal the weighted average of its in-bounds
//! 8-neighbours plus Gaussian noise. Multiplying each equation by its weight
//! total gives a symmetric, diagonally dominant system over the masked pixels
//! (a weighted graph Laplacian with the unmasked pixels folded into the
//! right-hand side), solved here with conjugate gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::faithfulness::pixel_order;
use crate::image::{ColorSpace, ImageTensor, SaliencyMap};
use crate::model::Scorer;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelMask {
    height: usize,
    width: usize,
    masked: Vec<bool>,
}

impl PixelMask {
    pub fn new(height: usize, width: usize, masked: Vec<bool>) -> Result<Self> {
        if masked.len() != height * width || height == 0 || width == 0 {
            return Err(Error::invalid_argument(format!(
                "mask of {} cells does not fit {height}x{width}",
                masked.len()
            )));
        }
        Ok(Self {
            height,
            width,
            masked,
        })
    }

    /// Masks the given row-major pixel indices.
    pub fn from_indices(height: usize, width: usize, indices: &[usize]) -> Result<Self> {
        let mut masked = vec![false; height * width];
        for &i in indices {
            *masked.get_mut(i).ok_or_else(|| {
                Error::invalid_argument(format!("pixel index {i} out of range"))
            })? = true;
        }
        Self::new(height, width, masked)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        self.masked[idx]
    }

    pub fn count(&self) -> usize {
        self.masked.iter().filter(|m| **m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputationConfig {
    /// Weight of the 4 edge-adjacent neighbours.
    pub direct: f32,
    /// Weight of the 4 corner neighbours.
    pub diagonal: f32,
    pub noise_std: f32,
    /// Relative residual `||b - Ax|| / ||b||` at which CG stops.
    pub solver_tol: f32,
    /// Iteration cap; `None` means 10 per masked pixel.
    pub max_iters: Option<usize>,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        Self {
            direct: 2.0,
            diagonal: 1.0,
            noise_std: 0.01,
            solver_tol: 1e-5,
            max_iters: None,
        }
    }
}

impl ImputationConfig {
    pub fn noiseless() -> Self {
        Self {
            noise_std: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.direct > 0.0) {
            return Err(Error::invalid_argument("direct weight must be > 0"));
        }
        if !(self.diagonal >= 0.0) {
            return Err(Error::invalid_argument("diagonal weight must be >= 0"));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::invalid_argument("noise_std must be >= 0"));
        }
        if !(self.solver_tol > 0.0) {
            return Err(Error::invalid_argument("solver_tol must be > 0"));
        }
        Ok(())
    }
}

const NEIGHBOURS: [(isize, isize, bool); 8] = [
    (-1, 0, true),
    (1, 0, true),
    (0, -1, true),
    (0, 1, true),
    (-1, -1, false),
    (-1, 1, false),
    (1, -1, false),
    (1, 1, false),
];

/// Sparse SPD system over the masked pixels of one mask.
#[derive(Debug, Clone)]
pub struct ImputationSystem {
    /// Row-major pixel index of each unknown.
    unknowns: Vec<usize>,
    /// Weight total per unknown (the diagonal).
    diag: Vec<f64>,
    /// Coupling to other unknowns: (unknown index, weight).
    coupling: Vec<Vec<(usize, f64)>>,
    /// Fixed neighbours: (pixel index, weight).
    fixed: Vec<Vec<(usize, f64)>>,
}

impl ImputationSystem {
    pub fn build(mask: &PixelMask, cfg: &ImputationConfig) -> Result<Self> {
        cfg.validate()?;
        let (h, w) = (mask.height, mask.width);
        let n_masked = mask.count();
        if n_masked == h * w {
            return Err(Error::SingularSystem(
                "every pixel is masked; nothing to interpolate from".into(),
            ));
        }
        let mut slot = vec![usize::MAX; h * w];
        let unknowns: Vec<usize> = (0..h * w).filter(|i| mask.masked[*i]).collect();
        for (k, p) in unknowns.iter().enumerate() {
            slot[*p] = k;
        }

        let mut diag = Vec::with_capacity(unknowns.len());
        let mut coupling = Vec::with_capacity(unknowns.len());
        let mut fixed = Vec::with_capacity(unknowns.len());
        for &p in &unknowns {
            let (r, c) = ((p / w) as isize, (p % w) as isize);
            let mut total = 0.0f64;
            let mut inner = Vec::new();
            let mut outer = Vec::new();
            for (dr, dc, direct) in NEIGHBOURS {
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr >= h as isize || cc >= w as isize {
                    continue;
                }
                let weight = if direct { cfg.direct } else { cfg.diagonal } as f64;
                if weight == 0.0 {
                    continue;
                }
                let q = rr as usize * w + cc as usize;
                total += weight;
                if mask.masked[q] {
                    inner.push((slot[q], weight));
                } else {
                    outer.push((q, weight));
                }
            }
            diag.push(total);
            coupling.push(inner);
            fixed.push(outer);
        }
        Ok(Self {
            unknowns,
            diag,
            coupling,
            fixed,
        })
    }

    pub fn unknowns(&self) -> &[usize] {
        &self.unknowns
    }

    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mut v = self.diag[k] * x[k];
            for (j, wgt) in &self.coupling[k] {
                v -= wgt * x[*j];
            }
            *o = v;
        }
    }

    /// Right-hand side for one channel: fixed neighbour contributions plus
    /// the scaled noise term.
    pub fn rhs(&self, image: &ImageTensor, channel: usize, noise: &[f64]) -> Vec<f64> {
        let ch = image.channels();
        self.fixed
            .iter()
            .zip(&self.diag)
            .zip(noise)
            .map(|((nbrs, total), eps)| {
                nbrs.iter()
                    .map(|(q, wgt)| wgt * image.data()[q * ch + channel] as f64)
                    .sum::<f64>()
                    + total * eps
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `||b - Ax|| / ||b||` (0 for a zero right-hand side).
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Conjugate gradients from a zero start.
pub fn conjugate_gradient(
    system: &ImputationSystem,
    b: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<CgSolution> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(CgSolution {
            x,
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let target = tol * b_norm;

    for it in 0..max_iters {
        if rr.sqrt() <= target {
            return Ok(CgSolution {
                x,
                iterations: it,
                relative_residual: rr.sqrt() / b_norm,
            });
        }
        system.matvec(&p, &mut ap);
        let alpha = rr / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    let residual = rr.sqrt() / b_norm;
    if residual <= tol {
        Ok(CgSolution {
            x,
            iterations: max_iters,
            relative_residual: residual,
        })
    } else {
        Err(Error::SolverFailure {
            iterations: max_iters,
            residual,
        })
    }
}

/// Replaces masked pixels by noisy linear interpolation from their
/// neighbours. Unmasked pixels are untouched; the result is clamped to `[0, 1]`.
pub fn impute(
    image: &ImageTensor,
    mask: &PixelMask,
    cfg: &ImputationConfig,
    seed: u64,
) -> Result<ImageTensor> {
    if image.space() != ColorSpace::Raw01 {
        return Err(Error::InvalidState("imputation works on raw images".into()));
    }
    if mask.height != image.height() || mask.width != image.width() {
        return Err(Error::invalid_argument(format!(
            "mask is {}x{} but image is {}x{}",
            mask.height,
            mask.width,
            image.height(),
            image.width()
        )));
    }
    let system = ImputationSystem::build(mask, cfg)?;
    let n = system.unknowns.len();
    if n == 0 {
        return Ok(image.clone());
    }
    let max_iters = cfg.max_iters.unwrap_or(10 * n);
    let ch = image.channels();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (cfg.noise_std > 0.0).then(|| {
        Normal::new(0.0, cfg.noise_std as f64).expect("validated noise_std")
    });

    let mut out = image.clone();
    for c in 0..ch {
        let noise: Vec<f64> = match &normal {
            Some(dist) => (0..n).map(|_| dist.sample(&mut rng)).collect(),
            None => vec![0.0; n],
        };
        let b = system.rhs(image, c, &noise);
        let sol = conjugate_gradient(&system, &b, cfg.solver_tol as f64, max_iters)?;
        let data = out.data_mut();
        for (p, v) in system.unknowns.iter().zip(&sol.x) {
            data[p * ch + c] = (*v as f32).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

pub fn default_fractions() -> Vec<f32> {
    (1..=9).map(|i| i as f32 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadScore {
    pub fractions: Vec<f32>,
    pub scores: Vec<f32>,
    /// Mean target score over fractions; lower means a more faithful map.
    pub mean: f64,
}

/// Masks the most relevant `f` of pixels for each fraction, imputes them,
/// and re-scores. Fraction `i` uses noise seed `seed + i`.
pub fn road_score(
    scorer: &Scorer<'_>,
    image: &ImageTensor,
    map: &SaliencyMap,
    fractions: &[f32],
    cfg: &ImputationConfig,
    seed: u64,
    target: usize,
) -> Result<RoadScore> {
    if fractions.is_empty() {
        return Err(Error::invalid_argument("ROAD needs at least one fraction"));
    }
    if fractions.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
        return Err(Error::invalid_argument("ROAD fractions must lie in (0, 1)"));
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid_argument("ROAD fractions must be ascending"));
    }
    map.check_matches(image)?;
    map.require_postprocessed()?;

    let order = pixel_order(map);
    let n = order.len();
    let imputed = fractions
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let k = ((*f as f64) * n as f64).round() as usize;
            let mask = PixelMask::from_indices(image.height(), image.width(), &order[..k])?;
            impute(image, &mask, cfg, seed.wrapping_add(i as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores = scorer.score(&imputed, target)?;
    let mean = scores.iter().map(|s| *s as f64).sum::<f64>() / scores.len() as f64;
    Ok(RoadScore {
        fractions: fractions.to_vec(),
        scores,
        mean,
    })
}
