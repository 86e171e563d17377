//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Direct solve of the noiseless imputation equations
/// `sum_q w_pq (x_p - x_q) = 0` for every masked `p`, one channel.
/// Returns the full channel plane with masked pixels filled in.
pub fn dense_impute(
    plane: &[f64],
    h: usize,
    w: usize,
    masked: &[bool],
    direct: f64,
    diagonal: f64,
) -> Vec<f64> {
    let unknowns: Vec<usize> = (0..h * w).filter(|&i| masked[i]).collect();
    let slot = |p: usize| unknowns.iter().position(|&u| u == p);
    let n = unknowns.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (k, &p) in unknowns.iter().enumerate() {
        let (r, c) = ((p / w) as i64, (p % w) as i64);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (rr, cc) = (r + dr, c + dc);
                if rr < 0 || cc < 0 || rr >= h as i64 || cc >= w as i64 {
                    continue;
                }
                let wt = if dr == 0 || dc == 0 { direct } else { diagonal };
                if wt == 0.0 {
                    continue;
                }
                let q = (rr as usize) * w + cc as usize;
                a[(k, k)] += wt;
                match slot(q) {
                    Some(j) => a[(k, j)] -= wt,
                    None => b[k] += wt * plane[q],
                }
            }
        }
    }
    let x = a.lu().solve(&b).expect("imputation system is nonsingular");
    let mut out = plane.to_vec();
    for (k, &p) in unknowns.iter().enumerate() {
        out[p] = x[k];
    }
    out
}

/// Pixel order by descending value, ties by index, via a plain comparison sort.
pub fn descending_order(values: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap().then(a.cmp(&b)));
    idx
}

/// Region mean of an interleaved image, straight from the definition.
pub fn region_mean(data: &[f32], w: usize, ch: usize, region: &[(usize, usize)]) -> f64 {
    let mut s = 0.0f64;
    for &(r, c) in region {
        for k in 0..ch {
            s += data[(r * w + c) * ch + k] as f64;
        }
    }
    s / (region.len() * ch) as f64
}

/// Scores after moving the first `k` pixels of `order` from `source` into
/// `start`, for every `k` in `0..=n`.
pub fn brute_curve(
    start: &[f32],
    source: &[f32],
    order: &[usize],
    w: usize,
    ch: usize,
    region: &[(usize, usize)],
) -> Vec<f64> {
    (0..=order.len())
        .map(|k| {
            let mut img = start.to_vec();
            for &p in &order[..k] {
                img[p * ch..(p + 1) * ch].copy_from_slice(&source[p * ch..(p + 1) * ch]);
            }
            region_mean(&img, w, ch, region)
        })
        .collect()
}

/// Average ranks by counting: `1 + #less + (#equal - 1) / 2`.
pub fn count_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|v| {
            let less = x.iter().filter(|u| *u < v).count() as f64;
            let equal = x.iter().filter(|u| *u == v).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson correlation with two-pass means.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&count_ranks(x), &count_ranks(y))
}
