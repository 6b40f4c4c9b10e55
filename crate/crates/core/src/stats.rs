//! Small statistics helpers over 2-D maps.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Pearson correlation of two equally shaped maps, optionally restricted to
/// the pixels where `mask` is true.
pub fn pearson(a: &Array2<f64>, b: &Array2<f64>, mask: Option<&Array2<bool>>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Shape {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    if let Some(m) = mask {
        if m.dim() != a.dim() {
            return Err(Error::Shape {
                expected: a.dim(),
                actual: m.dim(),
            });
        }
    }
    let selected = |idx: (usize, usize)| mask.is_none_or(|m| m[idx]);
    let mut n = 0usize;
    let (mut sa, mut sb) = (0.0, 0.0);
    for ((idx, &x), &y) in a.indexed_iter().zip(b.iter()) {
        if selected(idx) {
            n += 1;
            sa += x;
            sb += y;
        }
    }
    if n < 2 {
        return Err(Error::UndefinedCorrelation(format!(
            "support contains {n} pixel(s)"
        )));
    }
    let (ma, mb) = (sa / n as f64, sb / n as f64);
    let (mut cov, mut va, mut vb) = (0.0_f64, 0.0_f64, 0.0_f64);
    for ((idx, &x), &y) in a.indexed_iter().zip(b.iter()) {
        if selected(idx) {
            let (dx, dy) = (x - ma, y - mb);
            cov += dx * dy;
            va += dx * dx;
            vb += dy * dy;
        }
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "map is constant over the support".into(),
        ));
    }
    Ok((cov / (va * vb).sqrt()).clamp(-1.0, 1.0))
}

/// Mean of the pixels selected by `mask`.
pub fn masked_mean(a: &Array2<f64>, mask: &Array2<bool>) -> Option<f64> {
    let (sum, count) = a
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

/// Index `(row, col)` of the largest value; first occurrence wins.
pub fn argmax(a: &Array2<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    let mut best_v = f64::NEG_INFINITY;
    for (idx, &v) in a.indexed_iter() {
        if v > best_v {
            best_v = v;
            best = idx;
        }
    }
    best
}

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and a unit-mean negative exponential.
pub fn ks_distance_exponential(samples: &[f64]) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let cdf = 1.0 - (-x).exp();
            let lo = i as f64 / n;
            let hi = (i + 1) as f64 / n;
            (cdf - lo).abs().max((hi - cdf).abs())
        })
        .fold(0.0, f64::max)
}
