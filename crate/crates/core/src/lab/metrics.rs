use std::collections::BTreeMap;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fft;

pub use crate::stats::pearson;

/// Smoothing width, in pixels, used to extract the speckle envelope.
pub const ENVELOPE_SMOOTH_PX: f64 = 6.0;
/// Fraction of the smoothed maximum that bounds the envelope support.
pub const ENVELOPE_LEVEL: f64 = 0.5;
/// Width of the local-mean estimate removed before measuring grains.
const BACKGROUND_SMOOTH_PX: f64 = 8.0;

/// Comparison metrics for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub pearson_pump_vs_coinc: f64,
    /// Detector-plane speckle grain FWHM, meters.
    pub grain_size_pump: f64,
    pub grain_size_coinc: f64,
    pub scale_ratio: f64,
    pub enhancement_pump: f64,
    pub enhancement_coinc: f64,
    /// Signal position of the optimized coincidence maximum, grid steps.
    pub coinc_argmax_steps: (isize, isize),
    pub expected_focus_steps: (isize, isize),
    /// Chebyshev distance between the two, grid steps.
    pub localization_error_steps: usize,
    pub envelope_pixels: usize,
}

/// Support of the speckle envelope: pixels where the smoothed map reaches
/// half of its maximum.
pub fn envelope_mask(map: &Array2<f64>) -> Array2<bool> {
    let smooth = fft::gaussian_smooth(map, ENVELOPE_SMOOTH_PX);
    let max = smooth.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    smooth.mapv(|v| v >= ENVELOPE_LEVEL * max)
}

/// Radially averaged profile of a centred 2-D array, one entry per distinct
/// squared radius up to `max_r2`.
fn radial_profile(a: &Array2<f64>, max_r2: usize) -> Vec<(f64, f64)> {
    let (nr, nc) = a.dim();
    let (cr, cc) = ((nr / 2) as isize, (nc / 2) as isize);
    let mut bins: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for ((r, c), &v) in a.indexed_iter() {
        let dr = r as isize - cr;
        let dc = c as isize - cc;
        let r2 = (dr * dr + dc * dc) as usize;
        if r2 <= max_r2 {
            let e = bins.entry(r2).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    bins.into_iter()
        .map(|(r2, (s, k))| ((r2 as f64).sqrt(), s / k as f64))
        .collect()
}

/// Speckle grain size: FWHM of the radially averaged autocorrelation peak of
/// the intensity fluctuations, in pixels.
pub fn grain_size_px(map: &Array2<f64>) -> Result<f64> {
    let (nr, nc) = map.dim();
    if nr < 8 || nc < 8 {
        return Err(Error::Resolution(format!("map {nr}x{nc} is too small")));
    }
    if map.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("map contains non-finite values".into()));
    }
    let background = fft::gaussian_smooth(map, BACKGROUND_SMOOTH_PX);
    let fluct = map - &background;
    let ac = fft::circular_autocorrelation(&fluct);
    let zero = ac[(nr / 2, nc / 2)];
    if zero.is_nan() || zero <= 0.0 {
        return Err(Error::UndefinedCorrelation(
            "map has no intensity fluctuations".into(),
        ));
    }
    let limit = (nr.min(nc) / 4).min(32);
    let profile = radial_profile(&ac, limit * limit);
    for w in profile.windows(2) {
        let (r0, p0) = (w[0].0, w[0].1 / zero);
        let (r1, p1) = (w[1].0, w[1].1 / zero);
        if p1 <= 0.5 {
            let r_half = r0 + (p0 - 0.5) / (p0 - p1) * (r1 - r0);
            let fwhm = 2.0 * r_half;
            if fwhm < 2.0 {
                return Err(Error::Resolution(format!(
                    "autocorrelation peak is {fwhm:.2} px wide; at least 2 px are needed"
                )));
            }
            return Ok(fwhm);
        }
    }
    Err(Error::Resolution(format!(
        "autocorrelation does not fall to half maximum within {limit} px"
    )))
}

/// Speckle grain size in detector-plane meters; `axis_calibration` is the
/// size of one pixel.
pub fn grain_size(map: &Array2<f64>, axis_calibration: f64) -> Result<f64> {
    if !(axis_calibration.is_finite() && axis_calibration > 0.0) {
        return Err(Error::Config(format!(
            "axis calibration {axis_calibration} must be positive"
        )));
    }
    Ok(grain_size_px(map)? * axis_calibration)
}
