//! Thin random phase screens.
//!
//! A diffuser is a random thickness profile `h(rho)`. Light of wavelength
//! `lambda` crossing it picks up the phase `h * (n_index - 1) * 2*pi / lambda`,
//! so the same screen imprints proportionally scaled phases on the pump and on
//! the down-converted photons.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{self, ComplexField, Domain, Grid};
use crate::io;
use crate::stats;

pub const DEFAULT_REFRACTIVE_INDEX: f64 = 1.5;

/// Random thickness map of a thin diffuser.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffuserMap {
    grid: Grid,
    h: Array2<f64>,
    n_index: f64,
    corr_length: f64,
    rms_height: f64,
    seed: u64,
}

/// Everything needed to regenerate or describe a [`DiffuserMap`]; also the
/// JSON sidecar written next to an exported thickness CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffuserSidecar {
    pub n: usize,
    pub pitch: f64,
    pub n_index: f64,
    pub corr_length: f64,
    pub rms_height: f64,
    pub seed: u64,
}

/// Thickness rms that produces `rms_phase` radians at `wavelength`.
pub fn rms_height_for_phase(rms_phase: f64, wavelength: f64, n_index: f64) -> f64 {
    rms_phase * wavelength / (2.0 * PI * (n_index - 1.0))
}

/// Geometric-optics estimate of the rms scattering angle per transverse axis
/// (radians) for a Gaussian-correlated screen with autocorrelation
/// `exp(-r^2 / corr_length^2)` and the given rms phase. Valid once the rms
/// phase is well above one radian.
pub fn estimated_divergence(corr_length: f64, rms_phase: f64, wavelength: f64) -> f64 {
    std::f64::consts::SQRT_2 * rms_phase * wavelength / (2.0 * PI * corr_length)
}

/// Correlation length that yields a per-axis rms scattering angle of
/// `divergence` radians for the given rms phase; inverse of
/// [`estimated_divergence`].
pub fn corr_length_for_divergence(divergence: f64, rms_phase: f64, wavelength: f64) -> f64 {
    std::f64::consts::SQRT_2 * rms_phase * wavelength / (2.0 * PI * divergence)
}

impl DiffuserMap {
    /// Gaussian-correlated random surface: white Gaussian noise smoothed so
    /// that the thickness autocorrelation is `exp(-r^2 / corr_length^2)`, then
    /// mean-removed and rescaled to `rms_height`. Deterministic in `seed`.
    pub fn generate(
        grid: Grid,
        corr_length: f64,
        rms_height: f64,
        n_index: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(corr_length.is_finite() && corr_length >= 2.0 * grid.pitch()) {
            return Err(Error::config(format!(
                "correlation length {corr_length:.4e} m must be at least two grid pitches ({:.4e} m)",
                2.0 * grid.pitch()
            )));
        }
        if !(rms_height.is_finite() && rms_height > 0.0) {
            return Err(Error::config(format!(
                "rms height {rms_height} must be positive"
            )));
        }
        if !(n_index.is_finite() && n_index > 1.0) {
            return Err(Error::config(format!(
                "refractive index {n_index} must exceed 1"
            )));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Array2::from_shape_simple_fn(grid.shape(), || StandardNormal.sample(&mut rng));
        // kernel exp(-2 r^2 / l^2) convolved with itself gives exp(-r^2 / l^2)
        let kernel = Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
            let (x, y) = (grid.rho(ix), grid.rho(iy));
            (-2.0 * (x * x + y * y) / (corr_length * corr_length)).exp()
        });
        let mut h = fft::circular_convolve(&noise, &kernel);
        let mean = h.mean().unwrap_or(0.0);
        h.mapv_inplace(|v| v - mean);
        let rms = (h.mapv(|v| v * v).mean().unwrap_or(0.0)).sqrt();
        if !(rms.is_finite() && rms > 0.0) {
            return Err(Error::Numerical("degenerate diffuser surface".into()));
        }
        let scale = rms_height / rms;
        h.mapv_inplace(|v| v * scale);

        Ok(DiffuserMap {
            grid,
            h,
            n_index,
            corr_length,
            rms_height,
            seed,
        })
    }

    /// A screen of zero thickness everywhere.
    pub fn flat(grid: Grid) -> Self {
        DiffuserMap {
            grid,
            h: Array2::zeros(grid.shape()),
            n_index: DEFAULT_REFRACTIVE_INDEX,
            corr_length: 0.0,
            rms_height: 0.0,
            seed: 0,
        }
    }

    /// Wraps an explicit thickness map.
    pub fn from_thickness(grid: Grid, h: Array2<f64>, sidecar: DiffuserSidecar) -> Result<Self> {
        if h.dim() != grid.shape() {
            return Err(Error::Shape {
                expected: grid.shape(),
                actual: h.dim(),
            });
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::config(
                "diffuser thickness contains non-finite values",
            ));
        }
        Ok(DiffuserMap {
            grid,
            h,
            n_index: sidecar.n_index,
            corr_length: sidecar.corr_length,
            rms_height: sidecar.rms_height,
            seed: sidecar.seed,
        })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn thickness(&self) -> &Array2<f64> {
        &self.h
    }

    pub fn n_index(&self) -> f64 {
        self.n_index
    }

    pub fn corr_length(&self) -> f64 {
        self.corr_length
    }

    pub fn rms_height(&self) -> f64 {
        self.rms_height
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn sidecar(&self) -> DiffuserSidecar {
        DiffuserSidecar {
            n: self.grid.n(),
            pitch: self.grid.pitch(),
            n_index: self.n_index,
            corr_length: self.corr_length,
            rms_height: self.rms_height,
            seed: self.seed,
        }
    }

    /// rms phase (radians) the screen imprints at `wavelength`.
    pub fn rms_phase(&self, wavelength: f64) -> f64 {
        let k = self.phase_per_meter(wavelength);
        (self.h.mapv(|v| (v * k).powi(2)).mean().unwrap_or(0.0)).sqrt()
    }

    fn phase_per_meter(&self, wavelength: f64) -> f64 {
        (self.n_index - 1.0) * 2.0 * PI / wavelength
    }

    /// Phase map `h * (n_index - 1) * 2*pi / wavelength`.
    pub fn transfer_function(&self, wavelength: f64) -> Result<Array2<f64>> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::config(format!(
                "wavelength {wavelength} must be positive"
            )));
        }
        let k = self.phase_per_meter(wavelength);
        Ok(self.h.mapv(|v| v * k))
    }

    /// Complex transmission `exp(i * phase)` at `wavelength`.
    pub fn transmission(&self, wavelength: f64) -> Result<Array2<Complex64>> {
        Ok(self
            .transfer_function(wavelength)?
            .mapv(|p| Complex64::from_polar(1.0, p)))
    }

    /// Empirical 1/e half-width of the thickness autocorrelation, meters,
    /// averaged over the x and y lag axes.
    pub fn measured_corr_length(&self) -> Result<f64> {
        let r = fft::circular_autocorrelation(&self.h);
        let c = self.grid.center_index();
        let peak = r[(c, c)];
        if peak <= 0.0 {
            return Err(Error::Numerical(
                "flat diffuser has no correlation length".into(),
            ));
        }
        let target = (-1.0f64).exp();
        let mut widths = Vec::with_capacity(2);
        for axis in 0..2 {
            let at = |k: usize| {
                if axis == 0 {
                    r[(c, c + k)] / peak
                } else {
                    r[(c + k, c)] / peak
                }
            };
            let k = (1..c)
                .find(|&k| at(k) < target)
                .ok_or_else(|| Error::Numerical("autocorrelation never falls below 1/e".into()))?;
            let (a, b) = (at(k - 1), at(k));
            widths.push(((k - 1) as f64 + (a - target) / (a - b)) * self.grid.pitch());
        }
        Ok(widths.iter().sum::<f64>() / widths.len() as f64)
    }

    /// Writes the thickness map as CSV and the parameters as a JSON sidecar
    /// next to it (same stem, `.json` extension).
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        io::write_matrix_csv(csv_path, &self.h)?;
        io::write_json(&sidecar_path(csv_path), &self.sidecar())
    }

    /// Reads a map written by [`DiffuserMap::save`]; bit-exact replay.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let sidecar: DiffuserSidecar = io::read_json(&sidecar_path(csv_path))?;
        let grid = Grid::new(sidecar.n, sidecar.pitch)?;
        let h = io::read_matrix_csv(csv_path)?;
        Self::from_thickness(grid, h, sidecar)
    }
}

fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Free-function form of [`DiffuserMap::generate`] with the default
/// refractive index.
pub fn generate(grid: Grid, corr_length: f64, rms_height: f64, seed: u64) -> Result<DiffuserMap> {
    DiffuserMap::generate(
        grid,
        corr_length,
        rms_height,
        DEFAULT_REFRACTIVE_INDEX,
        seed,
    )
}

pub fn transfer_function(d: &DiffuserMap, wavelength: f64) -> Result<Array2<f64>> {
    d.transfer_function(wavelength)
}

/// Far-field intensity of `field` after it crosses the diffuser at the
/// field's own wavelength.
pub fn scattered_far_intensity(d: &DiffuserMap, field: &ComplexField) -> Result<Array2<f64>> {
    field.require_domain(Domain::CrystalPlane)?;
    let screened = grid::apply_phase(field, &d.transfer_function(field.wavelength())?)?;
    Ok(grid::far_field(&screened)?.intensity())
}

/// Tilts the input by whole far-field grid steps `(x, y)`, shifts the
/// resulting far-field speckle back by the same amount and returns its Pearson
/// correlation with the untilted speckle. An ideal thin screen gives 1.
pub fn memory_shift_check(
    d: &DiffuserMap,
    pump: &ComplexField,
    tilt_steps: (isize, isize),
) -> Result<f64> {
    let straight = scattered_far_intensity(d, pump)?;
    let tilted_input = grid::apply_phase(pump, &grid::tilt_ramp(pump.grid(), tilt_steps))?;
    let tilted = scattered_far_intensity(d, &tilted_input)?;
    let realigned = fft::circshift(&tilted, (-tilt_steps.1, -tilt_steps.0));
    stats::pearson(&realigned, &straight, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid64() -> Grid {
        Grid::new(64, 10e-6).unwrap()
    }

    #[test]
    fn same_seed_is_bitwise_identical() {
        let a = generate(grid64(), 50e-6, 1e-6, 7).unwrap();
        let b = generate(grid64(), 50e-6, 1e-6, 7).unwrap();
        assert_eq!(a, b);
        let c = generate(grid64(), 50e-6, 1e-6, 8).unwrap();
        assert_ne!(a.thickness(), c.thickness());
    }

    #[test]
    fn preconditions() {
        assert!(generate(grid64(), 50e-6, 0.0, 1).is_err());
        assert!(generate(grid64(), 15e-6, 1e-6, 1).is_err());
        assert!(DiffuserMap::generate(grid64(), 50e-6, 1e-6, 1.0, 1).is_err());
    }

    #[test]
    fn mean_removed_and_rms_set() {
        let d = generate(grid64(), 40e-6, 2e-6, 3).unwrap();
        let h = d.thickness();
        assert!(h.mean().unwrap().abs() < 1e-18);
        let rms = h.mapv(|v| v * v).mean().unwrap().sqrt();
        assert!((rms - 2e-6).abs() / 2e-6 < 1e-12);
    }

    #[test]
    fn flat_screen_is_identity() {
        let d = DiffuserMap::flat(grid64());
        let p = d.transfer_function(404e-9).unwrap();
        assert!(p.iter().all(|&v| v == 0.0));
        assert!(d
            .transmission(808e-9)
            .unwrap()
            .iter()
            .all(|&v| v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn halving_wavelength_doubles_phase_exactly() {
        let d = generate(grid64(), 40e-6, 1e-6, 11).unwrap();
        let a = d.transfer_function(808e-9).unwrap();
        let b = d.transfer_function(404e-9).unwrap();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(2.0 * x, *y);
        }
    }

    #[test]
    fn rms_height_calibration() {
        let h = rms_height_for_phase(2.0 * PI, 404e-9, 1.5);
        assert!((h - 808e-9).abs() < 1e-21);
        let d = generate(grid64(), 40e-6, h, 2).unwrap();
        assert!((d.rms_phase(404e-9) - 2.0 * PI).abs() < 1e-9);
        let l = corr_length_for_divergence(0.01, 3.0, 500e-9);
        assert!((estimated_divergence(l, 3.0, 500e-9) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn zero_tilt_memory_check_is_one() {
        let g = grid64();
        let d = generate(g, 40e-6, 1e-6, 5).unwrap();
        let pump = grid::gaussian_beam(g, 120e-6, (0.0, 0.0), (0.0, 0.0), 404e-9).unwrap();
        assert_eq!(memory_shift_check(&d, &pump, (0, 0)).unwrap(), 1.0);
        assert!(memory_shift_check(&d, &pump, (3, -7)).unwrap() > 0.999999);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.csv");
        let d = DiffuserMap::generate(grid64(), 40e-6, 1.3e-6, 1.45, 99).unwrap();
        d.save(&path).unwrap();
        assert!(dir.path().join("h.json").exists());
        let back = DiffuserMap::load(&path).unwrap();
        assert_eq!(back, d);
    }
}
