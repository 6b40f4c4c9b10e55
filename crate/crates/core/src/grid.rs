//! Sampled transverse planes, beam synthesis and crystal-plane to far-field
//! propagation.
//!
//! Arrays are indexed `[row, col] = [y, x]`. Sample `i` along either axis sits
//! at `rho_i = (i - n/2) * pitch` in the crystal plane and at
//! `q_i = (i - n/2) * 2*pi / (n * pitch)` in the far field, so both axes are
//! symmetric about the centre sample `n/2`.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// A square sampling grid shared by the crystal plane and the far field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct Grid {
    n: usize,
    pitch: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSpec {
    n: usize,
    pitch: f64,
}

impl TryFrom<GridSpec> for Grid {
    type Error = Error;

    fn try_from(spec: GridSpec) -> Result<Self> {
        Grid::new(spec.n, spec.pitch)
    }
}

impl From<Grid> for GridSpec {
    fn from(g: Grid) -> Self {
        GridSpec {
            n: g.n,
            pitch: g.pitch,
        }
    }
}

impl Default for Grid {
    /// 512 samples at 10 µm (5.12 mm field of view).
    fn default() -> Self {
        Grid {
            n: 512,
            pitch: 10e-6,
        }
    }
}

/// Nearest grid sample to a requested wavevector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnappedQ {
    /// Offset from the centre sample, `(x, y)` in grid steps.
    pub steps: (isize, isize),
    /// Wavevector actually used, rad/m.
    pub q: (f64, f64),
    /// Distance between the requested and the snapped wavevector, in steps.
    pub snap_distance: f64,
}

impl Grid {
    pub fn new(n: usize, pitch: f64) -> Result<Self> {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::config(format!(
                "grid size n={n} must be a power of two and at least 8"
            )));
        }
        if !(pitch.is_finite() && pitch > 0.0) {
            return Err(Error::config(format!(
                "grid pitch {pitch} must be positive"
            )));
        }
        Ok(Grid { n, pitch })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.n)
    }

    /// Side length of the crystal-plane window, meters.
    pub fn extent(&self) -> f64 {
        self.n as f64 * self.pitch
    }

    /// Far-field sample spacing, rad/m.
    pub fn dq(&self) -> f64 {
        2.0 * PI / self.extent()
    }

    pub fn center_index(&self) -> usize {
        self.n / 2
    }

    /// Crystal-plane coordinate of sample `i`, meters.
    pub fn rho(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.pitch
    }

    /// Far-field wavevector of sample `i`, rad/m.
    pub fn q(&self, i: usize) -> f64 {
        (i as f64 - (self.n / 2) as f64) * self.dq()
    }

    pub fn q_axis(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.q(i)).collect()
    }

    pub fn rho_axis(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.rho(i)).collect()
    }

    /// Array index `(row, col)` of a wavevector given in steps from the centre.
    /// Wraps circularly.
    pub fn index_of_steps(&self, steps: (isize, isize)) -> (usize, usize) {
        let n = self.n as isize;
        let c = (self.n / 2) as isize;
        (
            (c + steps.1).rem_euclid(n) as usize,
            (c + steps.0).rem_euclid(n) as usize,
        )
    }

    /// Snaps a wavevector `(qx, qy)` to the nearest grid sample. Fails when the
    /// wavevector lies outside the sampled band.
    pub fn snap_q(&self, q: (f64, f64)) -> Result<SnappedQ> {
        let dq = self.dq();
        let half = (self.n / 2) as f64;
        let mut steps = [0isize; 2];
        let mut dist2 = 0.0;
        for (k, &v) in [q.0, q.1].iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::config(format!(
                    "wavevector component {v} is not finite"
                )));
            }
            let s = v / dq;
            let r = s.round();
            if r < -half || r >= half {
                return Err(Error::config(format!(
                    "wavevector {v:.6e} rad/m lies outside the grid band [-{:.6e}, {:.6e})",
                    half * dq,
                    half * dq
                )));
            }
            steps[k] = r as isize;
            dist2 += (s - r) * (s - r);
        }
        Ok(SnappedQ {
            steps: (steps[0], steps[1]),
            q: (steps[0] as f64 * dq, steps[1] as f64 * dq),
            snap_distance: dist2.sqrt(),
        })
    }

    fn check_shape<T>(&self, a: &Array2<T>) -> Result<()> {
        if a.dim() != self.shape() {
            return Err(Error::Shape {
                expected: self.shape(),
                actual: a.dim(),
            });
        }
        Ok(())
    }
}

/// Which plane a field's samples describe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    CrystalPlane,
    FarField,
}

/// Complex amplitudes sampled on a [`Grid`] at a single wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: Grid,
    values: Array2<Complex64>,
    domain: Domain,
    wavelength: f64,
}

impl ComplexField {
    pub fn new(
        grid: Grid,
        values: Array2<Complex64>,
        domain: Domain,
        wavelength: f64,
    ) -> Result<Self> {
        grid.check_shape(&values)?;
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::config(format!(
                "wavelength {wavelength} must be positive"
            )));
        }
        let field = ComplexField {
            grid,
            values,
            domain,
            wavelength,
        };
        field.ensure_finite("construction")?;
        Ok(field)
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    /// Same samples relabelled with another wavelength.
    pub fn with_wavelength(mut self, wavelength: f64) -> Result<Self> {
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::config(format!(
                "wavelength {wavelength} must be positive"
            )));
        }
        self.wavelength = wavelength;
        Ok(self)
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    /// Total power `sum |values|^2`.
    pub fn power(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    pub(crate) fn require_domain(&self, expected: Domain) -> Result<()> {
        if self.domain != expected {
            return Err(Error::Domain {
                expected,
                actual: self.domain,
            });
        }
        Ok(())
    }

    fn ensure_finite(&self, stage: &str) -> Result<()> {
        if self
            .values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
        {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "non-finite field values after {stage}"
            )))
        }
    }
}

/// Gaussian beam `exp(-|rho - center|^2 / waist^2) * exp(i tilt·rho)` with unit
/// peak amplitude.
pub fn gaussian_beam(
    grid: Grid,
    waist: f64,
    center: (f64, f64),
    tilt: (f64, f64),
    wavelength: f64,
) -> Result<ComplexField> {
    let limit = grid.extent() / 4.0;
    if !(waist.is_finite() && waist > 0.0) {
        return Err(Error::config(format!(
            "beam waist {waist} must be positive"
        )));
    }
    if waist >= limit {
        return Err(Error::config(format!(
            "beam waist {waist:.4e} m must be below a quarter of the grid extent ({limit:.4e} m)"
        )));
    }
    if ![center.0, center.1, tilt.0, tilt.1]
        .iter()
        .all(|v| v.is_finite())
    {
        return Err(Error::config("beam center and tilt must be finite"));
    }
    let values = Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
        let x = grid.rho(ix);
        let y = grid.rho(iy);
        let dx = x - center.0;
        let dy = y - center.1;
        let amp = (-(dx * dx + dy * dy) / (waist * waist)).exp();
        Complex64::from_polar(amp, tilt.0 * x + tilt.1 * y)
    });
    ComplexField::new(grid, values, Domain::CrystalPlane, wavelength)
}

/// Multiplies the field by `exp(i * phase)` pointwise.
pub fn apply_phase(field: &ComplexField, phase: &Array2<f64>) -> Result<ComplexField> {
    field.grid.check_shape(phase)?;
    if phase.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numerical(
            "phase map contains non-finite values".into(),
        ));
    }
    let mut values = field.values.clone();
    ndarray::Zip::from(&mut values)
        .and(phase)
        .for_each(|v, &p| *v *= Complex64::from_polar(1.0, p));
    let out = ComplexField {
        values,
        ..field.clone()
    };
    out.ensure_finite("apply_phase")?;
    Ok(out)
}

/// Linear phase ramp that tilts a beam by an integer number of far-field grid
/// steps `(x, y)`. The phase is reduced modulo `2*pi` in exact integer
/// arithmetic, so the induced far-field shift is exact up to FFT rounding.
pub fn tilt_ramp(grid: Grid, steps: (isize, isize)) -> Array2<f64> {
    let n = grid.n() as isize;
    let c = n / 2;
    Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
        let k = (steps.0 * (ix as isize - c) + steps.1 * (iy as isize - c)).rem_euclid(n);
        2.0 * PI * k as f64 / n as f64
    })
}

/// Propagates a crystal-plane field to the far field with the centered
/// unitary DFT. Power is conserved.
pub fn far_field(field: &ComplexField) -> Result<ComplexField> {
    field.require_domain(Domain::CrystalPlane)?;
    let out = ComplexField {
        values: fft::fft2_centered(&field.values),
        domain: Domain::FarField,
        ..field.clone()
    };
    out.ensure_finite("far_field")?;
    Ok(out)
}

/// Inverse of [`far_field`].
pub fn near_field(field: &ComplexField) -> Result<ComplexField> {
    field.require_domain(Domain::FarField)?;
    let out = ComplexField {
        values: fft::ifft2_centered(&field.values),
        domain: Domain::CrystalPlane,
        ..field.clone()
    };
    out.ensure_finite("near_field")?;
    Ok(out)
}

/// Detector-plane position `x = f * lambda * q / (2*pi)` behind a lens of
/// focal length `focal_length`. Only used for reporting.
pub fn q_to_detector_position(q: f64, wavelength: f64, focal_length: f64) -> f64 {
    focal_length * wavelength * q / (2.0 * PI)
}

/// Detector-plane distance covered by one far-field grid step.
pub fn detector_pixel_size(grid: Grid, wavelength: f64, focal_length: f64) -> f64 {
    q_to_detector_position(grid.dq(), wavelength, focal_length)
}
