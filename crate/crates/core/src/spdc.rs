//! Two-photon coincidence patterns behind a thin diffuser.
//!
//! For a thin crystal pumped by a monochromatic beam `W(rho)`, the rate of
//! coincidences between a signal photon at `q_s` and an idler at `q_i` is
//!
//! ```text
//! C(q_s, q_i) ∝ | ∫ dρ W(ρ) A_d(ρ, ω_s) A_d(ρ, ω_p - ω_s) exp(-i ρ·(q_s + q_i)) |²
//! ```
//!
//! Because the screen phase is linear in frequency, the two diffuser factors
//! multiply to `A_d(ρ, ω_p)`: the coincidence pattern is the pump's scattered
//! far-field intensity evaluated at `q_s + q_i`, whatever the split of `ω_p`
//! between the photons.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::diffuser::DiffuserMap;
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{self, ComplexField, Domain, Grid, SnappedQ};
use crate::io;

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest grid the brute-force quadrature oracle accepts.
pub const ORACLE_MAX_N: usize = 64;

/// Pump, signal and idler wavelengths tied by `1/λs + 1/λi = 1/λp`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WavelengthTriple {
    lambda_p: f64,
    lambda_s: f64,
    lambda_i: f64,
}

impl WavelengthTriple {
    /// Derives the idler wavelength from energy conservation.
    pub fn new(lambda_p: f64, lambda_s: f64) -> Result<Self> {
        if !(lambda_p.is_finite() && lambda_p > 0.0) {
            return Err(Error::config(format!(
                "pump wavelength {lambda_p} must be positive"
            )));
        }
        if !(lambda_s.is_finite() && lambda_s > lambda_p) {
            return Err(Error::config(format!(
                "signal wavelength {lambda_s:.4e} m must exceed the pump wavelength {lambda_p:.4e} m"
            )));
        }
        let lambda_i = 1.0 / (1.0 / lambda_p - 1.0 / lambda_s);
        Ok(WavelengthTriple {
            lambda_p,
            lambda_s,
            lambda_i,
        })
    }

    /// Signal and idler both at twice the pump wavelength.
    pub fn degenerate(lambda_p: f64) -> Result<Self> {
        Self::new(lambda_p, 2.0 * lambda_p)
    }

    pub fn lambda_p(&self) -> f64 {
        self.lambda_p
    }

    pub fn lambda_s(&self) -> f64 {
        self.lambda_s
    }

    pub fn lambda_i(&self) -> f64 {
        self.lambda_i
    }

    /// The same pair with the roles of signal and idler exchanged.
    pub fn swapped(&self) -> Self {
        WavelengthTriple {
            lambda_p: self.lambda_p,
            lambda_s: self.lambda_i,
            lambda_i: self.lambda_s,
        }
    }
}

/// Max-normalized far-field intensity together with its normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityMap {
    pub grid: Grid,
    pub wavelength: f64,
    /// Intensity divided by `peak`; the maximum is exactly 1.
    pub values: Array2<f64>,
    /// Maximum of the raw intensity (unitary-transform units).
    pub peak: f64,
}

impl IntensityMap {
    fn from_raw(grid: Grid, wavelength: f64, raw: Array2<f64>) -> Result<Self> {
        let peak = raw.iter().cloned().fold(0.0_f64, f64::max);
        if !(peak.is_finite() && peak > 0.0) {
            return Err(Error::Numerical(
                "far-field intensity is identically zero".into(),
            ));
        }
        Ok(IntensityMap {
            grid,
            wavelength,
            values: raw.mapv(|v| v / peak),
            peak,
        })
    }

    /// Raw (unnormalized) intensity at array index `(row, col)`.
    pub fn raw_at(&self, idx: (usize, usize)) -> f64 {
        self.values[idx] * self.peak
    }

    pub fn raw(&self) -> Array2<f64> {
        self.values.mapv(|v| v * self.peak)
    }
}

/// Coincidence rate over the signal wavevector `q_s` for a fixed idler
/// detector at `q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceMap {
    pub grid: Grid,
    /// Rates divided by `peak_rate`; nonnegative with maximum 1.
    pub values: Array2<f64>,
    pub peak_rate: f64,
    /// Idler wavevector after snapping to the grid, rad/m.
    pub q_i: (f64, f64),
    pub q_i_steps: (isize, isize),
    pub wavelengths: WavelengthTriple,
    /// Non-fatal adjustments made while computing the map.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceSidecar {
    pub n: usize,
    pub pitch: f64,
    pub q_i: (f64, f64),
    pub q_i_steps: (isize, isize),
    pub wavelengths: WavelengthTriple,
    pub seed: u64,
    pub normalization: &'static str,
    pub peak_rate: f64,
}

impl CoincidenceMap {
    /// Array index of the signal wavevector given in steps from the centre.
    pub fn index_of_signal_steps(&self, steps: (isize, isize)) -> (usize, usize) {
        self.grid.index_of_steps(steps)
    }

    pub fn raw_at(&self, idx: (usize, usize)) -> f64 {
        self.values[idx] * self.peak_rate
    }

    pub fn raw(&self) -> Array2<f64> {
        self.values.mapv(|v| v * self.peak_rate)
    }

    /// Emulates finite integration time: each pixel becomes a Poisson count
    /// with mean `values * peak_counts`, then the map is renormalized.
    pub fn with_poisson_noise(&self, peak_counts: f64, seed: u64) -> Result<Self> {
        if !(peak_counts.is_finite() && peak_counts > 0.0) {
            return Err(Error::config(format!(
                "mean peak counts {peak_counts} must be positive"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = self.values.mapv(|v| {
            let mean = v * peak_counts;
            if mean > 0.0 {
                Poisson::new(mean)
                    .map(|p| p.sample(&mut rng))
                    .unwrap_or(0.0)
            } else {
                0.0
            }
        });
        let max = counts.iter().cloned().fold(0.0_f64, f64::max);
        if max <= 0.0 {
            return Err(Error::Numerical(
                "no counts registered; raise the mean peak counts".into(),
            ));
        }
        Ok(CoincidenceMap {
            values: counts.mapv(|c| c / max),
            peak_rate: self.peak_rate * max / peak_counts,
            ..self.clone()
        })
    }

    pub fn sidecar(&self, seed: u64) -> CoincidenceSidecar {
        CoincidenceSidecar {
            n: self.grid.n(),
            pitch: self.grid.pitch(),
            q_i: self.q_i,
            q_i_steps: self.q_i_steps,
            wavelengths: self.wavelengths,
            seed,
            normalization: "max",
            peak_rate: self.peak_rate,
        }
    }

    /// Writes the map as CSV plus a JSON sidecar with the same stem.
    pub fn save(&self, csv_path: &std::path::Path, seed: u64) -> Result<()> {
        io::write_matrix_csv(csv_path, &self.values)?;
        io::write_json(&csv_path.with_extension("json"), &self.sidecar(seed))
    }
}

/// Phenomenological far-field envelope of the singles counts: an annulus of
/// radius `ring_radius` and 1/e half-width `ring_width` (both rad/m). A zero
/// radius gives a centred blob.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinglesEnvelope {
    pub ring_radius: f64,
    pub ring_width: f64,
}

fn snap_idler(grid: Grid, q_i: (f64, f64), warnings: &mut Vec<String>) -> Result<SnappedQ> {
    let snapped = grid.snap_q(q_i)?;
    if snapped.snap_distance > 1e-9 {
        let msg = format!(
            "idler wavevector ({:.6e}, {:.6e}) rad/m is off-grid by {:.3} steps; snapped to ({:.6e}, {:.6e})",
            q_i.0, q_i.1, snapped.snap_distance, snapped.q.0, snapped.q.1
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(snapped)
}

/// Scattered pump far-field intensity `|F[W · A_d(λp)]|²`, max-normalized.
pub fn pump_far_intensity(
    pump_at_crystal: &ComplexField,
    d: &DiffuserMap,
    lambda_p: f64,
) -> Result<IntensityMap> {
    pump_at_crystal.require_domain(Domain::CrystalPlane)?;
    let screened = grid::apply_phase(pump_at_crystal, &d.transfer_function(lambda_p)?)?;
    let raw = grid::far_field(&screened)?.intensity();
    IntensityMap::from_raw(pump_at_crystal.grid(), lambda_p, raw)
}

/// Coincidence map over `q_s` for an idler detector at `q_i`, computed with
/// one transform of `W · A_d(λs) · A_d(λi)`.
pub fn coincidence_map(
    pump_at_crystal: &ComplexField,
    d: &DiffuserMap,
    w: WavelengthTriple,
    q_i: (f64, f64),
) -> Result<CoincidenceMap> {
    pump_at_crystal.require_domain(Domain::CrystalPlane)?;
    let grid = pump_at_crystal.grid();
    let mut warnings = Vec::new();
    let snapped = snap_idler(grid, q_i, &mut warnings)?;

    let signal = grid::apply_phase(pump_at_crystal, &d.transfer_function(w.lambda_s())?)?;
    let pair = grid::apply_phase(&signal, &d.transfer_function(w.lambda_i())?)?
        .with_wavelength(w.lambda_p())?;
    let at_sum = grid::far_field(&pair)?.intensity();
    // C(q_s) = I(q_s + q_i)
    let raw = fft::circshift(&at_sum, (-snapped.steps.1, -snapped.steps.0));
    let peak_rate = raw.iter().cloned().fold(0.0_f64, f64::max);
    if !(peak_rate.is_finite() && peak_rate > 0.0) {
        return Err(Error::Numerical(
            "coincidence map is identically zero".into(),
        ));
    }
    Ok(CoincidenceMap {
        grid,
        values: raw.mapv(|v| v / peak_rate),
        peak_rate,
        q_i: snapped.q,
        q_i_steps: snapped.steps,
        wavelengths: w,
        warnings,
    })
}

/// Brute-force Riemann sum of the coincidence integral at each requested
/// `q_s` (rad/m). Returns raw rates in the same units as
/// [`CoincidenceMap::raw_at`]. Refuses grids larger than
/// [`ORACLE_MAX_N`].
pub fn coincidence_quadrature_oracle(
    pump_at_crystal: &ComplexField,
    d: &DiffuserMap,
    w: WavelengthTriple,
    q_i: (f64, f64),
    q_s_list: &[(f64, f64)],
) -> Result<Vec<f64>> {
    pump_at_crystal.require_domain(Domain::CrystalPlane)?;
    let grid = pump_at_crystal.grid();
    if grid.n() > ORACLE_MAX_N {
        return Err(Error::config(format!(
            "quadrature oracle is limited to n <= {ORACLE_MAX_N} (got n = {})",
            grid.n()
        )));
    }
    let omega_p = 2.0 * PI * SPEED_OF_LIGHT / w.lambda_p();
    let omega_s = 2.0 * PI * SPEED_OF_LIGHT / w.lambda_s();
    let omega_i = omega_p - omega_s;
    let h = d.thickness();
    let dn = d.n_index() - 1.0;
    let norm = 1.0 / grid.n() as f64;

    let integrand: Vec<(f64, f64, Complex64)> = pump_at_crystal
        .values()
        .indexed_iter()
        .map(|((iy, ix), &wv)| {
            let thickness = h[(iy, ix)];
            let a_s = Complex64::from_polar(1.0, thickness * dn * omega_s / SPEED_OF_LIGHT);
            let a_i = Complex64::from_polar(1.0, thickness * dn * omega_i / SPEED_OF_LIGHT);
            (grid.rho(ix), grid.rho(iy), wv * a_s * a_i)
        })
        .collect();

    Ok(q_s_list
        .iter()
        .map(|&(qsx, qsy)| {
            let (qx, qy) = (qsx + q_i.0, qsy + q_i.1);
            let amp: Complex64 = integrand
                .iter()
                .map(|&(x, y, v)| v * Complex64::from_polar(1.0, -(x * qx + y * qy)))
                .sum();
            (amp * norm).norm_sqr()
        })
        .collect())
}

/// Stand-in for the singles-count distribution: the envelope amplitude is
/// taken to the crystal plane, passed through the diffuser at `lambda_s` and
/// propagated back to the far field. A flat screen returns the bare envelope.
pub fn singles_map(
    envelope: SinglesEnvelope,
    d: &DiffuserMap,
    lambda_s: f64,
    grid: Grid,
) -> Result<Array2<f64>> {
    if !(envelope.ring_radius.is_finite() && envelope.ring_radius >= 0.0) {
        return Err(Error::config("ring radius must be nonnegative"));
    }
    if !(envelope.ring_width.is_finite() && envelope.ring_width > 0.0) {
        return Err(Error::config("ring width must be positive"));
    }
    if d.grid() != grid {
        return Err(Error::config(
            "diffuser grid does not match the requested grid",
        ));
    }
    let amp = Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
        let r = grid.q(ix).hypot(grid.q(iy));
        let t = (r - envelope.ring_radius) / envelope.ring_width;
        Complex64::new((-0.5 * t * t).exp(), 0.0)
    });
    let far = ComplexField::new(grid, amp, Domain::FarField, lambda_s)?;
    let near = grid::near_field(&far)?;
    let scattered = grid::apply_phase(&near, &d.transfer_function(lambda_s)?)?;
    let intensity = grid::far_field(&scattered)?.intensity();
    let max = intensity.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return Err(Error::Numerical("singles map is identically zero".into()));
    }
    Ok(intensity.mapv(|v| v / max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffuser;
    use crate::stats::argmax;

    fn setup(n: usize, seed: u64) -> (Grid, ComplexField, DiffuserMap) {
        let g = Grid::new(n, 10e-6).unwrap();
        let pump =
            grid::gaussian_beam(g, n as f64 * 10e-6 / 5.0, (0.0, 0.0), (0.0, 0.0), 404e-9).unwrap();
        let d = diffuser::generate(
            g,
            30e-6,
            diffuser::rms_height_for_phase(6.0, 404e-9, 1.5),
            seed,
        )
        .unwrap();
        (g, pump, d)
    }

    #[test]
    fn energy_conservation_is_enforced() {
        let w = WavelengthTriple::new(404e-9, 850e-9).unwrap();
        let sum = 1.0 / w.lambda_s() + 1.0 / w.lambda_i();
        assert!((sum - 1.0 / w.lambda_p()).abs() * w.lambda_p() < 1e-12);
        assert!((w.lambda_i() - 769.955e-9).abs() < 1e-12);
        let deg = WavelengthTriple::degenerate(404e-9).unwrap();
        assert!((deg.lambda_i() - 808e-9).abs() < 1e-20);
        assert!(WavelengthTriple::new(404e-9, 400e-9).is_err());
        assert!(WavelengthTriple::new(404e-9, 404e-9).is_err());
        assert_eq!(w.swapped().swapped(), w);
    }

    #[test]
    fn flat_diffuser_collinear_spot_is_centred() {
        let (g, pump, _) = setup(64, 1);
        let flat = DiffuserMap::flat(g);
        let w = WavelengthTriple::degenerate(404e-9).unwrap();
        let c = coincidence_map(&pump, &flat, w, (0.0, 0.0)).unwrap();
        assert_eq!(argmax(&c.values), (32, 32));
        assert_eq!(c.values[(32, 32)], 1.0);
    }

    #[test]
    fn flat_diffuser_spot_moves_to_minus_idler() {
        let (g, pump, _) = setup(64, 1);
        let flat = DiffuserMap::flat(g);
        let w = WavelengthTriple::degenerate(404e-9).unwrap();
        let q0 = (5.0 * g.dq(), -3.0 * g.dq());
        let c = coincidence_map(&pump, &flat, w, q0).unwrap();
        assert_eq!(argmax(&c.values), g.index_of_steps((-5, 3)));
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn off_grid_idler_is_snapped_with_warning() {
        let (g, pump, d) = setup(32, 2);
        let w = WavelengthTriple::degenerate(404e-9).unwrap();
        let c = coincidence_map(&pump, &d, w, (2.3 * g.dq(), 0.0)).unwrap();
        assert_eq!(c.q_i_steps, (2, 0));
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn wrong_domain_rejected() {
        let (_, pump, d) = setup(32, 2);
        let ff = grid::far_field(&pump).unwrap();
        let w = WavelengthTriple::degenerate(404e-9).unwrap();
        assert!(matches!(
            coincidence_map(&ff, &d, w, (0.0, 0.0)),
            Err(Error::Domain { .. })
        ));
        assert!(pump_far_intensity(&ff, &d, 404e-9).is_err());
    }

    #[test]
    fn oracle_refuses_large_grids() {
        let (_, pump, d) = setup(128, 2);
        let w = WavelengthTriple::degenerate(404e-9).unwrap();
        let err = coincidence_quadrature_oracle(&pump, &d, w, (0.0, 0.0), &[(0.0, 0.0)]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn oracle_matches_analytic_gaussian_on_flat_screen() {
        let g = Grid::new(32, 10e-6).unwrap();
        let waist = 32e-6;
        let pump = grid::gaussian_beam(g, waist, (0.0, 0.0), (0.0, 0.0), 404e-9).unwrap();
        let flat = DiffuserMap::flat(g);
        let w = WavelengthTriple::new(404e-9, 850e-9).unwrap();
        // discrete sum of a well-sampled Gaussian: (pi w^2 / (n pitch^2)) exp(-q^2 w^2/4)
        let norm = PI * waist * waist / (32.0 * 10e-6 * 10e-6);
        let qs: Vec<(f64, f64)> = (0..4).map(|k| (k as f64 * g.dq(), 0.0)).collect();
        let rates = coincidence_quadrature_oracle(&pump, &flat, w, (0.0, 0.0), &qs).unwrap();
        for (&(q, _), r) in qs.iter().zip(rates) {
            let expected = (norm * (-q * q * waist * waist / 4.0).exp()).powi(2);
            assert!(
                (r - expected).abs() / expected < 1e-6,
                "q={q}: {r} vs {expected}"
            );
        }
    }

    #[test]
    fn poisson_noise_is_seeded() {
        let (_, pump, d) = setup(32, 4);
        let w = WavelengthTriple::degenerate(404e-9).unwrap();
        let c = coincidence_map(&pump, &d, w, (0.0, 0.0)).unwrap();
        let a = c.with_poisson_noise(500.0, 9).unwrap();
        let b = c.with_poisson_noise(500.0, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
        assert!(a.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(c.with_poisson_noise(0.0, 1).is_err());
    }

    #[test]
    fn singles_ring_peaks_at_radius_on_flat_screen() {
        let g = Grid::new(128, 10e-6).unwrap();
        let flat = DiffuserMap::flat(g);
        let r = 30.0 * g.dq();
        let m = singles_map(
            SinglesEnvelope {
                ring_radius: r,
                ring_width: 3.0 * g.dq(),
            },
            &flat,
            808e-9,
            g,
        )
        .unwrap();
        let c = g.center_index();
        let row: Vec<f64> = (c..g.n()).map(|i| m[(c, i)]).collect();
        let peak = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!((peak as f64 - 30.0).abs() <= 1.0);
        // smooth: azimuthal profile at the ring radius is flat to rounding
        assert!((m[(c, c + 30)] - m[(c + 30, c)]).abs() < 1e-9);

        let blob = singles_map(
            SinglesEnvelope {
                ring_radius: 0.0,
                ring_width: 5.0 * g.dq(),
            },
            &flat,
            808e-9,
            g,
        )
        .unwrap();
        assert_eq!(argmax(&blob), (c, c));
    }
}
