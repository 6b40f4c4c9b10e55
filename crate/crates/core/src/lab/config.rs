use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diffuser;
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::io;
use crate::shaper::PartitionParams;
use crate::spdc::{SinglesEnvelope, WavelengthTriple};

/// Which detector is scanned across the far field; the other one is parked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scanning {
    #[default]
    Signal,
    Idler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffuserConfig {
    /// 1/e half-width of the thickness autocorrelation, meters.
    pub corr_length: f64,
    /// rms phase imprinted on the pump, radians.
    pub rms_phase: f64,
    #[serde(default = "default_n_index")]
    pub n_index: f64,
    /// Load the thickness map from a CSV written by a previous run instead of
    /// generating it. The sidecar JSON must sit next to it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay: Option<PathBuf>,
}

fn default_n_index() -> f64 {
    diffuser::DEFAULT_REFRACTIVE_INDEX
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub waist: f64,
    pub wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub segments_per_side: usize,
    pub iterations: usize,
    pub phase_steps: usize,
    /// Side, in pixels, of the centred square covered by the segments;
    /// the whole grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aperture_px: Option<usize>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let p = PartitionParams::default();
        OptimizerConfig {
            segments_per_side: p.segments_per_side,
            iterations: p.iterations,
            phase_steps: p.phase_steps,
            aperture_px: p.aperture_px,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Mean Poisson count at the brightest coincidence pixel.
    pub peak_counts: f64,
}

/// One simulated experiment. Serialized as the JSON scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Master seed; per-consumer streams are derived from it by label.
    pub seed: u64,
    #[serde(default)]
    pub grid: Grid,
    pub diffuser: DiffuserConfig,
    pub pump: PumpConfig,
    /// Wavelength seen by the signal detector, meters; the idler wavelength
    /// follows from energy conservation.
    pub lambda_s: f64,
    /// Far-field wavevector of the parked detector, rad/m.
    #[serde(default)]
    pub q_stationary: (f64, f64),
    #[serde(default)]
    pub scanning: Scanning,
    /// Where the optimizer focuses the pump, rad/m.
    #[serde(default)]
    pub target_q: (f64, f64),
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default = "default_focal_length")]
    pub focal_length: f64,
    /// Half-width, in grid steps, of the exported coincidence window.
    #[serde(default = "default_window")]
    pub window_half_width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singles: Option<SinglesEnvelope>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_focal_length() -> f64 {
    0.1
}

fn default_window() -> usize {
    32
}

/// Seeds handed to each random consumer of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StreamSeeds {
    pub diffuser: u64,
    pub optimizer: u64,
    pub noise: u64,
}

/// A validated configuration with every derived quantity filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedScenario {
    pub name: String,
    pub grid: Grid,
    pub dq: f64,
    pub wavelengths: WavelengthTriple,
    pub scanning: Scanning,
    pub scanning_wavelength: f64,
    pub rms_height: f64,
    pub estimated_divergence_deg: f64,
    pub q_stationary_steps: (isize, isize),
    pub target_steps: (isize, isize),
    /// Signal-detector position where the coincidences should focus.
    pub expected_focus_steps: (isize, isize),
    pub optimizer: PartitionParams,
    pub seeds: StreamSeeds,
    pub warnings: Vec<String>,
}

/// Derives an independent 64-bit seed for `label` from the master seed
/// (FNV-1a over the label, mixed with SplitMix64).
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive (got {v})")))
    }
}

impl ScenarioConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable") + "\n"
    }

    pub fn wavelengths(&self) -> Result<WavelengthTriple> {
        WavelengthTriple::new(self.pump.wavelength, self.lambda_s)
    }

    /// Checks every parameter against the preconditions of the modules it
    /// feeds and computes the derived values.
    pub fn resolve(&self) -> Result<ResolvedScenario> {
        let grid = self.grid;
        let wavelengths = self.wavelengths()?;
        positive("pump waist", self.pump.waist)?;
        if self.pump.waist >= grid.extent() / 4.0 {
            return Err(Error::config(format!(
                "pump waist {:.4e} m must be below a quarter of the grid extent ({:.4e} m)",
                self.pump.waist,
                grid.extent() / 4.0
            )));
        }
        positive("focal length", self.focal_length)?;
        positive("diffuser rms phase", self.diffuser.rms_phase)?;
        if !(self.diffuser.n_index.is_finite() && self.diffuser.n_index > 1.0) {
            return Err(Error::config("diffuser refractive index must exceed 1"));
        }
        if self.diffuser.replay.is_none() && self.diffuser.corr_length < 2.0 * grid.pitch() {
            return Err(Error::config(format!(
                "diffuser correlation length {:.4e} m must be at least two grid pitches",
                self.diffuser.corr_length
            )));
        }
        let opt = self.optimizer;
        let aperture = opt.aperture_px.unwrap_or(grid.n());
        if aperture > grid.n() || !(grid.n() - aperture).is_multiple_of(2) {
            return Err(Error::config(format!(
                "SLM aperture of {aperture} px cannot be centred on the {}-point grid",
                grid.n()
            )));
        }
        if opt.segments_per_side == 0 || !aperture.is_multiple_of(opt.segments_per_side) {
            return Err(Error::config(format!(
                "{} segments per side must divide the {aperture}-pixel SLM aperture",
                opt.segments_per_side
            )));
        }
        if opt.phase_steps < 3 {
            return Err(Error::config("optimizer needs at least 3 phase steps"));
        }
        if self.window_half_width == 0 || 2 * self.window_half_width + 1 > grid.n() {
            return Err(Error::config("coincidence window does not fit the grid"));
        }
        if let Some(s) = &self.singles {
            if !(s.ring_radius.is_finite() && s.ring_radius >= 0.0) {
                return Err(Error::config("singles ring radius must be nonnegative"));
            }
            positive("singles ring width", s.ring_width)?;
        }
        if let Some(n) = &self.noise {
            positive("noise peak counts", n.peak_counts)?;
        }

        let mut warnings = Vec::new();
        let stationary = grid.snap_q(self.q_stationary)?;
        if stationary.snap_distance > 1e-9 {
            warnings.push(format!(
                "stationary detector wavevector snapped to grid step {:?}",
                stationary.steps
            ));
        }
        let target = grid.snap_q(self.target_q)?;
        if target.snap_distance > 1e-9 {
            warnings.push(format!("target snapped to grid step {:?}", target.steps));
        }
        let expected = (
            target.steps.0 - stationary.steps.0,
            target.steps.1 - stationary.steps.1,
        );
        grid.snap_q((expected.0 as f64 * grid.dq(), expected.1 as f64 * grid.dq()))
            .map_err(|e| e.context("target minus stationary wavevector leaves the grid"))?;

        let seeds = StreamSeeds {
            diffuser: derive_seed(self.seed, "diffuser"),
            optimizer: derive_seed(self.seed, "optimizer"),
            noise: derive_seed(self.seed, "noise"),
        };
        let scanning_wavelength = match self.scanning {
            Scanning::Signal => wavelengths.lambda_s(),
            Scanning::Idler => wavelengths.lambda_i(),
        };
        Ok(ResolvedScenario {
            name: self.name.clone(),
            grid,
            dq: grid.dq(),
            wavelengths,
            scanning: self.scanning,
            scanning_wavelength,
            rms_height: diffuser::rms_height_for_phase(
                self.diffuser.rms_phase,
                self.pump.wavelength,
                self.diffuser.n_index,
            ),
            estimated_divergence_deg: diffuser::estimated_divergence(
                self.diffuser.corr_length,
                self.diffuser.rms_phase,
                self.pump.wavelength,
            )
            .to_degrees(),
            q_stationary_steps: stationary.steps,
            target_steps: target.steps,
            expected_focus_steps: expected,
            optimizer: PartitionParams {
                segments_per_side: opt.segments_per_side,
                iterations: opt.iterations,
                phase_steps: opt.phase_steps,
                seed: seeds.optimizer,
                aperture_px: opt.aperture_px,
                reference: None,
            },
            seeds,
            warnings,
        })
    }

    /// Detector-plane size of one far-field grid step for the scanning
    /// detector.
    pub fn scanning_pixel_size(&self, resolved: &ResolvedScenario) -> f64 {
        grid::detector_pixel_size(self.grid, resolved.scanning_wavelength, self.focal_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::demos;

    #[test]
    fn seeds_fan_out_by_label() {
        let a = derive_seed(7, "diffuser");
        assert_eq!(a, derive_seed(7, "diffuser"));
        assert_ne!(a, derive_seed(7, "optimizer"));
        assert_ne!(a, derive_seed(8, "diffuser"));
    }

    #[test]
    fn demo_configs_resolve() {
        for cfg in demos::all() {
            let r = cfg.resolve().unwrap();
            assert_eq!(r.name, cfg.name);
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_position() {
        let mut v: serde_json::Value = serde_json::from_str(&demos::fig2().to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("bogus"));
        let err = ScenarioConfig::from_json_str("{\n  \"name\": 3\n}").unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn invalid_parameters_are_config_errors() {
        let mut cfg = demos::fig3_degenerate();
        cfg.optimizer.segments_per_side = 24;
        assert!(cfg.resolve().unwrap_err().is_config());
        let mut cfg = demos::fig3_degenerate();
        cfg.lambda_s = 300e-9;
        assert!(cfg.resolve().unwrap_err().is_config());
        let mut cfg = demos::fig3_degenerate();
        cfg.pump.waist = 2e-3;
        assert!(cfg.resolve().unwrap_err().is_config());
        let mut cfg = demos::fig3_degenerate();
        cfg.q_stationary = (1e7, 0.0);
        assert!(cfg.resolve().unwrap_err().is_config());
    }

    #[test]
    fn idler_scanning_uses_idler_wavelength() {
        let mut cfg = demos::fig3_nondegenerate();
        cfg.scanning = Scanning::Idler;
        let r = cfg.resolve().unwrap();
        assert_eq!(r.scanning_wavelength, r.wavelengths.lambda_i());
    }

    #[test]
    fn json_round_trip() {
        let cfg = demos::fig2();
        assert_eq!(ScenarioConfig::from_json_str(&cfg.to_json()).unwrap(), cfg);
    }
}
