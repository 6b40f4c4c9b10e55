//! Built-in scenarios: a non-collinear degenerate pair and collinear
//! degenerate and non-degenerate pairs, all behind the same diffuser model.

use super::config::{DiffuserConfig, OptimizerConfig, PumpConfig, Scanning, ScenarioConfig};
use crate::grid::Grid;
use crate::spdc::SinglesEnvelope;

pub const NAMES: [&str; 3] = ["fig2", "fig3-degenerate", "fig3-nondegenerate"];

pub const PUMP_WAVELENGTH: f64 = 404e-9;
pub const PUMP_WAIST: f64 = 1.15e-3;
/// Correlation length giving a 0.25 degree rms divergence at 2 pi rms phase.
pub const CORR_LENGTH: f64 = 130e-6;
/// Idler offset of the non-collinear scenario, in grid steps.
pub const NONCOLLINEAR_STEPS: isize = 80;
/// Side of the SLM image on the crystal plane, pixels.
pub const SLM_APERTURE_PX: usize = 224;

fn base(name: &str, seed: u64, lambda_s: f64) -> ScenarioConfig {
    ScenarioConfig {
        name: name.to_string(),
        seed,
        grid: Grid::default(),
        diffuser: DiffuserConfig {
            corr_length: CORR_LENGTH,
            rms_phase: 2.0 * std::f64::consts::PI,
            n_index: 1.5,
            replay: None,
        },
        pump: PumpConfig {
            waist: PUMP_WAIST,
            wavelength: PUMP_WAVELENGTH,
        },
        lambda_s,
        q_stationary: (0.0, 0.0),
        scanning: Scanning::Signal,
        target_q: (0.0, 0.0),
        optimizer: OptimizerConfig {
            aperture_px: Some(SLM_APERTURE_PX),
            ..OptimizerConfig::default()
        },
        focal_length: 0.1,
        window_half_width: 32,
        singles: None,
        noise: None,
        output_dir: None,
    }
}

/// Non-collinear degenerate pair: the idler detector sits on the emission
/// ring, so the shaped coincidences focus at the opposite side.
pub fn fig2() -> ScenarioConfig {
    let mut cfg = base("fig2", 2, 808e-9);
    let q = NONCOLLINEAR_STEPS as f64 * cfg.grid.dq();
    cfg.q_stationary = (q, 0.0);
    cfg.singles = Some(SinglesEnvelope {
        ring_radius: q,
        ring_width: 10.0 * cfg.grid.dq(),
    });
    cfg
}

/// Collinear degenerate pair, 808/808 nm.
pub fn fig3_degenerate() -> ScenarioConfig {
    base("fig3-degenerate", 3, 808e-9)
}

/// Collinear non-degenerate pair: signal at 850 nm, idler near 770 nm.
pub fn fig3_nondegenerate() -> ScenarioConfig {
    base("fig3-nondegenerate", 3, 850e-9)
}

pub fn by_name(name: &str) -> Option<ScenarioConfig> {
    match name {
        "fig2" => Some(fig2()),
        "fig3-degenerate" => Some(fig3_degenerate()),
        "fig3-nondegenerate" => Some(fig3_nondegenerate()),
        _ => None,
    }
}

pub fn all() -> Vec<ScenarioConfig> {
    NAMES.iter().filter_map(|n| by_name(n)).collect()
}
