use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array2;
use serde::Serialize;

use super::config::{derive_seed, ResolvedScenario, Scanning, ScenarioConfig};
use super::metrics::{self, MetricsReport};
use crate::diffuser::{DiffuserMap, DiffuserSidecar};
use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{self, ComplexField};
use crate::io;
use crate::shaper::{self, OptimizationRecord, PartitionParams, SegmentFeedback};
use crate::spdc::{self, CoincidenceMap, CoincidenceSidecar, IntensityMap, WavelengthTriple};
use crate::stats;

/// Everything a scenario run produced, before anything touches the disk.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub config: ScenarioConfig,
    pub resolved: ResolvedScenario,
    pub diffuser: DiffuserMap,
    pub pump_before: IntensityMap,
    pub pump_after: IntensityMap,
    pub coinc_before: CoincidenceMap,
    pub coinc_after: CoincidenceMap,
    pub noisy_coinc: Option<(CoincidenceMap, CoincidenceMap)>,
    pub singles: Option<Array2<f64>>,
    /// Speckle envelope in pump coordinates.
    pub envelope: Array2<bool>,
    pub record: OptimizationRecord,
    /// Best target intensity reachable with this segmentation, over the
    /// same reference as the enhancement.
    pub ideal_enhancement: f64,
    pub metrics: MetricsReport,
    pub warnings: Vec<String>,
    pub elapsed_seconds: f64,
}

/// Square window of `map` centred on the signal position `center_steps`,
/// wrapping around the grid edges.
pub fn coincidence_window(
    map: &Array2<f64>,
    grid: grid::Grid,
    center_steps: (isize, isize),
    half_width: usize,
) -> Array2<f64> {
    let side = 2 * half_width + 1;
    let hw = half_width as isize;
    Array2::from_shape_fn((side, side), |(r, c)| {
        let steps = (
            center_steps.0 + c as isize - hw,
            center_steps.1 + r as isize - hw,
        );
        map[grid.index_of_steps(steps)]
    })
}

fn load_or_generate_diffuser(
    cfg: &ScenarioConfig,
    resolved: &ResolvedScenario,
) -> Result<DiffuserMap> {
    match &cfg.diffuser.replay {
        Some(path) => {
            let d = DiffuserMap::load(path)?;
            if d.grid() != cfg.grid {
                return Err(Error::Config(format!(
                    "replayed diffuser {} was sampled on a {}-point grid with pitch {:e}, scenario uses {} with {:e}",
                    path.display(),
                    d.grid().n(),
                    d.grid().pitch(),
                    cfg.grid.n(),
                    cfg.grid.pitch()
                )));
            }
            Ok(d)
        }
        None => DiffuserMap::generate(
            cfg.grid,
            cfg.diffuser.corr_length,
            resolved.rms_height,
            cfg.diffuser.n_index,
            resolved.seeds.diffuser,
        ),
    }
}

/// Wavelengths arranged so that the `lambda_s` slot is the scanning detector.
fn scanning_triple(w: WavelengthTriple, scanning: Scanning) -> WavelengthTriple {
    match scanning {
        Scanning::Signal => w,
        Scanning::Idler => w.swapped(),
    }
}

/// Runs the full pipeline: diffuser, speckle before shaping, pump-feedback
/// optimization, speckle after shaping and the comparison metrics.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let ctx = |e: Error| e.context(format!("scenario '{}'", cfg.name));
    run_inner(cfg).map_err(ctx)
}

fn run_inner(cfg: &ScenarioConfig) -> Result<ScenarioOutcome> {
    let started = Instant::now();
    let resolved = cfg.resolve()?;
    let g = cfg.grid;
    let lambda_p = cfg.pump.wavelength;
    let mut warnings = resolved.warnings.clone();

    let d = load_or_generate_diffuser(cfg, &resolved).map_err(|e| e.context("diffuser"))?;
    let pump = scenario_pump(cfg)?;
    let map_w = scanning_triple(resolved.wavelengths, cfg.scanning);
    let q_stat = (
        resolved.q_stationary_steps.0 as f64 * g.dq(),
        resolved.q_stationary_steps.1 as f64 * g.dq(),
    );

    let pump_before = spdc::pump_far_intensity(&pump, &d, lambda_p)?;
    let coinc_before = spdc::coincidence_map(&pump, &d, map_w, q_stat)?;
    let envelope = metrics::envelope_mask(&pump_before.values);
    let envelope_pixels = envelope.iter().filter(|&&b| b).count();
    let reference = stats::masked_mean(&pump_before.raw(), &envelope)
        .ok_or_else(|| Error::Numerical("speckle envelope is empty".into()))?;
    log::info!(
        "{}: envelope {} px, mean speckle intensity {:.4e}",
        cfg.name,
        envelope_pixels,
        reference
    );

    let target_q = (
        resolved.target_steps.0 as f64 * g.dq(),
        resolved.target_steps.1 as f64 * g.dq(),
    );
    let params = PartitionParams {
        reference: Some(reference),
        ..resolved.optimizer
    };
    let feedback = SegmentFeedback::with_aperture(
        &pump,
        &d,
        lambda_p,
        target_q,
        params.segments_per_side,
        params.aperture_px,
    )?;
    let record = shaper::partition_optimize(|m| feedback.evaluate(m), &params)
        .map_err(|e| e.context("optimizer"))?;
    let ideal_enhancement = feedback.optimal_feedback() / reference;
    log::info!(
        "{}: enhancement {:.2} after {} evaluations (segment optimum {:.2})",
        cfg.name,
        record.enhancement,
        record.evaluations,
        ideal_enhancement
    );

    let shaped = grid::apply_phase(&pump, &record.final_mask.render(g)?)?;
    let pump_after = spdc::pump_far_intensity(&shaped, &d, lambda_p)?;
    let coinc_after = spdc::coincidence_map(&shaped, &d, map_w, q_stat)?;
    warnings.extend(coinc_before.warnings.iter().cloned());

    let target_idx = g.index_of_steps(resolved.target_steps);
    let enhancement_pump = pump_after.raw_at(target_idx) / reference;

    // the same envelope seen from the signal detector sits at -q_stationary
    let shift = (
        -resolved.q_stationary_steps.1,
        -resolved.q_stationary_steps.0,
    );
    let coinc_envelope = fft::circshift(&envelope, shift);
    let coinc_reference = stats::masked_mean(&coinc_before.raw(), &coinc_envelope)
        .ok_or_else(|| Error::Numerical("coincidence envelope is empty".into()))?;
    let focus_idx = g.index_of_steps(resolved.expected_focus_steps);
    let enhancement_coinc = coinc_after.raw_at(focus_idx) / coinc_reference;

    let aligned = fft::circshift(
        &coinc_before.values,
        (resolved.q_stationary_steps.1, resolved.q_stationary_steps.0),
    );
    let pearson_pump_vs_coinc = metrics::pearson(&pump_before.values, &aligned, Some(&envelope))?;

    let grain_size_pump = metrics::grain_size(
        &pump_before.values,
        grid::detector_pixel_size(g, lambda_p, cfg.focal_length),
    )
    .map_err(|e| e.context("pump grain size"))?;
    let grain_size_coinc =
        metrics::grain_size(&coinc_before.values, cfg.scanning_pixel_size(&resolved))
            .map_err(|e| e.context("coincidence grain size"))?;

    let (ar, ac) = stats::argmax(&coinc_after.values);
    let c = g.center_index() as isize;
    let coinc_argmax_steps = (ac as isize - c, ar as isize - c);
    let localization_error_steps =
        wrapped_distance(coinc_argmax_steps, resolved.expected_focus_steps, g.n());

    let noisy_coinc = match cfg.noise {
        Some(noise) => Some((
            coinc_before.with_poisson_noise(noise.peak_counts, resolved.seeds.noise)?,
            coinc_after.with_poisson_noise(
                noise.peak_counts,
                derive_seed(resolved.seeds.noise, "after"),
            )?,
        )),
        None => None,
    };
    let singles = match cfg.singles {
        Some(env) => Some(spdc::singles_map(env, &d, resolved.scanning_wavelength, g)?),
        None => None,
    };

    let metrics = MetricsReport {
        pearson_pump_vs_coinc,
        grain_size_pump,
        grain_size_coinc,
        scale_ratio: grain_size_coinc / grain_size_pump,
        enhancement_pump,
        enhancement_coinc,
        coinc_argmax_steps,
        expected_focus_steps: resolved.expected_focus_steps,
        localization_error_steps,
        envelope_pixels,
    };
    Ok(ScenarioOutcome {
        config: cfg.clone(),
        resolved,
        diffuser: d,
        pump_before,
        pump_after,
        coinc_before,
        coinc_after,
        noisy_coinc,
        singles,
        envelope,
        record,
        ideal_enhancement,
        metrics,
        warnings,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

fn wrapped_distance(a: (isize, isize), b: (isize, isize), n: usize) -> usize {
    let n = n as isize;
    let d = |x: isize, y: isize| {
        let m = (x - y).rem_euclid(n);
        m.min(n - m) as usize
    };
    d(a.0, b.0).max(d(a.1, b.1))
}

#[derive(Serialize)]
struct WindowSidecar<'a> {
    #[serde(flatten)]
    map: CoincidenceSidecar,
    window_center_steps: (isize, isize),
    window_half_width: usize,
    stage: &'a str,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ScenarioConfig,
    resolved: &'a ResolvedScenario,
    metrics: &'a MetricsReport,
    optimizer_enhancement: f64,
    ideal_enhancement: f64,
    evaluations: usize,
    diffuser: DiffuserSidecar,
    warnings: &'a [String],
    files: Vec<String>,
}

/// Writes all artifacts of `outcome` into `dir` and returns the file names.
///
/// Outputs depend only on the configuration, so two runs of the same
/// configuration produce identical files.
pub fn write_artifacts(outcome: &ScenarioOutcome, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = std::cell::RefCell::new(Vec::new());
    let out = |name: &str| {
        let p = dir.join(name);
        files.borrow_mut().push(p.clone());
        p
    };

    let g = outcome.config.grid;
    let r = &outcome.resolved;
    let hw = outcome.config.window_half_width;
    let center = r.expected_focus_steps;

    io::write_matrix_csv(&out("pump_before.csv"), &outcome.pump_before.values)?;
    io::write_matrix_csv(&out("pump_after.csv"), &outcome.pump_after.values)?;
    io::write_pgm(&out("pump_before.pgm"), &outcome.pump_before.values)?;
    io::write_pgm(&out("pump_after.pgm"), &outcome.pump_after.values)?;

    let mut coinc = vec![
        ("coinc_before", &outcome.coinc_before),
        ("coinc_after", &outcome.coinc_after),
    ];
    if let Some((b, a)) = &outcome.noisy_coinc {
        coinc.push(("coinc_noisy_before", b));
        coinc.push(("coinc_noisy_after", a));
    }
    for (stem, map) in coinc {
        let seed = if stem.contains("noisy") {
            r.seeds.noise
        } else {
            outcome.config.seed
        };
        let window = coincidence_window(&map.values, g, center, hw);
        io::write_matrix_csv(&out(&format!("{stem}.csv")), &window)?;
        io::write_pgm(&out(&format!("{stem}.pgm")), &window)?;
        let side = WindowSidecar {
            map: map.sidecar(seed),
            window_center_steps: center,
            window_half_width: hw,
            stage: stem,
        };
        io::write_json(&out(&format!("{stem}.json")), &side)?;
    }

    io::write_matrix_csv(&out("mask.csv"), &outcome.record.final_mask.to_matrix())?;
    let diffuser_csv = out("diffuser.csv");
    outcome.diffuser.save(&diffuser_csv)?;
    files.borrow_mut().push(diffuser_csv.with_extension("json"));
    if let Some(s) = &outcome.singles {
        io::write_matrix_csv(&out("singles.csv"), s)?;
        io::write_pgm(&out("singles.pgm"), s)?;
    }
    io::write_json(&out("trace.json"), &outcome.record)?;

    let manifest_path = out("manifest.json");
    let names = files
        .borrow()
        .iter()
        .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
        .collect();
    let manifest = Manifest {
        config: &outcome.config,
        resolved: &outcome.resolved,
        metrics: &outcome.metrics,
        optimizer_enhancement: outcome.record.enhancement,
        ideal_enhancement: outcome.ideal_enhancement,
        evaluations: outcome.record.evaluations,
        diffuser: outcome.diffuser.sidecar(),
        warnings: &outcome.warnings,
        files: names,
    };
    io::write_json(&manifest_path, &manifest)?;
    Ok(files.into_inner())
}

/// Pump field used by every scenario: an untilted Gaussian at the crystal.
pub fn scenario_pump(cfg: &ScenarioConfig) -> Result<ComplexField> {
    grid::gaussian_beam(
        cfg.grid,
        cfg.pump.waist,
        (0.0, 0.0),
        (0.0, 0.0),
        cfg.pump.wavelength,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::lab::demos;

    fn small(mut cfg: ScenarioConfig) -> ScenarioConfig {
        cfg.grid = Grid::new(128, 10e-6).unwrap();
        cfg.pump.waist = 0.28e-3;
        cfg.diffuser.corr_length = 60e-6;
        cfg.diffuser.rms_phase = std::f64::consts::PI;
        cfg.optimizer.segments_per_side = 16;
        cfg.optimizer.iterations = 1500;
        cfg.optimizer.aperture_px = Some(64);
        cfg.window_half_width = 8;
        cfg.q_stationary = (cfg.q_stationary.0 / 4.0, cfg.q_stationary.1 / 4.0);
        if let Some(s) = cfg.singles.as_mut() {
            s.ring_radius /= 4.0;
        }
        cfg
    }

    #[test]
    fn window_wraps_and_centres() {
        let g = Grid::new(16, 1e-5).unwrap();
        let m = Array2::from_shape_fn((16, 16), |(r, c)| (r * 16 + c) as f64);
        let w = coincidence_window(&m, g, (-8, 0), 2);
        assert_eq!(w.dim(), (5, 5));
        assert_eq!(w[(2, 2)], m[g.index_of_steps((-8, 0))]);
        assert_eq!(w[(2, 0)], m[(8, 14)]);
    }

    #[test]
    fn small_scenario_identities_hold() {
        let out = run_scenario(&small(demos::fig2())).unwrap();
        let m = &out.metrics;
        assert!((m.enhancement_coinc / m.enhancement_pump - 1.0).abs() < 1e-10);
        assert!((m.enhancement_pump / out.record.enhancement - 1.0).abs() < 1e-9);
        assert!(m.pearson_pump_vs_coinc > 0.999999);
        assert!(
            m.localization_error_steps <= 1,
            "{m:?} {}",
            out.ideal_enhancement
        );
        assert!(m.enhancement_pump > 5.0);
        assert!(out.singles.is_some());
    }

    #[test]
    fn artifacts_are_written_and_listed() {
        let mut cfg = small(demos::fig3_degenerate());
        cfg.noise = Some(super::super::config::NoiseConfig { peak_counts: 200.0 });
        let out = run_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = write_artifacts(&out, dir.path()).unwrap();
        for f in &files {
            assert!(f.exists(), "{}", f.display());
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap())
                .unwrap();
        assert!(manifest["metrics"]["enhancement_pump"].as_f64().unwrap() > 1.0);
        assert!(dir.path().join("coinc_noisy_after.csv").exists());
        let window = io::read_matrix_csv(&dir.path().join("coinc_after.csv")).unwrap();
        assert_eq!(window.dim(), (17, 17));
    }

    #[test]
    fn replayed_diffuser_reproduces_the_run() {
        let cfg = small(demos::fig3_nondegenerate());
        let first = run_scenario(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        first.diffuser.save(&path).unwrap();
        let mut replay = cfg.clone();
        replay.diffuser.replay = Some(path);
        let second = run_scenario(&replay).unwrap();
        assert_eq!(first.pump_before, second.pump_before);
        assert_eq!(first.record, second.record);
    }

    #[test]
    fn errors_carry_scenario_context() {
        let mut cfg = small(demos::fig2());
        cfg.diffuser.replay = Some(PathBuf::from("/nonexistent/d.csv"));
        let err = run_scenario(&cfg).unwrap_err();
        assert!(err.to_string().contains("scenario 'fig2'"));
        assert!(!err.is_config());
    }
}
