use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;

use pumpshape::diffuser::{self, DiffuserMap};
use pumpshape::fft;
use pumpshape::grid::{self, ComplexField, Domain, Grid};
use pumpshape::shaper::{self, PartitionParams, PhaseMask, SegmentFeedback};
use pumpshape::spdc::{self, WavelengthTriple};

const LAMBDA_P: f64 = 404e-9;

fn grid64() -> Grid {
    Grid::new(64, 10e-6).unwrap()
}

fn screen(g: Grid, seed: u64, rms_phase: f64) -> DiffuserMap {
    let h = diffuser::rms_height_for_phase(rms_phase, LAMBDA_P, 1.5);
    diffuser::generate(g, 30e-6, h, seed).unwrap()
}

fn pump(g: Grid) -> ComplexField {
    grid::gaussian_beam(g, 140e-6, (0.0, 0.0), (0.0, 0.0), LAMBDA_P).unwrap()
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn random_field(g: Grid, seed: u64) -> ComplexField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let v = Array2::from_shape_fn(g.shape(), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    ComplexField::new(g, v, Domain::CrystalPlane, LAMBDA_P).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn coincidences_follow_pump_intensity(
        seed in any::<u64>(),
        lambda_s in 420e-9..1600e-9_f64,
        qx in -20isize..20,
        qy in -20isize..20,
    ) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let p = pump(g);
        let w = WavelengthTriple::new(LAMBDA_P, lambda_s).unwrap();
        let q_i = (qx as f64 * g.dq(), qy as f64 * g.dq());
        let c = spdc::coincidence_map(&p, &d, w, q_i).unwrap();
        let i = spdc::pump_far_intensity(&p, &d, LAMBDA_P).unwrap();
        let raw_i = i.raw();
        let expected = fft::circshift(&raw_i, (-qy, -qx));
        let err = max_abs_diff(&c.raw(), &expected) / i.peak;
        prop_assert!(err < 1e-10, "relative error {err}");
    }

    #[test]
    fn idler_offset_shifts_map(seed in any::<u64>(), dx in -12isize..12, dy in -12isize..12) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let p = pump(g);
        let w = WavelengthTriple::degenerate(LAMBDA_P).unwrap();
        let base = spdc::coincidence_map(&p, &d, w, (3.0 * g.dq(), 0.0)).unwrap();
        let moved = spdc::coincidence_map(&p, &d, w, ((3 + dx) as f64 * g.dq(), dy as f64 * g.dq())).unwrap();
        let expected = fft::circshift(&base.raw(), (-dy, -dx));
        prop_assert!(max_abs_diff(&moved.raw(), &expected) <= 1e-12 * base.peak_rate);
    }

    #[test]
    fn wavelength_split_does_not_matter(seed in any::<u64>(), a in 420e-9..1600e-9_f64, b in 420e-9..1600e-9_f64) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let p = pump(g);
        let q_i = (5.0 * g.dq(), -7.0 * g.dq());
        let ma = spdc::coincidence_map(&p, &d, WavelengthTriple::new(LAMBDA_P, a).unwrap(), q_i).unwrap();
        let mb = spdc::coincidence_map(&p, &d, WavelengthTriple::new(LAMBDA_P, b).unwrap(), q_i).unwrap();
        prop_assert!(max_abs_diff(&ma.raw(), &mb.raw()) / ma.peak_rate < 1e-10);
    }

    #[test]
    fn phases_factorize_under_energy_conservation(seed in any::<u64>(), lambda_s in 420e-9..1600e-9_f64) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let w = WavelengthTriple::new(LAMBDA_P, lambda_s).unwrap();
        let ps = d.transmission(w.lambda_s()).unwrap();
        let pi = d.transmission(w.lambda_i()).unwrap();
        let pp = d.transmission(w.lambda_p()).unwrap();
        for ((s, i), p) in ps.iter().zip(&pi).zip(&pp) {
            prop_assert!((s * i - p).norm() < 1e-12);
        }
        let phase_p = d.transfer_function(w.lambda_p()).unwrap();
        let sum = d.transfer_function(w.lambda_s()).unwrap() + d.transfer_function(w.lambda_i()).unwrap();
        let scale = phase_p.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_abs_diff(&sum, &phase_p) <= 1e-12 * scale);
    }

    #[test]
    fn phase_is_linear_in_inverse_wavelength(seed in any::<u64>(), k in 0i32..4, lambda in 300e-9..2000e-9_f64) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let reference = d.transfer_function(LAMBDA_P).unwrap();
        // power-of-two ratios are exact in floating point
        let factor = 2.0_f64.powi(k);
        let scaled = d.transfer_function(LAMBDA_P / factor).unwrap();
        prop_assert_eq!(scaled, reference.mapv(|v| v * factor));
        let other = d.transfer_function(lambda).unwrap();
        let expected = reference.mapv(|v| v * LAMBDA_P / lambda);
        let scale = expected.iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(max_abs_diff(&other, &expected) <= 1e-12 * scale);
    }

    #[test]
    fn thin_screen_memory_effect(seed in any::<u64>(), sx in -30isize..30, sy in -30isize..30) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let r = diffuser::memory_shift_check(&d, &pump(g), (sx, sy)).unwrap();
        prop_assert!(r > 0.999999, "correlation {r}");
    }

    #[test]
    fn far_field_is_unitary(seed in any::<u64>()) {
        let g = grid64();
        let f = random_field(g, seed);
        let far = grid::far_field(&f).unwrap();
        prop_assert!((far.power() / f.power() - 1.0).abs() < 1e-12);
        let back = grid::near_field(&far).unwrap();
        let scale = f.values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        let err = back.values().iter().zip(f.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-12 * scale);
        let phase = Array2::from_shape_fn(g.shape(), |(r, c)| ((r * 7 + c * 3) % 11) as f64);
        let screened = grid::apply_phase(&f, &phase).unwrap();
        prop_assert!((screened.power() / f.power() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn integer_ramp_is_a_circular_shift(seed in any::<u64>(), sx in -32isize..32, sy in -32isize..32) {
        let g = grid64();
        let f = random_field(g, seed);
        let base = grid::far_field(&f).unwrap().intensity();
        let tilted = grid::apply_phase(&f, &grid::tilt_ramp(g, (sx, sy))).unwrap();
        let moved = grid::far_field(&tilted).unwrap().intensity();
        let expected = fft::circshift(&base, (sy, sx));
        let peak = base.iter().cloned().fold(0.0, f64::max);
        prop_assert!(max_abs_diff(&moved, &expected) < 1e-12 * peak.max(1.0));
    }

    #[test]
    fn optimizer_trace_is_monotone_and_reproducible(seed in any::<u64>(), opt_seed in any::<u64>()) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let p = pump(g);
        let fb = SegmentFeedback::new(&p, &d, LAMBDA_P, (0.0, 0.0), 8).unwrap();
        let params = PartitionParams { segments_per_side: 8, iterations: 60, phase_steps: 6, seed: opt_seed, ..Default::default() };
        let a = shaper::partition_optimize(|m| fb.evaluate(m), &params).unwrap();
        let accepted: Vec<f64> = a.accepted_feedback().collect();
        prop_assert!(accepted.windows(2).all(|w| w[1] >= w[0]));
        prop_assert_eq!(a.evaluations, 60 * 6 + 1);
        prop_assert!(a.enhancement > 0.0);
        let b = shaper::partition_optimize(|m| fb.evaluate(m), &params).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn global_segment_offset_is_a_gauge(seed in any::<u64>(), offset in 0.0..std::f64::consts::TAU) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let p = pump(g);
        let target = (2.0 * g.dq(), -g.dq());
        let mask = PhaseMask::from_phases(4, (0..16).map(|k| (k * k) as f64 * 0.3).collect()).unwrap();
        let mut shifted = mask.clone();
        shifted.add_global_offset(offset);
        let a = shaper::feedback_pump_target(&p, &mask, &d, LAMBDA_P, target).unwrap();
        let b = shaper::feedback_pump_target(&p, &shifted, &d, LAMBDA_P, target).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn shaped_pump_shapes_coincidences(seed in any::<u64>(), qx in -10isize..10, lambda_s in 500e-9..1200e-9_f64) {
        let g = grid64();
        let d = screen(g, seed, 6.0);
        let p = pump(g);
        let fb = SegmentFeedback::new(&p, &d, LAMBDA_P, (0.0, 0.0), 8).unwrap();
        let shaped = grid::apply_phase(&p, &fb.optimal_mask().render(g).unwrap()).unwrap();
        let w = WavelengthTriple::new(LAMBDA_P, lambda_s).unwrap();
        let q_i = (qx as f64 * g.dq(), 0.0);
        let c = spdc::coincidence_map(&shaped, &d, w, q_i).unwrap();
        let at_focus = c.raw_at(c.index_of_signal_steps((-qx, 0)));
        prop_assert!((at_focus / fb.optimal_feedback() - 1.0).abs() < 1e-10);
    }
}
