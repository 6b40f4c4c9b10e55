//! Segmented phase-only SLM on the pump and the partitioning feedback
//! optimizer.
//!
//! Each optimizer iteration draws a uniformly random half of the segments,
//! sweeps a common phase offset over `phase_steps` equally spaced values in
//! `[0, 2*pi)`, and keeps the best offset if it strictly raises the feedback.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffuser::DiffuserMap;
use crate::error::{Error, Result};
use crate::grid::{self, ComplexField, Domain, Grid};
use crate::spdc;

const TWO_PI: f64 = 2.0 * PI;

/// `S x S` piecewise-constant phase pattern, phases kept in `[0, 2*pi)`.
///
/// The segments tile a centred square aperture of `aperture_px` pixels per
/// side (the whole grid when unset); light outside the aperture is left
/// unmodulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMask {
    segments_per_side: usize,
    phases: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    aperture_px: Option<usize>,
}

/// Pixel-to-segment mapping of a mask on a particular grid.
#[derive(Debug, Clone, Copy)]
struct Layout {
    segments_per_side: usize,
    offset: usize,
    block: usize,
    aperture: usize,
}

impl Layout {
    fn segment_of(&self, iy: usize, ix: usize) -> Option<usize> {
        let inside = |i: usize| i >= self.offset && i < self.offset + self.aperture;
        (inside(iy) && inside(ix)).then(|| {
            ((iy - self.offset) / self.block) * self.segments_per_side
                + (ix - self.offset) / self.block
        })
    }
}

fn wrap(p: f64) -> f64 {
    let w = p.rem_euclid(TWO_PI);
    // rem_euclid can round up to exactly 2*pi for tiny negative inputs
    if w >= TWO_PI {
        0.0
    } else {
        w
    }
}

impl PhaseMask {
    pub fn zeros(segments_per_side: usize) -> Result<Self> {
        if segments_per_side == 0 {
            return Err(Error::config("a phase mask needs at least one segment"));
        }
        Ok(PhaseMask {
            segments_per_side,
            phases: vec![0.0; segments_per_side * segments_per_side],
            aperture_px: None,
        })
    }

    /// Row-major segment phases; values are wrapped into `[0, 2*pi)`.
    pub fn from_phases(segments_per_side: usize, phases: Vec<f64>) -> Result<Self> {
        if segments_per_side == 0 || phases.len() != segments_per_side * segments_per_side {
            return Err(Error::config(format!(
                "expected {} segment phases, got {}",
                segments_per_side * segments_per_side,
                phases.len()
            )));
        }
        if phases.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("segment phases must be finite"));
        }
        Ok(PhaseMask {
            segments_per_side,
            phases: phases.into_iter().map(wrap).collect(),
            aperture_px: None,
        })
    }

    /// Restricts the segments to a centred square of `aperture_px` pixels.
    /// `None` spreads them over the whole grid.
    pub fn with_aperture(mut self, aperture_px: Option<usize>) -> Result<Self> {
        if let Some(a) = aperture_px {
            if a == 0 || a % self.segments_per_side != 0 {
                return Err(Error::config(format!(
                    "{} segments per side do not divide the {a}-pixel aperture",
                    self.segments_per_side
                )));
            }
        }
        self.aperture_px = aperture_px;
        Ok(self)
    }

    pub fn aperture_px(&self) -> Option<usize> {
        self.aperture_px
    }

    pub fn segments_per_side(&self) -> usize {
        self.segments_per_side
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn set(&mut self, segment: usize, phase: f64) {
        self.phases[segment] = wrap(phase);
    }

    /// Adds `offset` to every listed segment.
    pub fn add_offset(&mut self, segments: &[usize], offset: f64) {
        for &s in segments {
            self.phases[s] = wrap(self.phases[s] + offset);
        }
    }

    /// Adds `offset` to all segments.
    pub fn add_global_offset(&mut self, offset: f64) {
        for p in &mut self.phases {
            *p = wrap(*p + offset);
        }
    }

    /// Phases as an `S x S` matrix (for export).
    pub fn to_matrix(&self) -> Array2<f64> {
        let s = self.segments_per_side;
        Array2::from_shape_vec((s, s), self.phases.clone()).expect("length checked at construction")
    }

    /// Upsamples the segment phases to a per-pixel phase map; pixels outside
    /// the aperture get zero phase.
    pub fn render(&self, grid: Grid) -> Result<Array2<f64>> {
        let layout = self.layout(grid)?;
        Ok(Array2::from_shape_fn(grid.shape(), |(iy, ix)| {
            layout.segment_of(iy, ix).map_or(0.0, |k| self.phases[k])
        }))
    }

    fn layout(&self, grid: Grid) -> Result<Layout> {
        let n = grid.n();
        let aperture = self.aperture_px.unwrap_or(n);
        if aperture > n || !(n - aperture).is_multiple_of(2) {
            return Err(Error::config(format!(
                "a {aperture}-pixel aperture cannot be centred on a {n}-point grid"
            )));
        }
        if !aperture.is_multiple_of(self.segments_per_side) {
            return Err(Error::config(format!(
                "{} segments per side do not divide the grid size {aperture}",
                self.segments_per_side
            )));
        }
        Ok(Layout {
            segments_per_side: self.segments_per_side,
            offset: (n - aperture) / 2,
            block: aperture / self.segments_per_side,
            aperture,
        })
    }
}

/// Free-function form of [`PhaseMask::render`].
pub fn render(mask: &PhaseMask, grid: Grid) -> Result<Array2<f64>> {
    mask.render(grid)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionParams {
    pub segments_per_side: usize,
    pub iterations: usize,
    pub phase_steps: usize,
    pub seed: u64,
    /// Side of the square the segments tile, pixels; whole grid when unset.
    pub aperture_px: Option<usize>,
    /// Denominator of the reported enhancement. Defaults to the baseline
    /// feedback of the all-zero mask.
    pub reference: Option<f64>,
}

impl Default for PartitionParams {
    fn default() -> Self {
        PartitionParams {
            segments_per_side: 16,
            iterations: 3000,
            phase_steps: 8,
            seed: 0,
            aperture_px: None,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub measurement_index: usize,
    pub feedback: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationRecord {
    pub params: PartitionParams,
    /// Baseline first, then one entry per iteration holding the best
    /// feedback seen in that sweep.
    pub trace: Vec<TraceEntry>,
    pub final_mask: PhaseMask,
    pub initial_feedback: f64,
    pub final_feedback: f64,
    pub reference: f64,
    pub enhancement: f64,
    pub evaluations: usize,
}

impl OptimizationRecord {
    /// Feedback values of the accepted steps, in order.
    pub fn accepted_feedback(&self) -> impl Iterator<Item = f64> + '_ {
        self.trace.iter().filter(|e| e.accepted).map(|e| e.feedback)
    }
}

/// Runs the partitioning algorithm from the all-zero mask.
///
/// `feedback` must be a pure function of the mask. Total evaluations are
/// `iterations * phase_steps + 1`.
pub fn partition_optimize<F>(feedback: F, params: &PartitionParams) -> Result<OptimizationRecord>
where
    F: Fn(&PhaseMask) -> f64,
{
    if params.phase_steps < 3 {
        return Err(Error::config(format!(
            "at least 3 phase steps are needed (got {})",
            params.phase_steps
        )));
    }
    let mut mask = PhaseMask::zeros(params.segments_per_side)?.with_aperture(params.aperture_px)?;
    let n_segments = mask.len();
    let half = (n_segments / 2).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let mut evaluations = 0usize;
    let mut evaluate = |m: &PhaseMask, iteration: usize, offset: f64| -> Result<f64> {
        let v = feedback(m);
        evaluations += 1;
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "feedback returned {v} at iteration {iteration} (offset {offset:.4} rad) for mask {:?}",
                m.phases()
            )));
        }
        Ok(v)
    };

    let initial = evaluate(&mask, 0, 0.0)?;
    let mut current = initial;
    let mut trace = Vec::with_capacity(params.iterations + 1);
    trace.push(TraceEntry {
        measurement_index: 0,
        feedback: initial,
        accepted: true,
    });

    let mut trial = mask.clone();
    for iteration in 1..=params.iterations {
        let chosen = rand::seq::index::sample(&mut rng, n_segments, half).into_vec();
        let mut best = (f64::NEG_INFINITY, 0.0);
        for step in 0..params.phase_steps {
            let offset = TWO_PI * step as f64 / params.phase_steps as f64;
            trial.clone_from(&mask);
            trial.add_offset(&chosen, offset);
            let v = evaluate(&trial, iteration, offset)?;
            if v > best.0 {
                best = (v, offset);
            }
        }
        let accepted = best.0 > current;
        if accepted {
            mask.add_offset(&chosen, best.1);
            current = best.0;
        }
        trace.push(TraceEntry {
            measurement_index: iteration * params.phase_steps,
            feedback: best.0,
            accepted,
        });
    }

    let reference = params.reference.unwrap_or(initial);
    if !(reference.is_finite() && reference > 0.0) {
        return Err(Error::Numerical(format!(
            "enhancement reference {reference} must be positive"
        )));
    }
    Ok(OptimizationRecord {
        params: *params,
        trace,
        final_mask: mask,
        initial_feedback: initial,
        final_feedback: current,
        reference,
        enhancement: current / reference,
        evaluations,
    })
}

/// Raw scattered-pump intensity at `target_q` (rad/m, snapped to the grid)
/// with `mask` displayed on the SLM.
pub fn feedback_pump_target(
    pump_base: &ComplexField,
    mask: &PhaseMask,
    d: &DiffuserMap,
    lambda_p: f64,
    target_q: (f64, f64),
) -> Result<f64> {
    let grid = pump_base.grid();
    let target = snap_target(grid, target_q)?;
    let shaped = grid::apply_phase(pump_base, &mask.render(grid)?)?;
    let map = spdc::pump_far_intensity(&shaped, d, lambda_p)?;
    Ok(map.raw_at(grid.index_of_steps(target)))
}

fn snap_target(grid: Grid, target_q: (f64, f64)) -> Result<(isize, isize)> {
    let snapped = grid.snap_q(target_q)?;
    if snapped.snap_distance > 1e-9 {
        log::warn!(
            "target ({:.6e}, {:.6e}) rad/m snapped to grid step {:?}",
            target_q.0,
            target_q.1,
            snapped.steps
        );
    }
    Ok(snapped.steps)
}

/// Fast equivalent of [`feedback_pump_target`] for a fixed pump, diffuser
/// and target.
///
/// The target far-field amplitude is linear in the segment phasors, so it is
/// precomputed as one complex contribution per segment; each evaluation is
/// then `|sum_k c_k exp(i theta_k)|^2`.
#[derive(Debug, Clone)]
pub struct SegmentFeedback {
    segments_per_side: usize,
    aperture_px: Option<usize>,
    contributions: Vec<Complex64>,
    /// Light reaching the target from outside the aperture.
    background: Complex64,
    target_steps: (isize, isize),
}

impl SegmentFeedback {
    pub fn new(
        pump_base: &ComplexField,
        d: &DiffuserMap,
        lambda_p: f64,
        target_q: (f64, f64),
        segments_per_side: usize,
    ) -> Result<Self> {
        Self::with_aperture(pump_base, d, lambda_p, target_q, segments_per_side, None)
    }

    /// As [`SegmentFeedback::new`] for segments tiling a centred square of
    /// `aperture_px` pixels.
    pub fn with_aperture(
        pump_base: &ComplexField,
        d: &DiffuserMap,
        lambda_p: f64,
        target_q: (f64, f64),
        segments_per_side: usize,
        aperture_px: Option<usize>,
    ) -> Result<Self> {
        pump_base.require_domain(Domain::CrystalPlane)?;
        let grid = pump_base.grid();
        let layout = PhaseMask::zeros(segments_per_side)?
            .with_aperture(aperture_px)?
            .layout(grid)?;
        let target_steps = snap_target(grid, target_q)?;
        let screened = grid::apply_phase(pump_base, &d.transfer_function(lambda_p)?)?;
        // same kernel as the centered DFT at the target sample
        let to_target = grid::tilt_ramp(grid, (-target_steps.0, -target_steps.1));
        let norm = 1.0 / grid.n() as f64;
        let mut contributions =
            vec![Complex64::new(0.0, 0.0); segments_per_side * segments_per_side];
        let mut background = Complex64::new(0.0, 0.0);
        for ((iy, ix), v) in screened.values().indexed_iter() {
            let c = v * Complex64::from_polar(norm, to_target[(iy, ix)]);
            match layout.segment_of(iy, ix) {
                Some(k) => contributions[k] += c,
                None => background += c,
            }
        }
        Ok(SegmentFeedback {
            segments_per_side,
            aperture_px,
            contributions,
            background,
            target_steps,
        })
    }

    pub fn target_steps(&self) -> (isize, isize) {
        self.target_steps
    }

    pub fn contributions(&self) -> &[Complex64] {
        &self.contributions
    }

    pub fn background(&self) -> Complex64 {
        self.background
    }

    pub fn evaluate(&self, mask: &PhaseMask) -> f64 {
        debug_assert_eq!(mask.segments_per_side(), self.segments_per_side);
        debug_assert_eq!(mask.aperture_px(), self.aperture_px);
        (self.background
            + self
                .contributions
                .iter()
                .zip(mask.phases())
                .map(|(c, &p)| c * Complex64::from_polar(1.0, p))
                .sum::<Complex64>())
        .norm_sqr()
    }

    /// The phase-only optimum: every segment phasor aligned with the
    /// unmodulated background (or with the real axis when there is none).
    pub fn optimal_mask(&self) -> PhaseMask {
        let anchor = if self.background.norm() > 0.0 {
            self.background.arg()
        } else {
            0.0
        };
        let phases = self
            .contributions
            .iter()
            .map(|c| anchor - c.arg())
            .collect();
        PhaseMask::from_phases(self.segments_per_side, phases)
            .and_then(|m| m.with_aperture(self.aperture_px))
            .expect("layout validated at construction")
    }

    /// Target intensity of [`SegmentFeedback::optimal_mask`],
    /// `(|b| + sum_k |c_k|)^2`.
    pub fn optimal_feedback(&self) -> f64 {
        (self.background.norm() + self.contributions.iter().map(|c| c.norm()).sum::<f64>()).powi(2)
    }
}

/// Mask whose segments cancel the segment-averaged phase the diffuser
/// imprints on the pump: `-arg(sum over segment of W * A_d(lambda_p))`.
pub fn conjugate_mask(
    pump_base: &ComplexField,
    d: &DiffuserMap,
    lambda_p: f64,
    segments_per_side: usize,
) -> Result<PhaseMask> {
    Ok(SegmentFeedback::new(pump_base, d, lambda_p, (0.0, 0.0), segments_per_side)?.optimal_mask())
}
