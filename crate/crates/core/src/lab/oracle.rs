use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::diffuser::{self, DiffuserMap};
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::spdc::{self, WavelengthTriple, ORACLE_MAX_N};

/// Agreement between the transform path and direct quadrature for one
/// wavelength split.
#[derive(Debug, Clone, Serialize)]
pub struct OracleSplit {
    pub lambda_s: f64,
    pub lambda_i: f64,
    pub q_i_steps: (isize, isize),
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub n: usize,
    pub points: usize,
    pub seed: u64,
    pub splits: Vec<OracleSplit>,
    pub max_rel_err: f64,
}

/// Compares [`spdc::coincidence_map`] with [`spdc::coincidence_quadrature_oracle`]
/// at `points` random signal wavevectors, for a degenerate and a
/// non-degenerate split behind a random diffuser.
///
/// Errors are relative to the map peak.
pub fn run_oracle(n: usize, points: usize, seed: u64) -> Result<OracleReport> {
    if n > ORACLE_MAX_N {
        return Err(Error::Config(format!(
            "oracle grids are limited to n <= {ORACLE_MAX_N} (got {n})"
        )));
    }
    if points == 0 {
        return Err(Error::Config(
            "at least one comparison point is needed".into(),
        ));
    }
    let pitch = 10e-6;
    let g = Grid::new(n, pitch)?;
    let lambda_p = 404e-9;
    let rms = diffuser::rms_height_for_phase(2.0 * std::f64::consts::PI, lambda_p, 1.5);
    let d = DiffuserMap::generate(g, 2.5 * pitch, rms, 1.5, seed)?;
    let pump = grid::gaussian_beam(g, g.extent() / 8.0, (0.0, 0.0), (0.0, 0.0), lambda_p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let half = (n / 2) as i64;
    let mut step = |lo: i64, hi: i64| rng.random_range(lo..hi) as isize;

    let mut splits = Vec::new();
    for lambda_s in [808e-9, 850e-9] {
        let w = WavelengthTriple::new(lambda_p, lambda_s)?;
        let q_i_steps = (step(-half / 2, half / 2), step(-half / 2, half / 2));
        let q_i = (q_i_steps.0 as f64 * g.dq(), q_i_steps.1 as f64 * g.dq());
        let map = spdc::coincidence_map(&pump, &d, w, q_i)?;
        let steps: Vec<(isize, isize)> = (0..points)
            .map(|_| (step(-half, half), step(-half, half)))
            .collect();
        let q_s: Vec<(f64, f64)> = steps
            .iter()
            .map(|&(x, y)| (x as f64 * g.dq(), y as f64 * g.dq()))
            .collect();
        let quad = spdc::coincidence_quadrature_oracle(&pump, &d, w, q_i, &q_s)?;
        let max_rel_err = steps
            .iter()
            .zip(&quad)
            .map(|(&s, &r)| (map.raw_at(map.index_of_signal_steps(s)) - r).abs() / map.peak_rate)
            .fold(0.0, f64::max);
        splits.push(OracleSplit {
            lambda_s: w.lambda_s(),
            lambda_i: w.lambda_i(),
            q_i_steps,
            max_rel_err,
        });
    }
    let max_rel_err = splits.iter().map(|s| s.max_rel_err).fold(0.0, f64::max);
    Ok(OracleReport {
        n,
        points,
        seed,
        splits,
        max_rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_oracle_agrees() {
        let r = run_oracle(16, 12, 4).unwrap();
        assert_eq!(r.splits.len(), 2);
        assert!(r.max_rel_err < 1e-8, "{}", r.max_rel_err);
    }

    #[test]
    fn large_grid_is_refused() {
        assert!(run_oracle(128, 10, 0).unwrap_err().is_config());
    }
}
