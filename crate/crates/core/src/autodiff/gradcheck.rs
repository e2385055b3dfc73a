//! Central-difference comparison of analytic gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ParameterSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Upper bound on the number of coordinates perturbed.
    pub max_coords: usize,
    pub tolerance: f64,
    /// Denominator floor so that coordinates with vanishing gradient are
    /// judged on absolute error.
    pub abs_floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { step: 1e-5, max_coords: 400, tolerance: 1e-4, abs_floor: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    /// `(parameter, flat index)` of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub passed: bool,
}

/// Perturbs a seeded sample of coordinates of `params`, evaluates `loss` at
/// `θ ± h`, and compares against `analytic`.
pub fn grad_check<F>(params: &ParameterSet, analytic: &ParameterSet, mut loss: F, config: &GradCheckConfig) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet) -> Result<f64>,
{
    let mut coords: Vec<(String, usize)> = Vec::new();
    for (name, t) in params.iter() {
        let g = analytic.get(name).ok_or_else(|| Error::MissingGrad(name.to_string()))?;
        if g.numel() != t.numel() {
            return Err(Error::shape("grad_check", t.shape(), g.shape()));
        }
        coords.extend((0..t.numel()).map(|i| (name.to_string(), i)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let picks: Vec<usize> = if coords.len() <= config.max_coords {
        (0..coords.len()).collect()
    } else {
        let mut v = sample(&mut rng, coords.len(), config.max_coords).into_vec();
        v.sort_unstable();
        v
    };

    let mut work = params.clone();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    for &ci in &picks {
        let (name, idx) = &coords[ci];
        let orig = params.get(name).expect("collected above").data()[*idx];
        work.get_mut(name).expect("same names").data_mut()[*idx] = orig + config.step;
        let plus = loss(&work)?;
        work.get_mut(name).expect("same names").data_mut()[*idx] = orig - config.step;
        let minus = loss(&work)?;
        work.get_mut(name).expect("same names").data_mut()[*idx] = orig;
        let numeric = (plus - minus) / (2.0 * config.step);
        let a = analytic.get(name).expect("checked above").data()[*idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(config.abs_floor);
        if !rel.is_finite() {
            return Err(Error::NonFinite { stage: "grad_check", batch: *idx });
        }
        if rel > max_rel || worst.is_none() {
            max_rel = max_rel.max(rel);
            worst = Some((name.clone(), *idx));
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        checked: picks.len(),
        worst,
        passed: max_rel <= config.tolerance,
    })
}
