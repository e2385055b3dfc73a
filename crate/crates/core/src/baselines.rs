//! Reference schemes: a full-CSI joint optimizer (upper bound), the naive
//! scheme that reuses the previous slot's LoS channels, and random phases.

use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GainSource, Graph, Tensor};
use crate::channel::ChannelRealization;
use crate::cmat::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::metrics::{
    matched_filter, project_unit_modulus, surrogate_rate, BeamformingMatrix, NoiseModel,
    PhaseShiftVector,
};
use crate::models::{decode_precoder, encode_precoder};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenieOptConfig {
    pub iterations: usize,
    pub restarts: usize,
    /// Initial step, relative to the size of each variable.
    pub step: f64,
    /// The ascent stops once the step shrinks below this.
    pub tolerance: f64,
}

impl Default for GenieOptConfig {
    fn default() -> Self {
        Self { iterations: 500, restarts: 5, step: 0.05, tolerance: 1e-8 }
    }
}

impl GenieOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::param("genie.restarts", "must be at least 1"));
        }
        if !(self.step > 0.0) {
            return Err(Error::param("genie.step", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("genie.tolerance", "must be positive"));
        }
        Ok(())
    }
}

pub fn random_phase<R: Rng + ?Sized>(n: usize, rng: &mut R) -> PhaseShiftVector {
    let phases: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..TAU)).collect();
    PhaseShiftVector::from_phases(&phases)
}

fn flat(v: &[C64]) -> Vec<f64> {
    let mut out: Vec<f64> = v.iter().map(|z| z.re).collect();
    out.extend(v.iter().map(|z| z.im));
    out
}

fn unflat(x: &[f64]) -> Vec<C64> {
    let n = x.len() / 2;
    (0..n).map(|i| C64::new(x[i], x[n + i])).collect()
}

struct Ascent<'a> {
    chans: Arc<Vec<CMatrix>>,
    noise: &'a NoiseModel,
    power: f64,
}

impl Ascent<'_> {
    fn rate_and_grads(&self, v: &[f64], w: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let vn = g.param("v", Tensor::vector(v.to_vec()));
        let wn = g.param("w", Tensor::vector(w.to_vec()));
        let gains = g.gains(Some(vn), wn, GainSource::Cascaded(self.chans.clone()))?;
        let r = g.sum_rate(gains, &self.noise.sigma_sq)?;
        let grads = g.backward(r)?;
        let gv = grads.wrt(vn).map(<[f64]>::to_vec).unwrap_or_default();
        let gw = grads.wrt(wn).map(<[f64]>::to_vec).unwrap_or_default();
        Ok((g.value(r).item(), gv, gw))
    }

    /// Normalized-gradient projected ascent from a feasible start; a step is
    /// kept only if it improves the rate, otherwise the step size halves.
    fn run(&self, mut v: Vec<f64>, mut w: Vec<f64>, cfg: &GenieOptConfig) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let n = v.len() / 2;
        let v_size = (n as f64).sqrt();
        let w_size = self.power.sqrt();
        let mut step = cfg.step;
        let (mut rate, mut gv, mut gw) = self.rate_and_grads(&v, &w)?;
        for _ in 0..cfg.iterations {
            if step < cfg.tolerance {
                break;
            }
            let nv = gv.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nw = gw.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !(nv.is_finite() && nw.is_finite()) || (nv == 0.0 && nw == 0.0) {
                break;
            }
            let cand_v: Vec<f64> = if nv > 0.0 {
                let moved: Vec<f64> = v.iter().zip(&gv).map(|(a, g)| a + step * v_size * g / nv).collect();
                flat(project_unit_modulus(&unflat(&moved)).as_slice())
            } else {
                v.clone()
            };
            let cand_w: Vec<f64> = if nw > 0.0 {
                let moved: Vec<f64> = w.iter().zip(&gw).map(|(a, g)| a + step * w_size * g / nw).collect();
                let p: f64 = moved.iter().map(|x| x * x).sum();
                if p > self.power {
                    let s = (self.power / p).sqrt();
                    moved.iter().map(|x| x * s).collect()
                } else {
                    moved
                }
            } else {
                w.clone()
            };
            let (r, cgv, cgw) = self.rate_and_grads(&cand_v, &cand_w)?;
            if r > rate {
                (v, w, rate, gv, gw) = (cand_v, cand_w, r, cgv, cgw);
            } else {
                step *= 0.5;
            }
        }
        Ok((v, w, rate))
    }
}

/// Jointly optimizes `(v, W)` for the sum-rate over cascaded channels
/// `Hc_k`, best of `restarts` random-phase starts with a matched-filter
/// precoder. The result is never worse than any start point.
pub fn joint_ascent<R: Rng + ?Sized>(
    cascaded: &[CMatrix],
    power: f64,
    noise: &NoiseModel,
    cfg: &GenieOptConfig,
    rng: &mut R,
) -> Result<(PhaseShiftVector, BeamformingMatrix, f64)> {
    cfg.validate()?;
    let (n, m) = cascaded
        .first()
        .map(CMatrix::shape)
        .ok_or_else(|| Error::shape("joint_ascent", "at least one user", 0))?;
    let k = cascaded.len();
    let engine = Ascent { chans: Arc::new(cascaded.to_vec()), noise, power };
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    for _ in 0..cfg.restarts {
        let v0 = random_phase(n, rng);
        let eff: Vec<Vec<C64>> = cascaded
            .iter()
            .map(|h| h.tr_mul_vec(v0.as_slice()).into_iter().map(|z| z.conj()).collect())
            .collect();
        let w0 = matched_filter(&eff, power);
        let (v, w, r) = engine.run(flat(v0.as_slice()), encode_precoder(w0.matrix()), cfg)?;
        if best.as_ref().is_none_or(|b| r > b.2) {
            best = Some((v, w, r));
        }
    }
    let (v, w, _) = best.expect("restarts >= 1");
    let v = project_unit_modulus(&unflat(&v));
    let w = decode_precoder(&w, m, k, power)?;
    // recompute on the projected pair so the reported rate is exact
    let rate = surrogate_rate(cascaded, v.as_slice(), &w, noise)?;
    Ok((v, w, rate))
}

/// Full-CSI upper bound: joint optimization on the true instantaneous
/// cascaded channels.
pub fn genie_joint_opt<R: Rng + ?Sized>(
    channels: &ChannelRealization,
    power: f64,
    noise: &NoiseModel,
    cfg: &GenieOptConfig,
    rng: &mut R,
) -> Result<(PhaseShiftVector, BeamformingMatrix, f64)> {
    joint_ascent(&channels.cascaded(), power, noise, cfg, rng)
}

/// Phases optimized for the previous slot's cascaded LoS channels; the
/// auxiliary precoder is dropped.
pub fn naive_los_phase<R: Rng + ?Sized>(
    prev_cascaded: &[CMatrix],
    power: f64,
    noise: &NoiseModel,
    cfg: &GenieOptConfig,
    rng: &mut R,
) -> Result<PhaseShiftVector> {
    Ok(joint_ascent(prev_cascaded, power, noise, cfg, rng)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_phase_is_seeded_and_unit() {
        let a = random_phase(16, &mut ChaCha8Rng::seed_from_u64(5));
        let b = random_phase(16, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn random_phase_is_circular() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut sum = [C64::new(0.0, 0.0); 4];
        let draws = 100_000;
        for _ in 0..draws {
            for (s, z) in sum.iter_mut().zip(random_phase(4, &mut rng).as_slice()) {
                *s += z;
            }
        }
        assert!(sum.iter().all(|s| s.norm() / (draws as f64) <= 0.02));
    }

    #[test]
    fn zero_restarts_rejected() {
        let cfg = GenieOptConfig { restarts: 0, ..Default::default() };
        let h = vec![CMatrix::from_fn(1, 1, |_, _| C64::new(1.0, 0.0))];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(joint_ascent(&h, 1.0, &NoiseModel::uniform(1, 1.0), &cfg, &mut rng).is_err());
    }
}
