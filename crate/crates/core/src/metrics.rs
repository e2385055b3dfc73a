//! SINR / sum-rate evaluation and the two feasibility projections.

use crate::channel::{effective_miso, ChannelRealization};
use crate::cmat::{inner, norm_sq, CMatrix, C64};
use crate::error::{Error, Result};

pub const UNIT_MODULUS_TOL: f64 = 1e-9;
pub const POWER_TOL: f64 = 1e-9;

/// Magnitudes below this are treated as zero by the unit-modulus projection.
const DEGENERATE_MAGNITUDE: f64 = 1e-12;

/// Diagonal of the IRS reflection matrix; every entry has unit modulus.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseShiftVector(Vec<C64>);

impl PhaseShiftVector {
    pub fn new(v: Vec<C64>) -> Result<Self> {
        if let Some((n, z)) = v
            .iter()
            .enumerate()
            .find(|(_, z)| !((z.norm() - 1.0).abs() <= UNIT_MODULUS_TOL))
        {
            return Err(Error::Constraint(format!(
                "phase entry {n} has modulus {}",
                z.norm()
            )));
        }
        Ok(Self(v))
    }

    pub fn from_phases(phases: &[f64]) -> Self {
        Self(phases.iter().map(|&p| C64::from_polar(1.0, p)).collect())
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![C64::new(1.0, 0.0); n])
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Phases in `[0, 2π)`.
    pub fn phases(&self) -> Vec<f64> {
        self.0
            .iter()
            .map(|z| z.arg().rem_euclid(std::f64::consts::TAU))
            .collect()
    }
}

/// Transmit precoder `W` (`M × K`, column `k` serves user `k`) with its
/// power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingMatrix {
    w: CMatrix,
    power_budget: f64,
}

impl BeamformingMatrix {
    pub fn new(w: CMatrix, power_budget: f64) -> Result<Self> {
        let total = w.frobenius_sq();
        if !(total <= power_budget * (1.0 + POWER_TOL)) {
            return Err(Error::Constraint(format!(
                "transmit power {total} exceeds budget {power_budget}"
            )));
        }
        Ok(Self { w, power_budget })
    }

    pub fn zeros(antennas: usize, users: usize, power_budget: f64) -> Self {
        Self { w: CMatrix::zeros(antennas, users), power_budget }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.w
    }

    pub fn power_budget(&self) -> f64 {
        self.power_budget
    }

    pub fn total_power(&self) -> f64 {
        self.w.frobenius_sq()
    }

    pub fn antennas(&self) -> usize {
        self.w.rows()
    }

    pub fn users(&self) -> usize {
        self.w.cols()
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        self.w.col(k)
    }

    pub fn columns(&self) -> Vec<Vec<C64>> {
        (0..self.users()).map(|k| self.column(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub sigma_sq: Vec<f64>,
}

impl NoiseModel {
    pub fn uniform(users: usize, sigma_sq: f64) -> Self {
        Self { sigma_sq: vec![sigma_sq; users] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sigma_sq.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::param("noise", "every variance must be positive"));
        }
        Ok(())
    }
}

/// SINR of user `k` given effective channels `h_j` (one per user).
pub fn sinr(k: usize, eff_channels: &[Vec<C64>], w: &BeamformingMatrix, noise: &NoiseModel) -> f64 {
    let h = &eff_channels[k];
    let mut signal = 0.0;
    let mut interference = 0.0;
    for j in 0..w.users() {
        let g = inner(h, &w.column(j)).norm_sqr();
        if j == k {
            signal = g;
        } else {
            interference += g;
        }
    }
    signal / (interference + noise.sigma_sq[k])
}

/// `Σ_k log2(1 + SINR_k)` from effective channels.
pub fn rate_from_effective(eff_channels: &[Vec<C64>], w: &BeamformingMatrix, noise: &NoiseModel) -> f64 {
    (0..eff_channels.len())
        .map(|k| (1.0 + sinr(k, eff_channels, w, noise)).log2())
        .sum()
}

pub fn effective_channels(channels: &ChannelRealization, phase: &PhaseShiftVector) -> Result<Vec<Vec<C64>>> {
    channels
        .f
        .iter()
        .map(|f| effective_miso(f, phase.as_slice(), &channels.g))
        .collect()
}

fn check_users(w: &BeamformingMatrix, noise: &NoiseModel, users: usize, antennas: usize) -> Result<()> {
    if w.users() != users || noise.sigma_sq.len() != users {
        return Err(Error::shape(
            "sum_rate (users)",
            users,
            (w.users(), noise.sigma_sq.len()),
        ));
    }
    if w.antennas() != antennas {
        return Err(Error::shape("sum_rate (antennas)", antennas, w.antennas()));
    }
    if !(w.total_power() <= w.power_budget() * (1.0 + POWER_TOL)) {
        return Err(Error::Constraint(format!(
            "transmit power {} exceeds budget {}",
            w.total_power(),
            w.power_budget()
        )));
    }
    Ok(())
}

/// Achievable sum-rate (bits/s/Hz) over the true instantaneous channels.
pub fn sum_rate(
    channels: &ChannelRealization,
    phase: &PhaseShiftVector,
    w: &BeamformingMatrix,
    noise: &NoiseModel,
) -> Result<f64> {
    check_users(w, noise, channels.users(), channels.g.cols())?;
    let eff = effective_channels(channels, phase)?;
    Ok(rate_from_effective(&eff, w, noise))
}

/// Sum-rate of a phase vector against cascaded channels: the gain of stream
/// `j` at user `k` is `|vᵀ Hc_k w_j|²`.
pub fn surrogate_rate(
    cascaded: &[CMatrix],
    v: &[C64],
    w: &BeamformingMatrix,
    noise: &NoiseModel,
) -> Result<f64> {
    let (n, m) = cascaded
        .first()
        .map(CMatrix::shape)
        .ok_or_else(|| Error::shape("surrogate_rate", "at least one user", 0))?;
    if v.len() != n || cascaded.iter().any(|h| h.shape() != (n, m)) {
        return Err(Error::shape("surrogate_rate", (n, m), v.len()));
    }
    check_users(w, noise, cascaded.len(), m)?;
    // effective channel of user k: h_kᴴ = vᵀ Hc_k
    let eff: Vec<Vec<C64>> = cascaded
        .iter()
        .map(|h| h.tr_mul_vec(v).into_iter().map(|z| z.conj()).collect())
        .collect();
    Ok(rate_from_effective(&eff, w, noise))
}

/// Scales `w_raw` onto the power ball `Σ‖w_k‖² ≤ P`.
pub fn project_power(w_raw: CMatrix, power_budget: f64) -> BeamformingMatrix {
    let total = w_raw.frobenius_sq();
    let w = if total > power_budget {
        w_raw.scale((power_budget / total).sqrt())
    } else {
        w_raw
    };
    BeamformingMatrix { w, power_budget }
}

/// Entry-wise `v / |v|`; (near-)zero entries map to `1`.
pub fn project_unit_modulus(v_raw: &[C64]) -> PhaseShiftVector {
    PhaseShiftVector(
        v_raw
            .iter()
            .map(|z| {
                let r = z.norm();
                if r < DEGENERATE_MAGNITUDE {
                    C64::new(1.0, 0.0)
                } else {
                    z / r
                }
            })
            .collect(),
    )
}

/// Equal-power maximum-ratio transmission `w_k ∝ h_k`.
pub fn matched_filter(eff_channels: &[Vec<C64>], power_budget: f64) -> BeamformingMatrix {
    let users = eff_channels.len();
    let antennas = eff_channels.first().map_or(0, Vec::len);
    let per_user = power_budget / users as f64;
    let mut w = CMatrix::zeros(antennas, users);
    for (k, h) in eff_channels.iter().enumerate() {
        let norm = norm_sq(h).sqrt();
        if norm > 0.0 {
            for (m, z) in h.iter().enumerate() {
                w.set(m, k, z * (per_user.sqrt() / norm));
            }
        }
    }
    project_power(w, power_budget)
}
