//! Array responses, path loss, Rician realizations and the cascaded /
//! effective channels built from them.
//!
//! IRS elements are indexed y-major: element `n = iy * nz + iz`. Channel
//! matrices are `N × M` (IRS rows, AP columns). A cascaded channel
//! `Hc = diag(conj(f)) · G` satisfies `vᵀ Hc w = fᴴ diag(v) G w`, i.e. the
//! received amplitude of stream `w` when the IRS applies the phase vector `v`.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cmat::{kron, CMatrix, C64};
use crate::error::{Error, Result};
use crate::geometry::{self, AngleTriple, IrsUserDistance, Location3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    /// AP antenna count `M`.
    pub ap_antennas: usize,
    /// IRS elements along y (`Ny`).
    pub irs_rows: usize,
    /// IRS elements along z (`Nz`).
    pub irs_cols: usize,
    pub spacing_ratio_ap: f64,
    pub spacing_ratio_irs_y: f64,
    pub spacing_ratio_irs_z: f64,
}

impl ArrayGeometry {
    pub fn irs_elements(&self) -> usize {
        self.irs_rows * self.irs_cols
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("array.ap_antennas", self.ap_antennas),
            ("array.irs_rows", self.irs_rows),
            ("array.irs_cols", self.irs_cols),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be at least 1"));
            }
        }
        for (name, v) in [
            ("array.spacing_ratio_ap", self.spacing_ratio_ap),
            ("array.spacing_ratio_irs_y", self.spacing_ratio_irs_y),
            ("array.spacing_ratio_irs_z", self.spacing_ratio_irs_z),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossParams {
    /// Gain at the reference distance, dB.
    pub beta0_db: f64,
    pub reference_distance: f64,
    pub eta_ai: f64,
    pub eta_user: f64,
}

impl PathLossParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_distance > 0.0) {
            return Err(Error::param("channel.reference_distance", "must be positive"));
        }
        if !(self.eta_ai >= 0.0) {
            return Err(Error::param("channel.eta_ai", "must be non-negative"));
        }
        if !(self.eta_user >= 0.0) {
            return Err(Error::param("channel.eta_user", "must be non-negative"));
        }
        if !self.beta0_db.is_finite() {
            return Err(Error::param("channel.beta0_db", "must be finite"));
        }
        Ok(())
    }
}

/// Linear Rician factors of the two links.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RicianParams {
    pub beta_ai: f64,
    pub beta_iu: f64,
}

impl RicianParams {
    pub fn shared(beta: f64) -> Self {
        Self { beta_ai: beta, beta_iu: beta }
    }

    pub fn from_db(beta_db: f64) -> Self {
        Self::shared(db_to_linear(beta_db))
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Geometric (unit-modulus) channel components.
#[derive(Debug, Clone, PartialEq)]
pub struct LoSChannelSet {
    /// `N × M`, rank one.
    pub g_bar: CMatrix,
    /// One length-`N` vector per user.
    pub f_bar: Vec<Vec<C64>>,
}

/// One slot's instantaneous channels, path-loss scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub g: CMatrix,
    pub f: Vec<Vec<C64>>,
    pub los: LoSChannelSet,
    pub alpha_ai: f64,
    pub alpha_iu: Vec<f64>,
}

impl ChannelRealization {
    pub fn users(&self) -> usize {
        self.f.len()
    }

    /// `diag(conj(f_k)) · G` for every user.
    pub fn cascaded(&self) -> Vec<CMatrix> {
        self.f.iter().map(|f| cascade(f, &self.g)).collect()
    }

    /// Path-loss scaled cascaded LoS channels.
    pub fn cascaded_los(&self) -> Result<Vec<CMatrix>> {
        self.los
            .f_bar
            .iter()
            .zip(&self.alpha_iu)
            .map(|(f, &a)| cascaded_los(f, &self.los.g_bar, self.alpha_ai, a))
            .collect()
    }
}

/// `[1, e^{-j2π·s·ψ}, …, e^{-j2π(n-1)·s·ψ}]`.
pub fn steering_vector(n_elems: usize, spacing_ratio: f64, phase_factor: f64) -> Vec<C64> {
    let step = -2.0 * PI * spacing_ratio * phase_factor;
    (0..n_elems)
        .map(|l| {
            if l == 0 {
                C64::new(1.0, 0.0)
            } else {
                C64::from_polar(1.0, step * l as f64)
            }
        })
        .collect()
}

/// IRS response `a_y ⊗ a_z` for a link with the given angles.
pub fn irs_response(angles: &AngleTriple, geom: &ArrayGeometry) -> Vec<C64> {
    let ay = steering_vector(geom.irs_rows, geom.spacing_ratio_irs_y, angles.horizontal_factor());
    let az = steering_vector(geom.irs_cols, geom.spacing_ratio_irs_z, angles.vertical_factor());
    kron(&ay, &az)
}

/// Rank-one LoS matrix of the AP-IRS link: `(a_y ⊗ a_z) · a_apᵀ`.
pub fn los_ap_irs(angles: &AngleTriple, geom: &ArrayGeometry) -> CMatrix {
    let irs = irs_response(angles, geom);
    let ap = steering_vector(geom.ap_antennas, geom.spacing_ratio_ap, angles.horizontal_factor());
    CMatrix::outer(&irs, &ap)
}

pub fn los_irs_user(angles: &AngleTriple, geom: &ArrayGeometry) -> Vec<C64> {
    irs_response(angles, geom)
}

/// Linear power gain `β0 · (d / D0)^(-η)`.
pub fn path_loss_gain(d: f64, eta: f64, params: &PathLossParams) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::Geometry(format!("path-loss distance must be positive, got {d}")));
    }
    Ok(db_to_linear(params.beta0_db) * (d / params.reference_distance).powf(-eta))
}

/// Circularly-symmetric complex Gaussian with unit variance.
pub fn sample_cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// `√α · (√(β/(β+1))·los + √(1/(β+1))·nlos)`, `nlos` iid CN(0, 1).
///
/// `beta = ∞` is accepted and yields the scaled LoS part. The NLoS draws are
/// consumed even then, so the rng stream does not depend on `beta`.
pub fn sample_rician<R: Rng + ?Sized>(los: &[C64], beta: f64, alpha: f64, rng: &mut R) -> Vec<C64> {
    let (w_los, w_nlos) = rician_weights(beta);
    let amp = alpha.sqrt();
    los.iter()
        .map(|l| {
            let n = sample_cn(rng);
            (l * w_los + n * w_nlos) * amp
        })
        .collect()
}

fn rician_weights(beta: f64) -> (f64, f64) {
    if beta.is_infinite() {
        (1.0, 0.0)
    } else {
        ((beta / (beta + 1.0)).sqrt(), (1.0 / (beta + 1.0)).sqrt())
    }
}

/// `diag(conj(f)) · G`.
pub fn cascade(f: &[C64], g: &CMatrix) -> CMatrix {
    CMatrix::from_fn(g.rows(), g.cols(), |n, m| f[n].conj() * g.get(n, m))
}

/// `√(α_IU · α_AI) · diag(conj(f̄)) · Ḡ`.
pub fn cascaded_los(f_bar: &[C64], g_bar: &CMatrix, alpha_ai: f64, alpha_iu: f64) -> Result<CMatrix> {
    if f_bar.len() != g_bar.rows() {
        return Err(Error::shape("cascaded_los", g_bar.rows(), f_bar.len()));
    }
    Ok(cascade(f_bar, g_bar).scale((alpha_ai * alpha_iu).sqrt()))
}

/// Effective MISO channel `h` with `hᴴ = fᴴ · diag(v) · G`.
pub fn effective_miso(f: &[C64], phase: &[C64], g: &CMatrix) -> Result<Vec<C64>> {
    if f.len() != g.rows() || phase.len() != g.rows() {
        return Err(Error::shape(
            "effective_miso",
            (g.rows(), g.rows()),
            (f.len(), phase.len()),
        ));
    }
    if let Some((n, z)) = phase
        .iter()
        .enumerate()
        .find(|(_, z)| (z.norm() - 1.0).abs() > 1e-9)
    {
        return Err(Error::Constraint(format!(
            "phase entry {n} has modulus {}",
            z.norm()
        )));
    }
    let weights: Vec<C64> = f.iter().zip(phase).map(|(f, v)| f.conj() * v).collect();
    Ok(g.tr_mul_vec(&weights).into_iter().map(|z| z.conj()).collect())
}

/// Static part of a deployment: arrays, AP/IRS placement and link models.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub array: ArrayGeometry,
    pub ap: Location3D,
    pub irs: Location3D,
    pub path_loss: PathLossParams,
    pub irs_user_distance: IrsUserDistance,
}

impl Scene {
    /// AP-IRS LoS matrix and path gain; independent of the users.
    pub fn ap_irs_link(&self) -> Result<(CMatrix, f64)> {
        let d = geometry::ap_irs_distance(&self.ap, &self.irs);
        let angles = geometry::ap_irs_angles(&self.ap, &self.irs, d)?;
        let alpha = path_loss_gain(d, self.path_loss.eta_ai, &self.path_loss)?;
        Ok((los_ap_irs(&angles, &self.array), alpha))
    }

    pub fn irs_user_link(&self, user: &Location3D) -> Result<(Vec<C64>, f64)> {
        let d = self.irs_user_distance.measure(&self.irs, user);
        let angles = geometry::irs_user_angles(&self.irs, user, d)?;
        let alpha = path_loss_gain(d, self.path_loss.eta_user, &self.path_loss)?;
        Ok((los_irs_user(&angles, &self.array), alpha))
    }

    /// Path-loss scaled cascaded LoS channels of every user at one slot.
    pub fn cascaded_los_at(&self, users: &[Location3D]) -> Result<Vec<CMatrix>> {
        let (g_bar, alpha_ai) = self.ap_irs_link()?;
        users
            .iter()
            .map(|u| {
                let (f_bar, alpha_iu) = self.irs_user_link(u)?;
                cascaded_los(&f_bar, &g_bar, alpha_ai, alpha_iu)
            })
            .collect()
    }

    /// Draws the instantaneous channels of one slot.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        users: &[Location3D],
        rician: &RicianParams,
        rng: &mut R,
    ) -> Result<ChannelRealization> {
        let (g_bar, alpha_ai) = self.ap_irs_link()?;
        let mut f_bar = Vec::with_capacity(users.len());
        let mut alpha_iu = Vec::with_capacity(users.len());
        for u in users {
            let (f, a) = self.irs_user_link(u)?;
            f_bar.push(f);
            alpha_iu.push(a);
        }
        let g_entries = sample_rician(g_bar.as_slice(), rician.beta_ai, alpha_ai, rng);
        let g = CMatrix::from_vec(g_bar.rows(), g_bar.cols(), g_entries)?;
        let f = f_bar
            .iter()
            .zip(&alpha_iu)
            .map(|(fb, &a)| sample_rician(fb, rician.beta_iu, a, rng))
            .collect();
        Ok(ChannelRealization {
            g,
            f,
            los: LoSChannelSet { g_bar, f_bar },
            alpha_ai,
            alpha_iu,
        })
    }
}

/// Stacked real/imag history of cascaded LoS channels, shape
/// `τ × K × N × M × 2`, row-major, slot 0 the oldest.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryTensor {
    tau: usize,
    users: usize,
    n: usize,
    m: usize,
    data: Vec<f64>,
}

impl HistoryTensor {
    pub fn from_raw(shape: [usize; 5], data: Vec<f64>) -> Result<Self> {
        let [tau, users, n, m, two] = shape;
        if two != 2 || data.len() != tau * users * n * m * 2 {
            return Err(Error::shape("HistoryTensor::from_raw", shape, data.len()));
        }
        Ok(Self { tau, users, n, m, data })
    }

    pub fn shape(&self) -> [usize; 5] {
        [self.tau, self.users, self.n, self.m, 2]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// The `N × M × 2` block of one (slot, user) pair.
    pub fn slice(&self, slot: usize, user: usize) -> &[f64] {
        let len = self.n * self.m * 2;
        let start = (slot * self.users + user) * len;
        &self.data[start..start + len]
    }

    /// Recovers the per-slot complex channels.
    pub fn unpack(&self) -> Vec<Vec<CMatrix>> {
        (0..self.tau)
            .map(|t| {
                (0..self.users)
                    .map(|k| {
                        let s = self.slice(t, k);
                        CMatrix::from_fn(self.n, self.m, |r, c| {
                            let i = 2 * (r * self.m + c);
                            C64::new(s[i], s[i + 1])
                        })
                    })
                    .collect()
            })
            .collect()
    }
}

/// Packs `τ` slots of `K` cascaded channels; `cascaded[0]` is the oldest.
pub fn build_history(cascaded: &[Vec<CMatrix>]) -> Result<HistoryTensor> {
    let tau = cascaded.len();
    let users = cascaded.first().map_or(0, Vec::len);
    let (n, m) = cascaded
        .first()
        .and_then(|s| s.first())
        .map_or((0, 0), CMatrix::shape);
    if tau == 0 || users == 0 {
        return Err(Error::shape("build_history", "at least one slot and user", (tau, users)));
    }
    let mut data = Vec::with_capacity(tau * users * n * m * 2);
    for slot in cascaded {
        if slot.len() != users {
            return Err(Error::shape("build_history (users)", users, slot.len()));
        }
        for h in slot {
            if h.shape() != (n, m) {
                return Err(Error::shape("build_history (channel)", (n, m), h.shape()));
            }
            for z in h.as_slice() {
                data.push(z.re);
                data.push(z.im);
            }
        }
    }
    Ok(HistoryTensor { tau, users, n, m, data })
}
