//! Positions, user mobility and the distance/angle quantities that feed the
//! steering vectors.
//!
//! Coordinates are meters. The AP and the IRS are static; users move on the
//! ground plane (`z = 0`) following a per-slot random-velocity walk.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack for angle components that should be ≤ 1 but pick up rounding.
const ANGLE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Location3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Location3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn ground(x: f64, y: f64) -> Self {
        Self { x, y, z: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Location3D) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

impl From<[f64; 3]> for Location3D {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Location3D> for [f64; 3] {
    fn from(l: Location3D) -> Self {
        [l.x, l.y, l.z]
    }
}

/// Parameters of the per-slot velocity walk.
///
/// Speeds are meters per second; headings are radians measured from the
/// `+x` axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    pub speed_min: f64,
    pub speed_max: f64,
    pub heading_min: f64,
    pub heading_max: f64,
    pub slot_duration: f64,
    pub uncertainty_std: f64,
}

impl MobilityParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.speed_min,
            self.speed_max,
            self.heading_min,
            self.heading_max,
            self.slot_duration,
            self.uncertainty_std,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("mobility", "all values must be finite"));
        }
        if self.speed_min > self.speed_max {
            return Err(Error::param("mobility.speed_min", "must not exceed speed_max"));
        }
        if self.heading_min > self.heading_max {
            return Err(Error::param(
                "mobility.heading_min",
                "must not exceed heading_max",
            ));
        }
        if self.slot_duration <= 0.0 {
            return Err(Error::param("mobility.slot_duration", "must be positive"));
        }
        if self.uncertainty_std < 0.0 {
            return Err(Error::param("mobility.uncertainty_std", "must be non-negative"));
        }
        Ok(())
    }

    /// Users that never move.
    pub fn stationary() -> Self {
        Self {
            speed_min: 0.0,
            speed_max: 0.0,
            heading_min: 0.0,
            heading_max: 0.0,
            slot_duration: 1.0,
            uncertainty_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl SpawnRegion {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_min <= self.x_max) {
            return Err(Error::param("spawn.x_min", "must not exceed x_max"));
        }
        if !(self.y_min <= self.y_max) {
            return Err(Error::param("spawn.y_min", "must not exceed y_max"));
        }
        Ok(())
    }
}

/// `sin θ`, `cos ξ`, `sin ξ` of one link, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleTriple {
    pub sin_theta: f64,
    pub cos_xi: f64,
    pub sin_xi: f64,
}

impl AngleTriple {
    /// Phase factor of the AP array and the IRS y-axis: `sin θ · cos ξ`.
    pub fn horizontal_factor(&self) -> f64 {
        self.sin_theta * self.cos_xi
    }

    /// Phase factor of the IRS z-axis: `sin θ · sin ξ`.
    pub fn vertical_factor(&self) -> f64 {
        self.sin_theta * self.sin_xi
    }

    fn checked(self, link: &str) -> Result<Self> {
        for (name, v) in [
            ("sin_theta", self.sin_theta),
            ("cos_xi", self.cos_xi),
            ("sin_xi", self.sin_xi),
        ] {
            if !v.is_finite() || v > 1.0 + ANGLE_SLACK {
                return Err(Error::Geometry(format!(
                    "{link} {name} = {v} is outside [0, 1]"
                )));
            }
        }
        Ok(self)
    }
}

/// How the IRS-to-user distance is measured.
///
/// `Horizontal` is the ground-plane distance (the height of the IRS is not
/// included). It makes `|h_I| / d` exceed one whenever a user stands closer
/// than `h_I` to the IRS base, so `Slant` (full 3D distance) is available
/// for layouts where users stay near the surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IrsUserDistance {
    Horizontal,
    #[default]
    Slant,
}

pub fn sample_initial_location<R: Rng + ?Sized>(region: &SpawnRegion, rng: &mut R) -> Location3D {
    let x = Uniform::new_inclusive(region.x_min, region.x_max).sample(rng);
    let y = Uniform::new_inclusive(region.y_min, region.y_max).sample(rng);
    Location3D::ground(x, y)
}

/// One slot of the velocity walk: `L' = L + v·ΔT + Λ`.
///
/// Only the horizontal components of the uncertainty offset are applied; the
/// result is pinned to the ground plane. Every call consumes the same number
/// of draws regardless of the parameter values.
pub fn step_mobility<R: Rng + ?Sized>(
    loc: &Location3D,
    params: &MobilityParams,
    rng: &mut R,
) -> Location3D {
    let speed = Uniform::new_inclusive(params.speed_min, params.speed_max).sample(rng);
    let heading = Uniform::new_inclusive(params.heading_min, params.heading_max).sample(rng);
    let nx: f64 = StandardNormal.sample(rng);
    let ny: f64 = StandardNormal.sample(rng);
    let step = speed * params.slot_duration;
    Location3D::ground(
        loc.x + step * heading.cos() + params.uncertainty_std * nx,
        loc.y + step * heading.sin() + params.uncertainty_std * ny,
    )
}

/// Generates `slots` consecutive locations starting from `start` (inclusive).
pub fn trajectory<R: Rng + ?Sized>(
    start: Location3D,
    params: &MobilityParams,
    slots: usize,
    rng: &mut R,
) -> Vec<Location3D> {
    let mut out = Vec::with_capacity(slots);
    let mut cur = start;
    for i in 0..slots {
        if i > 0 {
            cur = step_mobility(&cur, params, rng);
        }
        out.push(cur);
    }
    out
}

pub fn ap_irs_distance(ap: &Location3D, irs: &Location3D) -> f64 {
    ap.distance(irs)
}

/// Ground-plane distance between the IRS and a user.
pub fn irs_user_distance(irs: &Location3D, user: &Location3D) -> f64 {
    (irs.x - user.x).hypot(irs.y - user.y)
}

pub fn irs_user_slant_distance(irs: &Location3D, user: &Location3D) -> f64 {
    irs.distance(user)
}

impl IrsUserDistance {
    pub fn measure(&self, irs: &Location3D, user: &Location3D) -> f64 {
        match self {
            IrsUserDistance::Horizontal => irs_user_distance(irs, user),
            IrsUserDistance::Slant => irs_user_slant_distance(irs, user),
        }
    }
}

pub fn ap_irs_angles(ap: &Location3D, irs: &Location3D, d_ai: f64) -> Result<AngleTriple> {
    if !(d_ai > 0.0) {
        return Err(Error::Geometry(format!("AP-IRS distance must be positive, got {d_ai}")));
    }
    AngleTriple {
        sin_theta: (irs.z - ap.z).abs() / d_ai,
        cos_xi: irs.y.abs() / d_ai,
        sin_xi: ap.x.abs() / d_ai,
    }
    .checked("AP-IRS")
}

pub fn irs_user_angles(irs: &Location3D, user: &Location3D, d_iu: f64) -> Result<AngleTriple> {
    if !(d_iu > 0.0) {
        return Err(Error::Geometry(format!("IRS-user distance must be positive, got {d_iu}")));
    }
    AngleTriple {
        sin_theta: irs.z.abs() / d_iu,
        cos_xi: (user.y - irs.y).abs() / d_iu,
        sin_xi: user.x.abs() / d_iu,
    }
    .checked("IRS-user")
}
