//! Geometry and channel model: places three users, draws one slot of
//! Rician channels and compares random phases with phases aligned to one
//! user's cascaded LoS channel. Alignment raises every user's gain, but the
//! users sit in nearly the same direction from the IRS, so a matched-filter
//! precoder ends up interference-limited.

use irsbeam::baselines::random_phase;
use irsbeam::cmat::norm_sq;
use irsbeam::metrics::{effective_channels, matched_filter, sum_rate, PhaseShiftVector};
use irsbeam::pipeline::{spawn_and_walk, stream, ExperimentConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irsbeam::Result<()> {
    let cfg = ExperimentConfig::default();
    let scene = cfg.scene();
    let users = spawn_and_walk(&cfg, 1, &mut stream(7, "trajectory", 0)).remove(0);
    for (k, u) in users.iter().enumerate() {
        let d = scene.irs_user_distance.measure(&scene.irs, u);
        println!("user {k}: ({:.2}, {:.2}) m, {d:.2} m from the IRS", u.x, u.y);
    }
    let (_, alpha_ai) = scene.ap_irs_link()?;
    println!("AP-IRS path gain {alpha_ai:.3e}");

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let channels = scene.realize(&users, &cfg.rician(), &mut rng)?;
    let noise = cfg.noise();
    let power = cfg.power_watts();

    let rate_with = |v: &PhaseShiftVector| -> irsbeam::Result<(f64, Vec<f64>)> {
        let eff = effective_channels(&channels, v)?;
        let gains = eff.iter().map(|h| norm_sq(h) / noise.sigma_sq[0]).collect();
        Ok((sum_rate(&channels, v, &matched_filter(&eff, power), &noise)?, gains))
    };
    let random = random_phase(cfg.array.irs_elements(), &mut rng);
    // co-phase every IRS element for user 0 through the first AP antenna
    let los = channels.cascaded_los()?;
    let aligned = PhaseShiftVector::from_phases(&los[0].col(0).iter().map(|z| -z.arg()).collect::<Vec<_>>());
    for (name, v) in [("random phases", &random), ("aligned to user 0", &aligned)] {
        let (rate, gains) = rate_with(v)?;
        let gains: Vec<String> = gains.iter().map(|g| format!("{g:.2e}")).collect();
        println!("{name:>18}: sum-rate {rate:.3} bit/s/Hz, |h_k|^2/noise [{}]", gains.join(", "));
    }
    Ok(())
}
