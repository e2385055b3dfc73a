//! Per-slot precoder fitting with a small network, compared with the
//! single-user closed form and a matched filter for several users.

use irsbeam::channel::sample_cn;
use irsbeam::cmat::{norm_sq, C64};
use irsbeam::metrics::{matched_filter, rate_from_effective, NoiseModel};
use irsbeam::pipeline::{online_optimize, OnlineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> irsbeam::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = OnlineConfig { iterations: 500, learning_rate: 1e-3, warm_start: false };
    let (power, sigma) = (1.0, 0.05);

    let h: Vec<C64> = (0..6).map(|_| sample_cn(&mut rng)).collect();
    let out = online_optimize(std::slice::from_ref(&h), &NoiseModel::uniform(1, sigma), power, &cfg, 1, None)?;
    let best = (1.0 + power * norm_sq(&h) / sigma).log2();
    println!("one user: fitted {:.4}, closed form {best:.4}", -out.best_loss);

    let hs: Vec<Vec<C64>> = (0..3).map(|_| (0..6).map(|_| sample_cn(&mut rng)).collect()).collect();
    let noise = NoiseModel::uniform(3, sigma);
    let out = online_optimize(&hs, &noise, power, &cfg, 2, None)?;
    let mf = rate_from_effective(&hs, &matched_filter(&hs, power), &noise);
    println!("three users: fitted {:.4}, matched filter {mf:.4}", -out.best_loss);
    let every = out.trace.len() / 5;
    let trace: Vec<String> = out.trace.iter().step_by(every).map(|l| format!("{:.3}", -l)).collect();
    println!("best rate so far: {}", trace.join(" -> "));
    Ok(())
}
