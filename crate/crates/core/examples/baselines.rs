//! The reference schemes on shared channels: full-CSI joint optimization,
//! phases from the previous slot's LoS channels, and random phases.

use irsbeam::pipeline::{Evaluator, ExperimentConfig, Method};

fn main() -> irsbeam::Result<()> {
    let cfg = ExperimentConfig::default();
    let eval = Evaluator::new(&cfg, None)?;
    let tau = cfg.training.tau;
    let methods = [Method::Genie, Method::Naive, Method::Random];
    let mut totals = [0.0; 3];
    let runs = 10;
    for seed in 0..runs {
        let walk = eval.walk(seed, tau + 1);
        for (total, &method) in totals.iter_mut().zip(&methods) {
            let (record, _) = eval.evaluate_slot(method, &walk, tau, seed, None)?;
            *total += record.rate;
        }
    }
    for (total, method) in totals.iter().zip(methods) {
        println!("{method:>7}: {:.3} bit/s/Hz over {runs} slots", total / runs as f64);
    }
    Ok(())
}
