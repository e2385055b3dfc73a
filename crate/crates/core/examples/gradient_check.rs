//! Verifies reverse-mode gradients of the trajectory predictor's loss
//! against central differences.

use irsbeam::autodiff::{grad_check, GradCheckConfig};
use irsbeam::pipeline::{generate_training_set, ExperimentConfig};
use irsbeam::models::LaClNet;

fn main() -> irsbeam::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.array.irs_rows = 4;
    cfg.array.irs_cols = 4;
    cfg.array.ap_antennas = 4;
    cfg.placement.users = 2;
    cfg.training.tau = 3;
    cfg.training.examples = 4;
    let set = generate_training_set(&cfg, 3)?;
    let mut model = LaClNet::new(cfg.la_clnet_config(), 11)?;
    model.input_scale = 1.0 / set.history_rms();
    let (noise, power) = (cfg.noise(), cfg.power_watts());

    let (loss, grads) = model.loss_and_grads(&set.examples, &noise, power)?;
    let report = grad_check(
        model.params(),
        &grads,
        |p| model.with_params(p.clone())?.loss(&set.examples, &noise, power),
        &GradCheckConfig::default(),
    )?;
    println!("loss {loss:.6}");
    println!(
        "checked {} coordinates, max relative error {:.2e}, worst {:?}: {}",
        report.checked,
        report.max_rel_error,
        report.worst,
        if report.passed { "ok" } else { "MISMATCH" }
    );
    Ok(())
}
