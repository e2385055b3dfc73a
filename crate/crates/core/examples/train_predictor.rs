//! Offline training of the trajectory-based phase predictor on a reduced
//! setup. Pass an output path to save the model.

use irsbeam::pipeline::{train_la_clnet, ExperimentConfig};

fn main() -> irsbeam::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.array.irs_rows = 4;
    cfg.array.irs_cols = 4;
    cfg.training.examples = 200;
    cfg.training.iterations = 400;
    cfg.training.eval_every = 40;

    let (model, report, set) = train_la_clnet(&cfg)?;
    println!("{} examples ({} redrawn), {} held out", set.examples.len(), set.resampled, report.holdout_size);
    for (iter, loss) in &report.eval_curve {
        println!("iteration {iter:>4}: held-out loss {loss:.4}");
    }
    println!("kept iteration {} (loss {:.4})", report.best_iteration, report.best_holdout);
    if let Some(path) = std::env::args().nth(1) {
        model.save(&path)?;
        println!("saved to {path}");
    }
    Ok(())
}
