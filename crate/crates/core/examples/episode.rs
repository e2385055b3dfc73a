//! One mobility episode per method: phases chosen before each slot, the
//! precoder fitted once the slot's effective channels are known.

use irsbeam::pipeline::{run_protocol_episode, train_la_clnet, ExperimentConfig, Method};

fn main() -> irsbeam::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.array.irs_rows = 4;
    cfg.array.irs_cols = 4;
    cfg.training.examples = 200;
    cfg.training.iterations = 300;
    cfg.experiment.episode_slots = 8;
    let (model, _, _) = train_la_clnet(&cfg)?;

    for method in Method::ALL {
        let ep = run_protocol_episode(&cfg, method, Some(&model), 42)?;
        let rates: Vec<String> = ep.slots.iter().map(|s| format!("{:.2}", s.rate)).collect();
        println!("{method:>8}: mean {:.3}  [{}]", ep.mean_rate(), rates.join(" "));
    }
    Ok(())
}
