//! A small Rician-factor sweep of all four methods, written as CSV to
//! stdout. Uses a reduced array so it finishes in seconds.

use irsbeam::bench::{run_sweep, write_results, ModelCache, OutputFormat, SweepSpec, SweepVariable};
use irsbeam::pipeline::{ExperimentConfig, Method};

fn main() -> irsbeam::Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.array.irs_rows = 4;
    cfg.array.irs_cols = 4;
    cfg.training.examples = 200;
    cfg.training.iterations = 300;
    let spec = SweepSpec {
        variable: SweepVariable::RicianBetaDb,
        values: vec![0.0, 5.0, 10.0],
        methods: Method::ALL.to_vec(),
        mc_count: 20,
        seed: 3,
    };
    let result = run_sweep(&cfg, &spec, &mut ModelCache::in_memory())?;
    write_results(&result, std::io::stdout().lock(), OutputFormat::Csv)?;
    Ok(())
}
