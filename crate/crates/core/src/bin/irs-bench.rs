use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irsbeam::bench::{
    emit_results, load_config, preset, run_sweep_into, self_check, write_results, ModelCache, OutputFormat,
    SweepResult, SweepSpec, SweepVariable,
};
use irsbeam::models::LaClNet;
use irsbeam::pipeline::{run_protocol_episode, train_la_clnet, ExperimentConfig, Method};
use irsbeam::Result;

#[derive(Parser)]
#[command(name = "irs-bench", about = "Predictive IRS beamforming: training, sweeps and episodes")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Train the trajectory-based phase predictor and save it.
    Train(Common),
    /// Monte Carlo sweep of the average sum-rate.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Swept quantity, overriding the config file.
        #[arg(long)]
        variable: Option<SweepVariable>,
        /// Comma-separated sweep values, overriding the config file.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Comma-separated methods, overriding the config file.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
    },
    /// One mobility episode; prints the per-slot rates of a method.
    Episode {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "proposed")]
        method: Method,
    },
    /// Fast self-test of the installation.
    Check,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; takes precedence over --preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in configuration: desk or paper.
    #[arg(long, default_value = "desk")]
    preset: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent (except for train, which needs it).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "table")]
    format: OutputFormat,
    /// Monte Carlo realizations per sweep point.
    #[arg(long)]
    mc: Option<usize>,
    /// Trained model to use instead of training one.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory for trained models, reused across runs.
    #[arg(long)]
    cache: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, Option<SweepSpec>)> {
        let (mut cfg, mut spec) = match &self.config {
            Some(path) => load_config(path)?,
            None => preset(&self.preset)?,
        };
        if let Some(seed) = self.seed {
            cfg.experiment.seed = seed;
        }
        if let Some(mc) = self.mc {
            cfg.experiment.mc_count = mc;
        }
        if let Some(s) = spec.as_mut() {
            s.seed = cfg.experiment.seed;
            s.mc_count = cfg.experiment.mc_count;
        }
        cfg.validate()?;
        Ok((cfg, spec))
    }

    fn cache(&self, cfg: &ExperimentConfig) -> Result<ModelCache> {
        let mut cache = match &self.cache {
            Some(dir) => ModelCache::with_dir(dir),
            None => ModelCache::in_memory(),
        };
        if let Some(path) = &self.model {
            cache.insert(cfg, LaClNet::load(path)?)?;
        }
        Ok(cache)
    }

    fn sink(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(path) => Box::new(std::io::BufWriter::new(std::fs::File::create(path)?)),
            None => Box::new(std::io::stdout().lock()),
        })
    }
}

fn train(common: &Common) -> Result<()> {
    let Some(out) = &common.out else {
        return Err(irsbeam::Error::InvalidParam {
            field: "out".into(),
            reason: "train needs an output path for the model".into(),
        });
    };
    let (cfg, _) = common.resolve()?;
    let (model, report, set) = train_la_clnet(&cfg)?;
    model.save(out)?;
    eprintln!(
        "trained on {} examples ({} resampled); held-out loss {:.4} -> {:.4} (best at iteration {})",
        set.examples.len(),
        set.resampled,
        report.initial_holdout,
        report.best_holdout,
        report.best_iteration
    );
    eprintln!("model written to {}", out.display());
    Ok(())
}

fn sweep(common: &Common, variable: Option<SweepVariable>, values: Option<Vec<f64>>, methods: Option<Vec<Method>>) -> Result<()> {
    let (cfg, spec) = common.resolve()?;
    let mut spec = spec.unwrap_or(SweepSpec {
        variable: SweepVariable::RicianBetaDb,
        values: vec![cfg.channel.rician_beta_db],
        methods: Method::ALL.to_vec(),
        mc_count: cfg.experiment.mc_count,
        seed: cfg.experiment.seed,
    });
    if let Some(v) = variable {
        spec.variable = v;
    }
    if let Some(v) = values {
        spec.values = v;
    }
    if let Some(m) = methods {
        spec.methods = m;
    }
    let mut cache = common.cache(&cfg)?;
    let mut result = SweepResult::default();
    let run = run_sweep_into(&cfg, &spec, &mut cache, &mut result);
    // whatever finished is written even if a later cell failed
    match &common.out {
        Some(path) => emit_results(&result, path, common.format)?,
        None => write_results(&result, std::io::stdout().lock(), common.format)?,
    }
    let total: f64 = result.wall_seconds.iter().sum();
    eprintln!("{} rows in {total:.1} s", result.rows.len());
    run
}

fn episode(common: &Common, method: Method) -> Result<()> {
    let (cfg, _) = common.resolve()?;
    let mut cache = common.cache(&cfg)?;
    let model = if method == Method::Proposed { Some(cache.get_or_train(&cfg)?.clone()) } else { None };
    let ep = run_protocol_episode(&cfg, method, model.as_ref(), cfg.experiment.seed)?;
    let mut out = common.sink()?;
    match common.format {
        OutputFormat::Csv => {
            writeln!(out, "slot,method,rate")?;
            for s in &ep.slots {
                writeln!(out, "{},{},{:.16e}", s.slot, method, s.rate)?;
            }
        }
        OutputFormat::Jsonl => {
            for s in &ep.slots {
                writeln!(out, "{{\"slot\":{},\"method\":\"{}\",\"rate\":\"{:.16e}\"}}", s.slot, method, s.rate)?;
            }
        }
        OutputFormat::Table => {
            writeln!(out, "slot  method    rate")?;
            for s in &ep.slots {
                writeln!(out, "{:<4}  {:<8}  {:.6}", s.slot, method, s.rate)?;
            }
            writeln!(out, "mean  {:<8}  {:.6}", method, ep.mean_rate())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn check() -> bool {
    let mut ok = true;
    for c in self_check() {
        println!("{} {:<12} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    ok
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::Train(common) => train(common),
        Verb::Sweep { common, variable, values, methods } => sweep(common, *variable, values.clone(), methods.clone()),
        Verb::Episode { common, method } => episode(common, *method),
        Verb::Check => return if check() { ExitCode::SUCCESS } else { ExitCode::FAILURE },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
