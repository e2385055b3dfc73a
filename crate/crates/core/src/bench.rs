//! Monte Carlo sweep harness: TOML configs and presets, seeded paired
//! sweeps over the Rician factor or the transmit power, a cache of trained
//! predictors, and result files in three formats.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::GenieOptConfig;
use crate::channel::ArrayGeometry;
use crate::error::{Error, Result};
use crate::models::LaClNet;
use crate::pipeline::{
    derive_seed, train_la_clnet, ChannelConfig, Evaluator, ExperimentConfig, ExperimentSettings, LinkConfig, Method,
    MobilityConfig, OnlineConfig, Placement, TrainingConfig,
};

const DESK: &str = include_str!("../presets/desk.toml");
const PAPER: &str = include_str!("../presets/paper.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    RicianBetaDb,
    PowerDbm,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::RicianBetaDb => "rician_beta_db",
            SweepVariable::PowerDbm => "power_dbm",
        }
    }

    /// `cfg` with this variable set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> ExperimentConfig {
        let mut out = cfg.clone();
        match self {
            SweepVariable::RicianBetaDb => out.channel.rician_beta_db = value,
            SweepVariable::PowerDbm => out.link.power_dbm = value,
        }
        out
    }
}

impl std::str::FromStr for SweepVariable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rician_beta_db" => Ok(SweepVariable::RicianBetaDb),
            "power_dbm" => Ok(SweepVariable::PowerDbm),
            _ => Err(Error::param("sweep.variable", format!("unknown variable `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub methods: Vec<Method>,
    pub mc_count: usize,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::param("sweep.values", "must not be empty"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sweep.values", "must be finite"));
        }
        if self.methods.is_empty() {
            return Err(Error::param("sweep.methods", "must not be empty"));
        }
        if self.mc_count == 0 {
            return Err(Error::param("experiment.mc_count", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    variable: SweepVariable,
    values: Vec<f64>,
    methods: Vec<Method>,
}

/// On-disk layout: the experiment sections plus an optional `[sweep]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    array: ArrayGeometry,
    placement: Placement,
    mobility: MobilityConfig,
    channel: ChannelConfig,
    link: LinkConfig,
    training: TrainingConfig,
    online: OnlineConfig,
    #[serde(default)]
    genie: GenieOptConfig,
    experiment: ExperimentSettings,
    sweep: Option<SweepSection>,
}

fn split(file: ConfigFile) -> (ExperimentConfig, Option<SweepSpec>) {
    let cfg = ExperimentConfig {
        array: file.array,
        placement: file.placement,
        mobility: file.mobility,
        channel: file.channel,
        link: file.link,
        training: file.training,
        online: file.online,
        genie: file.genie,
        experiment: file.experiment,
    };
    let spec = file.sweep.map(|s| SweepSpec {
        variable: s.variable,
        values: s.values,
        methods: s.methods,
        mc_count: cfg.experiment.mc_count,
        seed: cfg.experiment.seed,
    });
    (cfg, spec)
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<(ExperimentConfig, Option<SweepSpec>)> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let (cfg, spec) = split(file);
    cfg.validate()?;
    if let Some(s) = &spec {
        s.validate()?;
    }
    Ok((cfg, spec))
}

pub fn load_config(path: impl AsRef<Path>) -> Result<(ExperimentConfig, Option<SweepSpec>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Shipped configurations: `desk` and `paper`.
pub fn preset(name: &str) -> Result<(ExperimentConfig, Option<SweepSpec>)> {
    match name {
        "desk" => parse_config(DESK),
        "paper" => parse_config(PAPER),
        _ => Err(Error::param("preset", format!("unknown preset `{name}` (expected desk or paper)"))),
    }
}

/// Canonical TOML text of a configuration.
pub fn dump_config(cfg: &ExperimentConfig, spec: Option<&SweepSpec>) -> Result<String> {
    let file = ConfigFile {
        array: cfg.array,
        placement: cfg.placement,
        mobility: cfg.mobility,
        channel: cfg.channel,
        link: cfg.link,
        training: cfg.training,
        online: cfg.online,
        genie: cfg.genie,
        experiment: ExperimentSettings {
            mc_count: spec.map_or(cfg.experiment.mc_count, |s| s.mc_count),
            seed: spec.map_or(cfg.experiment.seed, |s| s.seed),
            ..cfg.experiment
        },
        sweep: spec.map(|s| SweepSection {
            variable: s.variable,
            values: s.values.clone(),
            methods: s.methods.clone(),
        }),
    };
    toml::to_string(&file).map_err(|e| Error::Format(e.to_string()))
}

/// Hash of everything the trained predictor depends on. The Rician factor
/// is excluded because training only sees LoS channels.
pub fn training_key(cfg: &ExperimentConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.channel.rician_beta_db = 0.0;
    c.online = OnlineConfig { iterations: 0, learning_rate: 1.0, warm_start: false };
    c.genie = GenieOptConfig::default();
    c.experiment.episode_slots = 0;
    c.experiment.mc_count = 0;
    let text = serde_json::to_string(&c).map_err(|e| Error::Format(e.to_string()))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest[..16].iter().map(|b| format!("{b:02x}")).collect())
}

/// Trained predictors keyed by [`training_key`], in memory and optionally
/// in a directory of model files.
#[derive(Debug, Default)]
pub struct ModelCache {
    dir: Option<PathBuf>,
    models: HashMap<String, LaClNet>,
}

impl ModelCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn with_dir(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()), models: HashMap::new() }
    }

    pub fn insert(&mut self, cfg: &ExperimentConfig, model: LaClNet) -> Result<()> {
        self.models.insert(training_key(cfg)?, model);
        Ok(())
    }

    pub fn get_or_train(&mut self, cfg: &ExperimentConfig) -> Result<&LaClNet> {
        let key = training_key(cfg)?;
        if !self.models.contains_key(&key) {
            let file = self.dir.as_ref().map(|d| d.join(format!("la-clnet-{key}.irsp")));
            let model = match &file {
                Some(f) if f.exists() => LaClNet::load(f)?,
                _ => {
                    let (model, _, _) = train_la_clnet(cfg)?;
                    if let (Some(f), Some(d)) = (&file, &self.dir) {
                        std::fs::create_dir_all(d)?;
                        model.save(f)?;
                    }
                    model
                }
            };
            self.models.insert(key.clone(), model);
        }
        Ok(&self.models[&key])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub variable: String,
    pub value: f64,
    pub method: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Wall time of each row, same order. Not written to result files so
    /// that reruns are byte-identical.
    pub wall_seconds: Vec<f64>,
    /// Digest of the channel seeds behind each row; rows of one cell share
    /// it when the comparison is paired.
    pub channel_digests: Vec<String>,
}

impl SweepResult {
    pub fn row(&self, value: f64, method: Method) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.value == value && r.method == method.name())
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Seed of realization `r` of sweep cell `cell`; shared by every method.
pub fn realization_seed(master: u64, cell: usize, r: usize) -> u64 {
    derive_seed(derive_seed(master, "cell", cell as u64), "realization", r as u64)
}

/// Runs the sweep, appending rows to `out` as each cell completes, so a
/// failure leaves the finished cells in place.
pub fn run_sweep_into(
    cfg: &ExperimentConfig,
    spec: &SweepSpec,
    cache: &mut ModelCache,
    out: &mut SweepResult,
) -> Result<()> {
    spec.validate()?;
    cfg.validate()?;
    let model = if spec.methods.contains(&Method::Proposed) {
        Some(cache.get_or_train(cfg)?.clone())
    } else {
        None
    };
    let tau = cfg.training.tau;
    for (cell_index, &value) in spec.values.iter().enumerate() {
        let cell = spec.variable.apply(cfg, value);
        let eval = Evaluator::new(&cell, model.as_ref())?;
        let mut rates = vec![Vec::with_capacity(spec.mc_count); spec.methods.len()];
        let mut seconds = vec![0.0; spec.methods.len()];
        let mut hashers: Vec<Sha256> = spec.methods.iter().map(|_| Sha256::new()).collect();
        for r in 0..spec.mc_count {
            let episode_seed = realization_seed(spec.seed, cell_index, r);
            let walk = eval.walk(episode_seed, tau + 1);
            for (i, &method) in spec.methods.iter().enumerate() {
                let start = Instant::now();
                let (record, _) = eval.evaluate_slot(method, &walk, tau, episode_seed, None)?;
                seconds[i] += start.elapsed().as_secs_f64();
                hashers[i].update(record.channel_seed.to_le_bytes());
                rates[i].push(record.rate);
            }
        }
        for (i, &method) in spec.methods.iter().enumerate() {
            let (mean, std) = mean_std(&rates[i]);
            out.rows.push(SweepRow {
                variable: spec.variable.name().to_string(),
                value,
                method: method.name().to_string(),
                mean,
                std,
                n: spec.mc_count,
                seed: spec.seed,
            });
            out.wall_seconds.push(seconds[i]);
            let digest = hashers[i].clone().finalize();
            out.channel_digests.push(digest.iter().map(|b| format!("{b:02x}")).collect());
        }
    }
    Ok(())
}

pub fn run_sweep(cfg: &ExperimentConfig, spec: &SweepSpec, cache: &mut ModelCache) -> Result<SweepResult> {
    let mut out = SweepResult::default();
    run_sweep_into(cfg, spec, cache, &mut out)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Table,
    Csv,
    Jsonl,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "csv" => Ok(OutputFormat::Csv),
            "jsonl" => Ok(OutputFormat::Jsonl),
            _ => Err(Error::param("format", format!("unknown format `{s}` (table, csv, jsonl)"))),
        }
    }
}

pub const COLUMNS: [&str; 7] = ["variable", "value", "method", "mean", "std", "n", "seed"];

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Serialize, Deserialize)]
struct JsonRow {
    variable: String,
    value: String,
    method: String,
    mean: String,
    std: String,
    n: usize,
    seed: u64,
}

pub fn write_results<W: Write>(result: &SweepResult, mut out: W, format: OutputFormat) -> Result<()> {
    let cells = |r: &SweepRow| {
        [
            r.variable.clone(),
            num(r.value),
            r.method.clone(),
            num(r.mean),
            num(r.std),
            r.n.to_string(),
            r.seed.to_string(),
        ]
    };
    match format {
        OutputFormat::Csv => {
            writeln!(out, "{}", COLUMNS.join(","))?;
            for r in &result.rows {
                writeln!(out, "{}", cells(r).join(","))?;
            }
        }
        OutputFormat::Table => {
            let body: Vec<[String; 7]> = result.rows.iter().map(cells).collect();
            let mut widths = COLUMNS.map(str::len);
            for row in &body {
                for (w, c) in widths.iter_mut().zip(row) {
                    *w = (*w).max(c.len());
                }
            }
            let line = |cols: &[String]| {
                let mut s = String::new();
                for (i, (c, w)) in cols.iter().zip(widths).enumerate() {
                    if i > 0 {
                        s.push_str("  ");
                    }
                    let _ = write!(s, "{c:<w$}");
                }
                s.trim_end().to_string()
            };
            writeln!(out, "{}", line(&COLUMNS.map(String::from)))?;
            for row in &body {
                writeln!(out, "{}", line(row))?;
            }
        }
        OutputFormat::Jsonl => {
            for r in &result.rows {
                let [variable, value, method, mean, std, _, _] = cells(r);
                let row = JsonRow { variable, value, method, mean, std, n: r.n, seed: r.seed };
                let text = serde_json::to_string(&row).map_err(|e| Error::Format(e.to_string()))?;
                writeln!(out, "{text}")?;
            }
        }
    }
    Ok(())
}

/// Writes the result file; the parent directory must exist.
pub fn emit_results(result: &SweepResult, path: impl AsRef<Path>, format: OutputFormat) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_results(result, &mut w, format)?;
    w.flush()?;
    Ok(())
}

fn parse_f64(field: &str, s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Format(format!("bad {field} `{s}`")))
}

fn row_from_cells(cells: &[&str]) -> Result<SweepRow> {
    if cells.len() != COLUMNS.len() {
        return Err(Error::Format(format!("expected {} columns, found {}", COLUMNS.len(), cells.len())));
    }
    Ok(SweepRow {
        variable: cells[0].to_string(),
        value: parse_f64("value", cells[1])?,
        method: cells[2].to_string(),
        mean: parse_f64("mean", cells[3])?,
        std: parse_f64("std", cells[4])?,
        n: cells[5].parse().map_err(|_| Error::Format(format!("bad n `{}`", cells[5])))?,
        seed: cells[6].parse().map_err(|_| Error::Format(format!("bad seed `{}`", cells[6])))?,
    })
}

pub fn read_results<R: BufRead>(input: R, format: OutputFormat) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    let mut lines = input.lines();
    if format != OutputFormat::Jsonl {
        match lines.next() {
            Some(header) => {
                let header = header?;
                let names: Vec<&str> = match format {
                    OutputFormat::Csv => header.split(',').collect(),
                    _ => header.split_whitespace().collect(),
                };
                if names != COLUMNS {
                    return Err(Error::Format(format!("unexpected header `{header}`")));
                }
            }
            None => return Ok(rows),
        }
    }
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row = match format {
            OutputFormat::Csv => row_from_cells(&line.split(',').collect::<Vec<_>>())?,
            OutputFormat::Table => row_from_cells(&line.split_whitespace().collect::<Vec<_>>())?,
            OutputFormat::Jsonl => {
                let j: JsonRow = serde_json::from_str(&line).map_err(|e| Error::Format(e.to_string()))?;
                let n = j.n.to_string();
                let seed = j.seed.to_string();
                row_from_cells(&[&j.variable, &j.value, &j.method, &j.mean, &j.std, &n, &seed])?
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Small configuration that runs every stage in well under a second.
pub fn smoke_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.array.ap_antennas = 3;
    cfg.array.irs_rows = 3;
    cfg.array.irs_cols = 2;
    cfg.placement.users = 2;
    cfg.training.tau = 2;
    cfg.training.examples = 8;
    cfg.training.iterations = 4;
    cfg.training.batch_size = 4;
    cfg.training.eval_every = 2;
    cfg.training.conv_padding = 1;
    cfg.online.iterations = 20;
    cfg.genie.iterations = 40;
    cfg.genie.restarts = 2;
    cfg.experiment.episode_slots = 3;
    cfg.experiment.mc_count = 3;
    cfg
}

fn outcome(name: &'static str, r: Result<String>) -> CheckOutcome {
    match r {
        Ok(detail) => CheckOutcome { name, passed: true, detail },
        Err(e) => CheckOutcome { name, passed: false, detail: e.to_string() },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Constraint(msg.into()))
    }
}

/// Quick installation check: presets, gradients, determinism and file
/// formats on a small configuration.
pub fn self_check() -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    out.push(outcome("presets", (|| {
        for name in ["desk", "paper"] {
            let (cfg, spec) = preset(name)?;
            let text = dump_config(&cfg, spec.as_ref())?;
            ensure(parse_config(&text)? == (cfg, spec), format!("{name} does not survive a round trip"))?;
        }
        Ok("desk and paper parse and round-trip".to_string())
    })()));

    let cfg = smoke_config();
    out.push(outcome("gradients", (|| {
        let (model, _, set) = train_la_clnet(&cfg)?;
        let noise = cfg.noise();
        let power = cfg.power_watts();
        let batch = &set.examples[..4];
        let (_, grads) = model.loss_and_grads(batch, &noise, power)?;
        let report = crate::autodiff::grad_check(
            model.params(),
            &grads,
            |p| model.with_params(p.clone())?.loss(batch, &noise, power),
            &crate::autodiff::GradCheckConfig::default(),
        )?;
        ensure(report.passed, format!("max relative error {:.3e}", report.max_rel_error))?;
        Ok(format!("{} coordinates, max relative error {:.3e}", report.checked, report.max_rel_error))
    })()));

    out.push(outcome("determinism", (|| {
        let spec = SweepSpec {
            variable: SweepVariable::RicianBetaDb,
            values: vec![0.0, 10.0],
            methods: Method::ALL.to_vec(),
            mc_count: cfg.experiment.mc_count,
            seed: cfg.experiment.seed,
        };
        let mut cache = ModelCache::in_memory();
        let mut files = Vec::new();
        for _ in 0..2 {
            let res = run_sweep(&cfg, &spec, &mut cache)?;
            let mut buf = Vec::new();
            write_results(&res, &mut buf, OutputFormat::Csv)?;
            files.push(buf);
        }
        ensure(files[0] == files[1], "two runs with one seed differ")?;
        Ok(format!("{} bytes identical across runs", files[0].len()))
    })()));

    out.push(outcome("formats", (|| {
        let res = SweepResult {
            rows: vec![SweepRow {
                variable: "power_dbm".into(),
                value: 25.0,
                method: "naive".into(),
                mean: 1.0 / 3.0,
                std: 0.1,
                n: 7,
                seed: 42,
            }],
            ..Default::default()
        };
        for format in [OutputFormat::Table, OutputFormat::Csv, OutputFormat::Jsonl] {
            let mut buf = Vec::new();
            write_results(&res, &mut buf, format)?;
            ensure(read_results(buf.as_slice(), format)? == res.rows, format!("{format:?} round trip"))?;
        }
        Ok("table, csv and jsonl round-trip".to_string())
    })()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        let (cfg, spec) = preset("desk").unwrap();
        assert_eq!(cfg.training.examples, 500);
        assert_eq!(spec.unwrap().mc_count, 200);
        let (paper, _) = preset("paper").unwrap();
        assert_eq!(paper.training.examples, 2000);
        assert_eq!(paper.experiment.mc_count, 2000);
        assert!(preset("huge").is_err());
    }

    #[test]
    fn desk_preset_matches_defaults() {
        assert_eq!(preset("desk").unwrap().0, ExperimentConfig::default());
    }

    #[test]
    fn empty_result_is_header_only() {
        let mut buf = Vec::new();
        write_results(&SweepResult::default(), &mut buf, OutputFormat::Csv).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "variable,value,method,mean,std,n,seed\n");
    }

    #[test]
    fn training_key_ignores_beta() {
        let cfg = ExperimentConfig::default();
        let other = SweepVariable::RicianBetaDb.apply(&cfg, 3.0);
        assert_eq!(training_key(&cfg).unwrap(), training_key(&other).unwrap());
        let p = SweepVariable::PowerDbm.apply(&cfg, 20.0);
        assert_ne!(training_key(&cfg).unwrap(), training_key(&p).unwrap());
    }

    #[test]
    fn self_check_passes() {
        for c in self_check() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
