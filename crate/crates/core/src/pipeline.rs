//! Experiment configuration and the end-to-end procedure: training-set
//! synthesis, offline LA-CLNet training, per-slot phase prediction and
//! precoder optimization, and the slot-by-slot protocol episode.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Adam, AdamConfig, ParameterSet};
use crate::baselines::{genie_joint_opt, naive_los_phase, random_phase, GenieOptConfig};
use crate::channel::{
    build_history, dbm_to_watts, ArrayGeometry, HistoryTensor, PathLossParams, RicianParams, Scene,
};
use crate::cmat::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::geometry::{sample_initial_location, trajectory, IrsUserDistance, Location3D, MobilityParams, SpawnRegion};
use crate::metrics::{effective_channels, sum_rate, BeamformingMatrix, NoiseModel, PhaseShiftVector};
use crate::models::{decode_precoder, IaFnn, IaFnnConfig, LaClNet, LaClNetConfig, TrainingExample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub ap: Location3D,
    pub irs: Location3D,
    pub users: usize,
    pub spawn: SpawnRegion,
    #[serde(default)]
    pub irs_user_distance: IrsUserDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedUnit {
    #[default]
    PerSecond,
    /// Meters per slot; divided by the slot duration on conversion.
    PerSlot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub speed_min: f64,
    pub speed_max: f64,
    #[serde(default)]
    pub speed_unit: SpeedUnit,
    pub heading_min: f64,
    pub heading_max: f64,
    pub slot_duration: f64,
    pub uncertainty_std: f64,
}

impl MobilityConfig {
    pub fn params(&self) -> MobilityParams {
        let scale = match self.speed_unit {
            SpeedUnit::PerSecond => 1.0,
            SpeedUnit::PerSlot => 1.0 / self.slot_duration,
        };
        MobilityParams {
            speed_min: self.speed_min * scale,
            speed_max: self.speed_max * scale,
            heading_min: self.heading_min,
            heading_max: self.heading_max,
            slot_duration: self.slot_duration,
            uncertainty_std: self.uncertainty_std,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub rician_beta_db: f64,
    pub beta0_db: f64,
    pub reference_distance: f64,
    pub eta_ai: f64,
    pub eta_user: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkConfig {
    pub noise_dbm: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub tau: usize,
    /// Number of training examples `N_t`.
    pub examples: usize,
    /// Optimizer steps `I`.
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub eval_every: usize,
    pub conv_padding: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OnlineConfig {
    /// Optimizer steps `J` per slot.
    pub iterations: usize,
    pub learning_rate: f64,
    /// Start each slot from the previous slot's parameters.
    #[serde(default)]
    pub warm_start: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSettings {
    /// Evaluated slots `T` per episode, after a `τ`-slot warm-up.
    pub episode_slots: usize,
    pub mc_count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub array: ArrayGeometry,
    pub placement: Placement,
    pub mobility: MobilityConfig,
    pub channel: ChannelConfig,
    pub link: LinkConfig,
    pub training: TrainingConfig,
    pub online: OnlineConfig,
    #[serde(default)]
    pub genie: GenieOptConfig,
    pub experiment: ExperimentSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            array: ArrayGeometry {
                ap_antennas: 6,
                irs_rows: 6,
                irs_cols: 6,
                spacing_ratio_ap: 0.5,
                spacing_ratio_irs_y: 0.5,
                spacing_ratio_irs_z: 0.5,
            },
            placement: Placement {
                ap: Location3D::new(2.0, 0.0, 20.0),
                irs: Location3D::new(0.0, 50.0, 25.0),
                users: 3,
                spawn: SpawnRegion { x_min: 3.0, x_max: 6.0, y_min: 50.0, y_max: 60.0 },
                irs_user_distance: IrsUserDistance::Slant,
            },
            mobility: MobilityConfig {
                speed_min: 8.0,
                speed_max: 10.0,
                speed_unit: SpeedUnit::PerSecond,
                heading_min: -std::f64::consts::PI / 18.0,
                heading_max: std::f64::consts::PI / 18.0,
                slot_duration: 0.02,
                uncertainty_std: 0.01,
            },
            channel: ChannelConfig {
                rician_beta_db: 8.0,
                beta0_db: -30.0,
                reference_distance: 1.0,
                eta_ai: 2.2,
                eta_user: 3.0,
            },
            link: LinkConfig { noise_dbm: -96.0, power_dbm: 30.0 },
            training: TrainingConfig {
                tau: 5,
                examples: 500,
                iterations: 2000,
                batch_size: 32,
                learning_rate: 1e-3,
                holdout_fraction: 0.1,
                eval_every: 50,
                conv_padding: 0,
            },
            online: OnlineConfig { iterations: 500, learning_rate: 1e-3, warm_start: false },
            genie: GenieOptConfig::default(),
            experiment: ExperimentSettings { episode_slots: 20, mc_count: 200, seed: 1 },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.array.validate()?;
        self.path_loss().validate()?;
        self.mobility.params().validate()?;
        self.placement.spawn.validate()?;
        if self.placement.users == 0 {
            return Err(Error::param("placement.users", "must be at least 1"));
        }
        if !(self.placement.ap.is_finite() && self.placement.irs.is_finite()) {
            return Err(Error::param("placement", "AP and IRS locations must be finite"));
        }
        if self.channel.rician_beta_db.is_nan() {
            return Err(Error::param("channel.rician_beta_db", "must be a number"));
        }
        let watts = self.power_watts();
        if !(watts > 0.0 && watts.is_finite()) {
            return Err(Error::param("link.power_dbm", "out of range"));
        }
        let noise = dbm_to_watts(self.link.noise_dbm);
        if !(noise > 0.0 && noise.is_finite()) {
            return Err(Error::param("link.noise_dbm", "out of range"));
        }
        let t = &self.training;
        if t.tau == 0 {
            return Err(Error::param("training.tau", "must be at least 1"));
        }
        if t.examples == 0 {
            return Err(Error::param("training.examples", "must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(Error::param("training.batch_size", "must be at least 1"));
        }
        if t.eval_every == 0 {
            return Err(Error::param("training.eval_every", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&t.holdout_fraction) {
            return Err(Error::param("training.holdout_fraction", "must lie in [0, 1)"));
        }
        AdamConfig { learning_rate: t.learning_rate, ..Default::default() }
            .validate()
            .map_err(|_| Error::param("training.learning_rate", "must be positive and finite"))?;
        AdamConfig { learning_rate: self.online.learning_rate, ..Default::default() }
            .validate()
            .map_err(|_| Error::param("online.learning_rate", "must be positive and finite"))?;
        self.genie.validate()?;
        if self.experiment.mc_count == 0 {
            return Err(Error::param("experiment.mc_count", "must be at least 1"));
        }
        self.la_clnet_config().validate()?;
        Ok(())
    }

    pub fn path_loss(&self) -> PathLossParams {
        PathLossParams {
            beta0_db: self.channel.beta0_db,
            reference_distance: self.channel.reference_distance,
            eta_ai: self.channel.eta_ai,
            eta_user: self.channel.eta_user,
        }
    }

    pub fn scene(&self) -> Scene {
        Scene {
            array: self.array,
            ap: self.placement.ap,
            irs: self.placement.irs,
            path_loss: self.path_loss(),
            irs_user_distance: self.placement.irs_user_distance,
        }
    }

    pub fn rician(&self) -> RicianParams {
        RicianParams::from_db(self.channel.rician_beta_db)
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::uniform(self.placement.users, dbm_to_watts(self.link.noise_dbm))
    }

    pub fn power_watts(&self) -> f64 {
        dbm_to_watts(self.link.power_dbm)
    }

    pub fn la_clnet_config(&self) -> LaClNetConfig {
        LaClNetConfig {
            conv_padding: self.training.conv_padding,
            ..LaClNetConfig::new(
                self.training.tau,
                self.placement.users,
                self.array.irs_elements(),
                self.array.ap_antennas,
            )
        }
    }

    pub fn ia_fnn_config(&self) -> IaFnnConfig {
        IaFnnConfig::new(self.placement.users, self.array.ap_antennas)
    }
}

/// Independent 64-bit seed for a named stream under a master seed.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}

/// Spawns every user and walks `slots` positions; `out[s][k]` is user `k`
/// at slot `s`.
pub fn spawn_and_walk(cfg: &ExperimentConfig, slots: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<Location3D>> {
    let params = cfg.mobility.params();
    let per_user: Vec<Vec<Location3D>> = (0..cfg.placement.users)
        .map(|_| {
            let start = sample_initial_location(&cfg.placement.spawn, rng);
            trajectory(start, &params, slots, rng)
        })
        .collect();
    (0..slots).map(|s| per_user.iter().map(|t| t[s]).collect()).collect()
}

/// History tensor from the cascaded LoS channels of the given slots.
pub fn history_at(scene: &Scene, slots: &[Vec<Location3D>]) -> Result<HistoryTensor> {
    let cascaded = slots
        .iter()
        .map(|users| scene.cascaded_los_at(users))
        .collect::<Result<Vec<_>>>()?;
    build_history(&cascaded)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub examples: Vec<TrainingExample>,
    /// Examples redrawn because a geometry computation failed.
    pub resampled: usize,
    pub seed: u64,
}

/// Draws one unlabeled example: `τ + 1` positions per user, history from
/// the first `τ`, target from the last.
pub fn generate_example(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<TrainingExample> {
    let tau = cfg.training.tau;
    let slots = spawn_and_walk(cfg, tau + 1, rng);
    let scene = cfg.scene();
    let history = history_at(&scene, &slots[..tau])?;
    let target = scene.cascaded_los_at(&slots[tau])?;
    Ok(TrainingExample { history, target })
}

pub fn generate_training_set(cfg: &ExperimentConfig, seed: u64) -> Result<TrainingSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.training.examples;
    let max_failures = 100 * n.max(10);
    let mut examples = Vec::with_capacity(n);
    let mut resampled = 0;
    while examples.len() < n {
        match generate_example(cfg, &mut rng) {
            Ok(ex) => examples.push(ex),
            Err(Error::Geometry(msg)) => {
                resampled += 1;
                if resampled > max_failures {
                    return Err(Error::Geometry(format!(
                        "gave up after {resampled} invalid draws; last: {msg}"
                    )));
                }
            }
            Err(e) => return Err(e),
        }
    }
    Ok(TrainingSet { examples, resampled, seed })
}

const DATASET_MAGIC: &[u8; 4] = b"IRSD";
const DATASET_VERSION: u32 = 1;

impl TrainingSet {
    /// Layout (little-endian): magic `IRSD`, u32 version, u64 seed,
    /// u64 resampled, u32 `τ, K, N, M`, u64 count, then per example the
    /// history (`τ·K·N·M·2` f64) followed by the target (`K·N·M·2` f64,
    /// same interleaved real/imag order).
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let [tau, k, n, m, _] = self
            .examples
            .first()
            .map(|e| e.history.shape())
            .unwrap_or([0, 0, 0, 0, 2]);
        out.write_all(DATASET_MAGIC)?;
        out.write_all(&DATASET_VERSION.to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        out.write_all(&(self.resampled as u64).to_le_bytes())?;
        for d in [tau, k, n, m] {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        out.write_all(&(self.examples.len() as u64).to_le_bytes())?;
        for ex in &self.examples {
            if ex.history.shape() != [tau, k, n, m, 2] {
                return Err(Error::shape("TrainingSet::write_to", [tau, k, n, m, 2], ex.history.shape()));
            }
            for v in ex.history.as_slice() {
                out.write_all(&v.to_le_bytes())?;
            }
            for h in &ex.target {
                for z in h.as_slice() {
                    out.write_all(&z.re.to_le_bytes())?;
                    out.write_all(&z.im.to_le_bytes())?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Format("not a training-set file".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        input.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported training-set version {version}")));
        }
        input.read_exact(&mut b8)?;
        let seed = u64::from_le_bytes(b8);
        input.read_exact(&mut b8)?;
        let resampled = u64::from_le_bytes(b8) as usize;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            input.read_exact(&mut b4)?;
            *d = u32::from_le_bytes(b4) as usize;
        }
        let [tau, k, n, m] = dims;
        input.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        let mut read_f64s = |len: usize| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                input.read_exact(&mut b8)?;
                out.push(f64::from_le_bytes(b8));
            }
            Ok(out)
        };
        let mut examples = Vec::with_capacity(count);
        for _ in 0..count {
            let history = HistoryTensor::from_raw([tau, k, n, m, 2], read_f64s(tau * k * n * m * 2)?)?;
            let raw = read_f64s(k * n * m * 2)?;
            let target = raw
                .chunks_exact(n * m * 2)
                .map(|c| CMatrix::from_vec(n, m, c.chunks_exact(2).map(|p| C64::new(p[0], p[1])).collect()))
                .collect::<Result<Vec<_>>>()?;
            examples.push(TrainingExample { history, target });
        }
        Ok(Self { examples, resampled, seed })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Hex SHA-256 of the serialized set.
    pub fn content_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_bytes()?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }

    /// RMS of all history entries; its inverse is the model input scale.
    pub fn history_rms(&self) -> f64 {
        let (mut sum, mut count) = (0.0, 0usize);
        for ex in &self.examples {
            sum += ex.history.as_slice().iter().map(|v| v * v).sum::<f64>();
            count += ex.history.as_slice().len();
        }
        if count == 0 {
            0.0
        } else {
            (sum / count as f64).sqrt()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Minibatch loss at every iteration.
    pub loss_curve: Vec<f64>,
    /// `(iteration, held-out loss)`; iteration 0 is the initialization.
    pub eval_curve: Vec<(usize, f64)>,
    pub initial_holdout: f64,
    pub best_holdout: f64,
    pub best_iteration: usize,
    pub holdout_size: usize,
}

/// Average loss over `examples` in chunks, weighted by chunk size.
pub fn dataset_loss(model: &LaClNet, examples: &[TrainingExample], noise: &NoiseModel, power: f64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::shape("dataset_loss", "nonempty set", 0));
    }
    let mut total = 0.0;
    for chunk in examples.chunks(64) {
        total += model.loss(chunk, noise, power)? * chunk.len() as f64;
    }
    Ok(total / examples.len() as f64)
}

/// Minibatch Adam on the LA-CLNet loss. The last `holdout_fraction` of the
/// examples is held out; the parameters with the lowest held-out loss seen
/// at the evaluation points are returned.
pub fn offline_train(
    mut model: LaClNet,
    examples: &[TrainingExample],
    noise: &NoiseModel,
    power: f64,
    cfg: &TrainingConfig,
    seed: u64,
) -> Result<(LaClNet, TrainReport)> {
    if examples.is_empty() {
        return Err(Error::shape("offline_train", "nonempty dataset", 0));
    }
    let holdout = if examples.len() < 2 {
        0
    } else {
        ((examples.len() as f64 * cfg.holdout_fraction).round() as usize).clamp(1, examples.len() - 1)
    };
    let (train, held) = examples.split_at(examples.len() - holdout);
    let held = if held.is_empty() { train } else { held };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut opt = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() })?;

    let initial = dataset_loss(&model, held, noise, power)?;
    if !initial.is_finite() {
        return Err(Error::NonFinite { stage: "offline_train (initial evaluation)", batch: 0 });
    }
    let mut report = TrainReport {
        loss_curve: Vec::with_capacity(cfg.iterations),
        eval_curve: vec![(0, initial)],
        initial_holdout: initial,
        best_holdout: initial,
        best_iteration: 0,
        holdout_size: holdout,
    };
    let mut best_params = model.params().clone();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut cursor = order.len();
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for it in 1..=cfg.iterations {
        batch.clear();
        while batch.len() < cfg.batch_size.min(train.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(train[order[cursor]].clone());
            cursor += 1;
        }
        let (loss, grads) = model.loss_and_grads(&batch, noise, power)?;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(Error::NonFinite { stage: "offline_train", batch: it });
        }
        report.loss_curve.push(loss);
        opt.step(model.params_mut(), &grads)?;
        if it % cfg.eval_every == 0 || it == cfg.iterations {
            let h = dataset_loss(&model, held, noise, power)?;
            if !h.is_finite() {
                return Err(Error::NonFinite { stage: "offline_train (evaluation)", batch: it });
            }
            report.eval_curve.push((it, h));
            if h < report.best_holdout {
                report.best_holdout = h;
                report.best_iteration = it;
                best_params = model.params().clone();
            }
        }
    }
    model.set_params(best_params)?;
    Ok((model, report))
}

/// Generates the training set for `cfg`, fits the input scale, and trains.
pub fn train_la_clnet(cfg: &ExperimentConfig) -> Result<(LaClNet, TrainReport, TrainingSet)> {
    cfg.validate()?;
    let seed = cfg.experiment.seed;
    let set = generate_training_set(cfg, derive_seed(seed, "dataset", 0))?;
    let mut model = LaClNet::new(cfg.la_clnet_config(), derive_seed(seed, "init", 0))?;
    let rms = set.history_rms();
    model.input_scale = if rms > 0.0 { 1.0 / rms } else { 1.0 };
    model.dataset_hash = Some(set.content_hash()?);
    let (model, report) = offline_train(
        model,
        &set.examples,
        &cfg.noise(),
        cfg.power_watts(),
        &cfg.training,
        derive_seed(seed, "shuffle", 0),
    )?;
    Ok((model, report, set))
}

/// Phase shifts for the next slot from the trained network.
pub fn online_predict(model: &LaClNet, history: &HistoryTensor) -> Result<PhaseShiftVector> {
    model.predict(history)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineOutcome {
    pub precoder: BeamformingMatrix,
    pub best_loss: f64,
    /// Best loss seen after each evaluation (initialization first).
    pub trace: Vec<f64>,
    /// Final network parameters, for warm starts.
    pub params: ParameterSet,
}

/// Fits a fresh (or warm-started) IA-FNN to one effective channel and
/// returns the best feasible precoder seen.
pub fn online_optimize(
    channels: &[Vec<C64>],
    noise: &NoiseModel,
    power: f64,
    cfg: &OnlineConfig,
    seed: u64,
    warm: Option<&ParameterSet>,
) -> Result<OnlineOutcome> {
    let users = channels.len();
    let antennas = channels.first().map_or(0, Vec::len);
    let mut net = IaFnn::new(IaFnnConfig::new(users, antennas), seed)?;
    if let Some(p) = warm {
        net.set_params(p.clone())?;
    }
    let mut opt = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..Default::default() })?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::with_capacity(cfg.iterations + 1);
    for j in 0..=cfg.iterations {
        let (loss, grads) = net.loss_and_grads(channels, noise, power)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { stage: "online_optimize", batch: j });
        }
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, net.forward(channels)?));
        }
        trace.push(best.as_ref().expect("set above").0);
        if j < cfg.iterations {
            opt.step(net.params_mut(), &grads)?;
        }
    }
    let (best_loss, raw) = best.expect("at least one evaluation");
    Ok(OnlineOutcome {
        precoder: decode_precoder(&raw, antennas, users, power)?,
        best_loss,
        trace,
        params: net.params().clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Proposed,
    Genie,
    Naive,
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Proposed, Method::Genie, Method::Naive, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Genie => "genie",
            Method::Naive => "naive",
            Method::Random => "random",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::param("method", format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub phase: PhaseShiftVector,
    pub precoder: BeamformingMatrix,
    pub rate: f64,
    /// Seed of the rng that drew this slot's instantaneous channels.
    pub channel_seed: u64,
    pub positions: Vec<Location3D>,
    /// Wall time spent choosing `(v, W)`.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub method: Method,
    pub seed: u64,
    pub slots: Vec<SlotRecord>,
}

impl EpisodeResult {
    pub fn mean_rate(&self) -> f64 {
        if self.slots.is_empty() {
            return 0.0;
        }
        self.slots.iter().map(|s| s.rate).sum::<f64>() / self.slots.len() as f64
    }
}

/// Per-slot decision making under one configuration.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    cfg: &'a ExperimentConfig,
    model: Option<&'a LaClNet>,
    scene: Scene,
    noise: NoiseModel,
    power: f64,
    rician: RicianParams,
}

impl<'a> Evaluator<'a> {
    pub fn new(cfg: &'a ExperimentConfig, model: Option<&'a LaClNet>) -> Result<Self> {
        cfg.validate()?;
        if let Some(m) = model {
            if *m.config() != cfg.la_clnet_config() {
                return Err(Error::param("model", "network dimensions do not match the configuration"));
            }
        }
        Ok(Self {
            cfg,
            model,
            scene: cfg.scene(),
            noise: cfg.noise(),
            power: cfg.power_watts(),
            rician: cfg.rician(),
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        self.cfg
    }

    /// Phase shifts of a causal method for the slot after `past`, which
    /// must hold at least `τ` slots of positions. Only `past` is visible.
    pub fn causal_phase(&self, method: Method, past: &[Vec<Location3D>], rng: &mut ChaCha8Rng) -> Result<PhaseShiftVector> {
        let tau = self.cfg.training.tau;
        if past.len() < tau {
            return Err(Error::shape("causal_phase (history slots)", tau, past.len()));
        }
        match method {
            Method::Proposed => {
                let model = self
                    .model
                    .ok_or_else(|| Error::param("model", "the proposed method needs a trained LA-CLNet"))?;
                online_predict(model, &history_at(&self.scene, &past[past.len() - tau..])?)
            }
            Method::Naive => {
                let prev = self.scene.cascaded_los_at(past.last().expect("tau >= 1"))?;
                naive_los_phase(&prev, self.power, &self.noise, &self.cfg.genie, rng)
            }
            Method::Random => Ok(random_phase(self.cfg.array.irs_elements(), rng)),
            Method::Genie => Err(Error::param("method", "genie is not causal")),
        }
    }

    /// Evaluates slot `t` of a walk: chooses `v` from slots before `t`,
    /// draws the slot-`t` channels from `channel_seed`, then fits `W`.
    pub fn evaluate_slot(
        &self,
        method: Method,
        walk: &[Vec<Location3D>],
        t: usize,
        episode_seed: u64,
        warm: Option<&ParameterSet>,
    ) -> Result<(SlotRecord, Option<ParameterSet>)> {
        let channel_seed = derive_seed(episode_seed, "channel", t as u64);
        let mut chan_rng = ChaCha8Rng::seed_from_u64(channel_seed);
        let channels = self.scene.realize(&walk[t], &self.rician, &mut chan_rng)?;
        let mut method_rng = stream(episode_seed, method.name(), t as u64);
        let start = Instant::now();
        let (phase, precoder, params) = if method == Method::Genie {
            let (v, w, _) = genie_joint_opt(&channels, self.power, &self.noise, &self.cfg.genie, &mut method_rng)?;
            (v, w, None)
        } else {
            let v = self.causal_phase(method, &walk[..t], &mut method_rng)?;
            let eff = effective_channels(&channels, &v)?;
            let warm = if self.cfg.online.warm_start { warm } else { None };
            let out = online_optimize(
                &eff,
                &self.noise,
                self.power,
                &self.cfg.online,
                derive_seed(episode_seed, "online", t as u64),
                warm,
            )?;
            (v, out.precoder, Some(out.params))
        };
        let seconds = start.elapsed().as_secs_f64();
        let rate = sum_rate(&channels, &phase, &precoder, &self.noise)?;
        let record = SlotRecord {
            slot: t,
            phase,
            precoder,
            rate,
            channel_seed,
            positions: walk[t].clone(),
            seconds,
        };
        Ok((record, params))
    }

    /// Positions for `slots` slots of a fresh episode.
    pub fn walk(&self, episode_seed: u64, slots: usize) -> Vec<Vec<Location3D>> {
        spawn_and_walk(self.cfg, slots, &mut stream(episode_seed, "trajectory", 0))
    }

    /// Recomputes a recorded rate from its stored decisions and channel seed.
    pub fn reproduce_rate(&self, record: &SlotRecord) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(record.channel_seed);
        let channels = self.scene.realize(&record.positions, &self.rician, &mut rng)?;
        sum_rate(&channels, &record.phase, &record.precoder, &self.noise)
    }
}

/// Runs `T` evaluated slots after a `τ`-slot warm-up.
pub fn run_protocol_episode(
    cfg: &ExperimentConfig,
    method: Method,
    model: Option<&LaClNet>,
    seed: u64,
) -> Result<EpisodeResult> {
    let eval = Evaluator::new(cfg, model)?;
    let tau = cfg.training.tau;
    let walk = eval.walk(seed, tau + cfg.experiment.episode_slots);
    let mut slots = Vec::with_capacity(cfg.experiment.episode_slots);
    let mut warm: Option<ParameterSet> = None;
    for t in tau..walk.len() {
        let (record, params) = eval.evaluate_slot(method, &walk, t, seed, warm.as_ref())?;
        warm = params;
        slots.push(record);
    }
    Ok(EpisodeResult { method, seed, slots })
}
