//! The two networks: LA-CLNet predicts IRS phase shifts (plus an auxiliary
//! LoS precoder) from a history of cascaded LoS channels, and IA-FNN maps
//! an effective channel to a transmit precoder. Both are trained without
//! labels by minimizing the negative sum-rate.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{GainSource, Graph, NodeId, ParameterSet, Tensor};
use crate::channel::HistoryTensor;
use crate::cmat::{CMatrix, C64};
use crate::error::{Error, Result};
use crate::metrics::{project_power, project_unit_modulus, BeamformingMatrix, NoiseModel, PhaseShiftVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaClNetConfig {
    pub tau: usize,
    pub users: usize,
    /// IRS elements `N`.
    pub irs_elements: usize,
    /// AP antennas `M`.
    pub antennas: usize,
    pub conv_filters: usize,
    pub conv_kernel: usize,
    /// Zero padding on each side of the `N × M` slice.
    pub conv_padding: usize,
    pub lstm_hidden: usize,
}

impl LaClNetConfig {
    pub fn new(tau: usize, users: usize, irs_elements: usize, antennas: usize) -> Self {
        Self {
            tau,
            users,
            irs_elements,
            antennas,
            conv_filters: 4,
            conv_kernel: 3,
            conv_padding: 0,
            lstm_hidden: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tau", self.tau),
            ("users", self.users),
            ("irs_elements", self.irs_elements),
            ("antennas", self.antennas),
            ("conv_filters", self.conv_filters),
            ("conv_kernel", self.conv_kernel),
            ("lstm_hidden", self.lstm_hidden),
        ] {
            if v == 0 {
                return Err(Error::param(name, "must be positive"));
            }
        }
        let (h, w) = self.padded();
        if h < self.conv_kernel || w < self.conv_kernel {
            return Err(Error::param(
                "conv_padding",
                format!(
                    "a {k}×{k} kernel does not fit a {h}×{w} padded slice",
                    k = self.conv_kernel
                ),
            ));
        }
        Ok(())
    }

    fn padded(&self) -> (usize, usize) {
        (self.irs_elements + 2 * self.conv_padding, self.antennas + 2 * self.conv_padding)
    }

    /// Length of the pooled feature map of one (slot, user) slice.
    pub fn features_per_user(&self) -> usize {
        let (h, w) = self.padded();
        let (ho, wo) = (h + 1 - self.conv_kernel, w + 1 - self.conv_kernel);
        self.conv_filters * ho.div_ceil(2) * wo.div_ceil(2)
    }

    /// Width of the per-slot LSTM input.
    pub fn lstm_input(&self) -> usize {
        self.users * self.features_per_user()
    }

    pub fn head_v_out(&self) -> usize {
        2 * self.irs_elements
    }

    pub fn head_w_out(&self) -> usize {
        2 * self.antennas * self.users
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IaFnnConfig {
    pub users: usize,
    pub antennas: usize,
    pub hidden: Vec<usize>,
}

impl IaFnnConfig {
    pub fn new(users: usize, antennas: usize) -> Self {
        Self { users, antennas, hidden: vec![32, 16, 16] }
    }

    pub fn io_width(&self) -> usize {
        2 * self.antennas * self.users
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.antennas == 0 {
            return Err(Error::param("users/antennas", "must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden", "layer widths must be positive"));
        }
        Ok(())
    }
}

/// One unlabeled sample: the channel history and the cascaded LoS channels
/// of the slot to be predicted. The target only enters the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub history: HistoryTensor,
    pub target: Vec<CMatrix>,
}

fn xavier(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}

fn linear_layer(params: &mut ParameterSet, name: &str, out: usize, inp: usize, rng: &mut ChaCha8Rng) {
    params
        .insert(format!("{name}.weight"), xavier(&[out, inp], inp, out, rng))
        .expect("fresh names");
    params.insert(format!("{name}.bias"), Tensor::zeros(&[out])).expect("fresh names");
}

fn check_params(expected: &ParameterSet, got: &ParameterSet) -> Result<()> {
    for (name, t) in expected.iter() {
        match got.get(name) {
            Some(o) if o.shape() == t.shape() => {}
            Some(o) => return Err(Error::shape("model parameters", t.shape(), o.shape())),
            None => return Err(Error::MissingGrad(name.to_string())),
        }
    }
    if expected.len() != got.len() {
        return Err(Error::shape("model parameters (count)", expected.len(), got.len()));
    }
    Ok(())
}

fn id(g: &Graph, name: &str) -> NodeId {
    g.param_id(name).unwrap_or_else(|| panic!("parameter `{name}` not bound"))
}

/// Raw head output `[Re…, Im…]` to a feasible phase vector.
pub fn decode_phase(raw: &[f64]) -> PhaseShiftVector {
    let n = raw.len() / 2;
    let z: Vec<C64> = (0..n).map(|i| C64::new(raw[i], raw[n + i])).collect();
    project_unit_modulus(&z)
}

/// Raw head output to an `M × K` precoder, column `k` read from
/// `k·M .. (k+1)·M` of each half, then projected onto the power budget.
pub fn decode_precoder(raw: &[f64], antennas: usize, users: usize, power_budget: f64) -> Result<BeamformingMatrix> {
    let mk = antennas * users;
    if raw.len() != 2 * mk {
        return Err(Error::shape("decode_precoder", 2 * mk, raw.len()));
    }
    let w = CMatrix::from_fn(antennas, users, |m, k| C64::new(raw[k * antennas + m], raw[mk + k * antennas + m]));
    Ok(project_power(w, power_budget))
}

/// Inverse layout of [`decode_precoder`] (without projection).
pub fn encode_precoder(w: &CMatrix) -> Vec<f64> {
    let (m, k) = w.shape();
    let mut out = vec![0.0; 2 * m * k];
    for j in 0..k {
        for i in 0..m {
            let z = w.get(i, j);
            out[j * m + i] = z.re;
            out[m * k + j * m + i] = z.im;
        }
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta<C> {
    kind: String,
    config: C,
    input_scale: f64,
    seed: u64,
    dataset_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaClNet {
    config: LaClNetConfig,
    params: ParameterSet,
    /// Multiplier applied to the history before the trunk. Cascaded LoS
    /// entries are of order 1e-7, so training sets it to the inverse RMS of
    /// the training histories.
    pub input_scale: f64,
    pub seed: u64,
    pub dataset_hash: Option<String>,
}

impl LaClNet {
    pub fn new(config: LaClNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let k = c.conv_kernel;
        let mut p = ParameterSet::new();
        p.insert(
            "conv.weight",
            xavier(&[c.conv_filters, 2, k, k], 2 * k * k, c.conv_filters * k * k, &mut rng),
        )?;
        p.insert("conv.bias", Tensor::zeros(&[c.conv_filters]))?;
        let h4 = 4 * c.lstm_hidden;
        p.insert("lstm.w_x", xavier(&[h4, c.lstm_input()], c.lstm_input(), h4, &mut rng))?;
        p.insert("lstm.w_h", xavier(&[h4, c.lstm_hidden], c.lstm_hidden, h4, &mut rng))?;
        p.insert("lstm.bias", Tensor::zeros(&[h4]))?;
        linear_layer(&mut p, "head_v", c.head_v_out(), c.lstm_hidden, &mut rng);
        linear_layer(&mut p, "head_w", c.head_w_out(), c.lstm_hidden, &mut rng);
        Ok(Self { config, params: p, input_scale: 1.0, seed, dataset_hash: None })
    }

    pub fn config(&self) -> &LaClNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    /// Replaces every parameter; names and shapes must match.
    pub fn set_params(&mut self, params: ParameterSet) -> Result<()> {
        check_params(&self.params, &params)?;
        self.params = params;
        Ok(())
    }

    pub fn with_params(&self, params: ParameterSet) -> Result<Self> {
        let mut out = self.clone();
        out.set_params(params)?;
        Ok(out)
    }

    fn check_history(&self, history: &HistoryTensor) -> Result<()> {
        let c = &self.config;
        let expected = [c.tau, c.users, c.irs_elements, c.antennas, 2];
        if history.shape() != expected {
            return Err(Error::shape("LA-CLNet history", expected, history.shape()));
        }
        Ok(())
    }

    /// Builds the forward pass on a graph whose parameters are bound.
    fn build(&self, g: &mut Graph, history: &HistoryTensor) -> Result<(NodeId, NodeId)> {
        self.check_history(history)?;
        let c = &self.config;
        let (n, m) = (c.irs_elements, c.antennas);
        let (cw, cb) = (id(g, "conv.weight"), id(g, "conv.bias"));
        let (wx, wh, lb) = (id(g, "lstm.w_x"), id(g, "lstm.w_h"), id(g, "lstm.bias"));
        let mut h = g.constant(Tensor::zeros(&[c.lstm_hidden]));
        let mut cell = g.constant(Tensor::zeros(&[c.lstm_hidden]));
        for slot in 0..c.tau {
            let mut feats = Vec::with_capacity(c.users);
            for user in 0..c.users {
                let s = history.slice(slot, user);
                // [N][M][re, im] -> [2][N][M]
                let mut planar = vec![0.0; 2 * n * m];
                for (e, pair) in s.chunks_exact(2).enumerate() {
                    planar[e] = pair[0] * self.input_scale;
                    planar[n * m + e] = pair[1] * self.input_scale;
                }
                let x = g.constant(Tensor::new(vec![2, n, m], planar)?);
                let y = g.conv2d(x, cw, cb, c.conv_padding)?;
                let y = g.relu(y);
                let y = g.maxpool2(y)?;
                feats.push(g.flatten(y));
            }
            let x = g.concat(&feats);
            (h, cell) = g.lstm_cell(x, h, cell, wx, wh, lb)?;
        }
        let v = g.linear(h, id(g, "head_v.weight"), id(g, "head_v.bias"))?;
        let w = g.linear(h, id(g, "head_w.weight"), id(g, "head_w.bias"))?;
        Ok((v, w))
    }

    /// Raw head outputs `(v_raw, W_raw)` of lengths `2N` and `2MK`.
    pub fn forward(&self, history: &HistoryTensor) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        g.bind(&self.params);
        let (v, w) = self.build(&mut g, history)?;
        Ok((g.value(v).data().to_vec(), g.value(w).data().to_vec()))
    }

    /// Phase shifts for the next slot; the auxiliary precoder is discarded.
    pub fn predict(&self, history: &HistoryTensor) -> Result<PhaseShiftVector> {
        let (v, _) = self.forward(history)?;
        Ok(decode_phase(&v))
    }

    /// Builds `−mean_i Σ_k log2(1 + γ̄_k⁽ⁱ⁾)` and returns the loss node.
    fn build_loss(&self, g: &mut Graph, batch: &[TrainingExample], noise: &NoiseModel, power: f64) -> Result<NodeId> {
        if batch.is_empty() {
            return Err(Error::shape("LA-CLNet loss", "nonempty batch", 0));
        }
        if noise.sigma_sq.len() != self.config.users {
            return Err(Error::shape("LA-CLNet loss (noise)", self.config.users, noise.sigma_sq.len()));
        }
        g.bind(&self.params);
        let mut rates = Vec::with_capacity(batch.len());
        for ex in batch {
            let (v_raw, w_raw) = self.build(g, &ex.history)?;
            if ex.target.len() != self.config.users {
                return Err(Error::shape("LA-CLNet target", self.config.users, ex.target.len()));
            }
            let v = g.unit_modulus(v_raw)?;
            let w = g.power_project(w_raw, power);
            let gains = g.gains(Some(v), w, GainSource::Cascaded(Arc::new(ex.target.clone())))?;
            rates.push(g.sum_rate(gains, &noise.sigma_sq)?);
        }
        let all = g.concat(&rates);
        let mean = g.mean(all);
        Ok(g.scale(mean, -1.0))
    }

    pub fn loss(&self, batch: &[TrainingExample], noise: &NoiseModel, power: f64) -> Result<f64> {
        let mut g = Graph::new();
        let l = self.build_loss(&mut g, batch, noise, power)?;
        Ok(g.value(l).item())
    }

    pub fn loss_and_grads(&self, batch: &[TrainingExample], noise: &NoiseModel, power: f64) -> Result<(f64, ParameterSet)> {
        let mut g = Graph::new();
        let l = self.build_loss(&mut g, batch, noise, power)?;
        let grads = g.backward(l)?;
        Ok((g.value(l).item(), g.param_grads(&grads)))
    }

    fn meta(&self) -> Result<String> {
        let meta = ModelMeta {
            kind: "la-clnet".into(),
            config: self.config,
            input_scale: self.input_scale,
            seed: self.seed,
            dataset_hash: self.dataset_hash.clone(),
        };
        serde_json::to_string(&meta).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.params.save(path, &self.meta()?)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        self.params.write_to(&mut buf, &self.meta()?)?;
        Ok(buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (params, meta) = ParameterSet::load(path)?;
        Self::from_parts(params, &meta)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (params, meta) = ParameterSet::read_from(bytes)?;
        Self::from_parts(params, &meta)
    }

    fn from_parts(params: ParameterSet, meta: &str) -> Result<Self> {
        let meta: ModelMeta<LaClNetConfig> = serde_json::from_str(meta).map_err(|e| Error::Format(e.to_string()))?;
        if meta.kind != "la-clnet" {
            return Err(Error::Format(format!("expected an la-clnet model, found `{}`", meta.kind)));
        }
        let mut model = Self::new(meta.config, meta.seed)?;
        model.set_params(params)?;
        model.input_scale = meta.input_scale;
        model.dataset_hash = meta.dataset_hash;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IaFnn {
    config: IaFnnConfig,
    params: ParameterSet,
}

impl IaFnn {
    pub fn new(config: IaFnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::new();
        let mut widths = vec![config.io_width()];
        widths.extend(&config.hidden);
        widths.push(config.io_width());
        for (i, pair) in widths.windows(2).enumerate() {
            linear_layer(&mut p, &format!("fc{}", i + 1), pair[1], pair[0], &mut rng);
        }
        Ok(Self { config, params: p })
    }

    pub fn config(&self) -> &IaFnnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet {
        &mut self.params
    }

    pub fn set_params(&mut self, params: ParameterSet) -> Result<()> {
        check_params(&self.params, &params)?;
        self.params = params;
        Ok(())
    }

    pub fn with_params(&self, params: ParameterSet) -> Result<Self> {
        let mut out = self.clone();
        out.set_params(params)?;
        Ok(out)
    }

    /// Network input: `[Re h_1…h_K, Im h_1…h_K]` divided by the RMS entry
    /// magnitude, so the input is scale-free whatever the path loss.
    fn encode_input(&self, channels: &[Vec<C64>]) -> Result<Vec<f64>> {
        let (k, m) = (self.config.users, self.config.antennas);
        if channels.len() != k || channels.iter().any(|h| h.len() != m) {
            let actual: Vec<usize> = channels.iter().map(Vec::len).collect();
            return Err(Error::shape("IA-FNN input", (k, m), actual));
        }
        let mk = m * k;
        let mut x = vec![0.0; 2 * mk];
        for (j, h) in channels.iter().enumerate() {
            for (i, z) in h.iter().enumerate() {
                x[j * m + i] = z.re;
                x[mk + j * m + i] = z.im;
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { stage: "IA-FNN input", batch: 0 });
        }
        let rms = (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt();
        if rms > 0.0 {
            x.iter_mut().for_each(|v| *v /= rms);
        }
        Ok(x)
    }

    fn build(&self, g: &mut Graph, channels: &[Vec<C64>]) -> Result<NodeId> {
        let mut x = g.constant(Tensor::vector(self.encode_input(channels)?));
        let layers = self.config.hidden.len() + 1;
        for i in 1..=layers {
            let w = id(g, &format!("fc{i}.weight"));
            let b = id(g, &format!("fc{i}.bias"));
            x = g.linear(x, w, b)?;
            if i < layers {
                x = g.relu(x);
            }
        }
        Ok(x)
    }

    /// Raw precoder output (length `2MK`) for effective channels `h_k`.
    pub fn forward(&self, channels: &[Vec<C64>]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        g.bind(&self.params);
        let out = self.build(&mut g, channels)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn precoder(&self, channels: &[Vec<C64>], power: f64) -> Result<BeamformingMatrix> {
        decode_precoder(&self.forward(channels)?, self.config.antennas, self.config.users, power)
    }

    fn build_loss(&self, g: &mut Graph, channels: &[Vec<C64>], noise: &NoiseModel, power: f64) -> Result<NodeId> {
        if noise.sigma_sq.len() != self.config.users {
            return Err(Error::shape("IA-FNN loss (noise)", self.config.users, noise.sigma_sq.len()));
        }
        g.bind(&self.params);
        let raw = self.build(g, channels)?;
        let w = g.power_project(raw, power);
        let rows: Vec<Vec<C64>> = channels.iter().map(|h| h.iter().map(|z| z.conj()).collect()).collect();
        let gains = g.gains(None, w, GainSource::Rows(Arc::new(rows)))?;
        let rate = g.sum_rate(gains, &noise.sigma_sq)?;
        Ok(g.scale(rate, -1.0))
    }

    /// `−Σ_k log2(1 + SINR_k)` of the projected output on `channels`.
    pub fn loss(&self, channels: &[Vec<C64>], noise: &NoiseModel, power: f64) -> Result<f64> {
        let mut g = Graph::new();
        let l = self.build_loss(&mut g, channels, noise, power)?;
        Ok(g.value(l).item())
    }

    pub fn loss_and_grads(&self, channels: &[Vec<C64>], noise: &NoiseModel, power: f64) -> Result<(f64, ParameterSet)> {
        let mut g = Graph::new();
        let l = self.build_loss(&mut g, channels, noise, power)?;
        let grads = g.backward(l)?;
        Ok((g.value(l).item(), g.param_grads(&grads)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_history;

    fn zeroed(p: &ParameterSet) -> ParameterSet {
        p.zeros_like()
    }

    fn random_history(cfg: &LaClNetConfig, rng: &mut ChaCha8Rng) -> HistoryTensor {
        let slots: Vec<Vec<CMatrix>> = (0..cfg.tau)
            .map(|_| {
                (0..cfg.users)
                    .map(|_| {
                        CMatrix::from_fn(cfg.irs_elements, cfg.antennas, |_, _| {
                            C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                        })
                    })
                    .collect()
            })
            .collect();
        build_history(&slots).unwrap()
    }

    #[test]
    fn paper_dimensions() {
        let cfg = LaClNetConfig::new(5, 3, 36, 6);
        assert_eq!(cfg.lstm_input(), 408);
        let net = LaClNet::new(cfg, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (v, w) = net.forward(&random_history(&cfg, &mut rng)).unwrap();
        assert_eq!((v.len(), w.len()), (72, 36));

        let fnn = IaFnn::new(IaFnnConfig::new(3, 6), 1).unwrap();
        let h: Vec<Vec<C64>> = (0..3).map(|_| vec![C64::new(0.3, -0.1); 6]).collect();
        assert_eq!(fnn.forward(&h).unwrap().len(), 36);
    }

    #[test]
    fn zero_weights_give_zero_outputs() {
        let cfg = LaClNetConfig::new(2, 2, 4, 3);
        let net = LaClNet::new(cfg, 3).unwrap();
        let net = net.with_params(zeroed(net.params())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (v, w) = net.forward(&random_history(&cfg, &mut rng)).unwrap();
        assert!(v.iter().chain(&w).all(|x| *x == 0.0));

        let fnn = IaFnn::new(IaFnnConfig::new(2, 3), 5).unwrap();
        let fnn = fnn.with_params(zeroed(fnn.params())).unwrap();
        let h = vec![vec![C64::new(1.0, 2.0); 3]; 2];
        assert!(fnn.forward(&h).unwrap().iter().all(|x| *x == 0.0));
        assert_eq!(fnn.loss(&h, &NoiseModel::uniform(2, 1.0), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn doubling_input_changes_output() {
        let cfg = LaClNetConfig::new(2, 2, 5, 3);
        let net = LaClNet::new(cfg, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_history(&cfg, &mut rng);
        let doubled = HistoryTensor::from_raw(h.shape(), h.as_slice().iter().map(|x| 2.0 * x).collect()).unwrap();
        assert_ne!(net.forward(&h).unwrap(), net.forward(&doubled).unwrap());
    }

    #[test]
    fn history_shape_checked() {
        let net = LaClNet::new(LaClNetConfig::new(2, 2, 5, 3), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let wrong = random_history(&LaClNetConfig::new(3, 2, 5, 3), &mut rng);
        assert!(matches!(net.forward(&wrong), Err(Error::Shape { .. })));
    }

    #[test]
    fn kernel_must_fit() {
        let cfg = LaClNetConfig::new(1, 1, 4, 1);
        assert!(cfg.validate().is_err());
        let padded = LaClNetConfig { conv_padding: 1, ..cfg };
        assert!(padded.validate().is_ok());
    }

    #[test]
    fn precoder_layout_round_trip() {
        let w = CMatrix::from_fn(3, 2, |i, j| C64::new(i as f64 * 0.1, j as f64 * 0.05 - 0.02));
        let raw = encode_precoder(&w);
        let back = decode_precoder(&raw, 3, 2, 10.0).unwrap();
        assert_eq!(back.matrix(), &w);
    }

    #[test]
    fn bytes_round_trip() {
        let mut net = LaClNet::new(LaClNetConfig::new(2, 1, 4, 3), 11).unwrap();
        net.input_scale = 3.5e6;
        net.dataset_hash = Some("abc".into());
        let back = LaClNet::from_bytes(&net.to_bytes().unwrap()).unwrap();
        assert_eq!(back, net);
    }
}
