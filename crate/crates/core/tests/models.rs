use irsbeam::autodiff::{grad_check, GradCheckConfig, ParameterSet, Tensor};
use irsbeam::channel::{build_history, sample_cn};
use irsbeam::cmat::{CMatrix, C64};
use irsbeam::metrics::{rate_from_effective, surrogate_rate, NoiseModel, POWER_TOL, UNIT_MODULUS_TOL};
use irsbeam::models::{decode_phase, decode_precoder, IaFnn, IaFnnConfig, LaClNet, LaClNetConfig, TrainingExample};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_example(cfg: &LaClNetConfig, rng: &mut ChaCha8Rng) -> TrainingExample {
    let draw = |rng: &mut ChaCha8Rng| -> Vec<CMatrix> {
        (0..cfg.users)
            .map(|_| CMatrix::from_fn(cfg.irs_elements, cfg.antennas, |_, _| sample_cn(rng)))
            .collect()
    };
    let slots: Vec<Vec<CMatrix>> = (0..cfg.tau).map(|_| draw(rng)).collect();
    TrainingExample { history: build_history(&slots).unwrap(), target: draw(rng) }
}

fn set_tensor(p: &mut ParameterSet, name: &str, data: Vec<f64>) {
    let t = p.get_mut(name).unwrap();
    *t = Tensor::new(t.shape().to_vec(), data).unwrap();
}

#[test]
fn la_clnet_loss_matches_surrogate_rate() {
    let cfg = LaClNetConfig::new(3, 2, 8, 3);
    let net = LaClNet::new(cfg, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let batch: Vec<_> = (0..4).map(|_| random_example(&cfg, &mut rng)).collect();
    let noise = NoiseModel::uniform(2, 0.3);
    let power = 2.0;
    let mut oracle = 0.0;
    for ex in &batch {
        let (v_raw, w_raw) = net.forward(&ex.history).unwrap();
        let v = decode_phase(&v_raw);
        let w = decode_precoder(&w_raw, 3, 2, power).unwrap();
        oracle += surrogate_rate(&ex.target, v.as_slice(), &w, &noise).unwrap();
    }
    oracle /= batch.len() as f64;
    let loss = net.loss(&batch, &noise, power).unwrap();
    assert!((loss + oracle).abs() <= 1e-10, "{loss} vs {oracle}");
}

#[test]
fn la_clnet_unit_case() {
    let cfg = LaClNetConfig { conv_kernel: 1, lstm_hidden: 2, ..LaClNetConfig::new(1, 1, 1, 1) };
    let net = LaClNet::new(cfg, 1).unwrap();
    let mut p = net.params().zeros_like();
    set_tensor(&mut p, "head_v.bias", vec![1.0, 0.0]);
    set_tensor(&mut p, "head_w.bias", vec![1.0, 0.0]);
    let net = net.with_params(p).unwrap();
    let ex = TrainingExample {
        history: build_history(&[vec![CMatrix::from_fn(1, 1, |_, _| C64::new(0.5, 0.5))]]).unwrap(),
        target: vec![CMatrix::from_fn(1, 1, |_, _| C64::new(1.0, 0.0))],
    };
    let loss = net.loss(std::slice::from_ref(&ex), &NoiseModel::uniform(1, 1.0), 1.0).unwrap();
    assert!((loss + 1.0).abs() < 1e-15);

    // zero precoder: nothing is received
    let mut p = net.params().clone();
    set_tensor(&mut p, "head_w.bias", vec![0.0, 0.0]);
    let silent = net.with_params(p).unwrap();
    assert_eq!(silent.loss(&[ex], &NoiseModel::uniform(1, 1.0), 1.0).unwrap(), 0.0);
}

#[test]
fn ia_fnn_unit_case_and_oracle() {
    let fnn = IaFnn::new(IaFnnConfig::new(1, 1), 2).unwrap();
    let mut p = fnn.params().zeros_like();
    set_tensor(&mut p, "fc4.bias", vec![1.0, 0.0]);
    let fnn = fnn.with_params(p).unwrap();
    let h = vec![vec![C64::new(1.0, 0.0)]];
    assert!((fnn.loss(&h, &NoiseModel::uniform(1, 1.0), 1.0).unwrap() + 1.0).abs() < 1e-15);

    let fnn = IaFnn::new(IaFnnConfig::new(3, 4), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = NoiseModel::uniform(3, 0.05);
    for _ in 0..20 {
        let h: Vec<Vec<C64>> = (0..3).map(|_| (0..4).map(|_| sample_cn(&mut rng)).collect()).collect();
        let w = fnn.precoder(&h, 1.5).unwrap();
        let oracle = rate_from_effective(&h, &w, &noise);
        let loss = fnn.loss(&h, &noise, 1.5).unwrap();
        assert!((loss + oracle).abs() <= 1e-10);
    }
}

#[test]
fn ia_fnn_forward_is_deterministic() {
    let fnn = IaFnn::new(IaFnnConfig::new(3, 6), 9).unwrap();
    let h: Vec<Vec<C64>> = (0..3).map(|k| (0..6).map(|m| C64::new(k as f64, m as f64 - 2.0)).collect()).collect();
    let a = fnn.forward(&h).unwrap();
    let b = fnn.forward(&h).unwrap();
    assert_eq!(a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
}

#[test]
fn global_phase_of_target_is_irrelevant() {
    let cfg = LaClNetConfig::new(2, 2, 6, 3);
    let net = LaClNet::new(cfg, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let ex = random_example(&cfg, &mut rng);
    let rot = C64::from_polar(1.0, 1.234);
    let mut turned = ex.clone();
    turned.target[0] = CMatrix::from_fn(6, 3, |r, c| ex.target[0].get(r, c) * rot);
    let noise = NoiseModel::uniform(2, 0.5);
    let a = net.loss(&[ex], &noise, 1.0).unwrap();
    let b = net.loss(&[turned], &noise, 1.0).unwrap();
    assert!((a - b).abs() <= 1e-10);
}

#[test]
fn both_losses_pass_gradient_check() {
    let cfg = LaClNetConfig::new(2, 2, 16, 4);
    let net = LaClNet::new(cfg, 31).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let batch: Vec<_> = (0..2).map(|_| random_example(&cfg, &mut rng)).collect();
    let noise = NoiseModel::uniform(2, 0.5);
    let (_, grads) = net.loss_and_grads(&batch, &noise, 1.0).unwrap();
    let report = grad_check(
        net.params(),
        &grads,
        |p| net.with_params(p.clone())?.loss(&batch, &noise, 1.0),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "{report:?}");

    let fnn = IaFnn::new(IaFnnConfig::new(2, 4), 33).unwrap();
    let h: Vec<Vec<C64>> = (0..2).map(|_| (0..4).map(|_| sample_cn(&mut rng)).collect()).collect();
    let (_, grads) = fnn.loss_and_grads(&h, &noise, 1.0).unwrap();
    let report = grad_check(
        fnn.params(),
        &grads,
        |p| fnn.with_params(p.clone())?.loss(&h, &noise, 1.0),
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed, "{report:?}");
}

#[test]
fn saved_model_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.bin");
    let net = LaClNet::new(LaClNetConfig::new(2, 2, 6, 3), 8).unwrap();
    net.save(&path).unwrap();
    assert_eq!(LaClNet::load(&path).unwrap(), net);
}

proptest! {
    #[test]
    fn decoded_outputs_are_feasible(raw in proptest::collection::vec(prop_oneof![Just(0.0), -1e12..1e12f64, -1e-12..1e-12f64], 24), power in 1e-9..1e3f64) {
        let v = decode_phase(&raw);
        prop_assert!(v.as_slice().iter().all(|z| (z.norm() - 1.0).abs() <= UNIT_MODULUS_TOL));
        let w = decode_precoder(&raw, 4, 3, power).unwrap();
        prop_assert!(w.total_power() <= power * (1.0 + POWER_TOL));
    }
}
