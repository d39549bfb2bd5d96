//! Losses, Adam, the decay / early-stop schedule, the training loop and
//! ensembles.

mod common;

use common::schedule::{code, SCHEDULE_TABLE};
use rand::Rng;
use tbje_core::gradcheck::{central_difference, relative_error, toy_config};
use tbje_core::model::Modality;
use tbje_core::rng::{stream, StreamKind};
use tbje_core::synthetic::{generate, SyntheticSpec};
use tbje_core::training::{
    ensemble_predict, evaluate_accuracy, fit, fit_with, loss, probabilities, Adam, Example, Flow, Label, Schedule,
    TrainConfig, TrainState,
};
use tbje_core::{Error, Task, Tape, TbjeModel, Tensor};

fn random_labels(rng: &mut impl Rng, n: usize) -> Vec<Label> {
    (0..n)
        .map(|_| Label::new(rng.random_range(-3.0..=3.0), std::array::from_fn(|_| rng.random_bool(0.4))).unwrap())
        .collect()
}

/// Mean loss computed directly from the definitions.
fn loss_oracle(logits: &Tensor, labels: &[Label], task: Task) -> f64 {
    let mut total = 0.0;
    for (r, label) in labels.iter().enumerate() {
        let z = logits.row(r);
        total += match task {
            Task::Emotions6 => {
                let mut s = 0.0;
                for (j, &zj) in z.iter().enumerate() {
                    let p = 1.0 / (1.0 + (-zj).exp());
                    s -= if label.emotions[j] { p.ln() } else { (1.0 - p).ln() };
                }
                s / 6.0
            }
            _ => {
                let raw: f64 = label.sentiment;
                let class = if task == Task::Sentiment2 {
                    usize::from(raw >= 0.0)
                } else {
                    (raw.round() + 3.0) as usize
                };
                let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
                lse - z[class]
            }
        };
    }
    total / labels.len() as f64
}

#[test]
fn loss_matches_definition_and_finite_differences() {
    for seed in 0..60 {
        let mut r = stream(seed, StreamKind::Synthetic, 9);
        let task = [Task::Sentiment2, Task::Sentiment7, Task::Emotions6][seed as usize % 3];
        let n = r.random_range(1..6);
        let labels = random_labels(&mut r, n);
        let z = Tensor::new(vec![n, task.outputs()], (0..n * task.outputs()).map(|_| r.random_range(-4.0..4.0)).collect()).unwrap();
        let mut tape = Tape::new();
        let v = tape.param(z.clone());
        let l = loss(&mut tape, v, &labels, task, 0.0).unwrap();
        let expected = loss_oracle(&z, &labels, task);
        assert!((tape.value(l).data()[0] - expected).abs() < 1e-12, "seed {seed}");
        tape.backward(l).unwrap();
        let numeric = central_difference(|x| Ok(loss_oracle(x, &labels, task)), &z, 1e-5).unwrap();
        assert!(relative_error(tape.grad(v).unwrap(), &numeric) < 1e-6, "seed {seed}");
    }
}

#[test]
fn adam_follows_the_scalar_reference_on_a_quadratic() {
    // f(x) = (x - 3)^2 from x = 0.
    let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
    let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
    let mut reference = Vec::new();
    for t in 1..=10 {
        let g = 2.0 * (x - 3.0);
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let m_hat = m / (1.0 - b1.powi(t));
        let v_hat = v / (1.0 - b2.powi(t));
        x -= lr * m_hat / (v_hat.sqrt() + eps);
        reference.push(x);
    }
    // First step moves by lr against the gradient sign.
    assert!((reference[0] - 0.1).abs() < 1e-9);

    let mut params = tbje_core::model::ParamStore::new();
    params.insert("x", Tensor::scalar(0.0));
    let mut adam = Adam::new();
    for (t, expected) in reference.iter().enumerate() {
        let x = params.get("x").unwrap().data()[0];
        let grads = std::collections::BTreeMap::from([("x".to_string(), Tensor::scalar(2.0 * (x - 3.0)))]);
        adam.step(&mut params, &grads, lr).unwrap();
        let got = params.get("x").unwrap().data()[0];
        assert!((got - expected).abs() <= 1e-15 * expected.abs().max(1.0), "step {}: {got} vs {expected}", t + 1);
    }
    assert_eq!(adam.step, 10);
}

#[test]
fn schedule_follows_the_transition_table() {
    assert!(SCHEDULE_TABLE.len() >= 20);
    for (accs, expected) in SCHEDULE_TABLE {
        let mut s = Schedule::new(1e-4, 0.2, 2, 3);
        let mut codes = String::new();
        let mut lrs = vec![s.lr];
        for &a in accs.iter() {
            if s.stopped {
                break;
            }
            codes.push(code(s.observe(a)));
            lrs.push(s.lr);
        }
        assert_eq!(&codes, expected, "sequence {accs:?}");
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
        assert!(s.decays_used <= 2);
        let decays = codes.matches('D').count();
        assert_eq!(s.lr, [1e-4, 1e-4 * 0.2, 1e-4 * 0.2 * 0.2][decays]);
    }
}

#[test]
fn flat_accuracy_gives_the_default_learning_rates() {
    let mut s = Schedule::new(1e-4, 0.2, 2, 3);
    let mut lrs = Vec::new();
    while !s.stopped {
        lrs.push(s.lr);
        s.observe(0.5);
    }
    assert_eq!(lrs.len(), 6);
    let expected = [1e-4, 1e-4, 2e-5, 4e-6, 4e-6, 4e-6];
    for (a, b) in lrs.iter().zip(expected) {
        assert!((a - b).abs() < 1e-18, "{lrs:?}");
    }
}

fn small_setup(modalities: &[Modality], task: Task) -> (TbjeModel, Vec<Example>) {
    let mut cfg = toy_config(modalities);
    cfg.task = task;
    let data = generate(&cfg.modalities, &SyntheticSpec::default()).unwrap();
    (TbjeModel::new(cfg, 0).unwrap(), data)
}

fn quick(max_epochs: usize) -> TrainConfig {
    TrainConfig { lr: 1e-3, batch_size: 8, ensemble_size: 1, max_epochs, ..Default::default() }
}

#[test]
fn fit_drives_the_schedule_from_validation_accuracy() {
    let (mut model, data) = small_setup(&[Modality::Linguistic], Task::Sentiment7);
    let out = fit(&mut model, &data, &data[..10], &quick(40), 5).unwrap();
    assert!(out.finished);
    let mut replay = Schedule::new(1e-3, 0.2, 2, 3);
    for r in &out.state.records {
        assert_eq!(r.lr, replay.lr, "epoch {}", r.epoch);
        assert_eq!(r.transition, replay.observe(r.valid_accuracy));
        assert_eq!(r.decays_used, replay.decays_used);
    }
    // The retained parameters score the best validation accuracy.
    let best = out.state.records.iter().map(|r| r.valid_accuracy).fold(0.0, f64::max);
    assert_eq!(evaluate_accuracy(&model, &data[..10]).unwrap(), best);
}

#[test]
fn zero_learning_rate_leaves_parameters_bit_identical() {
    let (mut model, data) = small_setup(&[Modality::Linguistic, Modality::Acoustic], Task::Sentiment2);
    let before = model.params().clone();
    let cfg = TrainConfig { lr: 0.0, ..quick(1) };
    let out = fit(&mut model, &data, &data, &cfg, 0).unwrap();
    assert_eq!(out.state.records.len(), 1);
    assert!(model.params().bit_identical(&before));
    assert!(out.state.params.bit_identical(&before));
}

#[test]
fn flat_validation_under_zero_learning_rate_stops_after_six_epochs() {
    let (mut model, data) = small_setup(&[Modality::Acoustic], Task::Sentiment7);
    let cfg = TrainConfig { lr: 0.0, ..quick(100) };
    let out = fit(&mut model, &data, &data, &cfg, 0).unwrap();
    let codes: String = out.state.records.iter().map(|r| code(r.transition)).collect();
    assert_eq!(codes, "IDDSSX");
}

#[test]
fn seeded_training_is_bit_reproducible() {
    let run = |seed| {
        let (mut model, data) = small_setup(&[Modality::Linguistic, Modality::Acoustic], Task::Sentiment7);
        let out = fit(&mut model, &data, &data, &quick(4), seed).unwrap();
        (model, out.state)
    };
    let (a, sa) = run(1);
    let (b, sb) = run(1);
    let (c, _) = run(2);
    assert!(a.params().bit_identical(b.params()));
    assert_eq!(sa, sb);
    assert!(!a.params().bit_identical(c.params()));
}

#[test]
fn resumed_training_follows_the_uninterrupted_trajectory() {
    let cfg = quick(7);
    let (mut full, data) = small_setup(&[Modality::Linguistic, Modality::Acoustic], Task::Sentiment2);
    let mut resumed = full.clone();
    let whole = fit(&mut full, &data, &data, &cfg, 3).unwrap();

    let first = fit_with(&mut resumed, None, &data, &data, &cfg, 3, &mut |r, _| {
        Ok(if r.epoch == 3 { Flow::Halt } else { Flow::Continue })
    })
    .unwrap();
    assert!(!first.finished);
    let state = TrainState::from_bytes(&first.state.to_bytes()).unwrap();
    assert_eq!(state, first.state);
    let mut fresh = TbjeModel::new(full.config().clone(), 99).unwrap();
    let rest = fit_with(&mut fresh, Some(state), &data, &data, &cfg, 3, &mut |_, _| Ok(Flow::Continue)).unwrap();
    assert_eq!(rest.state.records, whole.state.records);
    assert!(fresh.params().bit_identical(full.params()));
    assert_eq!(rest.state, whole.state);
}

#[test]
fn divergence_aborts_with_diagnostics() {
    let (mut model, data) = small_setup(&[Modality::Linguistic], Task::Sentiment2);
    model.params_mut().get_mut("classifier.output.bias").unwrap().data_mut()[0] = f64::NAN;
    match fit(&mut model, &data, &data, &quick(3), 0) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("epoch 1") && msg.contains("lr"), "{msg}"),
        other => panic!("expected a numeric error, got {other:?}"),
    }
}

#[test]
fn emotions_train_as_a_multi_label_task() {
    let (mut model, data) = small_setup(&[Modality::Visual], Task::Emotions6);
    let out = fit(&mut model, &data, &data, &quick(5), 0).unwrap();
    for r in &out.state.records {
        assert!((0.0..=1.0).contains(&r.valid_accuracy) && r.train_loss.is_finite());
    }
}

#[test]
fn ensembles_average_probabilities() {
    let (model, data) = small_setup(&[Modality::Linguistic, Modality::Acoustic], Task::Sentiment7);
    let single = probabilities(&model, &data).unwrap();
    assert_eq!(ensemble_predict(std::slice::from_ref(&model), &data).unwrap(), single);
    let copies = vec![model.clone(); 5];
    assert_eq!(ensemble_predict(&copies, &data).unwrap(), single);

    let other = TbjeModel::new(model.config().clone(), 1).unwrap();
    let q = probabilities(&other, &data).unwrap();
    let avg = ensemble_predict(&[model.clone(), other], &data).unwrap();
    for ((a, p), q) in avg.data().iter().zip(single.data()).zip(q.data()) {
        assert!((a - (p + q) / 2.0).abs() < 1e-15);
    }

    let mut cfg = model.config().clone();
    cfg.blocks = 1;
    let mismatched = TbjeModel::new(cfg, 0).unwrap();
    assert!(matches!(ensemble_predict(&[model, mismatched], &data), Err(Error::Config(_))));
}

/// Constant learning rate, early stop effectively off: the harness checks
/// capacity and optimisation, not the schedule.
pub fn overfit_config() -> TrainConfig {
    TrainConfig { lr: 1e-3, batch_size: 8, ensemble_size: 1, max_epochs: 200, max_decays: 0, patience: 200, ..Default::default() }
}

#[test]
fn synthetic_set_is_memorised_for_every_modality_combination() {
    let combos: [&[Modality]; 5] = [
        &[Modality::Linguistic],
        &[Modality::Acoustic],
        &[Modality::Visual],
        &[Modality::Linguistic, Modality::Acoustic],
        &[Modality::Linguistic, Modality::Acoustic, Modality::Visual],
    ];
    for mods in combos {
        let (mut model, data) = small_setup(mods, Task::Sentiment7);
        let out = fit_with(&mut model, None, &data, &data, &overfit_config(), 0, &mut |r, _| {
            Ok(if r.valid_accuracy >= 0.99 { Flow::Halt } else { Flow::Continue })
        })
        .unwrap();
        let records = &out.state.records;
        assert!(records.len() >= 5 && records.len() <= 200, "{mods:?}: {} epochs", records.len());
        assert!(records[4].train_loss < records[0].train_loss, "{mods:?}: loss did not fall over 5 epochs");
        assert!(evaluate_accuracy(&model, &data).unwrap() >= 0.99, "{mods:?}");
    }
}
