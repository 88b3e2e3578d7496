use std::fs;

use cogcode::dataset::{synth_generate, AudioWindow, LabeledWindow, SynthConfig};
use cogcode::model::{ModelConfig, Variant};
use cogcode::trainer::{
    adam_minimize, fit, init_state, load_checkpoint, save_checkpoint, TrainConfig, EVAL_FILE, METRICS_FILE,
};

fn tiny_model() -> ModelConfig {
    ModelConfig { window_len: 2560, enc_channels: 6, context_dim: 4, pred_steps: 2, variant: Variant::Cognitive, ..ModelConfig::default() }
}

fn corpus() -> Vec<LabeledWindow> {
    synth_generate(&SynthConfig { n_windows: 12, window_len: 2560, ..SynthConfig::default() }).unwrap()
}

fn cfg(n_updates: u64) -> TrainConfig {
    TrainConfig { n_updates, batch_size: 2, n_candidates: 4, learning_rate: 1e-3, seed: 5, ..TrainConfig::default() }
}

fn windows(c: &[LabeledWindow]) -> Vec<&AudioWindow> {
    c.iter().map(|w| &w.window).collect()
}

#[test]
fn adam_finds_the_bottom_of_a_quadratic_bowl() {
    let target = [3.0, -1.5, 0.25, 7.0];
    let scale = [1.0, 10.0, 0.1, 2.0];
    let mut p = vec![0.0; 4];
    adam_minimize(&mut p, 0.05, 2000, |p| p.iter().zip(&target).zip(&scale).map(|((x, t), s)| 2.0 * s * (x - t)).collect());
    for (x, t) in p.iter().zip(&target) {
        assert!((x - t).abs() < 1e-3, "{x} vs {t}");
    }
}

#[test]
fn resumed_training_follows_the_same_trajectory() {
    let c = corpus();
    let w = windows(&c);
    let straight = fit(&cfg(10), init_state::<f32>(&tiny_model(), &cfg(10)).unwrap(), &w, &[], None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("mid.hcck");
    let first = fit(&cfg(4), init_state::<f32>(&tiny_model(), &cfg(4)).unwrap(), &w, &[], None).unwrap();
    save_checkpoint(&first.state, &ckpt).unwrap();
    let resumed = fit(&cfg(10), load_checkpoint::<f32>(&ckpt).unwrap(), &w, &[], None).unwrap();

    let losses = |m: &[cogcode::trainer::StepMetrics]| m.iter().map(|r| (r.update, r.loss)).collect::<Vec<_>>();
    let mut joined = losses(&first.metrics);
    joined.extend(losses(&resumed.metrics));
    assert_eq!(joined, losses(&straight.metrics));
    assert!(resumed.state.model == straight.state.model);
    assert_eq!(resumed.state.m, straight.state.m);
    assert_eq!(resumed.state.v, straight.state.v);
}

#[test]
fn single_update_writes_one_row_and_one_checkpoint() {
    let c = corpus();
    let dir = tempfile::tempdir().unwrap();
    let out = fit(&cfg(1), init_state::<f32>(&tiny_model(), &cfg(1)).unwrap(), &windows(&c), &[], Some(dir.path())).unwrap();
    assert_eq!(out.checkpoints.len(), 1);
    let metrics = fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(metrics.starts_with("update,L,L_lower,L_upper,acc_k1,acc_k2,upper_acc_k1,upper_acc_k2,wall_ms"));
    assert!(!dir.path().join(EVAL_FILE).exists());
}

#[test]
fn eval_rows_land_every_eval_every_updates() {
    let c = corpus();
    let w = windows(&c);
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig { eval_every: 3, checkpoint_every: 4, ..cfg(7) };
    let out = fit(&cfg, init_state::<f32>(&tiny_model(), &cfg).unwrap(), &w[..8], &w[8..], Some(dir.path())).unwrap();
    assert_eq!(out.evals.iter().map(|e| e.update).collect::<Vec<_>>(), vec![3, 6]);
    let names: Vec<_> = out.checkpoints.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["checkpoint_00000004.hcck", "checkpoint_00000007.hcck"]);
    assert_eq!(fs::read_to_string(dir.path().join(EVAL_FILE)).unwrap().lines().count(), 3);
}

#[test]
fn checkpoint_save_load_save_is_byte_identical() {
    let c = corpus();
    let dir = tempfile::tempdir().unwrap();
    let out = fit(&cfg(3), init_state::<f32>(&tiny_model(), &cfg(3)).unwrap(), &windows(&c), &[], None).unwrap();
    let (a, b) = (dir.path().join("a.hcck"), dir.path().join("b.hcck"));
    save_checkpoint(&out.state, &a).unwrap();
    save_checkpoint(&load_checkpoint::<f32>(&a).unwrap(), &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn loss_goes_down_on_a_small_corpus() {
    let c = corpus();
    let cfg = TrainConfig { learning_rate: 3e-3, ..cfg(150) };
    let out = fit(&cfg, init_state::<f32>(&tiny_model(), &cfg).unwrap(), &windows(&c), &[], None).unwrap();
    let mean = |r: &[cogcode::trainer::StepMetrics]| r.iter().map(|m| m.lower).sum::<f64>() / r.len() as f64;
    let (head, tail) = (mean(&out.metrics[..20]), mean(&out.metrics[130..]));
    assert!(tail < head - 0.05, "lower-stage loss {head:.3} -> {tail:.3}");
}
