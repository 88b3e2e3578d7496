//! Acceptance suite: runs every criterion in order and prints one
//! PASS/FAIL line each. Exits nonzero if any criterion fails.
//!
//! Training-based criteria (4, 5, 6, 9) share one synthetic corpus and a
//! desk-scale network: the default frame geometry (filters, strides,
//! 20480-sample windows, K = 12) with 16 encoder channels instead of 512.

use std::time::Instant;

use cogcode::dataset::{split_by_utterance, synth_generate, LabeledWindow, SynthConfig};
use cogcode::model::{window_features, Model, ModelConfig, Variant};
use cogcode::numerics::{Tape, Tensor};
use cogcode::objective::{total_loss, LossConfig, NegativeSampling, NegativeSource};
use cogcode::pipeline::{calibrate_contexts, quantize_contexts, Parts};
use cogcode::probes::{run_probe, table_from_features, FeatureSource, Pooling, ProbeKind, ProbeOptions, ProbeSpec, Target};
use cogcode::quantizer::{bitrate, calibrate_steps, dm_decode, dm_encode, dm_encode_traced, FeatureBitstream};
use cogcode::trainer::{evaluate, fit, init_state, StepMetrics, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [1, 2, 3];
const N: usize = 8;
const UPDATES: u64 = 1500;
const ENC_CHANNELS: usize = 16;

struct Outcome {
    pass: bool,
    detail: String,
}

fn desk_model(variant: Variant, context_dim: usize) -> ModelConfig {
    ModelConfig { enc_channels: ENC_CHANNELS, context_dim, variant, ..ModelConfig::default() }
}

fn desk_train(seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: 3e-3,
        batch_size: 8,
        n_updates: UPDATES,
        n_candidates: N,
        seed,
        upper_weight: 0.1,
        ..TrainConfig::default()
    }
}

struct Run {
    model: Model<f32>,
    eval: StepMetrics,
    secs: f64,
}

struct Shared {
    corpus: Vec<LabeledWindow>,
    cognitive16: Vec<Run>,
    baseline16: Vec<Run>,
}

impl Shared {
    fn parts(&self) -> Parts<'_> {
        Parts::split(&self.corpus, 0)
    }
}

fn train_run(corpus: &[LabeledWindow], variant: Variant, context_dim: usize, seed: u64) -> Run {
    let started = Instant::now();
    let parts = Parts::split(corpus, 0);
    let train: Vec<_> = parts.train.iter().map(|w| &w.window).collect();
    let val: Vec<_> = parts.val.iter().map(|w| &w.window).collect();
    let cfg = desk_train(seed);
    let state = init_state::<f32>(&desk_model(variant, context_dim), &cfg).expect("init");
    let out = fit(&cfg, state, &train, &[], None).expect("training");
    let eval = evaluate(&out.state.model, &val, &cfg, 77).expect("evaluation");
    let secs = started.elapsed().as_secs_f64();
    eprintln!(
        "    trained {variant:?} D_c={context_dim} seed {seed}: {:.0} s, held-out L_lower {:.3} L_upper {} acc_k1 {:.3}",
        secs,
        eval.lower,
        eval.upper.map_or("-".into(), |u| format!("{u:.3}")),
        eval.acc_lower[0].unwrap_or(0.0)
    );
    Run { model: out.state.model, eval, secs }
}

fn criterion_1() -> Outcome {
    let cfg = ModelConfig::default();
    let geometry = (cfg.short_frames(), cfg.long_frames(), cfg.short_hop(), cfg.long_hop());
    let model = Model::<f32>::new(desk_model(Variant::Cognitive, 16), 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = cogcode::dataset::AudioWindow { samples: (0..20480).map(|_| rng.gen_range(-0.5..0.5)).collect(), sample_rate: 16000 };
    let f = window_features(&model, &x).unwrap();
    let rows = [f.z_s.len(), f.c_s.len(), f.z_l.as_ref().unwrap().len(), f.c_l.as_ref().unwrap().len()];
    let pass = geometry == (128, 16, 160, 1280) && rows == [128, 128, 16, 16];
    Outcome { pass, detail: format!("frames z_s/c_s/z_l/c_l = {rows:?}, hops {}/{}", geometry.2, geometry.3) }
}

fn loss_and_grads(model: &Model<f64>, x: &Tensor<f64>, cfg: &LossConfig) -> (f64, Vec<Tensor<f64>>) {
    let tape = Tape::new();
    let bound = model.bind(&tape, true);
    let xv = tape.constant(x.clone());
    let fwd = model.forward(&tape, &bound, xv).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let out = total_loss(&tape, model, &bound, &fwd, cfg, &mut rng).unwrap();
    let value = tape.value(out.total).item();
    let grads = tape.backward(out.total).unwrap();
    (value, bound.vars.iter().map(|&v| grads.wrt(v)).collect())
}

fn criterion_2() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    let tiny = |variant, long: bool| ModelConfig {
        window_len: 1600,
        enc_channels: 8,
        context_dim: 4,
        pred_steps: 2,
        long_filters: if long { vec![4] } else { vec![4, 4, 4] },
        long_strides: if long { vec![2] } else { vec![2, 2, 2] },
        variant,
        ..ModelConfig::default()
    };
    for cfg in [tiny(Variant::Cognitive, true), tiny(Variant::CpcBaseline, false)] {
        let mut model = Model::<f64>::new(cfg, 5).unwrap();
        for p in model.params_mut() {
            p.value.data_mut().iter_mut().for_each(|w| *w *= 3.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::new([2, 1, 1600], (0..3200).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let loss_cfg = LossConfig {
            negatives: NegativeSampling { n_negatives: 3, source: NegativeSource::Mixed },
            upper_source: None,
            upper_weight: 1.0,
        };
        let (_, analytic) = loss_and_grads(&model, &x, &loss_cfg);
        let h = 1e-5;
        for pi in 0..model.params().len() {
            let n = model.params()[pi].value.numel();
            for j in (0..n).step_by((n / 25).max(1)) {
                let orig = model.params()[pi].value.data()[j];
                model.params_mut()[pi].value.data_mut()[j] = orig + h;
                let lp = loss_and_grads(&model, &x, &loss_cfg).0;
                model.params_mut()[pi].value.data_mut()[j] = orig - h;
                let lm = loss_and_grads(&model, &x, &loss_cfg).0;
                model.params_mut()[pi].value.data_mut()[j] = orig;
                let numeric = (lp - lm) / (2.0 * h);
                let a = analytic[pi].data()[j];
                worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
                checked += 1;
            }
        }
    }
    Outcome { pass: worst < 1e-4, detail: format!("{checked} gradient entries, worst relative error {worst:.2e} (< 1e-4)") }
}

fn criterion_3(shared: &Shared) -> Outcome {
    let parts = shared.parts();
    let windows: Vec<_> = parts.train.iter().take(160).map(|w| &w.window).collect();
    let ln_n = (N as f64).ln();
    let mut lines = Vec::new();
    let mut pass = true;
    for variant in [Variant::Cognitive, Variant::CpcBaseline] {
        let cfg = desk_train(0);
        let model = Model::<f32>::new(desk_model(variant, 16), 11).unwrap();
        let m = evaluate(&model, &windows, &cfg, 5).unwrap();
        for (stage, l) in [("lower", Some(m.lower)), ("upper", m.upper)] {
            if let Some(l) = l {
                let ok = (l - ln_n).abs() <= 0.1 * ln_n;
                pass &= ok;
                lines.push(format!("{variant:?} {stage} {l:.4}"));
            }
        }
    }
    Outcome { pass, detail: format!("ln N = {ln_n:.4}; 20 batches: {}", lines.join(", ")) }
}

fn criterion_4(shared: &Shared) -> Outcome {
    let bound = 0.9 * (N as f64).ln();
    let floor = 3.0 / N as f64;
    let mut good = 0;
    let mut lines = Vec::new();
    for (seed, r) in SEEDS.iter().zip(&shared.cognitive16) {
        let e = &r.eval;
        let upper = e.upper.unwrap_or(f64::INFINITY);
        let (a1, u1) = (e.acc_lower[0].unwrap_or(0.0), e.acc_upper.first().copied().flatten().unwrap_or(0.0));
        let ok = e.lower < bound && upper < bound && a1 > floor && u1 > floor;
        good += ok as usize;
        lines.push(format!("seed {seed}: L_lower {:.3} L_upper {upper:.3} acc_k1 {a1:.3}/{u1:.3}", e.lower));
    }
    let secs: f64 = shared.cognitive16.iter().map(|r| r.secs).sum();
    Outcome {
        pass: good >= 2,
        detail: format!(
            "{good}/3 seeds below {bound:.3} with acc(k=1) > {floor:.3} after {UPDATES} updates ({:.0} s/run); {}",
            secs / 3.0,
            lines.join("; ")
        ),
    }
}

fn linear(source: FeatureSource, target: Target) -> ProbeSpec {
    ProbeSpec { source, target, kind: ProbeKind::Linear, pooling: Pooling::PerFrame, quantized: false }
}

/// Test accuracy of linear per-frame probes, with and without
/// Δ-modulated contexts.
fn probe_accs(model: &Model<f32>, parts: &Parts<'_>, specs: &[ProbeSpec], seed: u64) -> Vec<f64> {
    let feats = |ws: &[&LabeledWindow]| {
        cogcode::model::batch_features(model, &ws.iter().map(|w| &w.window).collect::<Vec<_>>()).unwrap()
    };
    let raw = [feats(&parts.train), feats(&parts.val), feats(&parts.test)];
    let quantized = specs.iter().any(|s| s.quantized).then(|| {
        let codecs = calibrate_contexts(&raw[0]).unwrap();
        raw.iter().map(|f| quantize_contexts(f, &codecs).unwrap()).collect::<Vec<_>>()
    });
    let ws = [&parts.train, &parts.val, &parts.test];
    let ratio = model.config().frame_ratio();
    specs
        .iter()
        .map(|s| {
            let fs: &[Vec<_>] = if s.quantized { quantized.as_ref().unwrap() } else { &raw };
            let t: Vec<_> = (0..3).map(|i| table_from_features(&fs[i], ratio, ws[i], s.source, s.target, s.pooling).unwrap()).collect();
            run_probe(*s, &t[0], &t[1], &t[2], &ProbeOptions::default(), seed).unwrap().test_acc
        })
        .collect()
}

fn criterion_5(shared: &Shared) -> Outcome {
    let parts = shared.parts();
    let specs = [
        linear(FeatureSource::Cl, Target::LongAttr),
        linear(FeatureSource::Cl, Target::ShortAttr),
        linear(FeatureSource::Cs, Target::ShortAttr),
    ];
    let mut good = 0;
    let mut lines = Vec::new();
    for (seed, r) in SEEDS.iter().zip(&shared.cognitive16) {
        let a = probe_accs(&r.model, &parts, &specs, *seed);
        let (m1, m2) = (a[0] - a[1], a[2] - a[1]);
        let ok = m1 >= 0.10 && m2 >= 0.10;
        good += ok as usize;
        lines.push(format!(
            "seed {seed}: c_l/long {:.3} c_l/short {:.3} c_s/short {:.3} (margins {:+.1}pp {:+.1}pp)",
            a[0],
            a[1],
            a[2],
            100.0 * m1,
            100.0 * m2
        ));
    }
    Outcome { pass: good >= 2, detail: format!("{good}/3 seeds with both margins >= 10pp; {}", lines.join("; ")) }
}

fn criterion_6(shared: &Shared) -> Outcome {
    let mut good = 0;
    let mut lines = Vec::new();
    let k = 12;
    for ((seed, c), b) in SEEDS.iter().zip(&shared.cognitive16).zip(&shared.baseline16) {
        let (ac, ab) = (c.eval.mean_lower_acc(4..=k).unwrap_or(0.0), b.eval.mean_lower_acc(4..=k).unwrap_or(0.0));
        good += (ac >= ab) as usize;
        lines.push(format!("seed {seed}: cognitive {ac:.3} vs baseline {ab:.3}"));
    }
    Outcome { pass: good >= 2, detail: format!("mean acc over k=4..12, {good}/3 paired seeds favor cognitive; {}", lines.join("; ")) }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let t = rng.gen_range(1..=48);
        let d = rng.gen_range(1..=16);
        let mut x = vec![0.0f64; t * d];
        for j in 0..d {
            let mut v: f64 = rng.gen_range(-1.0..1.0);
            let scale: f64 = rng.gen_range(0.01..0.5);
            for ti in 0..t {
                v += rng.gen_range(-scale..scale);
                x[ti * d + j] = v;
            }
        }
        let x = Tensor::new([t, d], x).unwrap();
        let calib = if t >= 2 { x.clone() } else { Tensor::new([2, d], [x.data(), x.data()].concat()).unwrap() };
        let table = calibrate_steps(&[calib]).unwrap();
        let (bs, trace) = dm_encode_traced(&x, &table).unwrap();
        let bytes = bs.to_bytes().unwrap();
        let parsed = FeatureBitstream::from_bytes(&bytes);
        let ok = match &parsed {
            Ok(p) => {
                let decoded = dm_decode(p).unwrap();
                let again = dm_encode(&decoded, &table).unwrap().to_bytes().unwrap();
                let payload_bytes = bytes.len() - (15 + 13 * d);
                p.payload_bits() == (t - 1) * d
                    && payload_bytes == ((t - 1) * d).div_ceil(8)
                    && decoded == trace
                    && again == bytes
                    && dm_encode(&x, &table).unwrap().to_bytes().unwrap() == bytes
            }
            Err(_) => false,
        };
        let mut corrupted = bytes.clone();
        let i = rng.gen_range(0..corrupted.len());
        corrupted[i] ^= 1 << rng.gen_range(0..8);
        let crc_catches = FeatureBitstream::from_bytes(&corrupted).is_err();
        if !ok || !crc_catches {
            failures.push(case);
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!(
            "1000 random matrices: round trip, re-encode, (T-1)*D payload bits and CRC checks; failures {:?}",
            &failures[..failures.len().min(5)]
        ),
    }
}

fn criterion_8() -> Outcome {
    let payload = bitrate(8, 0.080, false, 0).unwrap();
    Outcome { pass: payload == 100.0, detail: format!("bitrate(D=8, 80 ms) = {payload} bit/s payload") }
}

fn criterion_9(shared: &Shared) -> Outcome {
    let parts = shared.parts();
    let specs = [
        linear(FeatureSource::Cl, Target::LongAttr),
        ProbeSpec { quantized: true, ..linear(FeatureSource::Cl, Target::LongAttr) },
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for d in [8, 16, 32] {
        let mut good = 0;
        let mut diffs = Vec::new();
        for (i, &seed) in SEEDS.iter().enumerate() {
            let trained;
            let model = if d == 16 {
                &shared.cognitive16[i].model
            } else {
                trained = train_run(&shared.corpus, Variant::Cognitive, d, seed);
                &trained.model
            };
            let a = probe_accs(model, &parts, &specs, seed);
            good += ((a[0] - a[1]).abs() <= 0.10) as usize;
            diffs.push(format!("{:.3}->{:.3}", a[0], a[1]));
        }
        pass &= good >= 2;
        lines.push(format!("D_c={d}: {good}/3 within 10pp [{}]", diffs.join(" ")));
    }
    Outcome { pass, detail: format!("c_l long-attr probe raw->quantized: {}", lines.join("; ")) }
}

fn criterion_10(shared: &Shared) -> Outcome {
    let parts = shared.parts();
    let train: Vec<_> = parts.train.iter().take(200).map(|w| &w.window).collect();
    let val: Vec<_> = parts.val.iter().take(16).map(|w| &w.window).collect();
    let cfg = TrainConfig { n_updates: 20, checkpoint_every: 10, eval_every: 10, ..desk_train(9) };
    let run = |dir: &std::path::Path| {
        let state = init_state::<f32>(&desk_model(Variant::Cognitive, 16), &cfg).unwrap();
        fit(&cfg, state, &train, &val, Some(dir)).unwrap();
        let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        files.iter().map(|p| (p.file_name().unwrap().to_owned(), std::fs::read(p).unwrap())).collect::<Vec<_>>()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (fa, fb) = (run(a.path()), run(b.path()));
    let names: Vec<_> = fa.iter().map(|(n, _)| n.to_string_lossy().into_owned()).collect();
    Outcome { pass: fa == fb && fa.len() == 4, detail: format!("two runs, byte-identical files: {}", names.join(", ")) }
}

fn main() {
    // single-threaded mode for the reproducibility criteria
    let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    let started = Instant::now();
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n: usize, name: &'static str, o: Outcome| {
        println!("{} criterion {n} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    report(1, "shape exactness", criterion_1());
    report(2, "gradient correctness", criterion_2());
    report(7, "quantizer exactness", criterion_7());
    report(8, "bitrate arithmetic", criterion_8());

    eprintln!("    generating corpus and training {} runs of {UPDATES} updates", 2 * SEEDS.len());
    let corpus = synth_generate(&SynthConfig { n_windows: 2000, n_long_classes: 4, n_short_classes: 8, ..SynthConfig::default() })
        .expect("corpus");
    assert_eq!(split_by_utterance(corpus.len(), 0).train.len(), 1400);
    let cognitive16 = SEEDS.iter().map(|&s| train_run(&corpus, Variant::Cognitive, 16, s)).collect();
    let baseline16 = SEEDS.iter().map(|&s| train_run(&corpus, Variant::CpcBaseline, 16, s)).collect();
    let shared = Shared { corpus, cognitive16, baseline16 };
    report(3, "untrained-loss calibration", criterion_3(&shared));
    report(4, "learning signal", criterion_4(&shared));
    report(5, "hierarchy separation", criterion_5(&shared));
    report(6, "top-down benefit", criterion_6(&shared));
    report(9, "quantization robustness", criterion_9(&shared));
    report(10, "reproducibility", criterion_10(&shared));

    results.sort_by_key(|r| r.0);
    let failed: Vec<_> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed in {:.0} s{}",
        results.len() - failed.len(),
        results.len(),
        started.elapsed().as_secs_f64(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
