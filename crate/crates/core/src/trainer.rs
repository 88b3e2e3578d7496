//! Minibatch training with Adam, checkpoints and CSV metric logs.

use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::AudioWindow;
use crate::error::{Error, Result};
use crate::model::{Container, Model, ModelConfig};
use crate::numerics::{Real, Tape, Tensor};
use crate::objective::{positive_accuracy_per_step, total_loss, LossConfig, NegativeSampling, NegativeSource, ScoreMatrix};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub n_updates: u64,
    /// Candidates per anchor, `N`: one positive and `N - 1` negatives.
    pub n_candidates: usize,
    pub negatives: NegativeSource,
    /// Negative source of the upper stage; `None` uses `negatives`.
    pub upper_negatives: Option<NegativeSource>,
    pub seed: u64,
    /// Write a checkpoint every this many updates (0: only after the last).
    pub checkpoint_every: u64,
    /// Evaluate on held-out windows every this many updates (0: never).
    pub eval_every: u64,
    pub precision: Precision,
    pub upper_weight: f64,
    /// Clip the global gradient norm to this value.
    pub grad_clip: Option<f64>,
    /// Record real elapsed time in `wall_ms`; off keeps logs reproducible.
    pub log_wall_time: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 2e-4,
            batch_size: 8,
            n_updates: 1000,
            n_candidates: 8,
            negatives: NegativeSource::Mixed,
            upper_negatives: None,
            seed: 0,
            checkpoint_every: 0,
            eval_every: 0,
            precision: Precision::F32,
            upper_weight: 1.0,
            grad_clip: None,
            log_wall_time: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        if self.n_updates == 0 {
            return Err(Error::config("n_updates must be >= 1"));
        }
        if self.n_candidates < 2 {
            return Err(Error::config("n_candidates must be >= 2"));
        }
        if !(self.upper_weight >= 0.0 && self.upper_weight.is_finite()) {
            return Err(Error::config("upper_weight must be >= 0"));
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return Err(Error::config("grad_clip must be > 0"));
            }
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            negatives: NegativeSampling { n_negatives: self.n_candidates - 1, source: self.negatives },
            upper_source: self.upper_negatives,
            upper_weight: self.upper_weight,
        }
    }
}

/// Everything needed to continue training bit-exactly.
#[derive(Clone, Debug)]
pub struct TrainState<S = f32> {
    pub model: Model<S>,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub update: u64,
    pub rng: ChaCha8Rng,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SavedState {
    update: u64,
    rng_seed: String,
    rng_stream: u64,
    rng_word_pos: String,
}

impl<S: Real> TrainState<S> {
    pub fn new(model: Model<S>, seed: u64) -> Self {
        let zeros = |m: &Model<S>| m.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect::<Vec<_>>();
        Self { m: zeros(&model), v: zeros(&model), model, update: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::from_model(&self.model, None);
        let saved = SavedState {
            update: self.update,
            rng_seed: self.rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            rng_stream: self.rng.get_stream(),
            rng_word_pos: self.rng.get_word_pos().to_string(),
        };
        c.train = Some(serde_json::to_value(saved).expect("plain struct serializes"));
        for (prefix, moments) in [("adam.m/", &self.m), ("adam.v/", &self.v)] {
            for (p, t) in self.model.params().iter().zip(moments) {
                c.tensors.push((format!("{prefix}{}", p.name), t.cast()));
            }
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let model: Model<S> = c.model()?;
        let train = c.train.clone().ok_or_else(|| Error::Corrupt("checkpoint has no training state".into()))?;
        let saved: SavedState = serde_json::from_value(train).map_err(|e| Error::Corrupt(format!("training state: {e}")))?;
        let mut seed = [0u8; 32];
        if saved.rng_seed.len() != 64 {
            return Err(Error::Corrupt("rng seed must be 64 hex digits".into()));
        }
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&saved.rng_seed[2 * i..2 * i + 2], 16)
                .map_err(|_| Error::Corrupt("rng seed is not hex".into()))?;
        }
        let word_pos: u128 = saved.rng_word_pos.parse().map_err(|_| Error::Corrupt("rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(saved.rng_stream);
        rng.set_word_pos(word_pos);
        let moments = |prefix: &str| -> Result<Vec<Tensor<S>>> {
            model
                .params()
                .iter()
                .map(|p| {
                    let t = c
                        .tensor(&format!("{prefix}{}", p.name))
                        .ok_or_else(|| Error::Corrupt(format!("missing {prefix}{}", p.name)))?;
                    if t.shape() != p.value.shape() {
                        return Err(Error::Corrupt(format!("{prefix}{} has shape {:?}", p.name, t.shape())));
                    }
                    Ok(t.cast())
                })
                .collect()
        };
        let (m, v) = (moments("adam.m/")?, moments("adam.v/")?);
        Ok(Self { model, m, v, update: saved.update, rng })
    }
}

pub fn save_checkpoint<S: Real>(state: &TrainState<S>, path: impl AsRef<Path>) -> Result<()> {
    state.to_container().write(path)
}

pub fn load_checkpoint<S: Real>(path: impl AsRef<Path>) -> Result<TrainState<S>> {
    TrainState::from_container(&Container::read(path)?)
}

/// Loss and per-step accuracy of one update or one evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct StepMetrics {
    pub update: u64,
    pub loss: f64,
    pub lower: f64,
    pub upper: Option<f64>,
    pub acc_lower: Vec<Option<f64>>,
    pub acc_upper: Vec<Option<f64>>,
    pub wall_ms: u64,
}

impl StepMetrics {
    /// Mean lower-stage accuracy over steps `ks` that have rows.
    pub fn mean_lower_acc(&self, ks: std::ops::RangeInclusive<usize>) -> Option<f64> {
        let v: Vec<f64> = ks.filter_map(|k| self.acc_lower.get(k - 1).copied().flatten()).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

pub fn csv_header(k: usize, with_wall: bool) -> String {
    let mut h = String::from("update,L,L_lower,L_upper");
    for i in 1..=k {
        let _ = write!(h, ",acc_k{i}");
    }
    for i in 1..=k {
        let _ = write!(h, ",upper_acc_k{i}");
    }
    if with_wall {
        h.push_str(",wall_ms");
    }
    h
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl StepMetrics {
    pub fn csv_row(&self, k: usize, with_wall: bool) -> String {
        let mut r = format!("{},{},{},{}", self.update, self.loss, self.lower, cell(self.upper));
        for i in 0..k {
            let _ = write!(r, ",{}", cell(self.acc_lower.get(i).copied().flatten()));
        }
        for i in 0..k {
            let _ = write!(r, ",{}", cell(self.acc_upper.get(i).copied().flatten()));
        }
        if with_wall {
            let _ = write!(r, ",{}", self.wall_ms);
        }
        r
    }
}

pub(crate) fn batch_tensor<S: Real>(windows: &[&AudioWindow], len: usize) -> Result<Tensor<S>> {
    let mut data = Vec::with_capacity(windows.len() * len);
    for w in windows {
        if w.len() != len {
            return Err(Error::shape(format!("window of {} samples, model expects {len}", w.len())));
        }
        data.extend(w.samples.iter().map(|&s| S::of(s as f64)));
    }
    Tensor::new([windows.len(), 1, len], data)
}

fn norm_dump<S: Real>(model: &Model<S>, grads: Option<&[Tensor<S>]>) -> String {
    let mut s = String::new();
    for (i, p) in model.params().iter().enumerate() {
        let _ = write!(s, "\n  {}: |w| = {:.4e}", p.name, p.value.norm());
        if let Some(g) = grads {
            let _ = write!(s, ", |grad| = {:.4e}", g[i].norm());
        }
    }
    s
}

/// One forward/backward pass and Adam update on `batch`.
pub fn train_step<S: Real>(state: &mut TrainState<S>, cfg: &TrainConfig, batch: &[&AudioWindow]) -> Result<StepMetrics> {
    if batch.len() != cfg.batch_size {
        return Err(Error::invalid(format!("batch of {} windows, config says {}", batch.len(), cfg.batch_size)));
    }
    let started = Instant::now();
    let model = &state.model;
    let tape = Tape::<S>::new();
    let bound = model.bind(&tape, true);
    let x = tape.constant(batch_tensor(batch, model.config().window_len)?);
    let fwd = model.forward(&tape, &bound, x)?;
    let out = total_loss(&tape, model, &bound, &fwd, &cfg.loss_config(), &mut state.rng)?;
    let loss = tape.value(out.total).item().as_f64();
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss at update {}; parameter norms:{}", state.update + 1, norm_dump(model, None))));
    }
    let grads = match tape.backward(out.total) {
        Ok(g) => g,
        Err(Error::NonFinite(what)) => {
            return Err(Error::NonFinite(format!(
                "{what} at update {}; parameter norms:{}",
                state.update + 1,
                norm_dump(model, None)
            )))
        }
        Err(e) => return Err(e),
    };
    let mut grads: Vec<Tensor<S>> = bound.vars.iter().map(|&v| grads.wrt(v)).collect();
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient at update {}:{}", state.update + 1, norm_dump(model, Some(&grads)))));
    }
    if let Some(clip) = cfg.grad_clip {
        let total = grads.iter().map(|g| g.norm().powi(2)).sum::<f64>().sqrt();
        if total > clip {
            let f = S::of(clip / total);
            grads.iter_mut().for_each(|g| g.data_mut().iter_mut().for_each(|x| *x *= f));
        }
    }
    let k = model.config().pred_steps;
    let lower = tape.value(out.lower.loss).item().as_f64();
    let upper = out.upper.as_ref().map(|u| tape.value(u.loss).item().as_f64());
    let acc_lower = positive_accuracy_per_step(&out.lower.scores, k);
    let acc_upper = out.upper.as_ref().map(|u| positive_accuracy_per_step(&u.scores, k)).unwrap_or_default();
    drop(tape);

    state.update += 1;
    adam_update(state, &grads, cfg.learning_rate);
    Ok(StepMetrics {
        update: state.update,
        loss,
        lower,
        upper,
        acc_lower,
        acc_upper,
        wall_ms: if cfg.log_wall_time { started.elapsed().as_millis() as u64 } else { 0 },
    })
}

fn adam_update<S: Real>(state: &mut TrainState<S>, grads: &[Tensor<S>], lr: f64) {
    let t = state.update as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let (b1, b2, eps) = (S::of(BETA1), S::of(BETA2), S::of(EPS));
    let (one, lr_s, bc1, bc2) = (S::one(), S::of(lr), S::of(bc1), S::of(bc2));
    for (i, p) in state.model.params_mut().iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            m[j] = b1 * m[j] + (one - b1) * g[j];
            v[j] = b2 * v[j] + (one - b2) * g[j] * g[j];
            let step = lr_s * (m[j] / bc1) / ((v[j] / bc2).sqrt() + eps);
            *w -= step;
        }
    }
}

/// Adam on an arbitrary differentiable function of a single parameter
/// vector; `grad` returns the gradient at the current point.
pub fn adam_minimize(p: &mut [f64], lr: f64, steps: usize, mut grad: impl FnMut(&[f64]) -> Vec<f64>) {
    let (mut m, mut v) = (vec![0.0; p.len()], vec![0.0; p.len()]);
    for t in 1..=steps {
        let g = grad(p);
        let (bc1, bc2) = (1.0 - BETA1.powi(t as i32), 1.0 - BETA2.powi(t as i32));
        for j in 0..p.len() {
            m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
            v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
            p[j] -= lr * (m[j] / bc1) / ((v[j] / bc2).sqrt() + EPS);
        }
    }
}

#[derive(Default)]
struct Tally {
    loss_sum: [f64; 2],
    rows: [usize; 2],
    hits: [Vec<usize>; 2],
    total: [Vec<usize>; 2],
}

impl Tally {
    fn add(&mut self, stage: usize, loss: f64, scores: &ScoreMatrix, k: usize) {
        if self.hits[stage].is_empty() {
            self.hits[stage] = vec![0; k];
            self.total[stage] = vec![0; k];
        }
        self.loss_sum[stage] += loss * scores.rows() as f64;
        self.rows[stage] += scores.rows();
        for r in 0..scores.rows() {
            let step = scores.step(r);
            let row = scores.row(r);
            self.total[stage][step - 1] += 1;
            if row[1..].iter().all(|&v| row[0] > v) {
                self.hits[stage][step - 1] += 1;
            }
        }
    }

    fn acc(&self, stage: usize) -> Vec<Option<f64>> {
        self.hits[stage]
            .iter()
            .zip(&self.total[stage])
            .map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64))
            .collect()
    }
}

/// Loss and accuracy on held-out windows with negatives drawn from a fixed
/// seed, so repeated evaluations of one model agree.
pub fn evaluate<S: Real>(model: &Model<S>, windows: &[&AudioWindow], cfg: &TrainConfig, seed: u64) -> Result<StepMetrics> {
    if windows.is_empty() {
        return Err(Error::invalid("no evaluation windows"));
    }
    let k = model.config().pred_steps;
    let loss_cfg = cfg.loss_config();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::default();
    for chunk in windows.chunks(cfg.batch_size) {
        let tape = Tape::<S>::new();
        let bound = model.bind(&tape, false);
        let x = tape.constant(batch_tensor(chunk, model.config().window_len)?);
        let fwd = model.forward(&tape, &bound, x)?;
        let out = total_loss(&tape, model, &bound, &fwd, &loss_cfg, &mut rng)?;
        tally.add(0, tape.value(out.lower.loss).item().as_f64(), &out.lower.scores, k);
        if let Some(u) = &out.upper {
            tally.add(1, tape.value(u.loss).item().as_f64(), &u.scores, k);
        }
    }
    let lower = tally.loss_sum[0] / tally.rows[0] as f64;
    let upper = (tally.rows[1] > 0).then(|| tally.loss_sum[1] / tally.rows[1] as f64);
    Ok(StepMetrics {
        update: 0,
        loss: lower + cfg.upper_weight * upper.unwrap_or(0.0),
        lower,
        upper,
        acc_lower: tally.acc(0),
        acc_upper: if upper.is_some() { tally.acc(1) } else { Vec::new() },
        wall_ms: 0,
    })
}

/// Where [`fit`] writes its files.
pub const METRICS_FILE: &str = "metrics.csv";
pub const EVAL_FILE: &str = "eval.csv";

pub fn checkpoint_name(update: u64) -> String {
    format!("checkpoint_{update:08}.hcck")
}

pub struct FitOutcome<S> {
    pub state: TrainState<S>,
    pub metrics: Vec<StepMetrics>,
    pub evals: Vec<StepMetrics>,
    pub checkpoints: Vec<PathBuf>,
}

fn open_log(path: &Path, header: &str, resume: bool) -> Result<File> {
    if resume && path.exists() {
        return Ok(OpenOptions::new().append(true).open(path)?);
    }
    let mut f = File::create(path)?;
    writeln!(f, "{header}")?;
    Ok(f)
}

/// Runs updates until `cfg.n_updates`, continuing from `state.update`.
///
/// Batches are drawn uniformly with replacement from `train` using the
/// state's RNG. With `out` set, metrics rows are appended to `metrics.csv`
/// (and `eval.csv`), and checkpoints written every `checkpoint_every`
/// updates and after the last one.
pub fn fit<S: Real>(
    cfg: &TrainConfig,
    mut state: TrainState<S>,
    train: &[&AudioWindow],
    eval: &[&AudioWindow],
    out: Option<&Path>,
) -> Result<FitOutcome<S>> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if cfg.eval_every > 0 && eval.is_empty() {
        return Err(Error::invalid("eval_every is set but there are no evaluation windows"));
    }
    let k = state.model.config().pred_steps;
    let resume = state.update > 0;
    let mut logs = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let metrics = open_log(&dir.join(METRICS_FILE), &csv_header(k, true), resume)?;
            let evals = if cfg.eval_every > 0 {
                Some(open_log(&dir.join(EVAL_FILE), &csv_header(k, false), resume)?)
            } else {
                None
            };
            Some((metrics, evals))
        }
        None => None,
    };
    let mut outcome = FitOutcome { state: state.clone(), metrics: Vec::new(), evals: Vec::new(), checkpoints: Vec::new() };
    while state.update < cfg.n_updates {
        let batch: Vec<&AudioWindow> = (0..cfg.batch_size).map(|_| train[state.rng.gen_range(0..train.len())]).collect();
        let row = train_step(&mut state, cfg, &batch)?;
        if let Some((f, _)) = logs.as_mut() {
            writeln!(f, "{}", row.csv_row(k, true))?;
        }
        outcome.metrics.push(row);
        let u = state.update;
        if cfg.eval_every > 0 && u % cfg.eval_every == 0 {
            let mut e = evaluate(&state.model, eval, cfg, cfg.seed ^ 0xe7a1)?;
            e.update = u;
            if let Some((_, Some(f))) = logs.as_mut() {
                writeln!(f, "{}", e.csv_row(k, false))?;
            }
            outcome.evals.push(e);
        }
        let due = (cfg.checkpoint_every > 0 && u % cfg.checkpoint_every == 0) || u == cfg.n_updates;
        if let (true, Some(dir)) = (due, out) {
            let path = dir.join(checkpoint_name(u));
            save_checkpoint(&state, &path)?;
            outcome.checkpoints.push(path);
        }
    }
    outcome.state = state;
    Ok(outcome)
}

/// Builds a fresh model and state for `cfg` with the config's seed.
pub fn init_state<S: Real>(model_cfg: &ModelConfig, cfg: &TrainConfig) -> Result<TrainState<S>> {
    Ok(TrainState::new(Model::new(model_cfg.clone(), cfg.seed)?, cfg.seed))
}
