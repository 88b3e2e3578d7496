//! The two-stage network: short encoder, long encoder, one GRU context per
//! stage, the top-down combine `g`, and per-step linear prediction heads.
//!
//! Inference helpers ([`encode_short`], [`encode_long`], [`contextualize`],
//! [`top_down_combine`]) run on plain tensors. Training goes through
//! [`Model::forward`], which records the same computation on a [`Tape`] for
//! a whole batch.

mod checkpoint;
mod config;

pub use checkpoint::{Container, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, TopDownAlignment, Variant};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::AudioWindow;
use crate::error::{Error, Result};
use crate::numerics::{conv1d, gru_sequence, ops, uniform_fan_in, GruParams, Real, Tape, Tensor, Var};

/// Time-major `[T, D]` frames on a grid of `hop` input samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence<S = f32> {
    pub frames: Tensor<S>,
    pub hop: usize,
}

pub type LatentSequence<S = f32> = FrameSequence<S>;
pub type ContextSequence<S = f32> = FrameSequence<S>;

impl<S: Real> FrameSequence<S> {
    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.last_dim()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Short,
    Long,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub value: Tensor<S>,
}

#[derive(Clone, Debug)]
struct Layout {
    short: Vec<(usize, usize)>,
    long: Vec<(usize, usize)>,
    gru_s: [usize; 3],
    gru_l: Option<[usize; 3]>,
    heads_s: usize,
    heads_l: Option<usize>,
}

/// Parameter names, shapes and fan-ins in storage order.
fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, usize)> {
    let c = cfg.enc_channels;
    let d = cfg.context_dim;
    let k = cfg.pred_steps;
    let mut specs = Vec::new();
    let mut c_in = 1;
    for (i, &f) in cfg.short_filters.iter().enumerate() {
        specs.push((format!("short.{i}.weight"), vec![c, c_in, f], c_in * f));
        specs.push((format!("short.{i}.bias"), vec![c], 0));
        c_in = c;
    }
    if cfg.is_cognitive() {
        for (i, &f) in cfg.long_filters.iter().enumerate() {
            specs.push((format!("long.{i}.weight"), vec![c, c, f], c * f));
            specs.push((format!("long.{i}.bias"), vec![c], 0));
        }
    }
    let mut gru = |stage: &str| {
        specs.push((format!("gru_{stage}.w_ih"), vec![3 * d, c], c));
        specs.push((format!("gru_{stage}.w_hh"), vec![3 * d, d], d));
        specs.push((format!("gru_{stage}.bias"), vec![3 * d], 0));
    };
    gru("s");
    if cfg.is_cognitive() {
        gru("l");
    }
    let dg = cfg.predictor_dim();
    specs.push(("heads_s".into(), vec![k, c, dg], dg));
    if cfg.is_cognitive() {
        specs.push(("heads_l".into(), vec![k, c, d], d));
    }
    specs
}

fn layout(cfg: &ModelConfig) -> Layout {
    let mut next = 0;
    let mut take = || {
        next += 1;
        next - 1
    };
    let short = cfg.short_filters.iter().map(|_| (take(), take())).collect();
    let long = if cfg.is_cognitive() { cfg.long_filters.iter().map(|_| (take(), take())).collect() } else { Vec::new() };
    let gru_s = [take(), take(), take()];
    let gru_l = cfg.is_cognitive().then(|| [take(), take(), take()]);
    let heads_s = take();
    let heads_l = cfg.is_cognitive().then(&mut take);
    Layout { short, long, gru_s, gru_l, heads_s, heads_l }
}

#[derive(Clone, Debug)]
pub struct Model<S = f32> {
    cfg: ModelConfig,
    params: Vec<Param<S>>,
    layout: Layout,
}

impl<S: Real> PartialEq for Model<S> {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.params == other.params
    }
}

/// Parameters bound to a tape for one forward pass.
pub struct Bound {
    pub vars: Vec<Var>,
}

/// Taped outputs of a batched forward pass. Sequences are `[B, T, D]`.
pub struct Forward {
    pub batch: usize,
    pub z_s: Var,
    pub c_s: Var,
    pub z_l: Option<Var>,
    pub c_l: Option<Var>,
    /// Lower-stage predictor input, `[B, T_s, D_g]`.
    pub g: Var,
}

impl<S: Real> Model<S> {
    /// Allocates all parameters: weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// biases zero.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = param_specs(&cfg)
            .into_iter()
            .map(|(name, shape, fan_in)| {
                let value = if fan_in == 0 { Tensor::zeros(shape) } else { uniform_fan_in(&shape, fan_in, &mut rng) };
                Param { name, value }
            })
            .collect();
        let layout = layout(&cfg);
        Ok(Self { cfg, params, layout })
    }

    /// Rebuilds a model from named tensors, checking names and shapes.
    pub fn from_params(cfg: ModelConfig, params: Vec<Param<S>>) -> Result<Self> {
        cfg.validate()?;
        let specs = param_specs(&cfg);
        if specs.len() != params.len() {
            return Err(Error::Corrupt(format!("expected {} parameters, found {}", specs.len(), params.len())));
        }
        for ((name, shape, _), p) in specs.iter().zip(&params) {
            if name != &p.name || shape.as_slice() != p.value.shape() {
                return Err(Error::Corrupt(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        let layout = layout(&cfg);
        Ok(Self { cfg, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<S>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn cast<T: Real>(&self) -> Model<T> {
        Model {
            cfg: self.cfg.clone(),
            params: self.params.iter().map(|p| Param { name: p.name.clone(), value: p.value.cast() }).collect(),
            layout: self.layout.clone(),
        }
    }

    fn value(&self, i: usize) -> &Tensor<S> {
        &self.params[i].value
    }

    fn gru_params(&self, idx: [usize; 3]) -> GruParams<S> {
        GruParams {
            w_ih: self.value(idx[0]).clone(),
            w_hh: self.value(idx[1]).clone(),
            bias: self.value(idx[2]).clone(),
        }
    }

    /// Number of prediction heads in a stage.
    pub fn head_count(&self, stage: Stage) -> usize {
        match stage {
            Stage::Short => self.value(self.layout.heads_s).shape()[0],
            Stage::Long => self.layout.heads_l.map_or(0, |i| self.value(i).shape()[0]),
        }
    }

    /// Prediction matrix `W(k)` (`[enc_channels, D]`) for `k` in `1..=K`.
    pub fn head(&self, stage: Stage, k: usize) -> Option<Tensor<S>> {
        let idx = match stage {
            Stage::Short => self.layout.heads_s,
            Stage::Long => self.layout.heads_l?,
        };
        let t = self.value(idx);
        let (kk, c, d) = (t.shape()[0], t.shape()[1], t.shape()[2]);
        if k == 0 || k > kk {
            return None;
        }
        Tensor::new([c, d], t.data()[(k - 1) * c * d..k * c * d].to_vec()).ok()
    }

    /// Binds every parameter as a leaf; `trainable` controls whether
    /// gradients are collected for them.
    pub fn bind(&self, tape: &Tape<S>, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { tape.param(p.value.clone()) } else { tape.constant(p.value.clone()) })
            .collect();
        Bound { vars }
    }

    /// Records the forward pass for `x`, shaped `[B, 1, W]`.
    pub fn forward(&self, tape: &Tape<S>, bound: &Bound, x: Var) -> Result<Forward> {
        let xs = tape.shape(x);
        if xs.len() != 3 || xs[1] != 1 || xs[2] != self.cfg.window_len {
            return Err(Error::shape(format!(
                "forward expects [B, 1, {}] input, got {xs:?}",
                self.cfg.window_len
            )));
        }
        let batch = xs[0];
        let v = &bound.vars;
        let mut h = x;
        for (&(w, b), &s) in self.layout.short.iter().zip(&self.cfg.short_strides) {
            h = tape.relu(tape.conv1d(h, v[w], v[b], s)?)?;
        }
        let zs_cm = h;
        let z_s = tape.transpose(zs_cm)?;
        let d = self.cfg.context_dim;
        let h0 = tape.constant(Tensor::zeros([d]));
        let [a, bb, c] = self.layout.gru_s;
        let c_s = tape.gru(z_s, v[a], v[bb], v[c], h0)?;

        let Some([la, lb, lc]) = self.layout.gru_l else {
            return Ok(Forward { batch, z_s, c_s, z_l: None, c_l: None, g: c_s });
        };
        let mut h = if self.cfg.detach_bottom_up { tape.detach(zs_cm) } else { zs_cm };
        for (&(w, b), &s) in self.layout.long.iter().zip(&self.cfg.long_strides) {
            h = tape.relu(tape.conv1d(h, v[w], v[b], s)?)?;
        }
        let z_l = tape.transpose(h)?;
        let c_l = tape.gru(z_l, v[la], v[lb], v[lc], h0)?;
        let top = if self.cfg.detach_top_down { tape.detach(c_l) } else { c_l };
        let top = match self.cfg.top_down {
            TopDownAlignment::Repeat => top,
            TopDownAlignment::Lagged => tape.shift_rows(top)?,
        };
        let rep = tape.repeat_rows(top, self.cfg.frame_ratio())?;
        let g = tape.concat_last(c_s, rep)?;
        Ok(Forward { batch, z_s, c_s, z_l: Some(z_l), c_l: Some(c_l), g })
    }

    /// Predictions `W(k) g_t` for every frame and step, as
    /// `[B * T * K, enc_channels]` with row `(b * T + t) * K + (k - 1)`.
    pub fn predictions(&self, tape: &Tape<S>, bound: &Bound, input: Var, stage: Stage) -> Result<Var> {
        let idx = match stage {
            Stage::Short => self.layout.heads_s,
            Stage::Long => self
                .layout
                .heads_l
                .ok_or_else(|| Error::invalid("baseline model has no upper-stage heads"))?,
        };
        let hs = self.value(idx).shape().to_vec();
        let w = tape.reshape(bound.vars[idx], [hs[0] * hs[1], hs[2]])?;
        let p = tape.affine(input, w, None)?;
        let rows = tape.value(p).numel() / hs[1];
        tape.reshape(p, [rows, hs[1]])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        Container::from_model(self, None).write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Container::read(path)?.model()
    }
}

fn conv_stack<S: Real>(model: &Model<S>, x: Tensor<S>, layers: &[(usize, usize)], strides: &[usize]) -> Result<Tensor<S>> {
    let mut h = x;
    for (&(w, b), &s) in layers.iter().zip(strides) {
        h = ops::relu(&conv1d(&h, model.value(w), model.value(b), s)?);
    }
    Ok(h)
}

/// `z_s`: one latent per short frame.
pub fn encode_short<S: Real>(model: &Model<S>, x: &AudioWindow) -> Result<LatentSequence<S>> {
    let cfg = model.config();
    if x.len() != cfg.window_len {
        return Err(Error::shape(format!(
            "window has {} samples, model expects {}",
            x.len(),
            cfg.window_len
        )));
    }
    let input = Tensor::new([1, x.len()], x.samples.iter().map(|&v| S::of(v as f64)).collect())?;
    let h = conv_stack(model, input, &model.layout.short, &cfg.short_strides)?;
    Ok(FrameSequence { frames: ops::transpose(&h)?, hop: cfg.short_hop() })
}

/// `z_l`: one latent per long frame, computed from `z_s`.
pub fn encode_long<S: Real>(model: &Model<S>, z_s: &LatentSequence<S>) -> Result<LatentSequence<S>> {
    let cfg = model.config();
    if !cfg.is_cognitive() {
        return Err(Error::invalid("baseline model has no long encoder"));
    }
    if z_s.hop != cfg.short_hop() || z_s.dim() != cfg.enc_channels {
        return Err(Error::shape("encode_long expects short-stage latents"));
    }
    if z_s.len() < cfg.frame_ratio() {
        return Err(Error::shape(format!(
            "need at least {} short frames for one long frame, got {}",
            cfg.frame_ratio(),
            z_s.len()
        )));
    }
    let h = conv_stack(model, ops::transpose(&z_s.frames)?, &model.layout.long, &cfg.long_strides)?;
    Ok(FrameSequence { frames: ops::transpose(&h)?, hop: cfg.long_hop() })
}

/// Runs the stage's GRU from a zero state; `c[t]` has consumed `z[0..=t]`.
pub fn contextualize<S: Real>(model: &Model<S>, z: &LatentSequence<S>, stage: Stage) -> Result<ContextSequence<S>> {
    let cfg = model.config();
    let (idx, hop) = match stage {
        Stage::Short => (model.layout.gru_s, cfg.short_hop()),
        Stage::Long => (
            model.layout.gru_l.ok_or_else(|| Error::invalid("baseline model has no long context"))?,
            cfg.long_hop(),
        ),
    };
    if z.hop != hop {
        return Err(Error::shape(format!("{stage:?} stage expects hop {hop}, latents have hop {}", z.hop)));
    }
    let h0 = Tensor::zeros([cfg.context_dim]);
    let frames = gru_sequence(&z.frames, &model.gru_params(idx), &h0)?;
    Ok(FrameSequence { frames, hop })
}

/// `g[t] = concat(c_s[t], c_l[t / ratio])`.
pub fn top_down_combine<S: Real>(c_s: &Tensor<S>, c_l: &Tensor<S>, ratio: usize) -> Result<Tensor<S>> {
    if c_s.ndim() != 2 || c_l.ndim() != 2 || ratio == 0 {
        return Err(Error::shape("top_down_combine expects two matrices and ratio >= 1"));
    }
    let (ts, tl) = (c_s.shape()[0], c_l.shape()[0]);
    if ts != ratio * tl {
        return Err(Error::shape(format!(
            "{ts} short frames are not {ratio} x {tl} long frames"
        )));
    }
    ops::concat_last(c_s, &ops::repeat_rows(c_l, ratio)?)
}

/// All representations of one window.
#[derive(Clone, Debug)]
pub struct WindowFeatures<S = f32> {
    pub z_s: LatentSequence<S>,
    pub c_s: ContextSequence<S>,
    pub z_l: Option<LatentSequence<S>>,
    pub c_l: Option<ContextSequence<S>>,
}

pub fn window_features<S: Real>(model: &Model<S>, x: &AudioWindow) -> Result<WindowFeatures<S>> {
    let z_s = encode_short(model, x)?;
    let c_s = contextualize(model, &z_s, Stage::Short)?;
    if !model.config().is_cognitive() {
        return Ok(WindowFeatures { z_s, c_s, z_l: None, c_l: None });
    }
    let z_l = encode_long(model, &z_s)?;
    let c_l = contextualize(model, &z_l, Stage::Long)?;
    Ok(WindowFeatures { z_s, c_s, z_l: Some(z_l), c_l: Some(c_l) })
}

/// Feature extraction over many windows, parallel across windows with
/// results in input order.
pub fn batch_features<S: Real>(model: &Model<S>, windows: &[&AudioWindow]) -> Result<Vec<WindowFeatures<S>>> {
    windows.par_iter().map(|w| window_features(model, w)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(variant: Variant) -> ModelConfig {
        ModelConfig {
            window_len: 2560,
            enc_channels: 6,
            context_dim: 3,
            pred_steps: 2,
            variant,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn head_shapes_follow_predictor_width() {
        let cfg = ModelConfig { enc_channels: 512, context_dim: 8, ..tiny(Variant::Cognitive) };
        let m = Model::<f32>::new(cfg, 0).unwrap();
        assert_eq!(m.head_count(Stage::Short), 2);
        assert_eq!(m.head(Stage::Short, 1).unwrap().shape(), &[512, 16]);
        assert_eq!(m.head(Stage::Long, 2).unwrap().shape(), &[512, 8]);
        assert!(m.head(Stage::Long, 3).is_none());
    }

    #[test]
    fn baseline_has_no_upper_stage() {
        let m = Model::<f32>::new(tiny(Variant::CpcBaseline), 0).unwrap();
        assert!(m.param("long.0.weight").is_none());
        assert!(m.param("gru_l.w_ih").is_none());
        assert_eq!(m.head_count(Stage::Long), 0);
        assert_eq!(m.head(Stage::Short, 1).unwrap().shape(), &[6, 3]);
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = Model::<f32>::new(tiny(Variant::Cognitive), 7).unwrap();
        let b = Model::<f32>::new(tiny(Variant::Cognitive), 7).unwrap();
        let c = Model::<f32>::new(tiny(Variant::Cognitive), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.param("short.0.bias").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn combine_repeats_long_rows() {
        let c_s = Tensor::<f64>::new([6, 1], vec![0.0; 6]).unwrap();
        let c_l = Tensor::<f64>::new([2, 1], vec![1.0, 2.0]).unwrap();
        let g = top_down_combine(&c_s, &c_l, 3).unwrap();
        assert_eq!(g.shape(), &[6, 2]);
        let long_half: Vec<f64> = (0..6).map(|t| g.row(t)[1]).collect();
        assert_eq!(long_half, vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        assert!(top_down_combine(&Tensor::<f64>::zeros([5, 1]), &c_l, 3).is_err());
        let plain = top_down_combine(&c_l, &c_l, 1).unwrap();
        assert_eq!(plain.data(), &[1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn wrong_window_length_is_rejected() {
        let m = Model::<f32>::new(tiny(Variant::Cognitive), 0).unwrap();
        let x = AudioWindow { samples: vec![0.0; 100], sample_rate: 16000 };
        assert!(encode_short(&m, &x).is_err());
    }
}
