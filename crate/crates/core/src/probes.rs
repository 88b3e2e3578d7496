//! Frozen-feature attribute classification: multinomial logistic
//! regression and a one-hidden-layer variant.
//!
//! Probes are fit full batch on standardized features (mean and scale from
//! the training rows) with Adam steps, keeping the parameters with the best
//! validation loss and stopping after `patience` epochs without
//! improvement.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{align_labels, LabeledWindow};
use crate::error::{Error, Result};
use crate::model::{batch_features, top_down_combine, Model, WindowFeatures};
use crate::numerics::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSource {
    #[serde(rename = "c_s")]
    Cs,
    #[serde(rename = "c_l")]
    Cl,
    #[serde(rename = "c_s&c_l")]
    CsCl,
    #[serde(rename = "z_s")]
    Zs,
    #[serde(rename = "z_l")]
    Zl,
}

impl FeatureSource {
    pub const ALL: [FeatureSource; 5] = [Self::Cs, Self::Cl, Self::CsCl, Self::Zs, Self::Zl];

    pub fn name(self) -> &'static str {
        match self {
            Self::Cs => "c_s",
            Self::Cl => "c_l",
            Self::CsCl => "c_s&c_l",
            Self::Zs => "z_s",
            Self::Zl => "z_l",
        }
    }

    /// Whether the source lives on the long frame grid.
    pub fn is_long(self) -> bool {
        matches!(self, Self::Cl | Self::Zl)
    }

    /// Context features can be Δ-modulated; latents are not.
    pub fn quantizable(self) -> bool {
        matches!(self, Self::Cs | Self::Cl | Self::CsCl)
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "c_s" => Ok(Self::Cs),
            "c_l" => Ok(Self::Cl),
            "c_s&c_l" | "both" => Ok(Self::CsCl),
            "z_s" => Ok(Self::Zs),
            "z_l" => Ok(Self::Zl),
            _ => Err(Error::invalid(format!("unknown feature source {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    LongAttr,
    LongAttr2,
    ShortAttr,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Self::LongAttr => "long_attr",
            Self::LongAttr2 => "long_attr2",
            Self::ShortAttr => "short_attr",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    Linear,
    #[serde(alias = "mlp-1-hidden")]
    Mlp,
}

impl ProbeKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Mlp => "mlp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    PerFrame,
    MeanUtterance,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Self::PerFrame => "per-frame",
            Self::MeanUtterance => "mean-utterance",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub source: FeatureSource,
    pub target: Target,
    pub kind: ProbeKind,
    #[serde(default)]
    pub pooling: Pooling,
    /// Probe Δ-modulation decoded features instead of the raw ones.
    #[serde(default)]
    pub quantized: bool,
}

impl ProbeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.target == Target::ShortAttr && self.pooling != Pooling::PerFrame {
            return Err(Error::config("probes: short_attr target requires per-frame pooling"));
        }
        if self.quantized && !self.source.quantizable() {
            return Err(Error::config(format!("probes: source {} cannot be quantized", self.source)));
        }
        Ok(())
    }

    /// Name used in report CSVs, e.g. `c_l` or `c_l:dm`.
    pub fn source_label(&self) -> String {
        if self.quantized {
            format!("{}:dm", self.source)
        } else {
            self.source.to_string()
        }
    }
}

/// Row-major feature matrix with one label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub dim: usize,
    pub data: Vec<f64>,
    pub labels: Vec<u32>,
    /// Window id each row came from.
    pub groups: Vec<usize>,
    /// Rows per second of audio for per-frame tables.
    pub frame_rate: f64,
}

impl FeatureTable {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }

    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }
}

/// The `[T, D]` frames of `source` and their hop in samples.
pub fn source_frames<S: Real>(f: &WindowFeatures<S>, source: FeatureSource, ratio: usize) -> Result<(Tensor<S>, usize)> {
    let missing = || Error::invalid(format!("source {source} needs the upper stage"));
    Ok(match source {
        FeatureSource::Cs => (f.c_s.frames.clone(), f.c_s.hop),
        FeatureSource::Zs => (f.z_s.frames.clone(), f.z_s.hop),
        FeatureSource::Cl => {
            let c = f.c_l.as_ref().ok_or_else(missing)?;
            (c.frames.clone(), c.hop)
        }
        FeatureSource::Zl => {
            let z = f.z_l.as_ref().ok_or_else(missing)?;
            (z.frames.clone(), z.hop)
        }
        FeatureSource::CsCl => {
            let c_l = f.c_l.as_ref().ok_or_else(missing)?;
            (top_down_combine(&f.c_s.frames, &c_l.frames, ratio)?, f.c_s.hop)
        }
    })
}

/// Builds a table from per-window `[T, D]` frame matrices with hop `hop`.
pub fn build_table<S: Real>(
    frames: &[Tensor<S>],
    hop: usize,
    windows: &[&LabeledWindow],
    target: Target,
    pooling: Pooling,
) -> Result<FeatureTable> {
    if frames.len() != windows.len() {
        return Err(Error::shape(format!("{} feature matrices for {} windows", frames.len(), windows.len())));
    }
    if target == Target::ShortAttr && pooling != Pooling::PerFrame {
        return Err(Error::config("short_attr target requires per-frame pooling"));
    }
    let dim = frames.first().map_or(0, |f| f.last_dim());
    let mut table = FeatureTable { dim, data: Vec::new(), labels: Vec::new(), groups: Vec::new(), frame_rate: 0.0 };
    for (m, w) in frames.iter().zip(windows) {
        let t = m.shape()[0];
        if m.last_dim() != dim {
            return Err(Error::shape("feature dimension differs between windows"));
        }
        let labels = match target {
            Target::LongAttr => vec![w.long_attr; t],
            Target::LongAttr2 => vec![w.long_attr2; t],
            Target::ShortAttr => align_labels(&w.short_labels(), hop)?,
        };
        if labels.len() != t {
            return Err(Error::shape(format!(
                "grid mismatch: {t} feature frames but {} label frames at hop {hop}",
                labels.len()
            )));
        }
        match pooling {
            Pooling::PerFrame => {
                table.data.extend(m.data().iter().map(|v| v.as_f64()));
                table.labels.extend(labels);
                table.groups.extend(std::iter::repeat(w.id).take(t));
            }
            Pooling::MeanUtterance => {
                let mut mean = vec![0.0; dim];
                for r in 0..t {
                    for (acc, v) in mean.iter_mut().zip(m.row(r)) {
                        *acc += v.as_f64();
                    }
                }
                table.data.extend(mean.iter().map(|v| v / t as f64));
                table.labels.push(labels[0]);
                table.groups.push(w.id);
            }
        }
        if let Some(first) = windows.first() {
            table.frame_rate = match pooling {
                Pooling::PerFrame => first.window.sample_rate as f64 / hop as f64,
                Pooling::MeanUtterance => first.window.sample_rate as f64 / first.window.len() as f64,
            };
        }
    }
    Ok(table)
}

/// Runs the model over `windows` and tabulates `source` against `target`.
pub fn extract_features<S: Real>(
    model: &Model<S>,
    windows: &[&LabeledWindow],
    source: FeatureSource,
    target: Target,
    pooling: Pooling,
) -> Result<FeatureTable> {
    let audio: Vec<_> = windows.iter().map(|w| &w.window).collect();
    let feats = batch_features(model, &audio)?;
    table_from_features(&feats, model.config().frame_ratio(), windows, source, target, pooling)
}

pub fn table_from_features<S: Real>(
    feats: &[WindowFeatures<S>],
    ratio: usize,
    windows: &[&LabeledWindow],
    source: FeatureSource,
    target: Target,
    pooling: Pooling,
) -> Result<FeatureTable> {
    let mut mats = Vec::with_capacity(feats.len());
    let mut hop = 0;
    for f in feats {
        let (m, h) = source_frames(f, source, ratio)?;
        hop = h;
        mats.push(m);
    }
    build_table(&mats, hop, windows, target, pooling)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeOptions {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub hidden: usize,
    pub weight_decay: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self { learning_rate: 0.05, max_epochs: 300, patience: 30, hidden: 256, weight_decay: 0.0 }
    }
}

/// A fitted probe including its input standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub kind: ProbeKind,
    pub n_classes: usize,
    pub dim: usize,
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// Linear: `[w (C x D), b (C)]`; MLP: `[w1 (H x D), b1 (H), w2 (C x H), b2 (C)]`.
    params: Vec<Vec<f64>>,
    hidden: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeFit {
    pub probe: Probe,
    pub epochs: usize,
    /// False when `max_epochs` ran out before early stopping triggered.
    pub converged: bool,
    pub train_loss: f64,
}

const CHUNK: usize = 4096;

impl Probe {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.scale)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    /// Logits for one standardized row; fills `hidden` for MLPs.
    fn logits(&self, x: &[f64], hidden: &mut Vec<f64>) -> Vec<f64> {
        let affine = |w: &[f64], b: &[f64], x: &[f64], out: usize| -> Vec<f64> {
            (0..out).map(|o| b[o] + w[o * x.len()..(o + 1) * x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).collect()
        };
        match self.kind {
            ProbeKind::Linear => affine(&self.params[0], &self.params[1], x, self.n_classes),
            ProbeKind::Mlp => {
                *hidden = affine(&self.params[0], &self.params[1], x, self.hidden);
                hidden.iter_mut().for_each(|h| *h = h.max(0.0));
                affine(&self.params[2], &self.params[3], hidden, self.n_classes)
            }
        }
    }

    /// Predicted class per row (ties go to the lower class id).
    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<u32>> {
        if table.dim != self.dim {
            return Err(Error::shape(format!("probe expects {} features, table has {}", self.dim, table.dim)));
        }
        Ok((0..table.rows())
            .into_par_iter()
            .map(|r| {
                let mut h = Vec::new();
                let z = self.logits(&self.standardize(table.row(r)), &mut h);
                let mut best = 0;
                for (c, &v) in z.iter().enumerate() {
                    if v > z[best] {
                        best = c;
                    }
                }
                best as u32
            })
            .collect())
    }

    /// Mean cross entropy and its gradient over `rows`.
    fn loss_grad(&self, xs: &[f64], labels: &[u32], want_grad: bool) -> (f64, Vec<Vec<f64>>) {
        let d = self.dim;
        let n = labels.len();
        let zero = || self.params.iter().map(|p| vec![0.0; p.len()]).collect::<Vec<_>>();
        let partials: Vec<(f64, Vec<Vec<f64>>)> = (0..n.div_ceil(CHUNK))
            .into_par_iter()
            .map(|ci| {
                let mut g = if want_grad { zero() } else { Vec::new() };
                let mut loss = 0.0;
                let mut h = Vec::new();
                for r in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                    let x = &xs[r * d..(r + 1) * d];
                    let z = self.logits(x, &mut h);
                    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let se: f64 = z.iter().map(|v| (v - m).exp()).sum();
                    let y = labels[r] as usize;
                    loss += m + se.ln() - z[y];
                    if !want_grad {
                        continue;
                    }
                    let dz: Vec<f64> = z.iter().enumerate().map(|(c, v)| (v - m).exp() / se - f64::from(c == y)).collect();
                    let (wi, bi, inp) = match self.kind {
                        ProbeKind::Linear => (0, 1, x),
                        ProbeKind::Mlp => (2, 3, h.as_slice()),
                    };
                    let k = inp.len();
                    for (c, &dc) in dz.iter().enumerate() {
                        g[bi][c] += dc;
                        for (gw, &xi) in g[wi][c * k..(c + 1) * k].iter_mut().zip(inp) {
                            *gw += dc * xi;
                        }
                    }
                    if self.kind == ProbeKind::Mlp {
                        let w2 = &self.params[2];
                        for j in 0..self.hidden {
                            if h[j] <= 0.0 {
                                continue;
                            }
                            let dh: f64 = dz.iter().enumerate().map(|(c, &dc)| dc * w2[c * self.hidden + j]).sum();
                            g[1][j] += dh;
                            for (gw, &xi) in g[0][j * d..(j + 1) * d].iter_mut().zip(x) {
                                *gw += dh * xi;
                            }
                        }
                    }
                }
                (loss, g)
            })
            .collect();
        let mut total = 0.0;
        let mut grad = if want_grad { zero() } else { Vec::new() };
        for (l, g) in partials {
            total += l;
            for (acc, part) in grad.iter_mut().zip(g) {
                acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
            }
        }
        let inv = 1.0 / n.max(1) as f64;
        grad.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= inv));
        (total * inv, grad)
    }

    fn standardized(&self, table: &FeatureTable) -> Vec<f64> {
        (0..table.rows()).flat_map(|r| self.standardize(table.row(r))).collect()
    }

    /// Mean cross entropy on `table`.
    pub fn loss(&self, table: &FeatureTable) -> Result<f64> {
        if table.dim != self.dim {
            return Err(Error::shape(format!("probe expects {} features, table has {}", self.dim, table.dim)));
        }
        Ok(self.loss_grad(&self.standardized(table), &table.labels, false).0)
    }
}

/// Fits a probe on `train`, early-stopping on `val` (skipped if `val` is
/// empty). `n_classes` must cover every label in both tables.
pub fn fit_probe(
    train: &FeatureTable,
    val: &FeatureTable,
    n_classes: usize,
    kind: ProbeKind,
    opts: &ProbeOptions,
    seed: u64,
) -> Result<ProbeFit> {
    let d = train.dim;
    if train.rows() == 0 || d == 0 {
        return Err(Error::invalid("empty training table"));
    }
    if !train.data.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("probe features".into()));
    }
    let first = train.labels[0];
    if train.labels.iter().all(|&l| l == first) {
        return Err(Error::invalid("probe training data has a single class"));
    }
    if train.n_classes().max(val.n_classes()) > n_classes {
        return Err(Error::invalid("label outside the declared class count"));
    }
    if val.rows() > 0 && val.dim != d {
        return Err(Error::shape("validation table dimension differs"));
    }
    let n = train.rows() as f64;
    let mut mean = vec![0.0; d];
    for r in 0..train.rows() {
        mean.iter_mut().zip(train.row(r)).for_each(|(m, v)| *m += v / n);
    }
    let mut scale = vec![0.0; d];
    for r in 0..train.rows() {
        scale.iter_mut().zip(train.row(r).iter().zip(&mean)).for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
    }
    scale.iter_mut().for_each(|s| *s = if *s > 1e-24 { s.sqrt() } else { 1.0 });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut init = |rows: usize, cols: usize| -> Vec<f64> {
        let a = 1.0 / (cols as f64).sqrt();
        (0..rows * cols).map(|_| rng.gen_range(-a..a)).collect()
    };
    let params = match kind {
        ProbeKind::Linear => vec![init(n_classes, d), vec![0.0; n_classes]],
        ProbeKind::Mlp => vec![init(opts.hidden, d), vec![0.0; opts.hidden], init(n_classes, opts.hidden), vec![0.0; n_classes]],
    };
    let mut probe = Probe { kind, n_classes, dim: d, mean, scale, params, hidden: opts.hidden };
    let xs = probe.standardized(train);
    let xv = if val.rows() > 0 { probe.standardized(val) } else { Vec::new() };

    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m: Vec<Vec<f64>> = probe.params.iter().map(|p| vec![0.0; p.len()]).collect();
    let mut v = m.clone();
    let mut best = (f64::INFINITY, probe.params.clone());
    let mut since_best = 0;
    let mut converged = false;
    let mut epochs = 0;
    let mut train_loss = f64::NAN;
    for epoch in 1..=opts.max_epochs {
        epochs = epoch;
        let (loss, grad) = probe.loss_grad(&xs, &train.labels, true);
        train_loss = loss;
        if val.rows() > 0 {
            let vl = probe.loss_grad(&xv, &val.labels, false).0;
            if vl < best.0 - 1e-6 {
                best = (vl, probe.params.clone());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= opts.patience {
                    converged = true;
                    break;
                }
            }
        }
        let (c1, c2) = (1.0 - f64::powi(b1, epoch as i32), 1.0 - f64::powi(b2, epoch as i32));
        for (i, p) in probe.params.iter_mut().enumerate() {
            let decay = if i % 2 == 0 { opts.weight_decay } else { 0.0 };
            for j in 0..p.len() {
                let g = grad[i][j] + decay * p[j];
                m[i][j] = b1 * m[i][j] + (1.0 - b1) * g;
                v[i][j] = b2 * v[i][j] + (1.0 - b2) * g * g;
                p[j] -= opts.learning_rate * (m[i][j] / c1) / ((v[i][j] / c2).sqrt() + eps);
            }
        }
    }
    if val.rows() > 0 {
        probe.params = best.1;
        train_loss = probe.loss_grad(&xs, &train.labels, false).0;
    } else {
        train_loss = probe.loss_grad(&xs, &train.labels, false).0.min(train_loss);
        converged = true;
    }
    Ok(ProbeFit { probe, epochs, converged, train_loss })
}

/// Accuracy and confusion counts (`confusion[true][predicted]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

pub fn eval_probe(probe: &Probe, table: &FeatureTable) -> Result<Evaluation> {
    let pred = probe.predict(table)?;
    let mut confusion = vec![vec![0; probe.n_classes]; probe.n_classes];
    for (&y, &p) in table.labels.iter().zip(&pred) {
        let y = y as usize;
        if y >= probe.n_classes {
            return Err(Error::invalid(format!("label {y} outside the probe's {} classes", probe.n_classes)));
        }
        confusion[y][p as usize] += 1;
    }
    let hits: usize = (0..probe.n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = if table.rows() == 0 { 0.0 } else { hits as f64 / table.rows() as f64 };
    Ok(Evaluation { accuracy, confusion })
}

/// One row of a probe report.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeResult {
    pub spec: ProbeSpec,
    pub dim: usize,
    pub train_acc: f64,
    pub test_acc: f64,
    pub confusion: Vec<Vec<usize>>,
    pub frame_rate: f64,
    pub converged: bool,
}

pub const PROBE_CSV_HEADER: &str = "source,target,kind,pooling,dim,train_acc,test_acc";

impl ProbeResult {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.spec.source_label(),
            self.spec.target.name(),
            self.spec.kind.name(),
            self.spec.pooling.name(),
            self.dim,
            self.train_acc,
            self.test_acc
        )
    }
}

/// Fits on `train` (early stopping on `val`) and reports train and test
/// accuracy.
pub fn run_probe(
    spec: ProbeSpec,
    train: &FeatureTable,
    val: &FeatureTable,
    test: &FeatureTable,
    opts: &ProbeOptions,
    seed: u64,
) -> Result<ProbeResult> {
    spec.validate()?;
    let n_classes = train.n_classes().max(val.n_classes()).max(test.n_classes());
    let fit = fit_probe(train, val, n_classes, spec.kind, opts, seed)?;
    let tr = eval_probe(&fit.probe, train)?;
    let te = eval_probe(&fit.probe, test)?;
    Ok(ProbeResult {
        spec,
        dim: train.dim,
        train_acc: tr.accuracy,
        test_acc: te.accuracy,
        confusion: te.confusion,
        frame_rate: test.frame_rate,
        converged: fit.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(points: &[([f64; 2], u32)]) -> FeatureTable {
        FeatureTable {
            dim: 2,
            data: points.iter().flat_map(|(p, _)| p.to_vec()).collect(),
            labels: points.iter().map(|&(_, l)| l).collect(),
            groups: (0..points.len()).collect(),
            frame_rate: 1.0,
        }
    }

    fn empty() -> FeatureTable {
        FeatureTable { dim: 2, data: vec![], labels: vec![], groups: vec![], frame_rate: 1.0 }
    }

    #[test]
    fn separable_blobs_are_learned() {
        let pts: Vec<_> = (0..40).map(|i| ([i as f64 * 0.01 + if i % 2 == 0 { 2.0 } else { -2.0 }, 0.3], (i % 2) as u32)).collect();
        let t = table(&pts);
        let fit = fit_probe(&t, &empty(), 2, ProbeKind::Linear, &ProbeOptions::default(), 1).unwrap();
        assert_eq!(eval_probe(&fit.probe, &t).unwrap().accuracy, 1.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let t = table(&[([0.0, 1.0], 1), ([1.0, 0.0], 1)]);
        assert!(fit_probe(&t, &empty(), 2, ProbeKind::Linear, &ProbeOptions::default(), 1).is_err());
    }

    #[test]
    fn confusion_trace_equals_accuracy() {
        let pts: Vec<_> = (0..30).map(|i| ([(i % 3) as f64, ((i * 7) % 5) as f64], (i % 3) as u32)).collect();
        let t = table(&pts);
        let fit = fit_probe(&t, &empty(), 3, ProbeKind::Linear, &ProbeOptions::default(), 2).unwrap();
        let e = eval_probe(&fit.probe, &t).unwrap();
        let trace: usize = (0..3).map(|c| e.confusion[c][c]).sum();
        assert_eq!(trace as f64 / 30.0, e.accuracy);
        assert!(e.confusion.iter().enumerate().all(|(c, row)| row.iter().sum::<usize>() == 10 && c < 3));
    }

    #[test]
    fn short_attr_needs_per_frame() {
        let spec = ProbeSpec {
            source: FeatureSource::Cs,
            target: Target::ShortAttr,
            kind: ProbeKind::Linear,
            pooling: Pooling::MeanUtterance,
            quantized: false,
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn source_names_parse() {
        for s in FeatureSource::ALL {
            assert_eq!(s.name().parse::<FeatureSource>().unwrap(), s);
        }
        assert_eq!("both".parse::<FeatureSource>().unwrap(), FeatureSource::CsCl);
        let spec: ProbeSpec = serde_json::from_str(r#"{"source":"c_s&c_l","target":"long_attr","kind":"mlp"}"#).unwrap();
        assert_eq!(spec.source, FeatureSource::CsCl);
    }
}
