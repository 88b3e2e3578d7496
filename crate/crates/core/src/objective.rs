//! InfoNCE objective for both stages.
//!
//! The lower stage scores a candidate latent `z` against the prediction
//! `W_s(k) g(c_s(t), c_l(t))`; the upper stage against `W_l(k) c_l(t)`. The
//! scores stay in the log domain (the exponential of the density-ratio model
//! lives inside the softmax), and the loss is the cross entropy of picking
//! the true future latent, at index 0, out of `N` candidates. Minimizing it
//! maximizes the usual InfoNCE lower bound `log N - L` on the mutual
//! information between the contexts and the future frame; the mutual
//! information itself is never computed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Forward, Model, Stage};
use crate::numerics::{ops::log_sum_exp, Real, Tape, Tensor, Var};

/// Scores of `N` candidates per anchor row; candidate 0 is the positive.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    scores: Vec<f64>,
    steps: Vec<usize>,
}

impl ScoreMatrix {
    /// `scores` is row-major `[rows, n]`; `steps[r]` is the prediction step
    /// `k` of row `r`.
    pub fn new(n: usize, scores: Vec<f64>, steps: Vec<usize>) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("need at least 2 candidates per row, got {n}")));
        }
        if scores.len() != n * steps.len() {
            return Err(Error::shape(format!("{} scores for {} rows of {n}", scores.len(), steps.len())));
        }
        Ok(Self { n, scores, steps })
    }

    pub fn n_candidates(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> usize {
        self.steps.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.scores[r * self.n..(r + 1) * self.n]
    }

    pub fn step(&self, r: usize) -> usize {
        self.steps[r]
    }
}

fn bilinear<S: Real>(z: &[S], w: &Tensor<S>, ctx: &[S]) -> Result<f64> {
    if w.ndim() != 2 || w.shape()[0] != z.len() || w.shape()[1] != ctx.len() {
        return Err(Error::shape(format!(
            "score needs W [{} x {}], got {:?}",
            z.len(),
            ctx.len(),
            w.shape()
        )));
    }
    let mut s = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let row = w.row(i);
        let wc: f64 = row.iter().zip(ctx).map(|(&a, &b)| a.as_f64() * b.as_f64()).sum();
        s += zi.as_f64() * wc;
    }
    Ok(s)
}

/// Log-score `z_s(t+k)^T W_s(k) g_t` of the lower stage.
pub fn score_lower<S: Real>(z_target: &[S], w_k: &Tensor<S>, g_t: &[S]) -> Result<f64> {
    bilinear(z_target, w_k, g_t)
}

/// Log-score `z_l(t+k)^T W_l(k) c_l(t)` of the upper stage.
pub fn score_upper<S: Real>(z_target: &[S], w_k: &Tensor<S>, c_l_t: &[S]) -> Result<f64> {
    bilinear(z_target, w_k, c_l_t)
}

/// Mean over rows of `-(s_0 - logsumexp(s))`.
pub fn infonce_loss(scores: &ScoreMatrix) -> Result<f64> {
    if scores.rows() == 0 {
        return Err(Error::invalid("no score rows"));
    }
    if scores.scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("infonce scores".into()));
    }
    let total: f64 = (0..scores.rows())
        .map(|r| {
            let row = scores.row(r);
            log_sum_exp(row) - row[0]
        })
        .sum();
    Ok(total / scores.rows() as f64)
}

fn positive_wins(row: &[f64]) -> bool {
    row[1..].iter().all(|&v| row[0] > v)
}

/// Fraction of rows whose positive strictly beats every negative (ties
/// count as wrong).
pub fn positive_accuracy(scores: &ScoreMatrix) -> f64 {
    if scores.rows() == 0 {
        return 0.0;
    }
    let hits = (0..scores.rows()).filter(|&r| positive_wins(scores.row(r))).count();
    hits as f64 / scores.rows() as f64
}

/// Accuracy for each step `k = 1..=k_max`; `None` for steps with no rows.
pub fn positive_accuracy_per_step(scores: &ScoreMatrix, k_max: usize) -> Vec<Option<f64>> {
    let mut hits = vec![0usize; k_max];
    let mut total = vec![0usize; k_max];
    for r in 0..scores.rows() {
        let k = scores.step(r);
        if (1..=k_max).contains(&k) {
            total[k - 1] += 1;
            if positive_wins(scores.row(r)) {
                hits[k - 1] += 1;
            }
        }
    }
    hits.iter().zip(&total).map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeSource {
    /// Other frames of the same window.
    SameSequence,
    /// Frames of other windows in the batch.
    CrossBatch,
    /// Any other frame in the batch.
    #[default]
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeSampling {
    pub n_negatives: usize,
    pub source: NegativeSource,
}

/// Anchors and candidate indices for one stage of one batch.
///
/// Anchor `r` predicts from frame `t` of item `b` at step `k`; its
/// prediction row is `(b * T + t) * K + k - 1` and its candidates index the
/// flattened `[B * T]` latents, positive first.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateTable {
    pub pred_rows: Vec<usize>,
    pub cand: Vec<usize>,
    pub steps: Vec<usize>,
    pub n: usize,
}

impl NegativeSampling {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, batch: usize, frames: usize, k_max: usize) -> Result<CandidateTable> {
        let n = self.n_negatives + 1;
        if self.n_negatives == 0 {
            return Err(Error::invalid("need at least one negative"));
        }
        match self.source {
            NegativeSource::SameSequence if frames < 2 => {
                return Err(Error::invalid("same-sequence negatives need at least 2 frames"))
            }
            NegativeSource::CrossBatch if batch < 2 => {
                return Err(Error::invalid("cross-batch negatives need a batch of at least 2"))
            }
            _ => {}
        }
        let mut table = CandidateTable { pred_rows: Vec::new(), cand: Vec::new(), steps: Vec::new(), n };
        for b in 0..batch {
            for t in 0..frames {
                for k in 1..=k_max {
                    if t + k >= frames {
                        break;
                    }
                    let pos = b * frames + t + k;
                    table.pred_rows.push((b * frames + t) * k_max + k - 1);
                    table.steps.push(k);
                    table.cand.push(pos);
                    for _ in 0..self.n_negatives {
                        let neg = match self.source {
                            NegativeSource::Mixed => {
                                let i = rng.gen_range(0..batch * frames - 1);
                                if i >= pos { i + 1 } else { i }
                            }
                            NegativeSource::SameSequence => {
                                let i = rng.gen_range(0..frames - 1);
                                b * frames + if i >= t + k { i + 1 } else { i }
                            }
                            NegativeSource::CrossBatch => {
                                let i = rng.gen_range(0..(batch - 1) * frames);
                                let (ob, ot) = (i / frames, i % frames);
                                (if ob >= b { ob + 1 } else { ob }) * frames + ot
                            }
                        };
                        table.cand.push(neg);
                    }
                }
            }
        }
        if table.steps.is_empty() {
            return Err(Error::invalid(format!("{frames} frames leave no room to predict ahead")));
        }
        Ok(table)
    }
}

/// Records one stage's InfoNCE loss; `z` is `[B, T, C]` and `pred` the
/// `[B * T * K, C]` predictions.
pub fn stage_loss<S: Real>(tape: &Tape<S>, z: Var, pred: Var, table: &CandidateTable) -> Result<(Var, ScoreMatrix)> {
    let zs = tape.shape(z);
    let c = *zs.last().unwrap();
    let rows = zs.iter().product::<usize>() / c;
    let z_flat = tape.reshape(z, [rows, c])?;
    let scores = tape.candidate_scores(z_flat, pred, table.pred_rows.clone(), table.cand.clone(), table.n)?;
    let matrix = ScoreMatrix::new(table.n, tape.value(scores).to_f64_vec(), table.steps.clone())?;
    let loss = tape.cross_entropy(scores, vec![0; table.steps.len()])?;
    Ok((loss, matrix))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub negatives: NegativeSampling,
    /// Overrides the negative source of the upper stage.
    pub upper_source: Option<NegativeSource>,
    /// Weight of the upper-stage loss in the sum.
    pub upper_weight: f64,
}

pub struct StageLoss {
    pub loss: Var,
    pub scores: ScoreMatrix,
}

pub struct TotalLoss {
    pub total: Var,
    pub lower: StageLoss,
    pub upper: Option<StageLoss>,
}

/// `L = L_lower + upper_weight * L_upper`; the upper term is absent for the
/// baseline. Upper-stage targets and negatives live on the long grid.
pub fn total_loss<S: Real, R: Rng + ?Sized>(
    tape: &Tape<S>,
    model: &Model<S>,
    bound: &crate::model::Bound,
    fwd: &Forward,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<TotalLoss> {
    let k = model.config().pred_steps;
    let t_s = tape.shape(fwd.z_s)[1];
    let table = cfg.negatives.draw(rng, fwd.batch, t_s, k)?;
    let pred = model.predictions(tape, bound, fwd.g, Stage::Short)?;
    let (loss, scores) = stage_loss(tape, fwd.z_s, pred, &table)?;
    let lower = StageLoss { loss, scores };

    let (Some(z_l), Some(c_l)) = (fwd.z_l, fwd.c_l) else {
        return Ok(TotalLoss { total: lower.loss, lower, upper: None });
    };
    let t_l = tape.shape(z_l)[1];
    let upper = NegativeSampling { source: cfg.upper_source.unwrap_or(cfg.negatives.source), ..cfg.negatives };
    let table = upper.draw(rng, fwd.batch, t_l, k)?;
    let pred = model.predictions(tape, bound, c_l, Stage::Long)?;
    let (loss, scores) = stage_loss(tape, z_l, pred, &table)?;
    let weighted = tape.scale(loss, S::of(cfg.upper_weight))?;
    let total = tape.add(lower.loss, weighted)?;
    Ok(TotalLoss { total, lower, upper: Some(StageLoss { loss, scores }) })
}
