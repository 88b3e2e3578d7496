//! Glue shared by the command-line tool and the acceptance suite: corpus
//! loading, utterance splits, context quantization and probe batches.

use crate::config::DatasetConfig;
use crate::dataset::{load_wav, split_by_utterance, synth_generate, LabelRun, LabeledWindow, Split};
use crate::error::{Error, Result};
use crate::model::{batch_features, Model, WindowFeatures};
use crate::numerics::Real;
use crate::probes::{run_probe, table_from_features, ProbeOptions, ProbeResult, ProbeSpec};
use crate::quantizer::{calibrate_steps, dm_roundtrip, StepTable};

/// Synthesizes the corpus, or cuts the configured WAV files into windows.
pub fn load_corpus(cfg: &DatasetConfig, window_len: usize) -> Result<Vec<LabeledWindow>> {
    if cfg.wav.is_empty() {
        return synth_generate(&cfg.synth);
    }
    let hop = if cfg.wav_hop == 0 { window_len } else { cfg.wav_hop };
    let mut out = Vec::new();
    for path in &cfg.wav {
        for w in load_wav(path, cfg.synth.sample_rate, window_len, hop)? {
            out.push(LabeledWindow {
                id: out.len(),
                source: path.display().to_string(),
                short_runs: vec![LabelRun { class: 0, start: 0, len: w.len() }],
                window: w,
                long_attr: 0,
                long_attr2: 0,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("WAV files are shorter than one window"));
    }
    Ok(out)
}

/// Windows of each part of an utterance split.
pub struct Parts<'a> {
    pub train: Vec<&'a LabeledWindow>,
    pub val: Vec<&'a LabeledWindow>,
    pub test: Vec<&'a LabeledWindow>,
}

impl<'a> Parts<'a> {
    pub fn new(windows: &'a [LabeledWindow], split: &Split) -> Self {
        let pick = |ids: &[usize]| ids.iter().map(|&i| &windows[i]).collect();
        Self { train: pick(&split.train), val: pick(&split.val), test: pick(&split.test) }
    }

    pub fn split(windows: &'a [LabeledWindow], seed: u64) -> Self {
        Self::new(windows, &split_by_utterance(windows.len(), seed))
    }

    /// Keeps about `max` windows, in the split's proportions.
    pub fn capped(mut self, max: Option<usize>) -> Self {
        if let Some(max) = max {
            let total = self.train.len() + self.val.len() + self.test.len();
            if max < total {
                let keep = |n: usize| ((n * max) as f64 / total as f64).ceil() as usize;
                self.train.truncate(keep(self.train.len()));
                self.val.truncate(keep(self.val.len()));
                self.test.truncate(keep(self.test.len()));
            }
        }
        self
    }
}

/// Step tables for the two context streams.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextCodecs {
    pub c_s: StepTable,
    pub c_l: Option<StepTable>,
}

/// Calibrates one table per context source on training features.
pub fn calibrate_contexts<S: Real>(train: &[WindowFeatures<S>]) -> Result<ContextCodecs> {
    let c_s: Vec<_> = train.iter().map(|f| f.c_s.frames.clone()).collect();
    let c_l: Vec<_> = train.iter().filter_map(|f| f.c_l.as_ref().map(|c| c.frames.clone())).collect();
    Ok(ContextCodecs {
        c_s: calibrate_steps(&c_s)?,
        c_l: if c_l.is_empty() { None } else { Some(calibrate_steps(&c_l)?) },
    })
}

/// Replaces `c_s` and `c_l` by their Δ-modulation reconstructions.
pub fn quantize_contexts<S: Real>(feats: &[WindowFeatures<S>], codecs: &ContextCodecs) -> Result<Vec<WindowFeatures<S>>> {
    feats
        .iter()
        .map(|f| {
            let mut q = f.clone();
            q.c_s.frames = dm_roundtrip(&f.c_s.frames, &codecs.c_s)?;
            if let (Some(c), Some(table)) = (q.c_l.as_mut(), codecs.c_l.as_ref()) {
                c.frames = dm_roundtrip(&c.frames, table)?;
            }
            Ok(q)
        })
        .collect()
}

struct PartFeatures<S> {
    train: Vec<WindowFeatures<S>>,
    val: Vec<WindowFeatures<S>>,
    test: Vec<WindowFeatures<S>>,
}

/// Runs every spec on features extracted once per window; quantized specs
/// use step tables calibrated on the training part.
pub fn run_probes<S: Real>(
    model: &Model<S>,
    parts: &Parts<'_>,
    specs: &[ProbeSpec],
    opts: &ProbeOptions,
    seed: u64,
) -> Result<Vec<ProbeResult>> {
    let feats = |ws: &[&LabeledWindow]| batch_features(model, &ws.iter().map(|w| &w.window).collect::<Vec<_>>());
    let raw = PartFeatures { train: feats(&parts.train)?, val: feats(&parts.val)?, test: feats(&parts.test)? };
    let quantized = if specs.iter().any(|s| s.quantized) {
        let codecs = calibrate_contexts(&raw.train)?;
        Some(PartFeatures {
            train: quantize_contexts(&raw.train, &codecs)?,
            val: quantize_contexts(&raw.val, &codecs)?,
            test: quantize_contexts(&raw.test, &codecs)?,
        })
    } else {
        None
    };
    let ratio = model.config().frame_ratio();
    specs
        .iter()
        .map(|spec| {
            let f = if spec.quantized { quantized.as_ref().unwrap() } else { &raw };
            let table = |fs: &[WindowFeatures<S>], ws: &[&LabeledWindow]| {
                table_from_features(fs, ratio, ws, spec.source, spec.target, spec.pooling)
            };
            let train = table(&f.train, &parts.train)?;
            let val = table(&f.val, &parts.val)?;
            let test = table(&f.test, &parts.test)?;
            run_probe(*spec, &train, &val, &test, opts, seed)
        })
        .collect()
}
