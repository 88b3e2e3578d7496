//! Audio ingestion, the synthetic labeled corpus, frame-level label
//! alignment and the on-disk corpus format.

mod corpus;
mod synth;
mod wav;

pub use corpus::{read_corpus, split_by_utterance, write_corpus, CorpusRecord, Split, MANIFEST_FILE, WINDOWS_FILE};
pub use synth::{formants, harmonic_template, synth_generate, synth_window, SynthConfig};
pub use wav::{encode_wav, load_wav, parse_wav, read_wav, windows, WavAudio};

use crate::error::{Error, Result};

/// A fixed-length mono excerpt, samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioWindow {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioWindow {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// A run of identical short-term labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelRun {
    pub class: u32,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledWindow {
    pub id: usize,
    pub source: String,
    pub window: AudioWindow,
    /// Speaker-like attribute, constant over the window.
    pub long_attr: u32,
    /// Emotion-like attribute, constant over the window.
    pub long_attr2: u32,
    /// Phoneme-like attribute as contiguous runs covering the window.
    pub short_runs: Vec<LabelRun>,
}

impl LabeledWindow {
    /// Per-sample short-term labels.
    pub fn short_labels(&self) -> Vec<u32> {
        let mut out = vec![0; self.window.len()];
        for r in &self.short_runs {
            out[r.start..r.start + r.len].fill(r.class);
        }
        out
    }
}

/// Reduces per-sample labels to one label per `hop`-sample frame.
///
/// The frame label is the most frequent sample label; on a tie the class
/// that appears first inside the frame wins. A trailing partial frame is
/// dropped.
pub fn align_labels(labels: &[u32], hop: usize) -> Result<Vec<u32>> {
    if hop == 0 {
        return Err(Error::invalid("frame hop must be > 0"));
    }
    Ok(labels.chunks_exact(hop).map(majority_earliest).collect())
}

fn majority_earliest(frame: &[u32]) -> u32 {
    // (class, count) in order of first appearance
    let mut counts: Vec<(u32, usize)> = Vec::new();
    for &c in frame {
        match counts.iter_mut().find(|(k, _)| *k == c) {
            Some((_, n)) => *n += 1,
            None => counts.push((c, 1)),
        }
    }
    let mut best = counts[0];
    for &(c, n) in &counts[1..] {
        if n > best.1 {
            best = (c, n);
        }
    }
    best.0
}
