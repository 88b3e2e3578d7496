//! Corpus on disk: `manifest.jsonl` (one record per window) plus
//! `windows.f32`, the raw samples as little-endian `f32`, row-major
//! `[n_windows, W]`.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AudioWindow, LabelRun, LabeledWindow};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const WINDOWS_FILE: &str = "windows.f32";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: usize,
    pub source: String,
    pub long_attr: u32,
    pub long_attr2: u32,
    /// `(class, start_sample, len)` triples.
    pub short_attr_runs: Vec<(u32, usize, usize)>,
}

impl From<&LabeledWindow> for CorpusRecord {
    fn from(w: &LabeledWindow) -> Self {
        Self {
            id: w.id,
            source: w.source.clone(),
            long_attr: w.long_attr,
            long_attr2: w.long_attr2,
            short_attr_runs: w.short_runs.iter().map(|r| (r.class, r.start, r.len)).collect(),
        }
    }
}

pub fn write_corpus(dir: impl AsRef<Path>, windows: &[LabeledWindow]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut manifest = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    let mut raw = BufWriter::new(File::create(dir.join(WINDOWS_FILE))?);
    let width = windows.first().map_or(0, |w| w.window.len());
    for w in windows {
        if w.window.len() != width {
            return Err(Error::invalid("all corpus windows must have the same length"));
        }
        serde_json::to_writer(&mut manifest, &CorpusRecord::from(w))?;
        manifest.write_all(b"\n")?;
        for s in &w.window.samples {
            raw.write_all(&s.to_le_bytes())?;
        }
    }
    manifest.flush()?;
    raw.flush()?;
    Ok(())
}

pub fn read_corpus(dir: impl AsRef<Path>, sample_rate: u32) -> Result<Vec<LabeledWindow>> {
    let dir = dir.as_ref();
    let mut records = Vec::new();
    for (i, line) in BufReader::new(File::open(dir.join(MANIFEST_FILE))?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Corrupt(format!("{MANIFEST_FILE} line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    let raw = fs::read(dir.join(WINDOWS_FILE))?;
    if records.is_empty() {
        return Ok(Vec::new());
    }
    if raw.len() % (4 * records.len()) != 0 {
        return Err(Error::Corrupt(format!(
            "{WINDOWS_FILE} holds {} bytes, not a multiple of {} windows",
            raw.len(),
            records.len()
        )));
    }
    let width = raw.len() / 4 / records.len();
    records
        .into_iter()
        .zip(raw.chunks_exact(width * 4))
        .map(|(rec, bytes)| {
            let samples = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            let short_runs: Vec<LabelRun> = rec
                .short_attr_runs
                .iter()
                .map(|&(class, start, len)| LabelRun { class, start, len })
                .collect();
            if short_runs.iter().any(|r| r.start + r.len > width) {
                return Err(Error::Corrupt(format!("window {} has a label run past its end", rec.id)));
            }
            Ok(LabeledWindow {
                id: rec.id,
                source: rec.source,
                window: AudioWindow { samples, sample_rate },
                long_attr: rec.long_attr,
                long_attr2: rec.long_attr2,
                short_runs,
            })
        })
        .collect()
}

/// Utterance-level split; frames of one window never straddle two parts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` with `seed` and cuts it 70/10/20.
pub fn split_by_utterance(n: usize, seed: u64) -> Split {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n * 7) / 10;
    let n_val = n / 10;
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    Split { train: idx, val, test }
}
