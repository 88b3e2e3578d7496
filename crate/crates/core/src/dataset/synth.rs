//! Synthetic speech-like corpus with planted attributes.
//!
//! Each window is a harmonic source passed through a two-pole resonator:
//!
//! * `long_attr` (speaker-like) picks a fundamental-frequency band, disjoint
//!   across classes, and the resonator's center frequency;
//! * `long_attr2` (emotion-like) picks the rate of a global amplitude
//!   modulation;
//! * `short_attr` (phoneme-like) picks the harmonic amplitude template of
//!   each segment: two formant peaks at fixed frequencies, sampled at the
//!   harmonics of the window's fundamental.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AudioWindow, LabelRun, LabeledWindow};
use crate::error::{Error, Result};

pub const MAX_HARMONICS: usize = 32;

const FORMANT_BANDWIDTH_HZ: f64 = 120.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_windows: usize,
    pub window_len: usize,
    pub sample_rate: u32,
    pub n_long_classes: usize,
    pub n_long2_classes: usize,
    pub n_short_classes: usize,
    /// Inclusive segment length range in milliseconds.
    pub segment_ms: [f64; 2],
    /// Standard deviation of the additive white noise.
    pub noise: f64,
    /// Depth of the slow amplitude modulation that encodes the second long attribute, in [0, 1).
    pub am_depth: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_windows: 2000,
            window_len: 20480,
            sample_rate: 16000,
            n_long_classes: 4,
            n_long2_classes: 3,
            n_short_classes: 8,
            segment_ms: [60.0, 200.0],
            noise: 0.02,
            am_depth: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_long_classes < 2 {
            return Err(Error::config("dataset.n_long_classes must be >= 2"));
        }
        if self.n_long2_classes < 2 {
            return Err(Error::config("dataset.n_long2_classes must be >= 2"));
        }
        // a single short class is allowed as a degenerate corpus
        if self.n_short_classes < 1 {
            return Err(Error::config("dataset.n_short_classes must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.am_depth) {
            return Err(Error::config("dataset.am_depth must be in [0, 1)"));
        }
        let [lo, hi] = self.segment_ms;
        if !(40.0..=400.0).contains(&lo) || !(40.0..=400.0).contains(&hi) || lo > hi {
            return Err(Error::config("dataset.segment_ms must satisfy 40 <= min <= max <= 400"));
        }
        if self.window_len == 0 || self.sample_rate == 0 {
            return Err(Error::config("dataset.window_len and dataset.sample_rate must be > 0"));
        }
        if self.segment_samples(lo) > self.window_len {
            return Err(Error::config(format!(
                "dataset.segment_ms: minimum segment of {lo} ms does not fit in a {}-sample window",
                self.window_len
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::config("dataset.noise must be finite and >= 0"));
        }
        Ok(())
    }

    fn segment_samples(&self, ms: f64) -> usize {
        (ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    /// Fundamental-frequency band `[lo, hi)` in Hz of a long class.
    pub fn f0_band(&self, class: usize) -> (f64, f64) {
        let width = 240.0 / self.n_long_classes as f64;
        let lo = 90.0 + class as f64 * width;
        (lo, lo + 0.7 * width)
    }

    pub fn resonance_hz(&self, class: usize) -> f64 {
        500.0 + 2000.0 * class as f64 / self.n_long_classes as f64
    }

    pub fn modulation_hz(&self, class2: usize) -> f64 {
        1.5 + 2.0 * class2 as f64
    }
}

/// First and second formant of a short class in Hz.
pub fn formants(class: usize) -> (f64, f64) {
    let f1 = 300.0 + 200.0 * (class % 4) as f64;
    let f2 = 1100.0 + 500.0 * (class / 4) as f64 + 150.0 * (class % 4) as f64;
    (f1, f2)
}

/// Harmonic amplitudes of a short class at fundamental `f0`: a small floor
/// plus two Lorentzian formant peaks. Independent of the corpus seed so the
/// same class sounds alike in every corpus.
pub fn harmonic_template(class: usize, f0: f64) -> [f64; MAX_HARMONICS] {
    let (f1, f2) = formants(class);
    let peak = |f: f64, center: f64| 1.0 / (1.0 + ((f - center) / FORMANT_BANDWIDTH_HZ).powi(2));
    let mut a = [0.0; MAX_HARMONICS];
    for (h, v) in a.iter_mut().enumerate() {
        let f = (h + 1) as f64 * f0;
        *v = 0.05 + peak(f, f1) + peak(f, f2);
    }
    a
}

pub fn synth_generate(cfg: &SynthConfig) -> Result<Vec<LabeledWindow>> {
    cfg.validate()?;
    Ok((0..cfg.n_windows).into_par_iter().map(|i| synth_window(cfg, i)).collect())
}

/// Generates window `index` of the corpus; each index has its own RNG
/// stream so windows can be produced independently.
pub fn synth_window(cfg: &SynthConfig, index: usize) -> LabeledWindow {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let sr = cfg.sample_rate as f64;
    let n = cfg.window_len;

    let long_attr = rng.gen_range(0..cfg.n_long_classes);
    let long_attr2 = rng.gen_range(0..cfg.n_long2_classes);
    let (f_lo, f_hi) = cfg.f0_band(long_attr);
    let f0 = rng.gen_range(f_lo..f_hi);

    let (seg_lo, seg_hi) = (cfg.segment_samples(cfg.segment_ms[0]), cfg.segment_samples(cfg.segment_ms[1]));
    let mut runs: Vec<LabelRun> = Vec::new();
    let mut start = 0;
    while start < n {
        let len = rng.gen_range(seg_lo..=seg_hi).min(n - start);
        let mut class = rng.gen_range(0..cfg.n_short_classes);
        if let Some(prev) = runs.last() {
            if cfg.n_short_classes > 1 && class as u32 == prev.class {
                class = (class + 1 + rng.gen_range(0..cfg.n_short_classes - 1)) % cfg.n_short_classes;
            }
        }
        runs.push(LabelRun { class: class as u32, start, len });
        start += len;
    }

    let am_rate = cfg.modulation_hz(long_attr2);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let mut phases: Vec<f64> = (0..MAX_HARMONICS).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let n_harm = (1..=MAX_HARMONICS).take_while(|&h| h as f64 * f0 < 0.45 * sr).count();

    let theta = 2.0 * PI * cfg.resonance_hz(long_attr) / sr;
    let r = 0.6;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);

    let mut out = vec![0.0f64; n];
    let (mut y1, mut y2) = (0.0, 0.0);
    for run in &runs {
        let amps = harmonic_template(run.class as usize, f0);
        for (t, slot) in out.iter_mut().enumerate().skip(run.start).take(run.len) {
            let mut s = 0.0;
            for h in 0..n_harm {
                s += amps[h] * phases[h].sin();
                phases[h] += 2.0 * PI * (h + 1) as f64 * f0 / sr;
            }
            let y = (1.0 - r) * s + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y;
            let env = 1.0 - cfg.am_depth * (0.5 - 0.5 * (2.0 * PI * am_rate * t as f64 / sr + am_phase).cos());
            *slot = y * env;
        }
    }

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let amp = 3.0f64.sqrt() * cfg.noise;
    let mut samples: Vec<f32> = out
        .iter()
        .map(|&v| {
            let noise = if amp > 0.0 { rng.gen_range(-amp..amp) } else { 0.0 };
            (0.8 * v / peak + noise) as f32
        })
        .collect();
    let max = samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    if max > 1.0 {
        samples.iter_mut().for_each(|v| *v /= max);
    }

    LabeledWindow {
        id: index,
        source: format!("synth:{}:{index}", cfg.seed),
        window: AudioWindow { samples, sample_rate: cfg.sample_rate },
        long_attr: long_attr as u32,
        long_attr2: long_attr2 as u32,
        short_runs: runs,
    }
}
