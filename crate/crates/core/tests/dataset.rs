use std::f64::consts::PI;

use cogcode::dataset::{harmonic_template, synth_generate, synth_window, LabeledWindow, SynthConfig};

/// Magnitude of the windowed DFT of `x` at `freq` Hz.
fn dft_mag(x: &[f32], freq: f64, sr: f64) -> f64 {
    let n = x.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let hann = 0.5 - 0.5 * (2.0 * PI * i as f64 / n).cos();
        let w = 2.0 * PI * freq * i as f64 / sr;
        re += hann * v as f64 * w.cos();
        im -= hann * v as f64 * w.sin();
    }
    (re * re + im * im).sqrt()
}

/// Fundamental by harmonic sum minus the energy halfway between harmonics
/// (rejects octave errors): coarse 1 Hz grid on the first 4096 samples,
/// then a 0.05 Hz refinement on the whole window.
fn estimate_f0(x: &[f32], sr: f64) -> f64 {
    let score = |x: &[f32], f: f64| {
        (1..=8).map(|h| dft_mag(x, h as f64 * f, sr) - dft_mag(x, (h as f64 - 0.5) * f, sr)).sum::<f64>()
    };
    let head = &x[..4096];
    let coarse = (80..=330).map(|f| f as f64).max_by(|a, b| score(head, *a).total_cmp(&score(head, *b))).unwrap();
    (-40..=40)
        .map(|i| coarse + 0.05 * i as f64)
        .max_by(|a, b| score(x, *a).total_cmp(&score(x, *b)))
        .unwrap()
}

fn band_of(cfg: &SynthConfig, f0: f64) -> Option<u32> {
    (0..cfg.n_long_classes).find(|&c| {
        let (lo, hi) = cfg.f0_band(c);
        (lo - 1.0..hi + 1.0).contains(&f0)
    }).map(|c| c as u32)
}

fn corpus(n: usize, seed: u64) -> (SynthConfig, Vec<LabeledWindow>) {
    let cfg = SynthConfig { n_windows: n, seed, ..SynthConfig::default() };
    let c = synth_generate(&cfg).unwrap();
    (cfg, c)
}

#[test]
fn spectral_peak_recovers_the_long_attribute() {
    let (cfg, c) = corpus(24, 11);
    let sr = cfg.sample_rate as f64;
    let hits = c.iter().filter(|w| band_of(&cfg, estimate_f0(&w.window.samples, sr)) == Some(w.long_attr)).count();
    assert!(hits >= 23, "{hits}/24 windows in the planted F0 band");
}

/// `|H(f)|` of the two-pole resonator of a long class.
fn resonator_gain(cfg: &SynthConfig, class: usize, f: f64) -> f64 {
    let sr = cfg.sample_rate as f64;
    let r = 0.6;
    let theta = 2.0 * PI * cfg.resonance_hz(class) / sr;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let w = 2.0 * PI * f / sr;
    let re = 1.0 - a1 * w.cos() - a2 * (2.0 * w).cos();
    let im = a1 * w.sin() + a2 * (2.0 * w).sin();
    (1.0 - r) / (re * re + im * im).sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt() * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

#[test]
fn nearest_template_recovers_the_short_attribute() {
    let (cfg, c) = corpus(6, 12);
    let sr = cfg.sample_rate as f64;
    let (mut hits, mut total) = (0, 0);
    for w in &c {
        let f0 = estimate_f0(&w.window.samples, sr);
        let n_harm = (1..=16).take_while(|&h| h as f64 * f0 < 0.45 * sr).count();
        let templates: Vec<_> = (0..cfg.n_short_classes).map(|c| harmonic_template(c, f0)).collect();
        for run in w.short_runs.iter().filter(|r| r.len >= 960) {
            let seg = &w.window.samples[run.start..run.start + run.len];
            let mags: Vec<f64> = (1..=n_harm)
                .map(|h| dft_mag(seg, h as f64 * f0, sr) / resonator_gain(&cfg, w.long_attr as usize, h as f64 * f0))
                .collect();
            let best = (0..templates.len())
                .max_by(|&a, &b| cosine(&mags, &templates[a][..n_harm]).total_cmp(&cosine(&mags, &templates[b][..n_harm])))
                .unwrap();
            hits += (best as u32 == run.class) as usize;
            total += 1;
        }
    }
    assert!(total >= 30);
    assert!(hits as f64 >= 0.9 * total as f64, "{hits}/{total} segments matched their template");
}

#[test]
fn windows_do_not_depend_on_corpus_size() {
    let (cfg, c) = corpus(5, 13);
    let bigger = SynthConfig { n_windows: 50, ..cfg.clone() };
    assert_eq!(synth_window(&bigger, 3), c[3]);
}

#[test]
fn labels_are_roughly_balanced() {
    let (cfg, c) = corpus(400, 14);
    let mut counts = vec![0usize; cfg.n_long_classes];
    c.iter().for_each(|w| counts[w.long_attr as usize] += 1);
    // 100 expected per class, sd about 8.7
    assert!(counts.iter().all(|&n| (65..=135).contains(&n)), "{counts:?}");
}
