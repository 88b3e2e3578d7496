//! Minimal RIFF/WAVE reader for 16-bit PCM mono files.

use std::fs;
use std::path::Path;

use super::AudioWindow;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WavAudio {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes an in-memory WAV file. Samples are scaled by `1/32768`.
pub fn parse_wav(bytes: &[u8]) -> Result<WavAudio> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedHeader("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body = pos + 8;
        match id {
            b"fmt " => {
                if size < 16 || body + 16 > bytes.len() {
                    return Err(Error::MalformedHeader("fmt chunk too short".into()));
                }
                fmt = Some((
                    u16_at(bytes, body),
                    u16_at(bytes, body + 2),
                    u32_at(bytes, body + 4),
                    u16_at(bytes, body + 14),
                ));
            }
            b"data" => {
                let Some((format, channels, sample_rate, bits)) = fmt else {
                    return Err(Error::MalformedHeader("data chunk before fmt chunk".into()));
                };
                if format != 1 {
                    return Err(Error::UnsupportedEncoding(format!("format tag {format}, only PCM (1) is supported")));
                }
                if channels != 1 {
                    return Err(Error::UnsupportedEncoding(format!("{channels} channels, only mono is supported")));
                }
                if bits != 16 {
                    return Err(Error::UnsupportedEncoding(format!("{bits}-bit samples, only 16-bit is supported")));
                }
                let end = body.checked_add(size).filter(|&e| e <= bytes.len()).ok_or_else(|| {
                    Error::MalformedHeader(format!("data chunk claims {size} bytes, file has {}", bytes.len() - body))
                })?;
                let samples = bytes[body..end]
                    .chunks_exact(2)
                    .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                    .collect();
                return Ok(WavAudio { sample_rate, samples });
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body + size + (size & 1);
    }
    Err(Error::MalformedHeader(if fmt.is_some() {
        "no data chunk".into()
    } else {
        "no fmt chunk".into()
    }))
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WavAudio> {
    parse_wav(&fs::read(path)?)
}

/// Reads a file and cuts it into windows of `window_len` samples every
/// `hop` samples. The trailing partial window is dropped.
pub fn load_wav(path: impl AsRef<Path>, expected_rate: u32, window_len: usize, hop: usize) -> Result<Vec<AudioWindow>> {
    let audio = read_wav(path)?;
    if audio.sample_rate != expected_rate {
        return Err(Error::RateMismatch { expected: expected_rate, found: audio.sample_rate });
    }
    Ok(windows(&audio.samples, audio.sample_rate, window_len, hop))
}

pub fn windows(samples: &[f32], sample_rate: u32, window_len: usize, hop: usize) -> Vec<AudioWindow> {
    let hop = hop.max(1);
    let mut out = Vec::new();
    let mut start = 0;
    while start + window_len <= samples.len() {
        out.push(AudioWindow { samples: samples[start..start + window_len].to_vec(), sample_rate });
        start += hop;
    }
    out
}

/// Encodes mono 16-bit PCM. Values are clamped to `[-1, 1)`.
pub fn encode_wav(samples: &[f32], sample_rate: u32) -> Vec<u8> {
    let data_len = (samples.len() * 2) as u32;
    let mut b = Vec::with_capacity(44 + samples.len() * 2);
    b.extend_from_slice(b"RIFF");
    b.extend_from_slice(&(36 + data_len).to_le_bytes());
    b.extend_from_slice(b"WAVEfmt ");
    b.extend_from_slice(&16u32.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&1u16.to_le_bytes());
    b.extend_from_slice(&sample_rate.to_le_bytes());
    b.extend_from_slice(&(sample_rate * 2).to_le_bytes());
    b.extend_from_slice(&2u16.to_le_bytes());
    b.extend_from_slice(&16u16.to_le_bytes());
    b.extend_from_slice(b"data");
    b.extend_from_slice(&data_len.to_le_bytes());
    for &s in samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}
