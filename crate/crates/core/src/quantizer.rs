//! 1-bit Δ-modulation of slowly varying feature trajectories.
//!
//! Each dimension starts from a 5-bit quantization of its first value and
//! then moves up or down by a fixed step per frame, one bit per dimension
//! and frame. Encoder and decoder run the same integrator, kept as an
//! integer step counter so both sides agree bit for bit.
//!
//! Stream layout (little-endian):
//!
//! ```text
//! "HCCQ" | u8 version | u16 D | u32 T
//! per dim: f32 lo | f32 hi | f32 step
//! per dim: u8 init code (5 bits used)
//! payload: (T - 1) * D bits, frame-major, LSB-first within bytes
//! u32 CRC32 of everything before it
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

pub const STREAM_MAGIC: &[u8; 4] = b"HCCQ";
pub const STREAM_VERSION: u8 = 1;
pub const INIT_BITS: u32 = 5;
const LEVELS: u32 = 1 << INIT_BITS;
pub const STEP_FLOOR: f64 = 1e-6;
/// Magic, version, D, T and CRC.
pub const FIXED_HEADER_BITS: u64 = 32 + 8 + 16 + 32 + 32;

/// Per-dimension step and initial-value range.
#[derive(Clone, Debug, PartialEq)]
pub struct StepTable {
    pub lo: Vec<f32>,
    pub hi: Vec<f32>,
    pub step: Vec<f32>,
}

impl StepTable {
    pub fn dims(&self) -> usize {
        self.step.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lo.len() != self.dims() || self.hi.len() != self.dims() {
            return Err(Error::shape("step table columns differ in length"));
        }
        for d in 0..self.dims() {
            if !(self.step[d] > 0.0 && self.step[d].is_finite()) {
                return Err(Error::invalid(format!("step of dim {d} must be positive")));
            }
            if !(self.hi[d] > self.lo[d] && self.lo[d].is_finite() && self.hi[d].is_finite()) {
                return Err(Error::invalid(format!("init range of dim {d} is empty")));
            }
        }
        Ok(())
    }

    fn level(&self, d: usize, code: u8) -> f64 {
        let (lo, hi) = (self.lo[d] as f64, self.hi[d] as f64);
        lo + (hi - lo) * code as f64 / (LEVELS - 1) as f64
    }

    fn code(&self, d: usize, x: f64) -> u8 {
        let (lo, hi) = (self.lo[d] as f64, self.hi[d] as f64);
        let c = ((x - lo) / (hi - lo) * (LEVELS - 1) as f64).round();
        c.clamp(0.0, (LEVELS - 1) as f64) as u8
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Steps from the median absolute frame-to-frame change within each
/// sequence (floored at 1e-6) and init ranges from the min and max.
pub fn calibrate_steps<S: Real>(sequences: &[Tensor<S>]) -> Result<StepTable> {
    let d = sequences.first().map(|s| s.last_dim()).ok_or_else(|| Error::invalid("no calibration features"))?;
    let frames: usize = sequences.iter().map(|s| s.outer()).sum();
    if frames < 2 {
        return Err(Error::invalid("calibration needs at least 2 frames"));
    }
    let mut diffs = vec![Vec::new(); d];
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for s in sequences {
        if s.ndim() != 2 || s.last_dim() != d {
            return Err(Error::shape("calibration sequences must be [T, D] with one D"));
        }
        if !s.is_finite() {
            return Err(Error::NonFinite("calibration features".into()));
        }
        for t in 0..s.outer() {
            for (j, &v) in s.row(t).iter().enumerate() {
                let v = v.as_f64();
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
                if t > 0 {
                    diffs[j].push((v - s.row(t - 1)[j].as_f64()).abs());
                }
            }
        }
    }
    let mut table = StepTable { lo: Vec::with_capacity(d), hi: Vec::with_capacity(d), step: Vec::with_capacity(d) };
    for j in 0..d {
        let step = if diffs[j].is_empty() { STEP_FLOOR } else { median(std::mem::take(&mut diffs[j])).max(STEP_FLOOR) };
        let l = lo[j] as f32;
        let mut h = hi[j] as f32;
        if h <= l {
            h = l + (l.abs() * 1e-6).max(1e-6);
        }
        table.lo.push(l);
        table.hi.push(h);
        table.step.push(step as f32);
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBitstream {
    pub table: StepTable,
    pub n_frames: usize,
    pub init_codes: Vec<u8>,
    payload: Vec<u8>,
}

impl FeatureBitstream {
    pub fn n_dims(&self) -> usize {
        self.table.dims()
    }

    pub fn payload_bits(&self) -> usize {
        self.n_frames.saturating_sub(1) * self.n_dims()
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    /// Bit `d` of frame `t` (`t >= 1`).
    pub fn bit(&self, t: usize, d: usize) -> bool {
        let i = (t - 1) * self.n_dims() + d;
        self.payload[i / 8] >> (i % 8) & 1 == 1
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let d = u16::try_from(self.n_dims()).map_err(|_| Error::invalid("more than 65535 dimensions"))?;
        let t = u32::try_from(self.n_frames).map_err(|_| Error::invalid("too many frames"))?;
        let mut b = Vec::with_capacity(15 + 13 * self.n_dims() + self.payload.len());
        b.extend_from_slice(STREAM_MAGIC);
        b.push(STREAM_VERSION);
        b.extend_from_slice(&d.to_le_bytes());
        b.extend_from_slice(&t.to_le_bytes());
        for j in 0..self.n_dims() {
            b.extend_from_slice(&self.table.lo[j].to_le_bytes());
            b.extend_from_slice(&self.table.hi[j].to_le_bytes());
            b.extend_from_slice(&self.table.step[j].to_le_bytes());
        }
        b.extend_from_slice(&self.init_codes);
        b.extend_from_slice(&self.payload);
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 11 {
            return Err(Error::MalformedHeader("bitstream shorter than its fixed header".into()));
        }
        if &bytes[..4] != STREAM_MAGIC {
            return Err(Error::MalformedHeader("bad bitstream magic".into()));
        }
        if bytes[4] != STREAM_VERSION {
            return Err(Error::VersionMismatch { expected: STREAM_VERSION, found: bytes[4] });
        }
        let d = u16::from_le_bytes([bytes[5], bytes[6]]) as usize;
        let t = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
        let payload_len = (t.saturating_sub(1) * d).div_ceil(8);
        let expected = 11 + 13 * d + payload_len + 4;
        if bytes.len() < expected {
            return Err(Error::Truncated(format!(
                "header announces {d} dims x {t} frames ({expected} bytes), stream has {}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::Corrupt(format!("{} bytes after the payload", bytes.len() - expected)));
        }
        let (body, tail) = bytes.split_at(expected - 4);
        let stored = u32::from_le_bytes(tail.try_into().unwrap());
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }
        let f = |i: usize| f32::from_le_bytes(body[i..i + 4].try_into().unwrap());
        let mut table = StepTable { lo: Vec::with_capacity(d), hi: Vec::with_capacity(d), step: Vec::with_capacity(d) };
        for j in 0..d {
            let o = 11 + 12 * j;
            table.lo.push(f(o));
            table.hi.push(f(o + 4));
            table.step.push(f(o + 8));
        }
        table.validate().map_err(|e| Error::MalformedHeader(e.to_string()))?;
        let codes_at = 11 + 12 * d;
        let init_codes = body[codes_at..codes_at + d].to_vec();
        if init_codes.iter().any(|&c| c >= LEVELS as u8) {
            return Err(Error::MalformedHeader("init code uses more than 5 bits".into()));
        }
        let payload = body[codes_at + d..].to_vec();
        Ok(Self { table, n_frames: t, init_codes, payload })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Encodes `[T, D]` features; also returns the encoder's reconstruction.
pub fn dm_encode_traced<S: Real>(features: &Tensor<S>, table: &StepTable) -> Result<(FeatureBitstream, Tensor<f64>)> {
    table.validate()?;
    if features.ndim() != 2 || features.last_dim() != table.dims() {
        return Err(Error::shape(format!(
            "features {:?} do not match a {}-dim step table",
            features.shape(),
            table.dims()
        )));
    }
    if !features.is_finite() {
        return Err(Error::NonFinite("features to encode".into()));
    }
    let (t, d) = (features.outer(), table.dims());
    let init_codes: Vec<u8> = (0..d).map(|j| table.code(j, features.row(0)[j].as_f64())).collect();
    let mut counter = vec![0i64; d];
    let recon = |j: usize, n: i64, codes: &[u8]| table.level(j, codes[j]) + table.step[j] as f64 * n as f64;
    let mut payload = vec![0u8; ((t - 1) * d).div_ceil(8)];
    let mut out = Vec::with_capacity(t * d);
    out.extend((0..d).map(|j| recon(j, 0, &init_codes)));
    for ti in 1..t {
        for j in 0..d {
            let prev = recon(j, counter[j], &init_codes);
            let up = features.row(ti)[j].as_f64() >= prev;
            if up {
                let i = (ti - 1) * d + j;
                payload[i / 8] |= 1 << (i % 8);
                counter[j] += 1;
            } else {
                counter[j] -= 1;
            }
            out.push(recon(j, counter[j], &init_codes));
        }
    }
    let bs = FeatureBitstream { table: table.clone(), n_frames: t, init_codes, payload };
    Ok((bs, Tensor::new([t, d], out)?))
}

pub fn dm_encode<S: Real>(features: &Tensor<S>, table: &StepTable) -> Result<FeatureBitstream> {
    Ok(dm_encode_traced(features, table)?.0)
}

/// Replays the integrator from the stream alone.
pub fn dm_decode(bs: &FeatureBitstream) -> Result<Tensor<f64>> {
    let (t, d) = (bs.n_frames, bs.n_dims());
    if t == 0 || d == 0 {
        return Err(Error::MalformedHeader("bitstream has no frames or no dimensions".into()));
    }
    if bs.init_codes.len() != d || bs.payload.len() < bs.payload_bits().div_ceil(8) {
        return Err(Error::Truncated("payload shorter than the header announces".into()));
    }
    let mut counter = vec![0i64; d];
    let mut out = Vec::with_capacity(t * d);
    let recon = |j: usize, n: i64| bs.table.level(j, bs.init_codes[j]) + bs.table.step[j] as f64 * n as f64;
    out.extend((0..d).map(|j| recon(j, 0)));
    for ti in 1..t {
        for j in 0..d {
            counter[j] += if bs.bit(ti, j) { 1 } else { -1 };
            out.push(recon(j, counter[j]));
        }
    }
    Tensor::new([t, d], out)
}

/// Encode then decode, in the caller's precision.
pub fn dm_roundtrip<S: Real>(features: &Tensor<S>, table: &StepTable) -> Result<Tensor<S>> {
    Ok(dm_decode(&dm_encode(features, table)?)?.cast())
}

/// Header bits sent per stream: fixed fields plus a 5-bit init code per
/// dimension. The step table ships with the model and is not counted.
pub fn header_bits(d: usize) -> u64 {
    FIXED_HEADER_BITS + INIT_BITS as u64 * d as u64
}

/// Bits per second: `D / frame_period` for the payload, plus the header
/// amortized over `n_frames` frames when `include_header` is set.
pub fn bitrate(d: usize, frame_period_s: f64, include_header: bool, n_frames: usize) -> Result<f64> {
    if d == 0 || !(frame_period_s > 0.0) {
        return Err(Error::invalid("bitrate needs D >= 1 and a positive frame period"));
    }
    let payload = d as f64 / frame_period_s;
    if !include_header {
        return Ok(payload);
    }
    if n_frames == 0 {
        return Err(Error::invalid("header amortization needs T >= 1"));
    }
    Ok(payload + header_bits(d) as f64 / (n_frames as f64 * frame_period_s))
}
