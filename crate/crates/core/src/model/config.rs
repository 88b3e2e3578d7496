use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::conv_out_len;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Two stages with the top-down pathway.
    #[default]
    Cognitive,
    /// Lower stage only; predictions use the short context alone.
    CpcBaseline,
}

/// Which long-term context row a short frame is paired with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TopDownAlignment {
    /// Short frame `t` sees `c_l[t / R]`, the long frame containing it.
    #[default]
    Repeat,
    /// Short frame `t` sees `c_l[t / R - 1]`, the last long frame that has
    /// fully ended (zeros inside the first long frame).
    Lagged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub window_len: usize,
    pub short_filters: Vec<usize>,
    pub short_strides: Vec<usize>,
    pub long_filters: Vec<usize>,
    pub long_strides: Vec<usize>,
    pub enc_channels: usize,
    pub context_dim: usize,
    pub pred_steps: usize,
    pub variant: Variant,
    /// Stop lower-stage gradients from reaching the upper stage through the
    /// top-down input.
    pub detach_top_down: bool,
    /// Stop upper-stage gradients from reaching the short encoder through
    /// the long encoder's input.
    pub detach_bottom_up: bool,
    pub top_down: TopDownAlignment,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            window_len: 20480,
            short_filters: vec![10, 8, 4, 4, 4],
            short_strides: vec![5, 4, 2, 2, 2],
            long_filters: vec![4, 4, 4],
            long_strides: vec![2, 2, 2],
            enc_channels: 512,
            context_dim: 256,
            pred_steps: 12,
            variant: Variant::Cognitive,
            detach_top_down: false,
            detach_bottom_up: false,
            top_down: TopDownAlignment::Repeat,
        }
    }
}

impl ModelConfig {
    pub fn is_cognitive(&self) -> bool {
        self.variant == Variant::Cognitive
    }

    /// Short frames per long frame.
    pub fn frame_ratio(&self) -> usize {
        self.long_strides.iter().product()
    }

    /// Samples per short frame.
    pub fn short_hop(&self) -> usize {
        self.short_strides.iter().product()
    }

    pub fn long_hop(&self) -> usize {
        self.short_hop() * self.frame_ratio()
    }

    pub fn short_frames(&self) -> usize {
        self.short_strides.iter().fold(self.window_len, |l, &s| conv_out_len(l, s))
    }

    pub fn long_frames(&self) -> usize {
        self.long_strides.iter().fold(self.short_frames(), |l, &s| conv_out_len(l, s))
    }

    /// Width of the lower-stage predictor input `g`.
    pub fn predictor_dim(&self) -> usize {
        if self.is_cognitive() {
            2 * self.context_dim
        } else {
            self.context_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_stack("model.short", &self.short_filters, &self.short_strides)?;
        if self.is_cognitive() {
            check_stack("model.long", &self.long_filters, &self.long_strides)?;
        }
        if self.enc_channels == 0 {
            return Err(Error::config("model.enc_channels must be >= 1"));
        }
        if self.context_dim == 0 {
            return Err(Error::config("model.context_dim must be >= 1"));
        }
        if self.pred_steps == 0 {
            return Err(Error::config("model.pred_steps must be >= 1"));
        }
        if self.window_len == 0 {
            return Err(Error::config("model.window_len must be >= 1"));
        }
        if self.is_cognitive() {
            let (ts, r) = (self.short_frames(), self.frame_ratio());
            if ts % r != 0 {
                return Err(Error::config(format!(
                    "model.window_len: {ts} short frames are not a multiple of the frame ratio {r}"
                )));
            }
        }
        Ok(())
    }
}

fn check_stack(what: &str, filters: &[usize], strides: &[usize]) -> Result<()> {
    if filters.is_empty() {
        return Err(Error::config(format!("{what}_filters must not be empty")));
    }
    if filters.len() != strides.len() {
        return Err(Error::config(format!("{what}_filters and {what}_strides differ in length")));
    }
    if filters.iter().chain(strides).any(|&v| v == 0) {
        return Err(Error::config(format!("{what}_filters and {what}_strides must be >= 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_is_10ms_and_80ms() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.short_hop(), 160);
        assert_eq!(cfg.frame_ratio(), 8);
        assert_eq!(cfg.long_hop(), 1280);
        assert_eq!(cfg.short_frames(), 128);
        assert_eq!(cfg.long_frames(), 16);
        cfg.validate().unwrap();
    }

    #[test]
    fn ragged_long_grid_rejected_for_cognitive_only() {
        let cfg = ModelConfig { window_len: 1600, ..ModelConfig::default() };
        assert_eq!(cfg.short_frames(), 10);
        assert!(cfg.validate().is_err());
        let base = ModelConfig { variant: Variant::CpcBaseline, ..cfg };
        base.validate().unwrap();
    }

    #[test]
    fn variant_names() {
        let v: Variant = serde_json::from_str("\"cpc-baseline\"").unwrap();
        assert_eq!(v, Variant::CpcBaseline);
    }
}
