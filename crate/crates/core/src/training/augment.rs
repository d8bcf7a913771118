//! Feature-space augmentation used to build positive samples.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::ModalityFeatures;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    /// Per-channel gain drawn from `[1 - scale_range, 1 + scale_range]`.
    pub scale_range: f64,
    pub noise_sigma: f64,
    pub channel_drop: f64,
    /// Whole-stream shift drawn from `[-temporal_jitter, temporal_jitter]`
    /// segments, edges clamped.
    pub temporal_jitter: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            scale_range: 0.2,
            noise_sigma: 0.1,
            channel_drop: 0.1,
            temporal_jitter: 1,
        }
    }
}

impl AugmentConfig {
    pub fn identity() -> Self {
        AugmentConfig {
            scale_range: 0.0,
            noise_sigma: 0.0,
            channel_drop: 0.0,
            temporal_jitter: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.scale_range) {
            return Err(Error::Config(format!("scale_range {} outside [0, 1]", self.scale_range)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!("noise_sigma {} must be non-negative", self.noise_sigma)));
        }
        if !(0.0..=1.0).contains(&self.channel_drop) {
            return Err(Error::Config(format!("channel_drop {} outside [0, 1]", self.channel_drop)));
        }
        Ok(())
    }
}

/// Scale jitter, additive noise, channel dropout, then temporal shift.
pub fn augment_array(x: &Array2<f64>, config: &AugmentConfig, seed: u64) -> Array2<f64> {
    let mut r = rng::stream(seed, &[0x0061_7567]);
    let (t_len, c_len) = x.dim();
    let mut out = x.clone();
    if config.scale_range > 0.0 {
        for c in 0..c_len {
            let gain = 1.0 + r.random_range(-config.scale_range..=config.scale_range);
            out.column_mut(c).mapv_inplace(|v| v * gain);
        }
    }
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("valid sigma");
        out.mapv_inplace(|v| v + normal.sample(&mut r));
    }
    if config.channel_drop > 0.0 {
        for c in 0..c_len {
            if r.random::<f64>() < config.channel_drop {
                out.column_mut(c).fill(0.0);
            }
        }
    }
    if config.temporal_jitter > 0 {
        let w = config.temporal_jitter as i64;
        let shift = r.random_range(-w..=w);
        if shift != 0 {
            let src = out.clone();
            for t in 0..t_len {
                let s = (t as i64 - shift).clamp(0, t_len as i64 - 1) as usize;
                out.row_mut(t).assign(&src.row(s));
            }
        }
    }
    out
}

pub fn augment_features(video: &ModalityFeatures, config: &AugmentConfig, seed: u64) -> Result<ModalityFeatures> {
    config.validate()?;
    let out = augment_array(&video.to_f64(), config, seed);
    ModalityFeatures::from_f64(video.modality(), &out, video.segment_duration_s())
}
