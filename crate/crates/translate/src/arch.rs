//! Architecture hyperparameters shared by the encoder, translator, and
//! decoder builders.

use crate::{Result, TranslateError};

/// Channel counts and strides are fixed for the family; image size and
/// feature width scale it. The spatial side must be divisible by 4 (two
/// stride-2 encoder convs, two 2x decoder upsamplings).
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub image_hw: usize,
    pub feature_dim: usize,
    pub enc_filters: [usize; 4],
    pub enc_strides: [usize; 4],
    pub dec_filters: [usize; 4],
    pub dec_upsamples: [usize; 4],
    pub kernel: usize,
    pub leak: f32,
    pub keep_prob: f32,
}

impl ArchConfig {
    /// Full-scale configuration for 32x32 observations.
    pub fn desk() -> Self {
        ArchConfig {
            image_hw: 32,
            feature_dim: 100,
            enc_filters: [32, 16, 16, 8],
            enc_strides: [1, 2, 1, 2],
            dec_filters: [16, 16, 32, 3],
            dec_upsamples: [2, 1, 2, 1],
            kernel: 5,
            leak: 0.2,
            keep_prob: 0.5,
        }
    }

    /// Scaled-down variant for fast tests: 8x8 images, 8-dim features,
    /// same wiring.
    pub fn tiny() -> Self {
        ArchConfig { image_hw: 8, feature_dim: 8, ..Self::desk() }
    }

    pub fn with_feature_dim(mut self, feature_dim: usize) -> Self {
        self.feature_dim = feature_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_hw % 4 != 0 || self.image_hw < 8 {
            return Err(TranslateError::Config(format!(
                "image size {} must be a multiple of 4 and at least 8",
                self.image_hw
            )));
        }
        if self.feature_dim == 0 {
            return Err(TranslateError::Config("feature_dim must be positive".into()));
        }
        if self.kernel % 2 == 0 {
            return Err(TranslateError::Config("kernel must be odd".into()));
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(TranslateError::Config(format!("keep_prob {} outside (0, 1]", self.keep_prob)));
        }
        Ok(())
    }

    /// Spatial side after each encoder conv, under the floor rule with
    /// padding (kernel - 1) / 2.
    pub fn enc_spatial(&self) -> [usize; 4] {
        let pad = (self.kernel - 1) / 2;
        let mut h = self.image_hw;
        let mut out = [0; 4];
        for i in 0..4 {
            h = (h + 2 * pad - self.kernel) / self.enc_strides[i] + 1;
            out[i] = h;
        }
        out
    }

    /// Side of the decoder's starting map; equals the last encoder map.
    pub fn map_hw(&self) -> usize {
        self.image_hw / 4
    }

    /// Flattened size of the last encoder conv map.
    pub fn flat_dim(&self) -> usize {
        let s = self.enc_spatial();
        s[3] * s[3] * self.enc_filters[3]
    }

    /// Decoder stage input channels: previous stage output (or the
    /// feature map) concatenated with the matching encoder skip, taken in
    /// reverse encoder order.
    pub fn dec_in_channels(&self) -> [usize; 4] {
        let skip = [self.enc_filters[3], self.enc_filters[2], self.enc_filters[1], self.enc_filters[0]];
        let mut prev = self.enc_filters[3];
        let mut out = [0; 4];
        for i in 0..4 {
            out[i] = prev + skip[i];
            prev = self.dec_filters[i];
        }
        out
    }
}
