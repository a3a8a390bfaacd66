use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::features::ExtractorSpec;
use crate::flowfield::{EtfParams, LinePolarity};

/// Every tunable of a stylization run. `Default` gives the reference
/// settings.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferConfig {
    /// Angle bin width in degrees; must divide 180.
    pub tau_step: f64,
    /// Weight of the total-variation term.
    pub lambda_tv: f64,
    pub learning_rate: f64,
    /// Optimization steps per scale.
    pub iterations: usize,
    /// Number of resolutions, each half the next; 1 disables multiscale.
    pub scales: usize,
    /// Weight of the color-matched original when blending between scales.
    pub beta: f64,
    pub viewpoints: usize,
    /// Square render resolution at the finest scale.
    pub render_size: usize,
    /// Square texture size used for random initialization.
    pub texture_size: usize,
    /// Feature maps are resized to `render / feature_downsample`.
    pub feature_downsample: usize,
    pub etf_style: EtfParams,
    pub etf_contour: EtfParams,
    pub seed: u64,
    pub extractor: ExtractorSpec,
    /// Start from uniform noise in `[0, 1]` instead of the content texture.
    pub random_init: bool,
    pub polarity: LinePolarity,
    /// Vertical field of view of the viewpoint cameras, in degrees.
    pub fov_y_degrees: f64,
    /// Camera distance relative to the distance that just frames the
    /// bounding sphere.
    pub camera_margin: f64,
    /// Report the texture every this many iterations (0 = never).
    pub snapshot_every: usize,
    pub dictionary_cache: Option<PathBuf>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            tau_step: 5.0,
            lambda_tv: 2e-5,
            learning_rate: 0.01,
            iterations: 1000,
            scales: 2,
            beta: 0.25,
            viewpoints: 250,
            render_size: 512,
            texture_size: 2048,
            feature_downsample: 4,
            etf_style: EtfParams::new(10, 10),
            etf_contour: EtfParams::new(5, 5),
            seed: 0,
            extractor: ExtractorSpec::builtin(0),
            random_init: false,
            polarity: LinePolarity::DarkOnLight,
            fov_y_degrees: 45.0,
            camera_margin: 1.1,
            snapshot_every: 0,
            dictionary_cache: None,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        crate::flowfield::bin_count_for(self.tau_step)?;
        if self.scales < 1 {
            return bad("scales must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return bad(format!("beta {} must be in [0, 1]", self.beta));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(self.lambda_tv >= 0.0) || !self.lambda_tv.is_finite() {
            return bad(format!("lambda {} must be non-negative", self.lambda_tv));
        }
        if self.viewpoints == 0 {
            return bad("at least one viewpoint is required".into());
        }
        if self.feature_downsample == 0 {
            return bad("feature downsample factor must be positive".into());
        }
        if self.texture_size == 0 {
            return bad("texture size must be positive".into());
        }
        let div = 1usize << (self.scales - 1);
        if self.render_size / div / self.feature_downsample == 0 {
            return bad(format!(
                "render size {} is too small for {} scales and feature downsample {}",
                self.render_size, self.scales, self.feature_downsample
            ));
        }
        if !(self.fov_y_degrees > 0.0 && self.fov_y_degrees < 180.0) {
            return bad(format!("field of view {} must be in (0, 180)", self.fov_y_degrees));
        }
        if !(self.camera_margin >= 1.0) {
            return bad(format!("camera margin {} must be at least 1", self.camera_margin));
        }
        self.extractor.validate()
    }

    /// Resolution divisor of scale `index` (0 = coarsest).
    pub fn scale_divisor(&self, index: usize) -> usize {
        1 << (self.scales - 1 - index)
    }
}
