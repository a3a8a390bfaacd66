use crate::error::{Error, Result};
use crate::flowfield::DirectionField;

/// Orientations quantized into `180 / tau_step` bins. Bin `b` is centered on
/// `b * tau_step` degrees, so bin 0 wraps around 0/180. `None` marks pixels
/// excluded from matching (background).
#[derive(Clone, Debug, PartialEq)]
pub struct AngleSetImage {
    width: usize,
    height: usize,
    tau_step: f64,
    bin_count: usize,
    bins: Vec<Option<u16>>,
}

/// Validates a bin width and returns the bin count.
pub(crate) fn bin_count_for(tau_step: f64) -> Result<usize> {
    if !(tau_step > 0.0 && tau_step <= 180.0) {
        return Err(Error::Config(format!("angle tolerance {tau_step} must be in (0, 180]")));
    }
    let n = (180.0 / tau_step).round();
    if (n * tau_step - 180.0).abs() > 1e-9 {
        return Err(Error::Config(format!("angle tolerance {tau_step} does not divide 180")));
    }
    Ok(n as usize)
}

/// Bin of an orientation given in degrees. Values within 1e-9 bin widths of
/// a boundary snap to the upper bin so that `theta` and `theta + 180` always
/// agree despite rounding.
#[inline]
pub(crate) fn bin_of_degrees(theta_deg: f64, tau_step: f64, bins: usize) -> u16 {
    let mut t = (theta_deg + 0.5 * tau_step) / tau_step;
    if (t - t.round()).abs() < 1e-9 {
        t = t.round();
    }
    (t.floor() as i64).rem_euclid(bins as i64) as u16
}

impl AngleSetImage {
    pub fn new(width: usize, height: usize, tau_step: f64, bins: Vec<Option<u16>>) -> Result<Self> {
        let bin_count = bin_count_for(tau_step)?;
        assert_eq!(bins.len(), width * height);
        if let Some(b) = bins.iter().flatten().find(|&&b| b as usize >= bin_count) {
            return Err(Error::InvalidInput(format!("bin {b} out of range for {bin_count} bins")));
        }
        Ok(Self {
            width,
            height,
            tau_step,
            bin_count,
            bins,
        })
    }

    pub fn excluded(width: usize, height: usize, tau_step: f64) -> Result<Self> {
        Self::new(width, height, tau_step, vec![None; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tau_step(&self) -> f64 {
        self.tau_step
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<u16> {
        self.bins[y * self.width + x]
    }

    pub fn bins(&self) -> &[Option<u16>] {
        &self.bins
    }

    /// Center orientation of a bin in degrees.
    pub fn bin_center(&self, bin: u16) -> f64 {
        bin as f64 * self.tau_step
    }

    pub fn bin_of(&self, theta_deg: f64) -> u16 {
        bin_of_degrees(theta_deg, self.tau_step, self.bin_count)
    }

    pub fn included_count(&self) -> usize {
        self.bins.iter().filter(|b| b.is_some()).count()
    }

    /// Resamples onto a coarser grid, each cell reading the pixel under its
    /// center.
    pub fn downsample_nearest(&self, width: usize, height: usize) -> AngleSetImage {
        let bins = nearest_resample(&self.bins, self.width, self.height, width, height);
        AngleSetImage {
            width,
            height,
            tau_step: self.tau_step,
            bin_count: self.bin_count,
            bins,
        }
    }
}

/// Nearest-neighbor resampling of any per-pixel payload with pixel-center
/// alignment.
pub(crate) fn nearest_resample<T: Copy>(src: &[T], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        let sy = (((y as f64 + 0.5) * sh as f64 / dh as f64).floor() as usize).min(sh - 1);
        for x in 0..dw {
            let sx = (((x as f64 + 0.5) * sw as f64 / dw as f64).floor() as usize).min(sw - 1);
            out.push(src[sy * sw + sx]);
        }
    }
    out
}

/// Quantizes every pixel's orientation into an angle bin.
pub fn discretize_angles(field: &DirectionField, tau_step: f64) -> Result<AngleSetImage> {
    let bin_count = bin_count_for(tau_step)?;
    let bins = field
        .angles()
        .iter()
        .map(|a| Some(bin_of_degrees(a.to_degrees(), tau_step, bin_count)))
        .collect();
    AngleSetImage::new(field.width(), field.height(), tau_step, bins)
}
