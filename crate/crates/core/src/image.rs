//! Dense raster containers shared by every stage of the pipeline.

use crate::error::{Error, Result};

/// Row-major grid of real samples with 1 or 3 interleaved channels.
///
/// Values are nominally in `[0, 1]`; optimization may push them outside
/// that range and they are only clamped when written out.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageGrid {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        assert!(channels == 1 || channels == 3, "channel count must be 1 or 3");
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "expected {} samples for {width}x{height}x{channels}, got {}",
                width * height * channels,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a grid by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut img = Self::new(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    let i = img.index(x, y, c);
                    img.data[i] = f(x, y, c);
                }
            }
        }
        img
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.data[i..i + self.channels]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn clamped(&self) -> ImageGrid {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        out
    }

    /// Rec. 601 luma for 3-channel input; single-channel input is copied.
    pub fn to_gray(&self) -> ImageGrid {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Replicates a single channel into three; 3-channel input is copied.
    pub fn to_rgb(&self) -> ImageGrid {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        ImageGrid {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    pub fn dot(&self, other: &ImageGrid) -> f64 {
        debug_assert!(self.same_shape(other));
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Bilinear resampling with pixel-center alignment and clamp-to-edge.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> ImageGrid {
        let plan = ResizePlan::new(self.width, self.height, width, height);
        plan.apply(self)
    }

    /// Downscale by an integer factor. Uses a box average when the factor
    /// divides both dimensions, bilinear resampling otherwise.
    pub fn downscale(&self, factor: usize) -> ImageGrid {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let (w, h) = ((self.width / factor).max(1), (self.height / factor).max(1));
        if self.width % factor != 0 || self.height % factor != 0 {
            return self.resize_bilinear(w, h);
        }
        let norm = 1.0 / (factor * factor) as f64;
        ImageGrid::from_fn(w, h, self.channels, |x, y, c| {
            let mut acc = 0.0;
            for dy in 0..factor {
                for dx in 0..factor {
                    acc += self.get(x * factor + dx, y * factor + dy, c);
                }
            }
            acc * norm
        })
    }
}

/// Per-pixel boolean mask (foreground, validity, used texels).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    /// Pixels whose first channel is at least `threshold`.
    pub fn threshold(image: &ImageGrid, threshold: f64) -> Self {
        let data = (0..image.pixel_count())
            .map(|i| image.data()[i * image.channels()] >= threshold)
            .collect();
        Self::from_vec(image.width(), image.height(), data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn union_with(&mut self, other: &Mask) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    pub fn to_image(&self) -> ImageGrid {
        let data = self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        ImageGrid::from_vec(self.width, self.height, 1, data).expect("mask dims are consistent")
    }
}

/// A single weighted read of a source pixel.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Tap {
    pub index: usize,
    pub weight: f64,
}

/// Bilinear taps at continuous texel coordinate `(tx, ty)` (texel centers at
/// integers), clamped to the edge. Returns pixel indices, not sample indices.
#[inline]
pub(crate) fn bilinear_taps(tx: f64, ty: f64, width: usize, height: usize) -> [Tap; 4] {
    let tx = tx.clamp(0.0, (width - 1) as f64);
    let ty = ty.clamp(0.0, (height - 1) as f64);
    let x0 = tx.floor() as usize;
    let y0 = ty.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = tx - x0 as f64;
    let fy = ty - y0 as f64;
    [
        Tap {
            index: y0 * width + x0,
            weight: (1.0 - fx) * (1.0 - fy),
        },
        Tap {
            index: y0 * width + x1,
            weight: fx * (1.0 - fy),
        },
        Tap {
            index: y1 * width + x0,
            weight: (1.0 - fx) * fy,
        },
        Tap {
            index: y1 * width + x1,
            weight: fx * fy,
        },
    ]
}

/// Linear resampling operator between two grid sizes, usable forwards and
/// as its exact adjoint.
#[derive(Clone, Debug)]
pub struct ResizePlan {
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
    taps: Vec<[Tap; 4]>,
}

impl ResizePlan {
    pub fn new(src_w: usize, src_h: usize, dst_w: usize, dst_h: usize) -> Self {
        let sx = src_w as f64 / dst_w as f64;
        let sy = src_h as f64 / dst_h as f64;
        let mut taps = Vec::with_capacity(dst_w * dst_h);
        for y in 0..dst_h {
            for x in 0..dst_w {
                let tx = (x as f64 + 0.5) * sx - 0.5;
                let ty = (y as f64 + 0.5) * sy - 0.5;
                taps.push(bilinear_taps(tx, ty, src_w, src_h));
            }
        }
        Self {
            src_w,
            src_h,
            dst_w,
            dst_h,
            taps,
        }
    }

    pub fn src_dims(&self) -> (usize, usize) {
        (self.src_w, self.src_h)
    }

    pub fn dst_dims(&self) -> (usize, usize) {
        (self.dst_w, self.dst_h)
    }

    /// Resamples a planar single-channel buffer.
    pub fn apply_plane(&self, src: &[f64], dst: &mut [f64]) {
        debug_assert_eq!(src.len(), self.src_w * self.src_h);
        for (out, taps) in dst.iter_mut().zip(&self.taps) {
            *out = taps.iter().map(|t| t.weight * src[t.index]).sum();
        }
    }

    /// Adjoint of [`apply_plane`](Self::apply_plane), accumulating into `src_grad`.
    pub fn adjoint_plane(&self, dst_grad: &[f64], src_grad: &mut [f64]) {
        for (g, taps) in dst_grad.iter().zip(&self.taps) {
            for t in taps {
                src_grad[t.index] += t.weight * g;
            }
        }
    }

    pub fn apply(&self, image: &ImageGrid) -> ImageGrid {
        let ch = image.channels();
        let mut out = ImageGrid::new(self.dst_w, self.dst_h, ch);
        for (i, taps) in self.taps.iter().enumerate() {
            for c in 0..ch {
                out.data[i * ch + c] = taps
                    .iter()
                    .map(|t| t.weight * image.data[t.index * ch + c])
                    .sum();
            }
        }
        out
    }
}
