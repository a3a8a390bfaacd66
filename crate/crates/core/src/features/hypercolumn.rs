use crate::error::{Error, Result};
use crate::features::{FeatureMaps, Tensor};
use crate::image::ResizePlan;

/// Tap layers resized to one `(W/d) x (H/d)` grid and concatenated per cell.
///
/// Vectors are stored cell-major: cell `i` occupies
/// `data[i * dim .. (i + 1) * dim]`, layer `L` starting at `offsets()[L]`.
/// Values are not mean-centered; `means` holds the per-channel mean over all
/// cells.
#[derive(Clone, Debug, PartialEq)]
pub struct HypercolumnMap {
    pub width: usize,
    pub height: usize,
    pub factor: usize,
    pub layer_dims: Vec<usize>,
    pub data: Vec<f64>,
    pub means: Vec<f64>,
}

impl HypercolumnMap {
    pub fn dim(&self) -> usize {
        self.layer_dims.iter().sum()
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn cell(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.data[i * d..(i + 1) * d]
    }

    /// Start of each layer inside a vector.
    pub fn offsets(&self) -> Vec<usize> {
        layer_offsets(&self.layer_dims)
    }
}

pub(crate) fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    dims.iter()
        .scan(0, |acc, &d| {
            let o = *acc;
            *acc += d;
            Some(o)
        })
        .collect()
}

/// Grid size of the hypercolumn map for an input of `width x height`.
pub fn hypercolumn_dims(width: usize, height: usize, factor: usize) -> Result<(usize, usize)> {
    if factor == 0 {
        return Err(Error::Config("feature downsample factor must be positive".into()));
    }
    let (w, h) = (width / factor, height / factor);
    if w < 1 || h < 1 {
        return Err(Error::InvalidInput(format!(
            "{width}x{height} input is too small for feature downsampling by {factor}"
        )));
    }
    Ok((w, h))
}

/// Bilinear resize of every tap layer onto the hypercolumn grid, with its
/// adjoint for backpropagation.
#[derive(Clone, Debug)]
pub struct HypercolumnResampler {
    plans: Vec<ResizePlan>,
    layer_dims: Vec<usize>,
    width: usize,
    height: usize,
    factor: usize,
}

impl HypercolumnResampler {
    pub fn new(maps: &FeatureMaps, factor: usize) -> Result<Self> {
        let (width, height) = hypercolumn_dims(maps.input_width, maps.input_height, factor)?;
        Ok(Self {
            plans: maps
                .taps
                .iter()
                .map(|t| ResizePlan::new(t.width, t.height, width, height))
                .collect(),
            layer_dims: maps.taps.iter().map(|t| t.channels).collect(),
            width,
            height,
            factor,
        })
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn check(&self, taps: &[(usize, usize, usize)]) -> Result<()> {
        let ok = taps.len() == self.plans.len()
            && taps.iter().zip(&self.plans).zip(&self.layer_dims).all(|((&(c, h, w), p), &ld)| {
                c == ld && p.src_dims() == (w, h)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("feature maps do not match the resampler's layer shapes".into()))
        }
    }

    pub fn apply(&self, maps: &FeatureMaps) -> Result<HypercolumnMap> {
        self.check(&maps.taps.iter().map(Tensor::shape).collect::<Vec<_>>())?;
        let cells = self.width * self.height;
        let dim: usize = self.layer_dims.iter().sum();
        let mut data = vec![0.0; cells * dim];
        let mut plane = vec![0.0; cells];
        let mut offset = 0;
        for (tap, plan) in maps.taps.iter().zip(&self.plans) {
            for c in 0..tap.channels {
                plan.apply_plane(tap.plane(c), &mut plane);
                for (i, &v) in plane.iter().enumerate() {
                    data[i * dim + offset + c] = v;
                }
            }
            offset += tap.channels;
        }
        let mut means = vec![0.0; dim];
        for cell in data.chunks_exact(dim) {
            means.iter_mut().zip(cell).for_each(|(m, v)| *m += v);
        }
        means.iter_mut().for_each(|m| *m /= cells as f64);
        Ok(HypercolumnMap {
            width: self.width,
            height: self.height,
            factor: self.factor,
            layer_dims: self.layer_dims.clone(),
            data,
            means,
        })
    }

    /// Maps a cell-major gradient on the hypercolumn grid back onto the tap
    /// layers.
    pub fn adjoint(&self, grad: &[f64]) -> Result<Vec<Tensor>> {
        let cells = self.width * self.height;
        let dim: usize = self.layer_dims.iter().sum();
        if grad.len() != cells * dim {
            return Err(Error::InvalidInput(format!(
                "hypercolumn gradient has {} values, expected {}",
                grad.len(),
                cells * dim
            )));
        }
        let mut plane = vec![0.0; cells];
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.plans.len());
        for (plan, &channels) in self.plans.iter().zip(&self.layer_dims) {
            let (w, h) = plan.src_dims();
            let mut t = Tensor::zeros(channels, h, w);
            let n = t.plane_len();
            for c in 0..channels {
                for (i, p) in plane.iter_mut().enumerate() {
                    *p = grad[i * dim + offset + c];
                }
                plan.adjoint_plane(&plane, &mut t.data[c * n..(c + 1) * n]);
            }
            offset += channels;
            out.push(t);
        }
        Ok(out)
    }
}

/// One-shot resize of all tap layers onto the `(W/d) x (H/d)` grid.
pub fn downsample_features(maps: &FeatureMaps, factor: usize) -> Result<HypercolumnMap> {
    HypercolumnResampler::new(maps, factor)?.apply(maps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn maps(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FeatureMaps {
        let mut a = Tensor::zeros(3, h, w);
        let mut b = Tensor::zeros(5, h / 2, w / 2);
        a.data.iter_mut().chain(b.data.iter_mut()).for_each(|v| *v = rng.gen());
        FeatureMaps {
            taps: vec![a, b],
            input_width: w,
            input_height: h,
        }
    }

    #[test]
    fn grid_is_input_over_factor() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for d in [2, 4, 8] {
            let hc = downsample_features(&maps(&mut rng, 32, 16), d).unwrap();
            assert_eq!((hc.width, hc.height), (32 / d, 16 / d));
            assert_eq!(hc.dim(), 8);
            assert_eq!(hc.data.len(), hc.cell_count() * 8);
        }
        assert!(downsample_features(&maps(&mut rng, 8, 8), 16).is_err());
    }

    #[test]
    fn constant_layer_stays_constant() {
        let mut t = Tensor::zeros(2, 12, 12);
        t.data.iter_mut().for_each(|v| *v = 0.7);
        let m = FeatureMaps {
            taps: vec![t],
            input_width: 12,
            input_height: 12,
        };
        let hc = downsample_features(&m, 4).unwrap();
        assert!(hc.data.iter().all(|&v| (v - 0.7).abs() < 1e-15));
        assert!(hc.means.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn adjoint_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = maps(&mut rng, 20, 12);
        let r = HypercolumnResampler::new(&m, 4).unwrap();
        let hc = r.apply(&m).unwrap();
        let g: Vec<f64> = (0..hc.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lhs: f64 = hc.data.iter().zip(&g).map(|(a, b)| a * b).sum();
        let back = r.adjoint(&g).unwrap();
        let rhs: f64 = back
            .iter()
            .zip(&m.taps)
            .map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum::<f64>())
            .sum();
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn offsets_follow_layer_dims() {
        assert_eq!(layer_offsets(&[3, 5, 2]), vec![0, 3, 8]);
    }
}
