use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::rotate::rotate_nearest;
use crate::features::{hypercolumn_dims, rotate_image, Extractor, HypercolumnResampler, RotateFilter};
use crate::flowfield::{discretize_angles, etf, EtfParams};
use crate::image::ImageGrid;

/// Flat list of equal-length vectors with cached Euclidean norms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl FeatureSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
            norms: Vec::new(),
        }
    }

    pub fn from_vectors(dim: usize, vectors: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut s = Self::new(dim);
        for v in vectors {
            s.push(&v)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "feature vector has length {}, expected {}",
                v.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(v);
        self.norms.push(v.iter().map(|x| x * x).sum::<f64>().sqrt());
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    #[inline]
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    #[inline]
    pub fn norm(&self, j: usize) -> f64 {
        self.norms[j]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn append(&mut self, other: FeatureSet) {
        self.data.extend(other.data);
        self.norms.extend(other.norms);
    }
}

/// Mean-centered style hypercolumns grouped by the orientation they exhibit,
/// gathered from every rotation of the style image.
#[derive(Clone, Debug, PartialEq)]
pub struct RotatedStyleDictionary {
    pub tau_step: f64,
    pub layer_dims: Vec<usize>,
    /// Per-channel means of the unrotated style features.
    pub means: Vec<f64>,
    pub bins: Vec<FeatureSet>,
    pub region: u32,
}

impl RotatedStyleDictionary {
    pub fn new(tau_step: f64, layer_dims: Vec<usize>, means: Vec<f64>, bins: Vec<FeatureSet>, region: u32) -> Result<Self> {
        let bin_count = crate::flowfield::bin_count_for(tau_step)?;
        let dim: usize = layer_dims.iter().sum();
        if bins.len() != bin_count {
            return Err(Error::InvalidInput(format!("{} bins given, expected {bin_count}", bins.len())));
        }
        if means.len() != dim || bins.iter().any(|b| b.dim() != dim) {
            return Err(Error::InvalidInput("dictionary vectors disagree with the layer dims".into()));
        }
        Ok(Self {
            tau_step,
            layer_dims,
            means,
            bins,
            region,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// False when every bin is empty.
    pub fn is_usable(&self) -> bool {
        self.bins.iter().any(|b| !b.is_empty())
    }

    pub fn populations(&self) -> Vec<usize> {
        self.bins.iter().map(FeatureSet::len).collect()
    }

    pub fn total_len(&self) -> usize {
        self.bins.iter().map(FeatureSet::len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DictionaryParams {
    pub tau_step: f64,
    pub etf: EtfParams,
    pub downsample: usize,
    pub region: u32,
}

/// Pixel span `[lo, hi)` covered by cell `i` of `cells` along an axis of
/// `n` pixels.
fn cell_span(i: usize, cells: usize, n: usize) -> (usize, usize) {
    (i * n / cells, ((i + 1) * n / cells).max(i * n / cells + 1))
}

/// Included cells of one rotated pass: `(cell index, bin)`.
fn select_cells(
    width: usize,
    height: usize,
    gw: usize,
    gh: usize,
    bins: &[Option<u16>],
    valid: &[bool],
    mask: Option<&[f64]>,
) -> Vec<(usize, u16)> {
    let mut out = Vec::new();
    for cy in 0..gh {
        let (y0, y1) = cell_span(cy, gh, height);
        for cx in 0..gw {
            let (x0, x1) = cell_span(cx, gw, width);
            let mut all_valid = true;
            let mut mask_sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    all_valid &= valid[y * width + x];
                    if let Some(m) = mask {
                        mask_sum += m[y * width + x];
                    }
                }
            }
            if !all_valid {
                continue;
            }
            if mask.is_some() && mask_sum / (((x1 - x0) * (y1 - y0)) as f64) < 0.5 {
                continue;
            }
            let sx = (((cx as f64 + 0.5) * width as f64 / gw as f64).floor() as usize).min(width - 1);
            let sy = (((cy as f64 + 0.5) * height as f64 / gh as f64).floor() as usize).min(height - 1);
            if let Some(b) = bins[sy * width + sx] {
                out.push((cy * gw + cx, b));
            }
        }
    }
    out
}

/// Raw (uncentered) vectors of one rotation, already shifted into their
/// final bins.
struct Pass {
    per_bin: Vec<Vec<usize>>,
    vectors: Vec<f64>,
}

/// Extracts the style's features at every rotation `r * tau_step` and files
/// each valid cell under its rotated orientation bin.
///
/// `mask` (same size as the style, first channel) restricts collection to
/// cells whose block average is at least 0.5. An all-zero mask yields a
/// dictionary with every bin empty.
pub fn build_style_dictionary(
    style: &ImageGrid,
    mask: Option<&ImageGrid>,
    params: DictionaryParams,
    extractor: &Extractor,
) -> Result<RotatedStyleDictionary> {
    let (w, h) = (style.width(), style.height());
    if style.channels() != 3 {
        return Err(Error::InvalidInput("style image must have 3 channels".into()));
    }
    if let Some(m) = mask {
        if (m.width(), m.height()) != (w, h) {
            return Err(Error::InvalidInput(format!(
                "style mask is {}x{}, style is {w}x{h}",
                m.width(),
                m.height()
            )));
        }
    }
    let (gw, gh) = hypercolumn_dims(w, h, params.downsample)?;
    let angles = discretize_angles(&etf(&style.to_gray(), params.etf), params.tau_step)?;
    let bin_count = angles.bin_count();
    let mask_plane: Option<Vec<f64>> = mask.map(|m| (0..w * h).map(|i| m.data()[i * m.channels()]).collect());
    let layer_dims = extractor.tap_channels();
    let dim: usize = layer_dims.iter().sum();

    let run_pass = |r: usize| -> Result<Pass> {
        let deg = r as f64 * params.tau_step;
        let (rotated, valid) = rotate_image(style, deg, RotateFilter::Bilinear);
        let bins = rotate_nearest(angles.bins(), w, h, deg, None);
        let rmask = mask_plane.as_ref().map(|m| rotate_nearest(m, w, h, deg, 0.0));
        let pass = extractor.forward(&rotated)?;
        let hc = HypercolumnResampler::new(&pass.features, params.downsample)?.apply(&pass.features)?;
        let cells = select_cells(w, h, gw, gh, &bins, valid.data(), rmask.as_deref());
        let mut per_bin = vec![Vec::new(); bin_count];
        let mut vectors = Vec::with_capacity(cells.len() * dim);
        for (k, (cell, b)) in cells.into_iter().enumerate() {
            per_bin[(b as usize + r) % bin_count].push(k);
            vectors.extend_from_slice(hc.cell(cell));
        }
        Ok(Pass { per_bin, vectors })
    };

    let passes: Vec<Pass> = (0..bin_count).into_par_iter().map(run_pass).collect::<Result<_>>()?;

    // Means over the unrotated pass's included cells; all cells when the
    // mask leaves none.
    let first = &passes[0];
    let mut means = vec![0.0; dim];
    let n0 = first.vectors.len() / dim.max(1);
    if n0 > 0 {
        for v in first.vectors.chunks_exact(dim) {
            means.iter_mut().zip(v).for_each(|(m, x)| *m += x);
        }
        means.iter_mut().for_each(|m| *m /= n0 as f64);
    } else {
        let pass = extractor.forward(style)?;
        means = HypercolumnResampler::new(&pass.features, params.downsample)?
            .apply(&pass.features)?
            .means;
    }

    let mut bins: Vec<FeatureSet> = vec![FeatureSet::new(dim); bin_count];
    let mut centered = vec![0.0; dim];
    for pass in passes {
        for (b, members) in pass.per_bin.iter().enumerate() {
            let mut set = FeatureSet::new(dim);
            for &k in members {
                let v = &pass.vectors[k * dim..(k + 1) * dim];
                centered.iter_mut().zip(v.iter().zip(&means)).for_each(|(c, (x, m))| *c = x - m);
                set.push(&centered)?;
            }
            bins[b].append(set);
        }
    }
    RotatedStyleDictionary::new(params.tau_step, layer_dims, means, bins, params.region)
}
