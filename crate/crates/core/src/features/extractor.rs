//! Small convolutional feature extractor with fixed weights and a
//! hand-written reverse pass (input gradients only).

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::Tensor;
use crate::image::ImageGrid;

const WEIGHT_MAGIC: &[u8; 4] = b"FTXW";
const WEIGHT_VERSION: u32 = 1;

/// ImageNet channel means, used with externally supplied VGG weights.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// 3x3 convolution, stride 1, zero padding 1, followed by ReLU.
    Conv { out_channels: usize },
    /// 2x2 max pooling with stride 2.
    MaxPool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WeightSource {
    Builtin { seed: u64 },
    External(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractorSpec {
    pub layers: Vec<LayerSpec>,
    /// Ordinals of the conv layers (0 = first conv) whose post-ReLU
    /// activations are emitted, in output order.
    pub taps: Vec<usize>,
    pub weights: WeightSource,
    /// Per-channel value subtracted from the input before the first layer.
    pub input_mean: [f64; 3],
}

impl ExtractorSpec {
    /// Four convolutions around one pooling stage, all four tapped.
    pub fn builtin(seed: u64) -> Self {
        use LayerSpec::*;
        Self {
            layers: vec![
                Conv { out_channels: 16 },
                Conv { out_channels: 16 },
                MaxPool,
                Conv { out_channels: 32 },
                Conv { out_channels: 32 },
            ],
            taps: vec![0, 1, 2, 3],
            weights: WeightSource::Builtin { seed },
            input_mean: [0.0; 3],
        }
    }

    /// VGG-16 up to `conv3_3` with the first seven conv outputs tapped.
    pub fn vgg16_prefix(path: impl Into<PathBuf>) -> Self {
        use LayerSpec::*;
        Self {
            layers: vec![
                Conv { out_channels: 64 },
                Conv { out_channels: 64 },
                MaxPool,
                Conv { out_channels: 128 },
                Conv { out_channels: 128 },
                MaxPool,
                Conv { out_channels: 256 },
                Conv { out_channels: 256 },
                Conv { out_channels: 256 },
            ],
            taps: (0..7).collect(),
            weights: WeightSource::External(path.into()),
            input_mean: IMAGENET_MEAN,
        }
    }

    pub fn conv_count(&self) -> usize {
        self.layers.iter().filter(|l| matches!(l, LayerSpec::Conv { .. })).count()
    }

    /// `(in, out)` channel counts of each conv in order.
    pub fn conv_shapes(&self) -> Vec<(usize, usize)> {
        let mut ch = 3;
        let mut shapes = Vec::new();
        for l in &self.layers {
            if let LayerSpec::Conv { out_channels } = *l {
                shapes.push((ch, out_channels));
                ch = out_channels;
            }
        }
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        if self.taps.is_empty() {
            return Err(Error::Config("extractor needs at least one tap".into()));
        }
        let n = self.conv_count();
        if let Some(t) = self.taps.iter().find(|&&t| t >= n) {
            return Err(Error::Config(format!("tap {t} does not name one of the {n} conv layers")));
        }
        if self.layers.iter().any(|l| matches!(l, LayerSpec::Conv { out_channels: 0 })) {
            return Err(Error::Config("conv layer with zero channels".into()));
        }
        Ok(())
    }
}

/// Fixed weights of one 3x3 convolution, laid out `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            weight: vec![0.0; out_channels * in_channels * 9],
            bias: vec![0.0; out_channels],
        }
    }

    #[inline]
    fn kernel(&self, o: usize, i: usize) -> &[f64] {
        let k = (o * self.in_channels + i) * 9;
        &self.weight[k..k + 9]
    }
}

#[derive(Clone, Debug)]
pub struct Extractor {
    spec: ExtractorSpec,
    convs: Vec<ConvWeights>,
    /// Layers up to and including the deepest tap.
    active_layers: usize,
}

/// Post-ReLU activations of the tap layers for one input.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps {
    pub taps: Vec<Tensor>,
    pub input_width: usize,
    pub input_height: usize,
}

#[derive(Clone, Debug)]
enum LayerRecord {
    /// Post-ReLU output, needed for the ReLU mask.
    Conv { conv: usize, output: Tensor },
    Pool { argmax: Vec<usize>, input_shape: (usize, usize, usize) },
}

/// Recorded forward evaluation; consumed by [`Extractor::backward`].
#[derive(Clone, Debug)]
pub struct ForwardPass {
    pub features: FeatureMaps,
    records: Vec<LayerRecord>,
}

pub fn build_extractor(spec: &ExtractorSpec) -> Result<Extractor> {
    spec.validate()?;
    let convs = match &spec.weights {
        WeightSource::Builtin { seed } => builtin_weights(spec, *seed),
        WeightSource::External(path) => read_weight_file(path, spec)?,
    };
    Extractor::from_weights(spec.clone(), convs)
}

/// Glorot-uniform weights drawn from a seeded stream; biases are zero.
fn builtin_weights(spec: &ExtractorSpec, seed: u64) -> Vec<ConvWeights> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec.conv_shapes()
        .into_iter()
        .map(|(cin, cout)| {
            let a = (6.0 / ((cin * 9 + cout * 9) as f64)).sqrt();
            let mut w = ConvWeights::zeros(cin, cout);
            w.weight.iter_mut().for_each(|v| *v = rng.gen_range(-a..a));
            w
        })
        .collect()
}

impl Extractor {
    pub fn from_weights(spec: ExtractorSpec, convs: Vec<ConvWeights>) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.conv_shapes();
        if shapes.len() != convs.len() {
            return Err(Error::Weights(format!(
                "spec has {} conv layers but {} weight blocks were given",
                shapes.len(),
                convs.len()
            )));
        }
        for (layer, ((cin, cout), w)) in shapes.iter().zip(&convs).enumerate() {
            if (w.in_channels, w.out_channels) != (*cin, *cout)
                || w.weight.len() != cin * cout * 9
                || w.bias.len() != *cout
            {
                return Err(Error::WeightShape {
                    layer,
                    message: format!(
                        "expected {cin}->{cout} channels, got {}->{}",
                        w.in_channels, w.out_channels
                    ),
                });
            }
        }
        let deepest = *spec.taps.iter().max().expect("validated non-empty");
        let mut seen = 0;
        let mut active_layers = 0;
        for (i, l) in spec.layers.iter().enumerate() {
            if matches!(l, LayerSpec::Conv { .. }) {
                if seen == deepest {
                    active_layers = i + 1;
                    break;
                }
                seen += 1;
            }
        }
        Ok(Self {
            spec,
            convs,
            active_layers,
        })
    }

    pub fn spec(&self) -> &ExtractorSpec {
        &self.spec
    }

    pub fn convs(&self) -> &[ConvWeights] {
        &self.convs
    }

    /// Total hypercolumn length (sum of tapped channel counts).
    pub fn tap_channels(&self) -> Vec<usize> {
        self.spec.taps.iter().map(|&t| self.convs[t].out_channels).collect()
    }

    /// Number of 2x2 pooling stages in front of each tap.
    pub fn tap_pool_depths(&self) -> Vec<usize> {
        let mut depths = Vec::new();
        let mut pools = 0;
        for l in &self.spec.layers {
            match l {
                LayerSpec::MaxPool => pools += 1,
                LayerSpec::Conv { .. } => depths.push(pools),
            }
        }
        self.spec.taps.iter().map(|&t| depths[t]).collect()
    }

    /// SHA-256 over the architecture and every weight.
    pub fn fingerprint(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(format!("{:?}|{:?}|{:?}", self.spec.layers, self.spec.taps, self.spec.input_mean));
        for c in &self.convs {
            for v in c.weight.iter().chain(&c.bias) {
                h.update(v.to_le_bytes());
            }
        }
        h.finalize().into()
    }

    pub fn forward(&self, image: &ImageGrid) -> Result<ForwardPass> {
        if image.channels() != 3 {
            return Err(Error::InvalidInput(format!(
                "extractor input must have 3 channels, got {}",
                image.channels()
            )));
        }
        let mut x = Tensor::from_image(image);
        for c in 0..3 {
            let m = self.spec.input_mean[c];
            if m != 0.0 {
                let n = x.plane_len();
                x.data[c * n..(c + 1) * n].iter_mut().for_each(|v| *v -= m);
            }
        }
        let mut records = Vec::with_capacity(self.active_layers);
        let mut tap_outputs: Vec<Option<Tensor>> = vec![None; self.spec.taps.len()];
        let mut conv_index = 0;
        for layer in &self.spec.layers[..self.active_layers] {
            match layer {
                LayerSpec::Conv { .. } => {
                    let mut y = conv_forward(&x, &self.convs[conv_index]);
                    y.data.iter_mut().for_each(|v| *v = v.max(0.0));
                    for (slot, &t) in tap_outputs.iter_mut().zip(&self.spec.taps) {
                        if t == conv_index {
                            *slot = Some(y.clone());
                        }
                    }
                    records.push(LayerRecord::Conv {
                        conv: conv_index,
                        output: y.clone(),
                    });
                    conv_index += 1;
                    x = y;
                }
                LayerSpec::MaxPool => {
                    if x.width < 2 || x.height < 2 {
                        return Err(Error::InvalidInput(format!(
                            "input {}x{} too small for the extractor's pooling stages",
                            image.width(),
                            image.height()
                        )));
                    }
                    let (y, argmax) = maxpool_forward(&x);
                    records.push(LayerRecord::Pool {
                        argmax,
                        input_shape: x.shape(),
                    });
                    x = y;
                }
            }
        }
        Ok(ForwardPass {
            features: FeatureMaps {
                taps: tap_outputs.into_iter().map(|t| t.expect("every tap is reached")).collect(),
                input_width: image.width(),
                input_height: image.height(),
            },
            records,
        })
    }

    /// Gradient of `sum_k <tap_k, tap_grads_k>` with respect to the input image.
    pub fn backward(&self, pass: &ForwardPass, tap_grads: &[Tensor]) -> Result<ImageGrid> {
        let taps = &pass.features.taps;
        if tap_grads.len() != taps.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} tap gradients, got {}",
                taps.len(),
                tap_grads.len()
            )));
        }
        for (k, (g, t)) in tap_grads.iter().zip(taps).enumerate() {
            if g.shape() != t.shape() {
                return Err(Error::InvalidInput(format!(
                    "tap gradient {k} has shape {:?}, expected {:?}",
                    g.shape(),
                    t.shape()
                )));
            }
        }
        let mut grad: Option<Tensor> = None;
        for record in pass.records.iter().rev() {
            match record {
                LayerRecord::Conv { conv, output } => {
                    let mut g = grad.take().unwrap_or_else(|| {
                        let (c, h, w) = output.shape();
                        Tensor::zeros(c, h, w)
                    });
                    for (tg, &t) in tap_grads.iter().zip(&self.spec.taps) {
                        if t == *conv {
                            g.data.iter_mut().zip(&tg.data).for_each(|(a, b)| *a += b);
                        }
                    }
                    g.data
                        .iter_mut()
                        .zip(&output.data)
                        .for_each(|(gv, &ov)| if ov <= 0.0 { *gv = 0.0 });
                    grad = Some(conv_backward_input(&g, &self.convs[*conv]));
                }
                LayerRecord::Pool { argmax, input_shape } => {
                    let g = grad.take().expect("a conv follows every pool before the deepest tap");
                    let (c, h, w) = *input_shape;
                    let mut gi = Tensor::zeros(c, h, w);
                    for (&src, &v) in argmax.iter().zip(&g.data) {
                        gi.data[src] += v;
                    }
                    grad = Some(gi);
                }
            }
        }
        Ok(grad.expect("at least one conv layer").to_image())
    }
}

/// Accumulates `dst[y][x] += w * src[y+dy][x+dx]` over the valid region.
#[inline]
fn shifted_axpy(dst: &mut [f64], src: &[f64], w: f64, dy: isize, dx: isize, h: usize, width: usize) {
    let y0 = (-dy).max(0) as usize;
    let y1 = (h as isize - dy).min(h as isize).max(0) as usize;
    let x0 = (-dx).max(0) as usize;
    let x1 = (width as isize - dx).min(width as isize).max(0) as usize;
    if x0 >= x1 {
        return;
    }
    for y in y0..y1 {
        let sy = (y as isize + dy) as usize;
        let d = &mut dst[y * width + x0..y * width + x1];
        let s0 = (sy * width) as isize + x0 as isize + dx;
        let s = &src[s0 as usize..s0 as usize + (x1 - x0)];
        for (a, b) in d.iter_mut().zip(s) {
            *a += w * b;
        }
    }
}

fn conv_forward(x: &Tensor, w: &ConvWeights) -> Tensor {
    let (h, width) = (x.height, x.width);
    let n = h * width;
    let mut out = Tensor::zeros(w.out_channels, h, width);
    out.data.par_chunks_mut(n).enumerate().for_each(|(o, plane)| {
        plane.iter_mut().for_each(|v| *v = w.bias[o]);
        for i in 0..w.in_channels {
            let src = x.plane(i);
            let k = w.kernel(o, i);
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = k[ky * 3 + kx];
                    if wv != 0.0 {
                        shifted_axpy(plane, src, wv, ky as isize - 1, kx as isize - 1, h, width);
                    }
                }
            }
        }
    });
    out
}

/// Transposed convolution: gradient with respect to the conv input.
fn conv_backward_input(g: &Tensor, w: &ConvWeights) -> Tensor {
    let (h, width) = (g.height, g.width);
    let n = h * width;
    let mut out = Tensor::zeros(w.in_channels, h, width);
    out.data.par_chunks_mut(n).enumerate().for_each(|(i, plane)| {
        for o in 0..w.out_channels {
            let src = g.plane(o);
            let k = w.kernel(o, i);
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = k[ky * 3 + kx];
                    if wv != 0.0 {
                        // out[y+dy][x+dx] += w * g[y][x]  <=>  out[y'][x'] += w * g[y'-dy][x'-dx]
                        shifted_axpy(plane, src, wv, 1 - ky as isize, 1 - kx as isize, h, width);
                    }
                }
            }
        }
    });
    out
}

fn maxpool_forward(x: &Tensor) -> (Tensor, Vec<usize>) {
    let (c, h, w) = x.shape();
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(c, oh, ow);
    let mut argmax = vec![0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                let mut best = usize::MAX;
                let mut best_v = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let idx = (ch * h + 2 * y + dy) * w + 2 * xx + dx;
                        if x.data[idx] > best_v {
                            best_v = x.data[idx];
                            best = idx;
                        }
                    }
                }
                let o = (ch * oh + y) * ow + xx;
                out.data[o] = best_v;
                argmax[o] = best;
            }
        }
    }
    (out, argmax)
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads a weight file: magic `FTXW`, version, conv count, `(out, in)` per
/// conv, then per conv the `f32` weights (`[out][in][3][3]`) followed by the
/// biases, all little-endian.
pub fn read_weight_file(path: &Path, spec: &ExtractorSpec) -> Result<Vec<ConvWeights>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = bytes.as_slice();
    let trunc = |_| Error::Weights(format!("{} is truncated", path.display()));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(trunc)?;
    if &magic != WEIGHT_MAGIC {
        return Err(Error::Weights(format!("{} is not a weight file", path.display())));
    }
    let version = read_u32(&mut r).map_err(trunc)?;
    if version != WEIGHT_VERSION {
        return Err(Error::Weights(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r).map_err(trunc)? as usize;
    let expected = spec.conv_shapes();
    if count != expected.len() {
        return Err(Error::Weights(format!(
            "file has {count} conv layers, spec expects {}",
            expected.len()
        )));
    }
    let mut shapes = Vec::with_capacity(count);
    for (layer, &(cin, cout)) in expected.iter().enumerate() {
        let out = read_u32(&mut r).map_err(trunc)? as usize;
        let inp = read_u32(&mut r).map_err(trunc)? as usize;
        if (inp, out) != (cin, cout) {
            return Err(Error::WeightShape {
                layer,
                message: format!("file has {inp}->{out} channels, spec expects {cin}->{cout}"),
            });
        }
        shapes.push((inp, out));
    }
    let mut read_f32s = |n: usize| -> Result<Vec<f64>> {
        let mut buf = vec![0u8; n * 4];
        r.read_exact(&mut buf).map_err(trunc)?;
        Ok(buf
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect())
    };
    let mut convs = Vec::with_capacity(count);
    for (cin, cout) in shapes {
        let weight = read_f32s(cin * cout * 9)?;
        let bias = read_f32s(cout)?;
        convs.push(ConvWeights {
            in_channels: cin,
            out_channels: cout,
            weight,
            bias,
        });
    }
    Ok(convs)
}

pub fn write_weight_file(path: &Path, convs: &[ConvWeights]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(WEIGHT_MAGIC);
    buf.extend_from_slice(&WEIGHT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(convs.len() as u32).to_le_bytes());
    for c in convs {
        buf.extend_from_slice(&(c.out_channels as u32).to_le_bytes());
        buf.extend_from_slice(&(c.in_channels as u32).to_le_bytes());
    }
    for c in convs {
        for v in c.weight.iter().chain(&c.bias) {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_spec(seed: u64) -> ExtractorSpec {
        ExtractorSpec {
            layers: vec![LayerSpec::Conv { out_channels: 8 }, LayerSpec::Conv { out_channels: 16 }],
            taps: vec![0, 1],
            weights: WeightSource::Builtin { seed },
            input_mean: [0.0; 3],
        }
    }

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, 3, |_, _, _| rng.gen())
    }

    #[test]
    fn builtin_is_deterministic() {
        let a = build_extractor(&ExtractorSpec::builtin(42)).unwrap();
        let b = build_extractor(&ExtractorSpec::builtin(42)).unwrap();
        assert_eq!(a.convs(), b.convs());
        let c = build_extractor(&ExtractorSpec::builtin(43)).unwrap();
        assert_ne!(a.convs(), c.convs());
    }

    #[test]
    fn tap_shapes() {
        let ex = build_extractor(&tiny_spec(1)).unwrap();
        let pass = ex.forward(&ImageGrid::new(16, 16, 3)).unwrap();
        let shapes: Vec<_> = pass.features.taps.iter().map(Tensor::shape).collect();
        assert_eq!(shapes, vec![(8, 16, 16), (16, 16, 16)]);
        let ex = build_extractor(&ExtractorSpec::builtin(1)).unwrap();
        let pass = ex.forward(&ImageGrid::new(20, 12, 3)).unwrap();
        let shapes: Vec<_> = pass.features.taps.iter().map(Tensor::shape).collect();
        assert_eq!(shapes, vec![(16, 12, 20), (16, 12, 20), (32, 6, 10), (32, 6, 10)]);
        assert_eq!(ex.tap_pool_depths(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn zero_image_gives_zero_activations() {
        let ex = build_extractor(&ExtractorSpec::builtin(5)).unwrap();
        let pass = ex.forward(&ImageGrid::new(8, 8, 3)).unwrap();
        assert!(pass.features.taps.iter().all(|t| t.data.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn delta_kernel_is_relu() {
        let spec = ExtractorSpec {
            layers: vec![LayerSpec::Conv { out_channels: 3 }],
            taps: vec![0],
            weights: WeightSource::Builtin { seed: 0 },
            input_mean: [0.0; 3],
        };
        let mut w = ConvWeights::zeros(3, 3);
        for c in 0..3 {
            w.weight[(c * 3 + c) * 9 + 4] = 1.0;
        }
        let ex = Extractor::from_weights(spec, vec![w]).unwrap();
        let img = ImageGrid::from_fn(5, 4, 3, |x, y, c| x as f64 * 0.3 - y as f64 * 0.2 + c as f64 * 0.1 - 0.4);
        let pass = ex.forward(&img).unwrap();
        let out = pass.features.taps[0].to_image();
        for (o, i) in out.data().iter().zip(img.data()) {
            assert_eq!(*o, i.max(0.0));
        }
    }

    #[test]
    fn zero_tap_grads_give_zero_input_grad() {
        let ex = build_extractor(&ExtractorSpec::builtin(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = ex.forward(&random_image(&mut rng, 8, 8)).unwrap();
        let grads: Vec<Tensor> = pass.features.taps.iter().map(|t| Tensor::zeros(t.channels, t.height, t.width)).collect();
        let g = ex.backward(&pass, &grads).unwrap();
        assert!(g.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxpool_routes_to_argmax() {
        let spec = ExtractorSpec {
            layers: vec![LayerSpec::Conv { out_channels: 1 }, LayerSpec::MaxPool, LayerSpec::Conv { out_channels: 1 }],
            taps: vec![1],
            weights: WeightSource::Builtin { seed: 0 },
            input_mean: [0.0; 3],
        };
        let mut c0 = ConvWeights::zeros(3, 1);
        c0.weight[4] = 1.0; // center tap of channel 0
        let mut c1 = ConvWeights::zeros(1, 1);
        c1.weight[4] = 1.0;
        let ex = Extractor::from_weights(spec, vec![c0, c1]).unwrap();
        let img = ImageGrid::from_fn(2, 2, 3, |x, y, c| if c == 0 { [[0.1, 0.2], [0.9, 0.3]][y][x] } else { 0.0 });
        let pass = ex.forward(&img).unwrap();
        let mut g = Tensor::zeros(1, 1, 1);
        g.data[0] = 1.0;
        let grad = ex.backward(&pass, &[g]).unwrap();
        let nonzero: Vec<_> = (0..2)
            .flat_map(|y| (0..2).map(move |x| (x, y)))
            .filter(|&(x, y)| grad.get(x, y, 0) != 0.0)
            .collect();
        assert_eq!(nonzero, vec![(0, 1)]);
        assert_eq!(grad.get(0, 1, 0), 1.0);
    }

    /// Explicit Jacobian of a linear (all-positive) two-conv network,
    /// assembled column by column from unit impulses through the forward
    /// map, compared against the reverse pass row by row.
    #[test]
    fn backward_matches_dense_jacobian() {
        let spec = ExtractorSpec {
            layers: vec![LayerSpec::Conv { out_channels: 2 }, LayerSpec::Conv { out_channels: 2 }],
            taps: vec![0, 1],
            weights: WeightSource::Builtin { seed: 0 },
            input_mean: [0.0; 3],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut c0 = ConvWeights::zeros(3, 2);
        let mut c1 = ConvWeights::zeros(2, 2);
        c0.weight.iter_mut().for_each(|v| *v = rng.gen_range(0.01..1.0));
        c1.weight.iter_mut().for_each(|v| *v = rng.gen_range(0.01..1.0));
        c0.bias = vec![1.0; 2];
        c1.bias = vec![1.0; 2];
        let ex = Extractor::from_weights(spec, vec![c0, c1]).unwrap();
        let base = ImageGrid::from_fn(6, 6, 3, |_, _, _| rng.gen_range(0.1..1.0));
        let pass = ex.forward(&base).unwrap();
        let flat = |fm: &FeatureMaps| fm.taps.iter().flat_map(|t| t.data.clone()).collect::<Vec<f64>>();
        let y0 = flat(&pass.features);
        let n_in = base.data().len();
        // Network is affine on positive inputs: J e_k = f(x + e_k) - f(x).
        let mut jac = vec![vec![0.0; n_in]; y0.len()];
        for k in 0..n_in {
            let mut x = base.clone();
            x.data_mut()[k] += 1.0;
            let yk = flat(&ex.forward(&x).unwrap().features);
            for (r, row) in jac.iter_mut().enumerate() {
                row[k] = yk[r] - y0[r];
            }
        }
        for _ in 0..5 {
            let grads: Vec<Tensor> = pass
                .features
                .taps
                .iter()
                .map(|t| {
                    let mut g = Tensor::zeros(t.channels, t.height, t.width);
                    g.data.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..1.0));
                    g
                })
                .collect();
            let gflat: Vec<f64> = grads.iter().flat_map(|t| t.data.clone()).collect();
            let back = ex.backward(&pass, &grads).unwrap();
            for k in 0..n_in {
                let expected: f64 = jac.iter().zip(&gflat).map(|(row, g)| row[k] * g).sum();
                assert!((back.data()[k] - expected).abs() < 1e-9 * expected.abs().max(1.0));
            }
        }
    }

    #[test]
    fn finite_differences() {
        let ex = build_extractor(&ExtractorSpec::builtin(17)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 10, 10);
        let pass = ex.forward(&img).unwrap();
        let ones: Vec<Tensor> = pass
            .features
            .taps
            .iter()
            .map(|t| Tensor {
                data: vec![1.0; t.data.len()],
                ..t.clone()
            })
            .collect();
        let grad = ex.backward(&pass, &ones).unwrap();
        let total = |im: &ImageGrid| -> f64 {
            ex.forward(im).unwrap().features.taps.iter().flat_map(|t| t.data.iter()).sum()
        };
        let h = 1e-6;
        let mut ok = 0;
        for _ in 0..40 {
            let k = rng.gen_range(0..img.data().len());
            let mut p = img.clone();
            p.data_mut()[k] += h;
            let mut m = img.clone();
            m.data_mut()[k] -= h;
            let fd = (total(&p) - total(&m)) / (2.0 * h);
            let an = grad.data()[k];
            if (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()).max(1e-6) {
                ok += 1;
            }
        }
        assert!(ok >= 38, "{ok}/40 coordinates agree");
    }

    #[test]
    fn weight_file_roundtrip_and_shape_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        let spec = tiny_spec(3);
        let ex = build_extractor(&spec).unwrap();
        write_weight_file(&path, ex.convs()).unwrap();
        let ext = ExtractorSpec {
            weights: WeightSource::External(path.clone()),
            ..spec.clone()
        };
        let loaded = build_extractor(&ext).unwrap();
        for (a, b) in loaded.convs().iter().zip(ex.convs()) {
            for (x, y) in a.weight.iter().zip(&b.weight) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        let wrong = ExtractorSpec {
            layers: vec![LayerSpec::Conv { out_channels: 8 }, LayerSpec::Conv { out_channels: 12 }],
            ..ext.clone()
        };
        match build_extractor(&wrong).unwrap_err() {
            Error::WeightShape { layer, .. } => assert_eq!(layer, 1),
            e => panic!("unexpected {e}"),
        }
        let missing = ExtractorSpec {
            weights: WeightSource::External(dir.path().join("nope.bin")),
            ..spec
        };
        assert!(matches!(build_extractor(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn taps_must_name_convs() {
        let mut spec = tiny_spec(0);
        spec.taps = vec![2];
        assert!(build_extractor(&spec).is_err());
        spec.taps.clear();
        assert!(build_extractor(&spec).is_err());
    }
}
