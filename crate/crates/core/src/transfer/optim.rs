use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{Extractor, HypercolumnResampler, RotatedStyleDictionary};
use crate::geometry::{sample_texture, scatter_gradient, Filter};
use crate::image::{ImageGrid, Mask};
use crate::matching::{nnfm_routed, tv_loss, LossReport};
use crate::transfer::{PrecomputedViewpoint, TransferConfig};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// One row of the loss history.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    /// Step index within its scale.
    pub iteration: usize,
    pub scale: usize,
    pub viewpoint: usize,
    pub nnfm: f64,
    pub tv: f64,
    pub total: f64,
    pub empty_bins: usize,
}

/// Texture being optimized plus its Adam moments.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub texture: ImageGrid,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    /// Adam steps taken since the moments were last reset.
    pub step: u64,
    /// Texels the optimizer may change.
    pub active: Mask,
    pub history: Vec<LossRecord>,
}

impl OptimState {
    pub fn new(texture: ImageGrid, active: Mask) -> Self {
        assert_eq!((active.width(), active.height()), (texture.width(), texture.height()));
        let n = texture.data().len();
        Self {
            texture,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            active,
            history: Vec::new(),
        }
    }

    /// Bias-corrected Adam update of the active texels.
    pub fn adam_step(&mut self, grad: &ImageGrid, lr: f64) -> Result<()> {
        if !grad.same_shape(&self.texture) {
            return Err(Error::InvalidInput(format!(
                "gradient is {}x{}x{}, texture {}x{}x{}",
                grad.width(),
                grad.height(),
                grad.channels(),
                self.texture.width(),
                self.texture.height(),
                self.texture.channels()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - ADAM_BETA1.powi(t);
        let c2 = 1.0 - ADAM_BETA2.powi(t);
        let ch = self.texture.channels();
        let active = self.active.data();
        let x = self.texture.data_mut();
        for (i, &g) in grad.data().iter().enumerate() {
            if !active[i / ch] {
                continue;
            }
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            x[i] -= lr * mh / (vh.sqrt() + ADAM_EPS);
        }
        Ok(())
    }
}

/// Seeded round-robin over viewpoints, reshuffled every pass.
#[derive(Clone, Debug)]
pub struct ViewSchedule {
    order: Vec<usize>,
    pos: usize,
}

impl ViewSchedule {
    pub fn new(count: usize) -> Self {
        Self {
            order: (0..count).collect(),
            pos: count,
        }
    }

    pub fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Progress hooks for a run. All methods default to doing nothing.
pub trait Observer {
    fn on_iteration(&mut self, _record: &LossRecord, _report: &LossReport, _view: &PrecomputedViewpoint) {}
    fn on_snapshot(&mut self, _scale: usize, _iteration: usize, _texture: &ImageGrid) {}
}

impl Observer for () {}

/// Objective and texture gradient for one viewpoint.
pub struct ViewLoss {
    pub report: LossReport,
    pub gradient: ImageGrid,
}

/// Renders the texture from `view`, evaluates `nnfm + lambda * tv` and
/// backpropagates to the texture.
pub fn view_loss(
    texture: &ImageGrid,
    view: &PrecomputedViewpoint,
    dictionaries: &[RotatedStyleDictionary],
    extractor: &Extractor,
    config: &TransferConfig,
) -> Result<ViewLoss> {
    let (rendered, foreground) = sample_texture(texture, &view.fragments, Filter::Bilinear);
    let (tv, tv_grad) = tv_loss(&rendered, &foreground);
    let mut image_grad = tv_grad;
    image_grad.data_mut().iter_mut().for_each(|g| *g *= config.lambda_tv);

    let (nnfm, matches, fallbacks) = if view.angles.included_count() > 0 {
        let pass = extractor.forward(&rendered)?;
        let resampler = HypercolumnResampler::new(&pass.features, config.feature_downsample)?;
        let hc = resampler.apply(&pass.features)?;
        let eval = nnfm_routed(&hc, &view.angles, view.regions.as_deref(), dictionaries)?;
        let tap_grads = resampler.adjoint(&eval.grad)?;
        let g = extractor.backward(&pass, &tap_grads)?;
        image_grad.data_mut().iter_mut().zip(g.data()).for_each(|(a, b)| *a += b);
        (eval.value, eval.matches, eval.empty_bin_fallbacks)
    } else {
        (0.0, vec![None; view.angles.width() * view.angles.height()], 0)
    };
    let gradient = scatter_gradient(&image_grad, &view.fragments, texture.width(), texture.height(), Filter::Bilinear)?;
    Ok(ViewLoss {
        report: LossReport::new(nnfm, tv, config.lambda_tv, matches, fallbacks),
        gradient,
    })
}

/// Runs `config.iterations` Adam steps at one scale, one viewpoint per
/// step.
#[allow(clippy::too_many_arguments)]
pub fn stylize_scale(
    state: &mut OptimState,
    views: &[PrecomputedViewpoint],
    dictionaries: &[RotatedStyleDictionary],
    extractor: &Extractor,
    config: &TransferConfig,
    scale: usize,
    rng: &mut ChaCha8Rng,
    observer: &mut dyn Observer,
) -> Result<()> {
    if config.iterations == 0 {
        return Ok(());
    }
    if views.is_empty() {
        return Err(Error::InvalidInput("no viewpoints to optimize from".into()));
    }
    let mut schedule = ViewSchedule::new(views.len());
    for iteration in 0..config.iterations {
        let k = schedule.next(rng);
        let view = &views[k];
        let loss = view_loss(&state.texture, view, dictionaries, extractor, config)?;
        state.adam_step(&loss.gradient, config.learning_rate)?;
        let record = LossRecord {
            iteration,
            scale,
            viewpoint: k,
            nnfm: loss.report.nnfm,
            tv: loss.report.tv,
            total: loss.report.total,
            empty_bins: loss.report.empty_bin_fallbacks,
        };
        log::debug!(
            "scale {scale} step {iteration} view {k}: nnfm {:.6} tv {:.6} total {:.6}",
            record.nnfm,
            record.tv,
            record.total
        );
        state.history.push(record);
        observer.on_iteration(&record, &loss.report, view);
        if config.snapshot_every > 0 && (iteration + 1) % config.snapshot_every == 0 {
            observer.on_snapshot(scale, iteration + 1, &state.texture);
        }
    }
    Ok(())
}
