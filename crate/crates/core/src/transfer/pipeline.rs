use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result, StageContext};
use crate::features::{
    build_extractor, build_style_dictionary, dictionary_key, DictionaryCache, DictionaryParams, Extractor,
    RotatedStyleDictionary,
};
use crate::flowfield::nearest_resample;
use crate::geometry::{touched_texels, uv_coverage, Filter, Mesh};
use crate::image::{ImageGrid, Mask};
use crate::transfer::{
    camera_rig, color_match, precompute_viewpoints, region_map, stylize_scale, ColorTransform, LossRecord, Observer,
    OptimState, PrecomputedViewpoint, TransferConfig,
};

/// A style exemplar with an optional partial mask (same size, first
/// channel, threshold 0.5).
#[derive(Clone, Debug)]
pub struct StyleInput {
    pub image: ImageGrid,
    pub mask: Option<ImageGrid>,
}

#[derive(Clone, Debug)]
pub struct TransferInputs {
    pub mesh: Mesh,
    /// Content texture; ignored when the config asks for random init.
    pub content: Option<ImageGrid>,
    /// Guidance texture with painted direction lines.
    pub guidance: ImageGrid,
    /// Gray texture selecting the style per texel; style `k` of `n` is the
    /// value `k / (n - 1)`.
    pub style_regions: Option<ImageGrid>,
    pub styles: Vec<StyleInput>,
}

#[derive(Clone, Debug)]
pub struct TransferOutput {
    /// Final texture, clamped to `[0, 1]`.
    pub texture: ImageGrid,
    /// Starting texture after color matching, before any optimization.
    pub color_matched: ImageGrid,
    pub color_transforms: Vec<Option<ColorTransform>>,
    pub history: Vec<LossRecord>,
    /// Viewpoints of the finest scale.
    pub viewpoints: Vec<PrecomputedViewpoint>,
    pub timings: Vec<(&'static str, Duration)>,
}

/// `beta * original + (1 - beta) * optimized`.
pub fn multiscale_blend(optimized: &ImageGrid, original: &ImageGrid, beta: f64) -> Result<ImageGrid> {
    if !optimized.same_shape(original) {
        return Err(Error::InvalidInput("blended textures differ in size".into()));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Config(format!("beta {beta} must be in [0, 1]")));
    }
    let data = optimized
        .data()
        .iter()
        .zip(original.data())
        .map(|(&o, &c)| if beta == 0.0 { o } else if beta == 1.0 { c } else { beta * c + (1.0 - beta) * o })
        .collect();
    ImageGrid::from_vec(optimized.width(), optimized.height(), optimized.channels(), data)
}

/// Region of every texel, read from the style-region texture at the texel
/// center.
pub fn texel_regions(style_regions: &ImageGrid, styles: usize, width: usize, height: usize) -> Vec<u32> {
    let ids = region_map(style_regions, styles);
    nearest_resample(&ids, style_regions.width(), style_regions.height(), width, height)
}

fn style_pixels(style: &StyleInput) -> Vec<[f64; 3]> {
    let img = style.image.to_rgb();
    (0..img.pixel_count())
        .filter(|&i| match &style.mask {
            Some(m) => m.data()[i * m.channels()] >= 0.5,
            None => true,
        })
        .map(|i| {
            let p = &img.data()[i * 3..i * 3 + 3];
            [p[0], p[1], p[2]]
        })
        .collect()
}

/// Matches the color statistics of each region's used texels to its style.
/// Unused texels and regions with fewer than two samples are left as they
/// are. The result is clamped to `[0, 1]`.
pub fn color_match_texture(
    texture: &ImageGrid,
    used: &Mask,
    regions: Option<&[u32]>,
    styles: &[StyleInput],
) -> Result<(ImageGrid, Vec<Option<ColorTransform>>)> {
    let mut out = texture.clone();
    let mut transforms = Vec::with_capacity(styles.len());
    for (k, style) in styles.iter().enumerate() {
        let texels: Vec<usize> = (0..texture.pixel_count())
            .filter(|&i| used.data()[i] && regions.map_or(true, |r| r[i] == k as u32))
            .collect();
        let source: Vec<[f64; 3]> = texels
            .iter()
            .map(|&i| {
                let p = &texture.data()[i * 3..i * 3 + 3];
                [p[0], p[1], p[2]]
            })
            .collect();
        let target = style_pixels(style);
        if source.len() < 2 || target.len() < 2 {
            log::warn!("style region {k}: too few samples for color matching, left unchanged");
            transforms.push(None);
            continue;
        }
        let t = color_match(&source, &target)?;
        let data = out.data_mut();
        for (&i, &c) in texels.iter().zip(&source) {
            let y = t.apply(c);
            for ch in 0..3 {
                data[i * 3 + ch] = y[ch].clamp(0.0, 1.0);
            }
        }
        transforms.push(Some(t));
    }
    Ok((out, transforms))
}

fn scaled(image: &ImageGrid, divisor: usize) -> ImageGrid {
    if divisor == 1 {
        image.clone()
    } else {
        image.downscale(divisor)
    }
}

fn restore_inactive(texture: &mut ImageGrid, original: &ImageGrid, active: &Mask) {
    let ch = texture.channels();
    let src = original.data();
    for (i, v) in texture.data_mut().iter_mut().enumerate() {
        if !active.data()[i / ch] {
            *v = src[i];
        }
    }
}

fn build_dictionaries(
    styles: &[StyleInput],
    divisor: usize,
    config: &TransferConfig,
    extractor: &Extractor,
) -> Result<Vec<RotatedStyleDictionary>> {
    let cache = config.dictionary_cache.as_ref().map(DictionaryCache::new);
    styles
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let image = scaled(&s.image.to_rgb(), divisor);
            let mask = s.mask.as_ref().map(|m| scaled(m, divisor));
            let params = DictionaryParams {
                tau_step: config.tau_step,
                etf: config.etf_style,
                downsample: config.feature_downsample,
                region: k as u32,
            };
            let key = cache.as_ref().map(|_| dictionary_key(&image, mask.as_ref(), &params, extractor));
            if let (Some(c), Some(key)) = (&cache, &key) {
                if let Some(d) = c.load(key, params.region) {
                    log::info!("style {k}: dictionary loaded from cache");
                    return Ok(d);
                }
            }
            let d = build_style_dictionary(&image, mask.as_ref(), params, extractor)?;
            if let (Some(c), Some(key)) = (&cache, &key) {
                c.store(key, &d)?;
            }
            log::info!("style {k}: {} features over {} bins", d.total_len(), d.bin_count());
            Ok(d)
        })
        .collect()
}

fn timed<T>(timings: &mut Vec<(&'static str, Duration)>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().stage(stage)?;
    let elapsed = start.elapsed();
    match timings.iter_mut().find(|(s, _)| *s == stage) {
        Some((_, d)) => *d += elapsed,
        None => timings.push((stage, elapsed)),
    }
    Ok(out)
}

/// Full stylization: color matching, per-scale dictionaries and viewpoint
/// precomputation, coarse-to-fine optimization with blending between
/// scales.
pub fn run(config: &TransferConfig, inputs: &TransferInputs, observer: &mut dyn Observer) -> Result<TransferOutput> {
    config.validate().stage("configuration")?;
    let mut timings = Vec::new();
    let n_styles = inputs.styles.len();
    if n_styles == 0 {
        return Err(Error::Config("at least one style image is required".into())).stage("configuration");
    }
    if n_styles > 1 && inputs.style_regions.is_none() {
        return Err(Error::Config("multiple styles require a style-region texture".into())).stage("configuration");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let texture = if config.random_init {
        let n = config.texture_size;
        ImageGrid::from_fn(n, n, 3, |_, _, _| rng.gen::<f64>())
    } else {
        match &inputs.content {
            Some(c) => c.to_rgb(),
            None => {
                return Err(Error::Config("a content texture is required unless random init is set".into()))
                    .stage("configuration")
            }
        }
    };
    let mut schedule_rng = ChaCha8Rng::seed_from_u64(config.seed);
    schedule_rng.set_stream(1);
    let (tw, th) = (texture.width(), texture.height());
    let regions_for = |w: usize, h: usize| -> Option<Vec<u32>> {
        inputs
            .style_regions
            .as_ref()
            .map(|ts| texel_regions(ts, if n_styles > 1 { n_styles } else { 1 }, w, h))
    };

    let extractor = timed(&mut timings, "extractor", || build_extractor(&config.extractor))?;
    let (color_matched, color_transforms) = timed(&mut timings, "color matching", || {
        let used = uv_coverage(&inputs.mesh, tw, th);
        let regions = regions_for(tw, th);
        color_match_texture(&texture, &used, regions.as_deref(), &inputs.styles)
    })?;
    let cameras = timed(&mut timings, "cameras", || camera_rig(&inputs.mesh, config))?;
    let style_regions = inputs.style_regions.as_ref().map(|ts| (ts, n_styles));

    let mut state: Option<OptimState> = None;
    let mut history = Vec::new();
    let mut final_views = Vec::new();
    for scale in 0..config.scales {
        let divisor = config.scale_divisor(scale);
        let original = scaled(&color_matched, divisor);
        let (sw, sh) = (original.width(), original.height());
        let render = config.render_size / divisor;

        let dictionaries = timed(&mut timings, "style dictionaries", || {
            build_dictionaries(&inputs.styles, divisor, config, &extractor)
        })?;
        let present: BTreeSet<u32> = {
            let used = uv_coverage(&inputs.mesh, sw, sh);
            match regions_for(sw, sh) {
                Some(r) => r.iter().zip(used.data()).filter(|(_, &u)| u).map(|(&r, _)| r).collect(),
                None => [0].into(),
            }
        };
        for r in present {
            if !dictionaries.get(r as usize).is_some_and(|d| d.is_usable()) {
                return Err(Error::EmptyRegion(r)).stage("style dictionaries");
            }
        }

        let views = timed(&mut timings, "viewpoints", || {
            precompute_viewpoints(&inputs.mesh, &cameras, &inputs.guidance, style_regions, render, config)
        })?;
        let mut active = uv_coverage(&inputs.mesh, sw, sh);
        for v in &views {
            active.union_with(&touched_texels(&v.fragments, sw, sh, Filter::Bilinear));
        }

        let mut start = match state.take() {
            None => original.clone(),
            Some(prev) => {
                let up = prev.texture.resize_bilinear(sw, sh);
                timed(&mut timings, "blend", || multiscale_blend(&up, &original, config.beta))?
            }
        };
        restore_inactive(&mut start, &original, &active);
        let mut s = OptimState::new(start, active);
        timed(&mut timings, "optimization", || {
            stylize_scale(&mut s, &views, &dictionaries, &extractor, config, scale, &mut schedule_rng, observer)
        })?;
        history.extend(s.history.drain(..));
        state = Some(s);
        if scale + 1 == config.scales {
            final_views = views;
        }
    }
    let state = state.expect("at least one scale");
    let mut texture = state.texture.clamped();
    restore_inactive(&mut texture, &color_matched, &state.active);
    Ok(TransferOutput {
        texture,
        color_matched,
        color_transforms,
        history,
        viewpoints: final_views,
        timings,
    })
}
