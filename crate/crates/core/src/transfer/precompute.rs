use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::hypercolumn_dims;
use crate::flowfield::{contour_direction_field, nearest_resample, AngleSetImage, DirectionField};
use crate::geometry::{fibonacci_viewpoints, rasterize, sample_texture, Camera, Filter, FragmentMap, Mesh};
use crate::image::{ImageGrid, Mask};
use crate::transfer::TransferConfig;

/// Everything about one viewpoint that stays fixed during optimization.
#[derive(Clone, Debug)]
pub struct PrecomputedViewpoint {
    pub camera: Camera,
    pub fragments: FragmentMap,
    pub foreground: Mask,
    /// Screen-space flow of the guidance lines (zero where none).
    pub contour: DirectionField,
    /// Orientation bin of every hypercolumn cell; `None` = not matched.
    pub angles: AngleSetImage,
    /// Style region of every hypercolumn cell, when several styles are used.
    pub regions: Option<Vec<u32>>,
}

impl PrecomputedViewpoint {
    pub fn included_cells(&self) -> usize {
        self.angles.included_count()
    }
}

/// Style region encoded by a gray value for `styles` styles.
pub fn region_of(value: f64, styles: usize) -> u32 {
    if styles <= 1 {
        return 0;
    }
    let top = (styles - 1) as f64;
    (value.clamp(0.0, 1.0) * top).round() as u32
}

/// Region id of every pixel of a style-region texture.
pub fn region_map(style_regions: &ImageGrid, styles: usize) -> Vec<u32> {
    style_regions.to_gray().data().iter().map(|&v| region_of(v, styles)).collect()
}

/// Cameras on a Fibonacci sphere around the mesh, far enough that the
/// bounding sphere fits the field of view.
pub fn camera_rig(mesh: &Mesh, config: &TransferConfig) -> Result<Vec<Camera>> {
    let (center, radius) = mesh.bounding_sphere();
    let fov = config.fov_y_degrees.to_radians();
    let distance = radius.max(1e-9) / (0.5 * fov).sin() * config.camera_margin;
    fibonacci_viewpoints(config.viewpoints, center, distance, fov)
}

/// Rasterizes each camera, renders the guidance texture with nearest
/// lookups, derives its contour flow and reduces angle bins and region ids
/// to the hypercolumn grid. Viewpoints whose render shows no guidance line
/// are kept with every cell excluded.
pub fn precompute_viewpoints(
    mesh: &Mesh,
    cameras: &[Camera],
    guidance: &ImageGrid,
    style_regions: Option<(&ImageGrid, usize)>,
    render_size: usize,
    config: &TransferConfig,
) -> Result<Vec<PrecomputedViewpoint>> {
    let (gw, gh) = hypercolumn_dims(render_size, render_size, config.feature_downsample)?;
    cameras
        .par_iter()
        .enumerate()
        .map(|(k, camera)| {
            let fragments = rasterize(mesh, camera, render_size, render_size)?;
            let (rendered, foreground) = sample_texture(guidance, &fragments, Filter::Nearest);
            let flow = match contour_direction_field(
                &rendered,
                &foreground,
                config.etf_contour,
                config.tau_step,
                config.polarity,
            ) {
                Ok(f) if f.angles.included_count() > 0 => Some(f),
                Ok(_) => {
                    log::warn!("viewpoint {k}: mesh is not visible; no guidance");
                    None
                }
                Err(Error::NoGuidanceLines) => {
                    log::warn!("viewpoint {k}: contour render contains no guidance lines");
                    None
                }
                Err(e) => return Err(e),
            };
            let (contour, angles) = match flow {
                Some(f) => {
                    let a = f.angles.downsample_nearest(gw, gh);
                    (f.field, a)
                }
                None => (
                    DirectionField::new(
                        render_size,
                        render_size,
                        vec![0.0; render_size * render_size],
                        vec![0.0; render_size * render_size],
                    ),
                    AngleSetImage::excluded(gw, gh, config.tau_step)?,
                ),
            };
            let regions = style_regions.map(|(ts, styles)| {
                let (img, _) = sample_texture(ts, &fragments, Filter::Nearest);
                let ids = region_map(&img, styles);
                nearest_resample(&ids, render_size, render_size, gw, gh)
            });
            Ok(PrecomputedViewpoint {
                camera: camera.clone(),
                fragments,
                foreground,
                contour,
                angles,
                regions,
            })
        })
        .collect()
}
