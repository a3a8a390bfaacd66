//! Texture optimization: color matching, viewpoint precomputation, the
//! Adam loop over viewpoints and coarse-to-fine scheduling.

mod color;
mod config;
mod optim;
mod pipeline;
mod precompute;

pub use color::{color_match, color_moments, ColorTransform, COLOR_EPS};
pub use config::TransferConfig;
pub use optim::{
    stylize_scale, view_loss, LossRecord, Observer, OptimState, ViewLoss, ViewSchedule, ADAM_BETA1, ADAM_BETA2,
    ADAM_EPS,
};
pub use pipeline::{color_match_texture, multiscale_blend, run, texel_regions, StyleInput, TransferInputs, TransferOutput};
pub use precompute::{camera_rig, precompute_viewpoints, region_map, region_of, PrecomputedViewpoint};
