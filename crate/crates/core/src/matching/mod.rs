//! Nearest-neighbor feature matching losses and masked total variation.

mod nnfm;
mod tv;

pub use nnfm::{
    cosine_distance, nnfm_basic, nnfm_directional, nnfm_fixed, nnfm_hypercolumn, nnfm_routed, DirectionalEval, Match,
    NnfmValue,
};
pub use tv::tv_loss;

/// `nnfm + lambda * tv`.
pub fn total_loss(nnfm: f64, tv: f64, lambda: f64) -> f64 {
    nnfm + lambda * tv
}

/// Per-evaluation summary of the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub nnfm: f64,
    pub tv: f64,
    pub total: f64,
    /// Matched style vector for every hypercolumn cell; `None` for cells
    /// excluded from matching.
    pub matches: Vec<Option<Match>>,
    /// Cells whose own bin was empty and that searched a neighboring bin.
    pub empty_bin_fallbacks: usize,
}

impl LossReport {
    pub fn new(nnfm: f64, tv: f64, lambda: f64, matches: Vec<Option<Match>>, empty_bin_fallbacks: usize) -> Self {
        Self {
            nnfm,
            tv,
            total: total_loss(nnfm, tv, lambda),
            matches,
            empty_bin_fallbacks,
        }
    }
}
