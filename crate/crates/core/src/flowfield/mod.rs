//! Orientation fields: image gradients, edge tangent flow, exact distance
//! transforms and the discretization of orientations into angle bins.

mod angles;
mod contour;
mod distance;
mod etf;
mod gradient;

pub use angles::{discretize_angles, AngleSetImage};
pub(crate) use angles::{bin_count_for, nearest_resample};
pub use contour::{binarize_guidance, contour_direction_field, direction_field_rgb, ContourFlow, LinePolarity};
pub use distance::edge_distance;
pub use etf::{etf, EtfParams};
pub use gradient::image_gradient;

use std::f64::consts::PI;

/// Per-pixel orientation in `[0, pi)` with a non-negative strength.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionField {
    width: usize,
    height: usize,
    angle: Vec<f64>,
    magnitude: Vec<f64>,
}

impl DirectionField {
    pub fn new(width: usize, height: usize, angle: Vec<f64>, magnitude: Vec<f64>) -> Self {
        assert_eq!(angle.len(), width * height);
        assert_eq!(magnitude.len(), width * height);
        debug_assert!(angle.iter().all(|a| (0.0..PI).contains(a)));
        Self {
            width,
            height,
            angle,
            magnitude,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn angle(&self, x: usize, y: usize) -> f64 {
        self.angle[y * self.width + x]
    }

    #[inline]
    pub fn magnitude(&self, x: usize, y: usize) -> f64 {
        self.magnitude[y * self.width + x]
    }

    pub fn angles(&self) -> &[f64] {
        &self.angle
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitude
    }
}

/// Folds the orientation of vector `(x, y)` into `[0, pi)`.
#[inline]
pub fn fold_angle(x: f64, y: f64) -> f64 {
    let mut a = y.atan2(x);
    if a < 0.0 {
        a += PI;
    }
    if a >= PI {
        a -= PI;
    }
    a
}

/// Smallest difference between two orientations, in `[0, pi/2]`.
pub fn orientation_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

/// Circular variance of orientations (doubled-angle form), in `[0, 1]`.
pub fn circular_variance(angles: impl IntoIterator<Item = f64>) -> f64 {
    let (mut c, mut s, mut n) = (0.0, 0.0, 0usize);
    for a in angles {
        c += (2.0 * a).cos();
        s += (2.0 * a).sin();
        n += 1;
    }
    if n == 0 {
        return 0.0;
    }
    1.0 - (c * c + s * s).sqrt() / n as f64
}
