use crate::flowfield::{fold_angle, DirectionField};
use crate::image::ImageGrid;

/// Mirror index without repeating the edge sample (`-1 -> 1`, `n -> n-2`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Sobel derivatives `(gx, gy)` per pixel, scaled so a unit ramp yields 1.
/// The first channel is used.
pub(crate) fn sobel(gray: &ImageGrid) -> Vec<[f64; 2]> {
    let (w, h) = (gray.width(), gray.height());
    let at = |x: isize, y: isize| gray.get(reflect(x, w), reflect(y, h), 0);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            out.push([gx / 8.0, gy / 8.0]);
        }
    }
    out
}

/// Gradient magnitude and tangent orientation (gradient rotated by 90
/// degrees). Angles are measured in image coordinates, x right and y down.
/// Flat pixels get angle 0 and magnitude 0.
pub fn image_gradient(gray: &ImageGrid) -> DirectionField {
    let g = sobel(gray);
    let magnitude: Vec<f64> = g.iter().map(|[gx, gy]| gx.hypot(*gy)).collect();
    let angle = g
        .iter()
        .zip(&magnitude)
        .map(|([gx, gy], &m)| if m > 0.0 { fold_angle(-gy, *gx) } else { 0.0 })
        .collect();
    DirectionField::new(gray.width(), gray.height(), angle, magnitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_image_is_flat() {
        let f = image_gradient(&ImageGrid::filled(6, 5, 1, 0.4));
        assert!(f.magnitudes().iter().all(|&m| m == 0.0));
        assert!(f.angles().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn horizontal_ramp_has_vertical_tangent() {
        let img = ImageGrid::from_fn(8, 8, 1, |x, _, _| x as f64 * 0.1);
        let f = image_gradient(&img);
        for y in 1..7 {
            for x in 1..7 {
                assert!((f.angle(x, y) - PI / 2.0).abs() < 1e-12);
                assert!((f.magnitude(x, y) - 0.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diagonal_ramp_tangent_is_135_degrees() {
        let img = ImageGrid::from_fn(8, 8, 1, |x, y, _| (x + y) as f64 * 0.05);
        let f = image_gradient(&img);
        for y in 1..7 {
            for x in 1..7 {
                assert!((f.angle(x, y) - 0.75 * PI).abs() < 1e-12, "{}", f.angle(x, y));
            }
        }
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(-1, 1), 0);
        assert_eq!(reflect(2, 2), 0);
    }
}
