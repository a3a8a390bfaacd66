use crate::image::{bilinear_taps, ImageGrid, Mask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RotateFilter {
    #[default]
    Bilinear,
    Nearest,
}

/// `(sin, cos)` that is exact at multiples of 90 degrees.
fn sin_cos_degrees(deg: f64) -> (f64, f64) {
    let q = deg / 90.0;
    if q == q.round() {
        match (q as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        deg.to_radians().sin_cos()
    }
}

/// Continuous source position (pixel units, pixel `i` spans `[i, i+1)`) of
/// every output pixel after rotating by `deg` about the image center, or
/// `None` when it falls outside the source.
///
/// Orientations are measured with x right and y down, so content at angle
/// `a` ends up at angle `a + deg`.
pub(crate) fn rotation_sources(width: usize, height: usize, deg: f64) -> Vec<Option<(f64, f64)>> {
    let (s, c) = sin_cos_degrees(deg);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            // Inverse rotation R(-deg).
            let sx = cx + c * px + s * py;
            let sy = cy - s * px + c * py;
            let inside = sx >= 0.0 && sx < width as f64 && sy >= 0.0 && sy < height as f64;
            out.push(inside.then_some((sx, sy)));
        }
    }
    out
}

/// Nearest-neighbor rotation of any per-pixel payload; invalid pixels get
/// `fill`.
pub(crate) fn rotate_nearest<T: Copy>(src: &[T], width: usize, height: usize, deg: f64, fill: T) -> Vec<T> {
    rotation_sources(width, height, deg)
        .into_iter()
        .map(|s| match s {
            Some((sx, sy)) => {
                let (ix, iy) = ((sx.floor() as usize).min(width - 1), (sy.floor() as usize).min(height - 1));
                src[iy * width + ix]
            }
            None => fill,
        })
        .collect()
}

/// Rotates about the image center onto a canvas of the same size. The mask
/// marks output pixels whose source lies inside the original image; invalid
/// pixels are 0.
pub fn rotate_image(image: &ImageGrid, deg: f64, filter: RotateFilter) -> (ImageGrid, Mask) {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    let sources = rotation_sources(w, h, deg);
    let mut out = ImageGrid::new(w, h, ch);
    let mut valid = Mask::new(w, h, false);
    for (i, s) in sources.into_iter().enumerate() {
        let Some((sx, sy)) = s else { continue };
        let (x, y) = (i % w, i / w);
        valid.set(x, y, true);
        match filter {
            RotateFilter::Nearest => {
                let (ix, iy) = ((sx.floor() as usize).min(w - 1), (sy.floor() as usize).min(h - 1));
                for c in 0..ch {
                    out.set(x, y, c, image.get(ix, iy, c));
                }
            }
            RotateFilter::Bilinear => {
                let taps = bilinear_taps(sx - 0.5, sy - 0.5, w, h);
                for c in 0..ch {
                    let v = taps.iter().map(|t| t.weight * image.data()[t.index * ch + c]).sum();
                    out.set(x, y, c, v);
                }
            }
        }
    }
    (out, valid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize, ch: usize) -> ImageGrid {
        ImageGrid::from_fn(w, h, ch, |x, y, c| (x + 7 * y + 31 * c) as f64 / 100.0)
    }

    #[test]
    fn zero_angle_is_identity() {
        let img = ramp(9, 6, 3);
        for f in [RotateFilter::Bilinear, RotateFilter::Nearest] {
            let (out, valid) = rotate_image(&img, 0.0, f);
            assert_eq!(out, img);
            assert_eq!(valid.count(), 54);
        }
    }

    #[test]
    fn right_angle_is_a_permutation() {
        let n = 8;
        let img = ramp(n, n, 1);
        let (out, valid) = rotate_image(&img, 90.0, RotateFilter::Nearest);
        assert_eq!(valid.count(), n * n);
        for y in 0..n {
            for x in 0..n {
                assert_eq!(out.get(x, y, 0), img.get(y, n - 1 - x, 0));
            }
        }
        let (bil, _) = rotate_image(&img, 90.0, RotateFilter::Bilinear);
        assert_eq!(bil, out);
    }

    #[test]
    fn diagonal_rotation_loses_corners() {
        let (_, valid) = rotate_image(&ramp(16, 16, 1), 45.0, RotateFilter::Bilinear);
        for (x, y) in [(0, 0), (15, 0), (0, 15), (15, 15)] {
            assert!(!valid.get(x, y));
        }
        assert!(valid.get(8, 8));
    }

    #[test]
    fn orientation_advances_by_the_angle() {
        // A horizontal line (angle 0) rotated by 90 becomes vertical.
        let img = ImageGrid::from_fn(9, 9, 1, |_, y, _| if y == 4 { 1.0 } else { 0.0 });
        let (out, _) = rotate_image(&img, 90.0, RotateFilter::Nearest);
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(out.get(x, y, 0), if x == 4 { 1.0 } else { 0.0 });
            }
        }
    }
}
