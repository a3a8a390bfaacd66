use rayon::prelude::*;

use crate::flowfield::gradient::sobel;
use crate::flowfield::{fold_angle, image_gradient, DirectionField};
use crate::image::ImageGrid;

/// Smoothing parameters of the edge tangent flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EtfParams {
    pub kernel_radius: usize,
    pub iterations: usize,
}

impl EtfParams {
    pub const fn new(kernel_radius: usize, iterations: usize) -> Self {
        Self {
            kernel_radius,
            iterations,
        }
    }
}

/// Edge tangent flow.
///
/// Starts from the normalized gradient tangents and repeatedly replaces each
/// tangent with the normalized weighted sum over a square window:
///
/// `t'(x) = sum_y phi(x,y) * w_m(x,y) * w_d(x,y) * t(y)`
///
/// with `w_m = (1 + tanh(m(y) - m(x))) / 2` on max-normalized gradient
/// magnitudes, `w_d = |t(x).t(y)|` and `phi = sign(t(x).t(y))` (0 counts as
/// +1). A pixel without a tangent yet takes `w_d = 1` so it inherits the
/// flow of its neighbors. The returned magnitude is the raw gradient
/// magnitude.
pub fn etf(gray: &ImageGrid, params: EtfParams) -> DirectionField {
    let initial = image_gradient(gray);
    if params.iterations == 0 {
        return initial;
    }
    let (w, h) = (gray.width(), gray.height());
    let g = sobel(gray);
    let mag = initial.magnitudes();
    let max_mag = mag.iter().cloned().fold(0.0, f64::max);
    let mhat: Vec<f64> = if max_mag > 0.0 {
        mag.iter().map(|m| m / max_mag).collect()
    } else {
        vec![0.0; w * h]
    };
    let mut t: Vec<[f64; 2]> = g
        .iter()
        .zip(mag)
        .map(|([gx, gy], &m)| if m > 0.0 { [-gy / m, gx / m] } else { [0.0, 0.0] })
        .collect();
    let mut next = t.clone();
    let r = params.kernel_radius.max(1) as isize;

    for _ in 0..params.iterations {
        next.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
            let y = y as isize;
            for (x, out) in row.iter_mut().enumerate() {
                let x = x as isize;
                let i = (y as usize) * w + x as usize;
                let tx = t[i];
                let has_dir = tx != [0.0, 0.0];
                let (mut sx, mut sy) = (0.0, 0.0);
                for yy in (y - r).max(0)..=(y + r).min(h as isize - 1) {
                    for xx in (x - r).max(0)..=(x + r).min(w as isize - 1) {
                        let j = yy as usize * w + xx as usize;
                        let ty = t[j];
                        if ty == [0.0, 0.0] {
                            continue;
                        }
                        let dot = tx[0] * ty[0] + tx[1] * ty[1];
                        let (wd, phi) = if has_dir {
                            (dot.abs(), if dot < 0.0 { -1.0 } else { 1.0 })
                        } else {
                            (1.0, 1.0)
                        };
                        let wm = 0.5 * (1.0 + (mhat[j] - mhat[i]).tanh());
                        let k = phi * wm * wd;
                        sx += k * ty[0];
                        sy += k * ty[1];
                    }
                }
                let n = sx.hypot(sy);
                *out = if n > 1e-300 { [sx / n, sy / n] } else { tx };
            }
        });
        std::mem::swap(&mut t, &mut next);
    }

    let angle = t
        .iter()
        .map(|&[x, y]| if x == 0.0 && y == 0.0 { 0.0 } else { fold_angle(x, y) })
        .collect();
    DirectionField::new(w, h, angle, mag.to_vec())
}
