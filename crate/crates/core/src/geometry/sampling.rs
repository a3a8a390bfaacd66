//! Texture lookup through a fragment map and its exact adjoint.
//!
//! Rendering is `render = S · texture` for a sparse matrix `S` fixed by the
//! fragments, so the texture gradient is `Sᵀ · render_gradient`. Both
//! directions share [`texel_taps`] so the pair is adjoint by construction.

use crate::error::{Error, Result};
use crate::geometry::FragmentMap;
use crate::image::{bilinear_taps, ImageGrid, Mask, Tap};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Filter {
    #[default]
    Bilinear,
    Nearest,
}

/// Texel reads for a uv lookup. Texel coordinates are `uv * size - 0.5`,
/// clamped to the edge.
#[inline]
pub(crate) fn texel_taps(uv: [f64; 2], tex_w: usize, tex_h: usize, filter: Filter) -> ([Tap; 4], usize) {
    match filter {
        Filter::Bilinear => (
            bilinear_taps(uv[0] * tex_w as f64 - 0.5, uv[1] * tex_h as f64 - 0.5, tex_w, tex_h),
            4,
        ),
        Filter::Nearest => {
            let x = ((uv[0] * tex_w as f64).floor().max(0.0) as usize).min(tex_w - 1);
            let y = ((uv[1] * tex_h as f64).floor().max(0.0) as usize).min(tex_h - 1);
            let t = Tap {
                index: y * tex_w + x,
                weight: 1.0,
            };
            ([t; 4], 1)
        }
    }
}

/// Renders `texture` through `frag`. Background pixels are 0 and false in
/// the returned foreground mask.
pub fn sample_texture(texture: &ImageGrid, frag: &FragmentMap, filter: Filter) -> (ImageGrid, Mask) {
    let ch = texture.channels();
    let (tw, th) = (texture.width(), texture.height());
    let mut out = ImageGrid::new(frag.width(), frag.height(), ch);
    let tex = texture.data();
    {
        let dst = out.data_mut();
        for (p, f) in frag.fragments().iter().enumerate() {
            let Some(f) = f else { continue };
            let (taps, n) = texel_taps(f.uv, tw, th, filter);
            for c in 0..ch {
                dst[p * ch + c] = taps[..n].iter().map(|t| t.weight * tex[t.index * ch + c]).sum();
            }
        }
    }
    (out, frag.foreground())
}

/// Adjoint of [`sample_texture`]: accumulates a screen-space gradient into
/// a `tex_w x tex_h` texture gradient. Background pixels contribute nothing.
pub fn scatter_gradient(
    grad: &ImageGrid,
    frag: &FragmentMap,
    tex_w: usize,
    tex_h: usize,
    filter: Filter,
) -> Result<ImageGrid> {
    if grad.width() != frag.width() || grad.height() != frag.height() {
        return Err(Error::InvalidInput(format!(
            "gradient is {}x{} but fragment map is {}x{}",
            grad.width(),
            grad.height(),
            frag.width(),
            frag.height()
        )));
    }
    let ch = grad.channels();
    let mut out = ImageGrid::new(tex_w, tex_h, ch);
    let g = grad.data();
    let dst = out.data_mut();
    for (p, f) in frag.fragments().iter().enumerate() {
        let Some(f) = f else { continue };
        let (taps, n) = texel_taps(f.uv, tex_w, tex_h, filter);
        for t in &taps[..n] {
            for c in 0..ch {
                dst[t.index * ch + c] += t.weight * g[p * ch + c];
            }
        }
    }
    Ok(out)
}

/// Texels that receive nonzero weight from any fragment.
pub fn touched_texels(frag: &FragmentMap, tex_w: usize, tex_h: usize, filter: Filter) -> Mask {
    let mut mask = Mask::new(tex_w, tex_h, false);
    for f in frag.fragments().iter().flatten() {
        let (taps, n) = texel_taps(f.uv, tex_w, tex_h, filter);
        for t in taps[..n].iter().filter(|t| t.weight > 0.0) {
            mask.set(t.index % tex_w, t.index / tex_w, true);
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Fragment;
    use proptest::prelude::*;

    fn single(uv: [f64; 2]) -> FragmentMap {
        FragmentMap::from_fragments(
            1,
            1,
            vec![Some(Fragment {
                uv,
                depth: 1.0,
                face: 0,
            })],
        )
    }

    #[test]
    fn constant_texture_renders_constant() {
        let tex = ImageGrid::filled(5, 3, 3, 0.37);
        let frag = FragmentMap::from_fragments(
            2,
            1,
            vec![
                Some(Fragment {
                    uv: [0.13, 0.91],
                    depth: 1.0,
                    face: 0,
                }),
                None,
            ],
        );
        let (img, fg) = sample_texture(&tex, &frag, Filter::Bilinear);
        assert!(img.pixel(0, 0).iter().all(|&v| (v - 0.37).abs() < 1e-15));
        assert_eq!(img.pixel(1, 0), &[0.0, 0.0, 0.0]);
        assert!(fg.get(0, 0) && !fg.get(1, 0));
    }

    #[test]
    fn texel_center_is_exact() {
        let tex = ImageGrid::from_vec(2, 2, 1, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let (img, _) = sample_texture(&tex, &single([0.75, 0.25]), Filter::Bilinear);
        assert_eq!(img.get(0, 0, 0), 0.2);
    }

    #[test]
    fn bilinear_midpoint() {
        let tex = ImageGrid::from_vec(2, 2, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let (img, _) = sample_texture(&tex, &single([0.5, 0.5]), Filter::Bilinear);
        assert_eq!(img.get(0, 0, 0), 0.5);
    }

    #[test]
    fn zero_gradient_scatters_zero() {
        let g = ImageGrid::new(1, 1, 3);
        let t = scatter_gradient(&g, &single([0.3, 0.3]), 4, 4, Filter::Bilinear).unwrap();
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nearest_scatter_hits_one_texel() {
        let g = ImageGrid::filled(1, 1, 1, 1.0);
        let t = scatter_gradient(&g, &single([0.6, 0.1]), 4, 4, Filter::Nearest).unwrap();
        assert_eq!(t.data().iter().filter(|&&v| v != 0.0).count(), 1);
        assert_eq!(t.get(2, 0, 0), 1.0);
    }

    #[test]
    fn mismatched_gradient_rejected() {
        let g = ImageGrid::new(2, 1, 1);
        assert!(scatter_gradient(&g, &single([0.5, 0.5]), 4, 4, Filter::Nearest).is_err());
    }

    fn frag_strategy() -> impl Strategy<Value = FragmentMap> {
        prop::collection::vec(
            prop::option::weighted(0.7, (0.0..=1.0f64, 0.0..=1.0f64)),
            64,
        )
        .prop_map(|v| {
            FragmentMap::from_fragments(
                8,
                8,
                v.into_iter()
                    .map(|o| {
                        o.map(|(u, w)| Fragment {
                            uv: [u, w],
                            depth: 1.0,
                            face: 0,
                        })
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn adjoint_identity(
            frag in frag_strategy(),
            tex in prop::collection::vec(-1.0..1.0f64, 48),
            g in prop::collection::vec(-1.0..1.0f64, 192),
            nearest in any::<bool>(),
        ) {
            let filter = if nearest { Filter::Nearest } else { Filter::Bilinear };
            let tex = ImageGrid::from_vec(4, 4, 3, tex).unwrap();
            let g = ImageGrid::from_vec(8, 8, 3, g).unwrap();
            let (r, _) = sample_texture(&tex, &frag, filter);
            let back = scatter_gradient(&g, &frag, 4, 4, filter).unwrap();
            let lhs = r.dot(&g);
            let rhs = tex.dot(&back);
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(1.0));
        }
    }
}
