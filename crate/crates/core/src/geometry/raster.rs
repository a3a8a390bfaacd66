use crate::error::{Error, Result};
use crate::geometry::{Camera, Mesh};
use crate::image::Mask;

/// Visible surface sample at one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Fragment {
    pub uv: [f64; 2],
    /// View-space depth along the camera axis.
    pub depth: f64,
    pub face: usize,
}

/// Per-pixel visibility record for one viewpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct FragmentMap {
    width: usize,
    height: usize,
    fragments: Vec<Option<Fragment>>,
}

impl FragmentMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            fragments: vec![None; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&Fragment> {
        self.fragments[y * self.width + x].as_ref()
    }

    pub fn fragments(&self) -> &[Option<Fragment>] {
        &self.fragments
    }

    /// Builds a map directly from per-pixel fragments (row-major).
    pub fn from_fragments(width: usize, height: usize, fragments: Vec<Option<Fragment>>) -> Self {
        assert_eq!(fragments.len(), width * height);
        Self {
            width,
            height,
            fragments,
        }
    }

    pub fn foreground(&self) -> Mask {
        Mask::from_vec(
            self.width,
            self.height,
            self.fragments.iter().map(Option::is_some).collect(),
        )
    }

    pub fn valid_count(&self) -> usize {
        self.fragments.iter().filter(|f| f.is_some()).count()
    }
}

#[derive(Clone, Copy)]
struct ClipVertex {
    cam: [f64; 3],
    uv: [f64; 2],
}

fn lerp_vertex(a: &ClipVertex, b: &ClipVertex, t: f64) -> ClipVertex {
    ClipVertex {
        cam: [0, 1, 2].map(|k| a.cam[k] + t * (b.cam[k] - a.cam[k])),
        uv: [0, 1].map(|k| a.uv[k] + t * (b.uv[k] - a.uv[k])),
    }
}

/// Clips a polygon against the plane `z >= near` in camera space.
fn clip_near(poly: &[ClipVertex], near: f64) -> Vec<ClipVertex> {
    let mut out = Vec::with_capacity(4);
    for i in 0..poly.len() {
        let a = &poly[i];
        let b = &poly[(i + 1) % poly.len()];
        let a_in = a.cam[2] >= near;
        let b_in = b.cam[2] >= near;
        if a_in {
            out.push(*a);
        }
        if a_in != b_in {
            let t = (near - a.cam[2]) / (b.cam[2] - a.cam[2]);
            out.push(lerp_vertex(a, b, t));
        }
    }
    out
}

/// Z-buffered perspective rasterization of the mesh into a fragment map.
///
/// Pixels are sampled at their centers; uvs use perspective-correct
/// barycentric interpolation. No face culling. On equal depth the lower
/// face index wins.
pub fn rasterize(mesh: &Mesh, camera: &Camera, width: usize, height: usize) -> Result<FragmentMap> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput("render size must be at least 1x1".into()));
    }
    camera.validate()?;
    let frame = camera.frame();
    let focal = 1.0 / (0.5 * camera.fov_y).tan();
    let aspect = width as f64 / height as f64;
    let (wf, hf) = (width as f64, height as f64);

    let cam_positions: Vec<[f64; 3]> = mesh.positions().iter().map(|&p| frame.to_camera(p)).collect();
    let mut zbuf = vec![f64::INFINITY; width * height];
    let mut out = FragmentMap::empty(width, height);

    for (face_index, face) in mesh.faces().iter().enumerate() {
        let tri = face.map(|c| ClipVertex {
            cam: cam_positions[c.position],
            uv: mesh.uvs()[c.uv],
        });
        if tri.iter().all(|v| v.cam[2] < camera.near) || tri.iter().all(|v| v.cam[2] > camera.far) {
            continue;
        }
        let poly = clip_near(&tri, camera.near);
        if poly.len() < 3 {
            continue;
        }
        let screen: Vec<[f64; 2]> = poly
            .iter()
            .map(|v| {
                let [x, y, z] = v.cam;
                [
                    (x / z * focal / aspect + 1.0) * 0.5 * wf,
                    (1.0 - y / z * focal) * 0.5 * hf,
                ]
            })
            .collect();
        for k in 1..poly.len() - 1 {
            let idx = [0, k, k + 1];
            draw_triangle(
                idx.map(|i| screen[i]),
                idx.map(|i| &poly[i]),
                face_index,
                camera,
                &mut zbuf,
                &mut out,
            );
        }
    }
    Ok(out)
}

/// Signed edge function. Endpoints are put in a canonical order first so a
/// shared edge evaluates to exactly opposite values in both triangles, which
/// keeps adjacent triangles watertight.
#[inline]
fn edge(a: [f64; 2], b: [f64; 2], px: f64, py: f64) -> f64 {
    let raw = |a: [f64; 2], b: [f64; 2]| (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
    if (a[0], a[1]) <= (b[0], b[1]) {
        raw(a, b)
    } else {
        -raw(b, a)
    }
}

fn draw_triangle(
    s: [[f64; 2]; 3],
    v: [&ClipVertex; 3],
    face: usize,
    camera: &Camera,
    zbuf: &mut [f64],
    out: &mut FragmentMap,
) {
    let area = edge(s[0], s[1], s[2][0], s[2][1]);
    if area.abs() < 1e-12 || !area.is_finite() {
        return;
    }
    let (w, h) = (out.width, out.height);
    let min_x = s.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
    let max_x = s.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
    let min_y = s.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
    let max_y = s.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    // Pixel x has its center at x + 0.5.
    let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
    let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
    let x1 = (max_x - 0.5).floor().min(w as f64 - 1.0);
    let y1 = (max_y - 0.5).floor().min(h as f64 - 1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    let inv_z = v.map(|c| 1.0 / c.cam[2]);
    let sign = area.signum();

    for y in y0..=y1 {
        let py = y as f64 + 0.5;
        for x in x0..=x1 {
            let px = x as f64 + 0.5;
            let e0 = edge(s[1], s[2], px, py) * sign;
            let e1 = edge(s[2], s[0], px, py) * sign;
            let e2 = edge(s[0], s[1], px, py) * sign;
            if e0 < 0.0 || e1 < 0.0 || e2 < 0.0 {
                continue;
            }
            let b = [e0, e1, e2].map(|e| e / (area * sign));
            let wsum = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
            let depth = 1.0 / wsum;
            if !(depth > camera.near && depth < camera.far) {
                continue;
            }
            let i = y * w + x;
            if depth >= zbuf[i] {
                continue;
            }
            let pw = [0, 1, 2].map(|k| b[k] * inv_z[k] * depth);
            let uv = [0, 1].map(|c| pw[0] * v[0].uv[c] + pw[1] * v[1].uv[c] + pw[2] * v[2].uv[c]);
            zbuf[i] = depth;
            out.fragments[i] = Some(Fragment {
                uv: uv.map(|t| t.clamp(0.0, 1.0)),
                depth,
                face,
            });
        }
    }
}

/// Texels whose centers fall inside any face's uv triangle, plus the texel
/// under every uv corner so that sliver charts are never lost.
pub fn uv_coverage(mesh: &Mesh, tex_w: usize, tex_h: usize) -> Mask {
    let mut mask = Mask::new(tex_w, tex_h, false);
    let (wf, hf) = (tex_w as f64, tex_h as f64);
    for face in mesh.faces() {
        let t = face.map(|c| {
            let [u, v] = mesh.uvs()[c.uv];
            [u * wf, v * hf]
        });
        for p in &t {
            let x = (p[0].floor().max(0.0) as usize).min(tex_w - 1);
            let y = (p[1].floor().max(0.0) as usize).min(tex_h - 1);
            mask.set(x, y, true);
        }
        let area = edge(t[0], t[1], t[2][0], t[2][1]);
        if area.abs() < 1e-15 {
            continue;
        }
        let sign = area.signum();
        let min_x = t.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let max_x = t.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        let min_y = t.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        let max_y = t.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0) as usize;
        let y0 = (min_y - 0.5).ceil().max(0.0) as usize;
        let x1 = ((max_x - 0.5).floor().min(wf - 1.0)).max(-1.0);
        let y1 = ((max_y - 0.5).floor().min(hf - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            for x in x0..=x1 as usize {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                if edge(t[1], t[2], px, py) * sign >= 0.0
                    && edge(t[2], t[0], px, py) * sign >= 0.0
                    && edge(t[0], t[1], px, py) * sign >= 0.0
                {
                    mask.set(x, y, true);
                }
            }
        }
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Corner;
    use std::f64::consts::FRAC_PI_2;

    /// Quad at depth `z` in front of a camera at the origin looking down -Z
    /// with a 90 degree field of view, sized to exactly fill the viewport.
    fn screen_quad(z: f64, uv_offset: f64) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
        aspect_quad(z, uv_offset, 1.0)
    }

    fn aspect_quad(z: f64, uv_offset: f64, aspect: f64) -> (Vec<[f64; 3]>, Vec<[f64; 2]>) {
        let s = z; // tan(45deg) * z
        let sx = s * aspect;
        (
            vec![[-sx, s, -z], [sx, s, -z], [sx, -s, -z], [-sx, -s, -z]],
            vec![
                [0.0 + uv_offset, 0.0],
                [1.0, 0.0],
                [1.0, 1.0],
                [0.0 + uv_offset, 1.0],
            ],
        )
    }

    fn quad_faces(base: usize) -> Vec<[Corner; 3]> {
        let c = |k: usize| Corner {
            position: base + k,
            uv: base + k,
        };
        vec![[c(0), c(1), c(2)], [c(0), c(2), c(3)]]
    }

    fn front_camera() -> Camera {
        Camera::new([0.0; 3], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0], FRAC_PI_2, 0.1, 100.0).unwrap()
    }

    #[test]
    fn screen_aligned_quad_maps_pixel_centers() {
        let (w, h) = (13, 9);
        let (p, uv) = aspect_quad(2.0, 0.0, w as f64 / h as f64);
        let mesh = Mesh::new(p, uv, quad_faces(0)).unwrap();
        let frag = rasterize(&mesh, &front_camera(), w, h).unwrap();
        for y in 0..h {
            for x in 0..w {
                let f = frag.get(x, y).unwrap_or_else(|| panic!("pixel {x},{y} uncovered"));
                assert!((f.uv[0] - (x as f64 + 0.5) / w as f64).abs() < 1e-6);
                assert!((f.uv[1] - (y as f64 + 0.5) / h as f64).abs() < 1e-6);
                assert!((f.depth - 2.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn camera_facing_away_sees_nothing() {
        let (p, uv) = screen_quad(2.0, 0.0);
        let mesh = Mesh::new(p, uv, quad_faces(0)).unwrap();
        let cam = Camera::new([0.0; 3], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], FRAC_PI_2, 0.1, 100.0).unwrap();
        let frag = rasterize(&mesh, &cam, 8, 8).unwrap();
        assert_eq!(frag.valid_count(), 0);
    }

    #[test]
    fn nearer_surface_wins() {
        // Far quad listed first, near quad second: the z-buffer must still pick
        // the near one, which carries u offset 0.5.
        let (mut p, mut uv) = screen_quad(2.0, 0.0);
        let (p2, uv2) = screen_quad(1.0, 0.5);
        p.extend(p2);
        uv.extend(uv2);
        let mut faces = quad_faces(0);
        faces.extend(quad_faces(4));
        let mesh = Mesh::new(p, uv, faces).unwrap();
        let frag = rasterize(&mesh, &front_camera(), 10, 10).unwrap();
        for f in frag.fragments().iter().flatten() {
            assert!(f.face >= 2);
            assert!(f.uv[0] >= 0.5 - 1e-12);
        }
    }

    #[test]
    fn equal_depth_prefers_lower_face() {
        let (mut p, mut uv) = screen_quad(2.0, 0.0);
        let (p2, uv2) = screen_quad(2.0, 0.5);
        p.extend(p2);
        uv.extend(uv2);
        let mut faces = quad_faces(0);
        faces.extend(quad_faces(4));
        let mesh = Mesh::new(p, uv, faces).unwrap();
        let frag = rasterize(&mesh, &front_camera(), 10, 10).unwrap();
        assert!(frag.fragments().iter().flatten().all(|f| f.face < 2));
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // A quad crossing the camera plane: only the part in front is drawn.
        let p = vec![[-1.0, -0.2, 1.0], [1.0, -0.2, 1.0], [1.0, -0.2, -5.0], [-1.0, -0.2, -5.0]];
        let uv = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let mesh = Mesh::new(p, uv, quad_faces(0)).unwrap();
        let frag = rasterize(&mesh, &front_camera(), 16, 16).unwrap();
        assert!(frag.valid_count() > 0);
        for f in frag.fragments().iter().flatten() {
            assert!(f.depth > 0.1 && f.depth < 100.0);
        }
    }

    #[test]
    fn deterministic() {
        let mesh = Mesh::uv_sphere(24, 12, 1.0);
        let cam = Camera::looking_at([0.3, 0.4, 3.0], [0.0; 3], 0.8, 0.01, 100.0).unwrap();
        let a = rasterize(&mesh, &cam, 40, 30).unwrap();
        let b = rasterize(&mesh, &cam, 40, 30).unwrap();
        assert_eq!(a, b);
        assert!(a.valid_count() > 300);
    }

    #[test]
    fn coverage_of_full_quad_is_everything() {
        let (p, uv) = screen_quad(1.0, 0.0);
        let mesh = Mesh::new(p, uv, quad_faces(0)).unwrap();
        let m = uv_coverage(&mesh, 8, 8);
        assert_eq!(m.count(), 64);
    }

    #[test]
    fn coverage_of_half_triangle() {
        let p = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let uv = vec![[0.0, 0.0], [0.5, 0.0], [0.0, 0.5]];
        let face = vec![[0, 1, 2].map(|k| Corner { position: k, uv: k })];
        let mesh = Mesh::new(p, uv, face).unwrap();
        let m = uv_coverage(&mesh, 8, 8);
        assert!(m.get(0, 0) && m.get(1, 1) && !m.get(7, 7) && !m.get(4, 4));
    }
}
