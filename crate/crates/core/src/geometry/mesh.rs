use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};

/// One triangle corner: indices into the position and uv arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Corner {
    pub position: usize,
    pub uv: usize,
}

/// Triangulated, UV-mapped mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    positions: Vec<[f64; 3]>,
    uvs: Vec<[f64; 2]>,
    faces: Vec<[Corner; 3]>,
}

/// Wraps a texture coordinate into `[0, 1]`. Coordinates already inside the
/// closed interval are kept so that seam vertices at `u = 1` stay put.
pub fn wrap_uv(v: f64) -> f64 {
    if (0.0..=1.0).contains(&v) {
        v
    } else {
        v - v.floor()
    }
}

impl Mesh {
    pub fn new(
        positions: Vec<[f64; 3]>,
        uvs: Vec<[f64; 2]>,
        faces: Vec<[Corner; 3]>,
    ) -> Result<Self> {
        if faces.is_empty() {
            return Err(Error::EmptyMesh);
        }
        for (fi, face) in faces.iter().enumerate() {
            for c in face {
                if c.position >= positions.len() || c.uv >= uvs.len() {
                    return Err(Error::InvalidInput(format!(
                        "face {fi} references out-of-range index"
                    )));
                }
            }
        }
        let uvs = uvs
            .into_iter()
            .map(|[u, v]| [wrap_uv(u), wrap_uv(v)])
            .collect();
        Ok(Self {
            positions,
            uvs,
            faces,
        })
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn uvs(&self) -> &[[f64; 2]] {
        &self.uvs
    }

    pub fn faces(&self) -> &[[Corner; 3]] {
        &self.faces
    }

    /// Center of the axis-aligned bounds and the radius of the smallest
    /// sphere around that center containing every vertex.
    pub fn bounding_sphere(&self) -> ([f64; 3], f64) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.positions {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let center = [0, 1, 2].map(|k| 0.5 * (lo[k] + hi[k]));
        let radius = self
            .positions
            .iter()
            .map(|p| {
                ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2))
                    .sqrt()
            })
            .fold(0.0, f64::max);
        (center, radius)
    }

    /// Latitude/longitude sphere centered at the origin with the poles on
    /// the Y axis. `u` runs around the equator, `v` from the north pole
    /// (`v = 0`) to the south pole (`v = 1`). The seam column is duplicated so
    /// uvs stay continuous.
    pub fn uv_sphere(segments: usize, rings: usize, radius: f64) -> Mesh {
        assert!(segments >= 3 && rings >= 2);
        let cols = segments + 1;
        let mut positions = Vec::with_capacity((rings + 1) * cols);
        let mut uvs = Vec::with_capacity((rings + 1) * cols);
        for i in 0..=rings {
            let v = i as f64 / rings as f64;
            let theta = v * PI;
            for j in 0..=segments {
                let u = j as f64 / segments as f64;
                let phi = u * 2.0 * PI;
                positions.push([
                    radius * theta.sin() * phi.sin(),
                    radius * theta.cos(),
                    radius * theta.sin() * phi.cos(),
                ]);
                uvs.push([u, v]);
            }
        }
        let at = |i: usize, j: usize| {
            let k = i * cols + j;
            Corner { position: k, uv: k }
        };
        let mut faces = Vec::new();
        for i in 0..rings {
            for j in 0..segments {
                let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
                if i + 1 < rings {
                    faces.push([a, b, c]);
                }
                if i > 0 {
                    faces.push([a, c, d]);
                }
            }
        }
        Mesh::new(positions, uvs, faces).expect("generated sphere is valid")
    }
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text, path)
}

/// Parses the Wavefront OBJ subset the pipeline needs: `v`, `vt` and `f`
/// records. Polygons are fan-triangulated; other record types are ignored.
pub fn parse_obj(text: &str, path: &Path) -> Result<Mesh> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut positions = Vec::new();
    let mut uvs = Vec::new();
    let mut faces = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        let Some(tag) = tokens.next() else { continue };
        match tag {
            "v" => {
                let vals = parse_floats(tokens, 3)
                    .map_err(|m| parse_err(line_no, format!("bad vertex: {m}")))?;
                positions.push([vals[0], vals[1], vals[2]]);
            }
            "vt" => {
                let vals = parse_floats(tokens, 2)
                    .map_err(|m| parse_err(line_no, format!("bad texture coordinate: {m}")))?;
                uvs.push([vals[0], vals[1]]);
            }
            "f" => {
                let mut corners = Vec::new();
                for tok in tokens {
                    let mut parts = tok.split('/');
                    let v = parts.next().unwrap_or("");
                    let vt = parts.next().unwrap_or("");
                    let position = resolve_index(v, positions.len())
                        .map_err(|m| parse_err(line_no, m))?;
                    if vt.is_empty() {
                        return Err(Error::NotUvMapped { line: line_no });
                    }
                    let uv = resolve_index(vt, uvs.len()).map_err(|m| parse_err(line_no, m))?;
                    corners.push(Corner { position, uv });
                }
                if corners.len() < 3 {
                    return Err(parse_err(
                        line_no,
                        format!("face needs at least 3 corners, got {}", corners.len()),
                    ));
                }
                for k in 1..corners.len() - 1 {
                    faces.push([corners[0], corners[k], corners[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(positions, uvs, faces)
}

fn parse_floats<'a>(tokens: impl Iterator<Item = &'a str>, min: usize) -> Result<Vec<f64>, String> {
    let vals = tokens
        .map(|t| t.parse::<f64>().map_err(|_| format!("'{t}' is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if vals.len() < min {
        return Err(format!("expected at least {min} values, got {}", vals.len()));
    }
    Ok(vals)
}

/// Converts a 1-based (or negative, relative) OBJ index to 0-based.
fn resolve_index(token: &str, len: usize) -> Result<usize, String> {
    let i: i64 = token
        .parse()
        .map_err(|_| format!("'{token}' is not a valid index"))?;
    let resolved = match i {
        0 => return Err("index 0 is not valid in OBJ".into()),
        i if i > 0 => i - 1,
        i => len as i64 + i,
    };
    if resolved < 0 || resolved as usize >= len {
        return Err(format!("index {i} out of range ({len} defined so far)"));
    }
    Ok(resolved as usize)
}
