use std::f64::consts::PI;

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Pinhole camera looking from `position` at `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in radians.
    pub fov_y: f64,
    pub near: f64,
    pub far: f64,
}

/// Orthonormal view frame derived from a camera.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ViewFrame {
    eye: Vector3<f64>,
    right: Vector3<f64>,
    up: Vector3<f64>,
    forward: Vector3<f64>,
}

impl ViewFrame {
    /// Camera-space coordinates: x right, y up, z = depth along the view axis.
    #[inline]
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let d = Vector3::from(p) - self.eye;
        [d.dot(&self.right), d.dot(&self.up), d.dot(&self.forward)]
    }
}

impl Camera {
    pub fn new(
        position: [f64; 3],
        target: [f64; 3],
        up: [f64; 3],
        fov_y: f64,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Camera {
            position,
            target,
            up,
            fov_y,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `position` aimed at `target` with the default up-vector rule.
    pub fn looking_at(position: [f64; 3], target: [f64; 3], fov_y: f64, near: f64, far: f64) -> Result<Self> {
        let dir = Vector3::from(target) - Vector3::from(position);
        if dir.norm() == 0.0 {
            return Err(Error::InvalidInput("camera position equals target".into()));
        }
        Camera::new(position, target, default_up(&dir.normalize()), fov_y, near, far)
    }

    pub fn validate(&self) -> Result<()> {
        if self.position == self.target {
            return Err(Error::InvalidInput("camera position equals target".into()));
        }
        if !(self.fov_y > 0.0 && self.fov_y < PI) {
            return Err(Error::InvalidInput(format!("field of view {} out of (0, pi)", self.fov_y)));
        }
        if !(self.near > 0.0 && self.near < self.far) {
            return Err(Error::InvalidInput("camera needs 0 < near < far".into()));
        }
        let fwd = (Vector3::from(self.target) - Vector3::from(self.position)).normalize();
        if fwd.cross(&Vector3::from(self.up)).norm() < 1e-12 {
            return Err(Error::InvalidInput("camera up vector is parallel to view direction".into()));
        }
        Ok(())
    }

    pub(crate) fn frame(&self) -> ViewFrame {
        let eye = Vector3::from(self.position);
        let forward = (Vector3::from(self.target) - eye).normalize();
        let right = forward.cross(&Vector3::from(self.up)).normalize();
        let up = right.cross(&forward);
        ViewFrame {
            eye,
            right,
            up,
            forward,
        }
    }
}

/// +Y, or +X when the view direction is within 1e-6 of the Y axis.
fn default_up(dir: &Vector3<f64>) -> [f64; 3] {
    if 1.0 - dir.y.abs() <= 1e-6 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    }
}

/// Unit vectors of the Fibonacci (golden-angle) lattice on the sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<[f64; 3]> {
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden_angle * i as f64;
            [r * phi.cos(), y, r * phi.sin()]
        })
        .collect()
}

/// `n` cameras on a sphere of `radius` around `center`, all aimed at the center.
pub fn fibonacci_viewpoints(n: usize, center: [f64; 3], radius: f64, fov_y: f64) -> Result<Vec<Camera>> {
    if n == 0 {
        return Err(Error::InvalidInput("viewpoint count must be at least 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput("viewpoint radius must be positive".into()));
    }
    fibonacci_sphere(n)
        .into_iter()
        .map(|d| {
            let pos = [0, 1, 2].map(|k| center[k] + radius * d[k]);
            Camera::looking_at(pos, center, fov_y, radius * 1e-3, radius * 1e3)
        })
        .collect()
}
