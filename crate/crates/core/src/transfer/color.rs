use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};

/// Floor applied to the source covariance eigenvalues before inversion.
pub const COLOR_EPS: f64 = 1e-8;

/// `x -> A (x - source_mean) + target_mean`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColorTransform {
    pub matrix: [[f64; 3]; 3],
    pub source_mean: [f64; 3],
    pub target_mean: [f64; 3],
}

impl ColorTransform {
    pub fn identity() -> Self {
        Self {
            matrix: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            source_mean: [0.0; 3],
            target_mean: [0.0; 3],
        }
    }

    /// Unclamped image of one color.
    pub fn apply(&self, x: [f64; 3]) -> [f64; 3] {
        let d = [0, 1, 2].map(|i| x[i] - self.source_mean[i]);
        [0, 1, 2].map(|r| self.target_mean[r] + (0..3).map(|c| self.matrix[r][c] * d[c]).sum::<f64>())
    }
}

/// Mean and population covariance of a set of colors.
pub fn color_moments(samples: &[[f64; 3]]) -> ([f64; 3], [[f64; 3]; 3]) {
    let n = samples.len() as f64;
    let mut mean = [0.0; 3];
    for s in samples {
        (0..3).for_each(|i| mean[i] += s[i]);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = [[0.0; 3]; 3];
    for s in samples {
        for r in 0..3 {
            for c in 0..3 {
                cov[r][c] += (s[r] - mean[r]) * (s[c] - mean[c]);
            }
        }
    }
    cov.iter_mut().flatten().for_each(|v| *v /= n);
    (mean, cov)
}

/// `f(M)` for symmetric `M` through its eigendecomposition.
fn spectral(m: Matrix3<f64>, f: impl Fn(f64) -> f64) -> Matrix3<f64> {
    let e = SymmetricEigen::new(m);
    let d = Matrix3::from_diagonal(&Vector3::from_iterator(e.eigenvalues.iter().map(|&l| f(l))));
    e.eigenvectors * d * e.eigenvectors.transpose()
}

/// Affine map that gives `source` the mean and covariance of `target`:
/// `A = Cov_t^(1/2) Cov_s^(-1/2)`, where source eigenvalues below `eps` are
/// raised to `eps` so rank-deficient sources stay finite.
pub fn color_match(source: &[[f64; 3]], target: &[[f64; 3]]) -> Result<ColorTransform> {
    if source.len() < 2 || target.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "color matching needs at least 2 samples on each side, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    let (mu_s, cov_s) = color_moments(source);
    let (mu_t, cov_t) = color_moments(target);
    let to_mat = |c: [[f64; 3]; 3]| Matrix3::from_fn(|r, k| c[r][k]);
    let sqrt_t = spectral(to_mat(cov_t), |l| l.max(0.0).sqrt());
    let inv_sqrt_s = spectral(to_mat(cov_s), |l| 1.0 / l.max(COLOR_EPS).sqrt());
    let a = sqrt_t * inv_sqrt_s;
    Ok(ColorTransform {
        matrix: [0, 1, 2].map(|r| [0, 1, 2].map(|c| a[(r, c)])),
        source_mean: mu_s,
        target_mean: mu_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_colors(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 3]> {
        let mix: [[f64; 3]; 3] = [0, 1, 2].map(|_| [0, 1, 2].map(|_| rng.gen_range(-1.0..1.0)));
        let off: [f64; 3] = [0, 1, 2].map(|_| rng.gen());
        (0..n)
            .map(|_| {
                let z: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(-0.5..0.5));
                [0, 1, 2].map(|r| off[r] + (0..3).map(|c| mix[r][c] * z[c]).sum::<f64>())
            })
            .collect()
    }

    #[test]
    fn transformed_moments_match_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = random_colors(&mut rng, 300);
            let s = random_colors(&mut rng, 200);
            let t = color_match(&c, &s).unwrap();
            let mapped: Vec<_> = c.iter().map(|&x| t.apply(x)).collect();
            let (m1, c1) = color_moments(&mapped);
            let (m2, c2) = color_moments(&s);
            let scale = c2.iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
            for i in 0..3 {
                assert!((m1[i] - m2[i]).abs() < 1e-9);
                for j in 0..3 {
                    assert!((c1[i][j] - c2[i][j]).abs() < 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn equal_statistics_give_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = random_colors(&mut rng, 100);
        let t = color_match(&c, &c).unwrap();
        for r in 0..3 {
            for k in 0..3 {
                assert!((t.matrix[r][k] - if r == k { 1.0 } else { 0.0 }).abs() < 1e-6);
            }
        }
        for &x in &c {
            let y = t.apply(x);
            assert!((0..3).all(|i| (x[i] - y[i]).abs() < 1e-6));
        }
    }

    #[test]
    fn grayscale_source_is_finite() {
        let c: Vec<[f64; 3]> = (0..50).map(|i| [i as f64 / 50.0; 3]).collect();
        let s = random_colors(&mut ChaCha8Rng::seed_from_u64(3), 50);
        let t = color_match(&c, &s).unwrap();
        assert!(t.matrix.iter().flatten().all(|v| v.is_finite()));
        assert!(c.iter().all(|&x| t.apply(x).iter().all(|v| v.is_finite())));
    }

    #[test]
    fn too_few_samples() {
        assert!(color_match(&[[0.0; 3]], &[[0.0; 3], [1.0; 3]]).is_err());
    }
}
