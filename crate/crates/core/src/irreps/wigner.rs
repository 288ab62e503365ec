//! Wigner rotation matrices for the real harmonic basis of `sh`.
//!
//! `wigner_d(l, r)` returns the (2l+1)x(2l+1) orthogonal matrix `D` with
//! `Y_l(R u) = D Y_l(u)`. Degree 1 is the plain Cartesian rotation matrix;
//! higher degrees are built by the Ivanic-Ruedenberg recursion from the
//! degree-1 matrix, so the construction is exact up to roundoff.

use crate::error::{Error, Result};
use crate::geom::{Mat3, Quaternion, Vec3};

/// A rotation for testing and applying equivariance, stored as a unit
/// quaternion (norm enforced to 1e-12).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSpec {
    quat: Quaternion,
}

impl RotationSpec {
    pub const IDENTITY: RotationSpec = RotationSpec { quat: Quaternion::IDENTITY };

    pub fn new(q: Quaternion) -> Result<RotationSpec> {
        if (q.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "rotation quaternion must be unit, norm was {}",
                q.norm()
            )));
        }
        Ok(RotationSpec { quat: q })
    }

    /// Normalizes the quaternion instead of rejecting it.
    pub fn normalized(q: Quaternion) -> RotationSpec {
        RotationSpec { quat: q.normalized() }
    }

    pub fn from_axis_angle(axis: Vec3, angle: f64) -> RotationSpec {
        RotationSpec { quat: Quaternion::from_axis_angle(axis, angle) }
    }

    /// Uniform random rotation (Shoemake's method via normalized Gaussian
    /// components is adequate for test sampling).
    pub fn random<R: rand::Rng>(rng: &mut R) -> RotationSpec {
        loop {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0f64),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() > 1e-2 && q.norm() <= 1.0 {
                return RotationSpec { quat: q.normalized() };
            }
        }
    }

    pub fn quaternion(&self) -> Quaternion {
        self.quat
    }

    pub fn matrix(&self) -> Mat3 {
        self.quat.to_matrix()
    }

    /// `self.compose(other)` rotates by `other` first, then `self`.
    pub fn compose(&self, other: &RotationSpec) -> RotationSpec {
        RotationSpec { quat: self.quat.mul(&other.quat).normalized() }
    }

    pub fn inverse(&self) -> RotationSpec {
        RotationSpec { quat: self.quat.conjugate() }
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        self.quat.rotate(v)
    }
}

/// Row-major (2l+1)^2 Wigner matrix for this rotation.
pub fn wigner_d(l: usize, r: &RotationSpec) -> Vec<f64> {
    wigner_d_from_matrix(l, &r.matrix())
}

pub fn wigner_d_from_matrix(l: usize, rot: &Mat3) -> Vec<f64> {
    match l {
        0 => vec![1.0],
        1 => rot.iter().flatten().copied().collect(),
        _ => {
            // Degree-1 matrix in the (y, z, x) component order used by the
            // recursion; sigma maps recursion index (m+1) to Cartesian axis.
            let sigma = [1usize, 2, 0];
            let mut r1 = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    r1[a][b] = rot[sigma[a]][sigma[b]];
                }
            }
            let mut prev: Vec<f64> = r1.iter().flatten().copied().collect();
            for cur_l in 2..=l {
                prev = recur(cur_l as i32, &r1, &prev);
            }
            prev
        }
    }
}

/// Stack of Wigner matrices for all degrees 0..=l_max.
pub fn wigner_stack(l_max: usize, r: &RotationSpec) -> Vec<Vec<f64>> {
    (0..=l_max).map(|l| wigner_d(l, r)).collect()
}

/// y = D x for a degree-l Wigner matrix.
pub fn wigner_apply(l: usize, d: &[f64], x: &[f64]) -> Vec<f64> {
    let n = 2 * l + 1;
    debug_assert_eq!(d.len(), n * n);
    debug_assert_eq!(x.len(), n);
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += d[i * n + j] * x[j];
        }
        y[i] = acc;
    }
    y
}

fn recur(l: i32, r1: &[[f64; 3]; 3], prev: &[f64]) -> Vec<f64> {
    let n = (2 * l + 1) as usize;
    let np = (2 * (l - 1) + 1) as usize;
    let get_prev = |m: i32, nn: i32| -> f64 {
        let row = (m + l - 1) as usize;
        let col = (nn + l - 1) as usize;
        prev[row * np + col]
    };
    let rr = |i: i32, j: i32| -> f64 { r1[(i + 1) as usize][(j + 1) as usize] };
    let p = |i: i32, m: i32, nn: i32| -> f64 {
        if nn == l {
            rr(i, 1) * get_prev(m, l - 1) - rr(i, -1) * get_prev(m, -l + 1)
        } else if nn == -l {
            rr(i, 1) * get_prev(m, -l + 1) + rr(i, -1) * get_prev(m, l - 1)
        } else {
            rr(i, 0) * get_prev(m, nn)
        }
    };

    let lf = l as f64;
    let mut out = vec![0.0; n * n];
    for m in -l..=l {
        for nn in -l..=l {
            let mf = m as f64;
            let am = m.abs() as f64;
            let denom = if nn.abs() < l {
                (lf + nn as f64) * (lf - nn as f64)
            } else {
                2.0 * lf * (2.0 * lf - 1.0)
            };
            let u_c = (((lf + mf) * (lf - mf)) / denom).sqrt();
            let v_c = 0.5
                * ((1.0 + if m == 0 { 1.0 } else { 0.0 }) * (lf + am - 1.0) * (lf + am) / denom)
                    .sqrt()
                * (1.0 - 2.0 * if m == 0 { 1.0 } else { 0.0 });
            let w_c = -0.5 * (((lf - am - 1.0) * (lf - am)) / denom).sqrt()
                * (1.0 - if m == 0 { 1.0 } else { 0.0 });

            let mut val = 0.0;
            if u_c != 0.0 {
                val += u_c * p(0, m, nn);
            }
            if v_c != 0.0 {
                let v_t: f64 = if m == 0 {
                    p(1, 1, nn) + p(-1, -1, nn)
                } else if m > 0 {
                    let d1: f64 = if m == 1 { 1.0 } else { 0.0 };
                    p(1, m - 1, nn) * (1.0 + d1).sqrt() - p(-1, -m + 1, nn) * (1.0 - d1)
                } else {
                    let d1: f64 = if m == -1 { 1.0 } else { 0.0 };
                    p(1, m + 1, nn) * (1.0 - d1) + p(-1, -m - 1, nn) * (1.0 + d1).sqrt()
                };
                val += v_c * v_t;
            }
            if w_c != 0.0 {
                let w_t = if m > 0 {
                    p(1, m + 1, nn) + p(-1, -m - 1, nn)
                } else {
                    p(1, m - 1, nn) - p(-1, -m + 1, nn)
                };
                val += w_c * w_t;
            }
            out[(m + l) as usize * n + (nn + l) as usize] = val;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::sh::{spherical_harmonics, MAX_DEGREE};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_unit(rng: &mut StdRng) -> Vec3 {
        loop {
            let v: [f64; 3] = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 1e-2 {
                return [v[0] / n, v[1] / n, v[2] / n];
            }
        }
    }

    #[test]
    fn identity_rotation_gives_identity_matrix() {
        for l in 0..=MAX_DEGREE {
            let d = wigner_d(l, &RotationSpec::IDENTITY);
            let n = 2 * l + 1;
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((d[i * n + j] - want).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn degree_one_matches_cartesian_matrix() {
        let mut rng = StdRng::seed_from_u64(21);
        let r = RotationSpec::random(&mut rng);
        let d = wigner_d(1, &r);
        let m = r.matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(d[i * 3 + j], m[i][j]);
            }
        }
    }

    /// The defining property: harmonics of a rotated vector equal the Wigner
    /// matrix applied to harmonics of the original vector.
    #[test]
    fn intertwines_with_spherical_harmonics() {
        let mut rng = StdRng::seed_from_u64(22);
        for l in 0..=MAX_DEGREE {
            for _ in 0..60 {
                let r = RotationSpec::random(&mut rng);
                let u = random_unit(&mut rng);
                let ru = r.rotate(u);
                let lhs = spherical_harmonics(l, ru).unwrap();
                let rhs = wigner_apply(l, &wigner_d(l, &r), &spherical_harmonics(l, u).unwrap());
                for (a, b) in lhs.iter().zip(&rhs) {
                    assert!((a - b).abs() < 1e-12, "l={l}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn matrices_are_orthogonal() {
        let mut rng = StdRng::seed_from_u64(23);
        for l in 0..=MAX_DEGREE {
            let r = RotationSpec::random(&mut rng);
            let d = wigner_d(l, &r);
            let n = 2 * l + 1;
            for i in 0..n {
                for j in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += d[i * n + k] * d[j * n + k];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((acc - want).abs() < 1e-11, "l={l}");
                }
            }
        }
    }

    #[test]
    fn composition_property() {
        let mut rng = StdRng::seed_from_u64(24);
        for _ in 0..25 {
            let r1 = RotationSpec::random(&mut rng);
            let r2 = RotationSpec::random(&mut rng);
            let comp = r1.compose(&r2);
            for l in 0..=MAX_DEGREE {
                let n = 2 * l + 1;
                let d1 = wigner_d(l, &r1);
                let d2 = wigner_d(l, &r2);
                let dc = wigner_d(l, &comp);
                for i in 0..n {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += d1[i * n + k] * d2[k * n + j];
                        }
                        assert!((acc - dc[i * n + j]).abs() < 1e-10, "l={l}");
                    }
                }
            }
        }
    }
}
