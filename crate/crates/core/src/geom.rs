//! Small dense linear algebra for 3D geometry: vectors, rotation matrices,
//! quaternions and a Jacobi eigensolver for symmetric matrices.

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalize(a: Vec3) -> Vec3 {
    let n = norm(a);
    if n == 0.0 {
        return [0.0; 3];
    }
    scale(a, 1.0 / n)
}

pub fn mat_vec(m: &Mat3, v: Vec3) -> Vec3 {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn transpose(m: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn identity() -> Mat3 {
    [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Unit quaternion (w, x, y, z) describing a rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Quaternion {
        Quaternion { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Quaternion {
        let u = normalize(axis);
        let (s, c) = (angle / 2.0).sin_cos();
        Quaternion { w: c, x: s * u[0], y: s * u[1], z: s * u[2] }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(&self) -> Quaternion {
        let n = self.norm();
        Quaternion { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    /// Hamilton product; `self * other` applies `other` first.
    pub fn mul(&self, o: &Quaternion) -> Quaternion {
        Quaternion {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    pub fn conjugate(&self) -> Quaternion {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Cartesian rotation matrix acting on column vectors.
    pub fn to_matrix(&self) -> Mat3 {
        let Quaternion { w, x, y, z } = *self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    pub fn rotate(&self, v: Vec3) -> Vec3 {
        mat_vec(&self.to_matrix(), v)
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi sweeps.
///
/// Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending and
/// eigenvectors as rows of the returned matrix (row i pairs with value i).
pub fn jacobi_eigh(a: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), n * n, "matrix must be n x n");
    let mut m = a.to_vec();
    // v starts as identity; accumulates the rotations (rows are eigenvectors).
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[p * n + q] * m[p * n + q];
            }
        }
        if off.sqrt() < 1e-300_f64.max(1e-15 * frob(&m, n)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Apply the rotation G(p, q) on both sides of m.
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vpk = v[p * n + k];
                    let vqk = v[q * n + k];
                    v[p * n + k] = c * vpk - s * vqk;
                    v[q * n + k] = s * vpk + c * vqk;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].partial_cmp(&m[i * n + i]).unwrap());
    let mut vals = Vec::with_capacity(n);
    let mut vecs = vec![0.0; n * n];
    for (row, &i) in order.iter().enumerate() {
        vals.push(m[i * n + i]);
        vecs[row * n..(row + 1) * n].copy_from_slice(&v[i * n..(i + 1) * n]);
    }
    (vals, vecs)
}

fn frob(m: &[f64], n: usize) -> f64 {
    m.iter().take(n * n).map(|x| x * x).sum::<f64>().sqrt()
}

/// Eigendecomposition of a symmetric 3x3 matrix; eigenvalues descending,
/// eigenvectors as rows.
pub fn eigh3(t: &Mat3) -> ([f64; 3], Mat3) {
    let flat: Vec<f64> = t.iter().flatten().copied().collect();
    let (vals, vecs) = jacobi_eigh(&flat, 3);
    let mut evals = [0.0; 3];
    let mut evecs = [[0.0; 3]; 3];
    for i in 0..3 {
        evals[i] = vals[i];
        for j in 0..3 {
            evecs[i][j] = vecs[i * 3 + j];
        }
    }
    (evals, evecs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_quat(rng: &mut StdRng) -> Quaternion {
        loop {
            let q = Quaternion::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if q.norm() > 1e-3 {
                return q.normalized();
            }
        }
    }

    #[test]
    fn quaternion_matrix_is_rotation() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let q = random_quat(&mut rng);
            let m = q.to_matrix();
            let mt = transpose(&m);
            let p = mat_mul(&m, &mt);
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i][j] - want).abs() < 1e-12);
                }
            }
            assert!((det(&m) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quaternion_composition_matches_matrix_product() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..20 {
            let q1 = random_quat(&mut rng);
            let q2 = random_quat(&mut rng);
            let lhs = q1.mul(&q2).to_matrix();
            let rhs = mat_mul(&q1.to_matrix(), &q2.to_matrix());
            for i in 0..3 {
                for j in 0..3 {
                    assert!((lhs[i][j] - rhs[i][j]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn jacobi_recovers_known_spectrum() {
        // Diagonalize Q D Q^T and recover D.
        let mut rng = StdRng::seed_from_u64(9);
        let q = random_quat(&mut rng).to_matrix();
        let d = [5.0, -1.0, 2.5];
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a[i][j] += q[i][k] * d[k] * q[j][k];
                }
            }
        }
        let (vals, vecs) = eigh3(&a);
        assert!((vals[0] - 5.0).abs() < 1e-10);
        assert!((vals[1] - 2.5).abs() < 1e-10);
        assert!((vals[2] + 1.0).abs() < 1e-10);
        // Each eigenvector satisfies A v = lambda v.
        for i in 0..3 {
            let av = mat_vec(&a, vecs[i]);
            for j in 0..3 {
                assert!((av[j] - vals[i] * vecs[i][j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn jacobi_handles_larger_symmetric_matrices() {
        let mut rng = StdRng::seed_from_u64(10);
        let n = 12;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let x = rng.random_range(-1.0..1.0);
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let (vals, vecs) = jacobi_eigh(&a, n);
        for r in 0..n {
            // A v = lambda v
            for i in 0..n {
                let mut av = 0.0;
                for j in 0..n {
                    av += a[i * n + j] * vecs[r * n + j];
                }
                assert!((av - vals[r] * vecs[r * n + i]).abs() < 1e-9);
            }
        }
        // Sorted descending
        for r in 1..n {
            assert!(vals[r - 1] >= vals[r] - 1e-12);
        }
    }
}
