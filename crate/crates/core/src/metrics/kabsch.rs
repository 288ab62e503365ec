//! Least-squares rigid superposition via the quaternion (Horn) method,
//! which yields the optimal proper rotation directly (reflections are
//! structurally excluded).

use crate::error::{Error, Result};
use crate::geom::{add, jacobi_eigh, mat_vec, norm, scale, sub, Mat3, Quaternion, Vec3};

#[derive(Debug, Clone)]
pub struct AlignmentResult {
    /// Proper rotation (det +1) mapping A onto B.
    pub rotation: Mat3,
    pub translation: Vec3,
    pub rmsd: f64,
}

impl AlignmentResult {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        add(mat_vec(&self.rotation, p), self.translation)
    }
}

fn centroid(points: &[Vec3]) -> Vec3 {
    let mut c = [0.0; 3];
    for p in points {
        c = add(c, *p);
    }
    scale(c, 1.0 / points.len() as f64)
}

/// Second-largest eigenvalue of the covariance, relative to the largest;
/// collinear point sets leave the rotation underdetermined.
fn rank_check(points: &[Vec3], center: Vec3) -> Result<()> {
    let mut cov = [0.0f64; 9];
    for p in points {
        let d = sub(*p, center);
        for i in 0..3 {
            for j in 0..3 {
                cov[i * 3 + j] += d[i] * d[j];
            }
        }
    }
    let (vals, _) = jacobi_eigh(&cov, 3);
    if vals[1] <= 1e-12 * vals[0].max(1e-300) {
        return Err(Error::Degenerate(
            "point set is collinear; superposition is not unique".into(),
        ));
    }
    Ok(())
}

/// Optimal proper rotation and translation of A onto B.
pub fn kabsch_align(a: &[Vec3], b: &[Vec3]) -> Result<AlignmentResult> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "point counts differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 3 {
        return Err(Error::Precondition("need at least 3 points".into()));
    }
    let ca = centroid(a);
    let cb = centroid(b);
    rank_check(a, ca)?;
    rank_check(b, cb)?;
    // Cross-covariance S[i][j] = sum a_i b_j over centered points.
    let mut s = [[0.0f64; 3]; 3];
    for (pa, pb) in a.iter().zip(b) {
        let da = sub(*pa, ca);
        let db = sub(*pb, cb);
        for i in 0..3 {
            for j in 0..3 {
                s[i][j] += da[i] * db[j];
            }
        }
    }
    // Horn's 4x4 key matrix; its leading eigenvector is the optimal
    // quaternion.
    let (sxx, sxy, sxz) = (s[0][0], s[0][1], s[0][2]);
    let (syx, syy, syz) = (s[1][0], s[1][1], s[1][2]);
    let (szx, szy, szz) = (s[2][0], s[2][1], s[2][2]);
    let n = [
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz,
    ];
    let (_, vecs) = jacobi_eigh(&n, 4);
    let q = Quaternion::new(vecs[0], vecs[1], vecs[2], vecs[3]).normalized();
    let rotation = q.to_matrix();
    let translation = sub(cb, mat_vec(&rotation, ca));
    let mut acc = 0.0;
    for (pa, pb) in a.iter().zip(b) {
        let moved = add(mat_vec(&rotation, *pa), translation);
        acc += norm(sub(moved, *pb)).powi(2);
    }
    let rmsd = (acc / a.len() as f64).sqrt();
    Ok(AlignmentResult { rotation, translation, rmsd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{det, identity, mat_mul, transpose};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};


    fn random_cloud(rng: &mut StdRng, n: usize) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-10.0..10.0),
                ]
            })
            .collect()
    }

    #[test]
    fn identity_on_equal_sets() {
        let mut rng = StdRng::seed_from_u64(161);
        let a = random_cloud(&mut rng, 12);
        let r = kabsch_align(&a, &a).unwrap();
        assert!(r.rmsd < 1e-9);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((r.rotation[i][j] - want).abs() < 1e-9);
            }
        }
        assert!(norm(r.translation) < 1e-9);
    }

    #[test]
    fn recovers_random_rigid_motions() {
        let mut rng = StdRng::seed_from_u64(162);
        for _ in 0..50 {
            let a = random_cloud(&mut rng, 10);
            let rot = crate::irreps::RotationSpec::random(&mut rng).matrix();
            let t = [
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ];
            let b: Vec<Vec3> = a.iter().map(|p| add(mat_vec(&rot, *p), t)).collect();
            let r = kabsch_align(&a, &b).unwrap();
            assert!(r.rmsd < 1e-9, "rmsd {}", r.rmsd);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((r.rotation[i][j] - rot[i][j]).abs() < 1e-9);
                }
            }
            for c in 0..3 {
                assert!((r.translation[c] - t[c]).abs() < 1e-8);
            }
            // Proper orthogonal.
            let rt = transpose(&r.rotation);
            let p = mat_mul(&r.rotation, &rt);
            for i in 0..3 {
                for j in 0..3 {
                    let want = identity()[i][j];
                    assert!((p[i][j] - want).abs() < 1e-10);
                }
            }
            assert!((det(&r.rotation) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mirror_keeps_proper_rotation_with_positive_rmsd() {
        let mut rng = StdRng::seed_from_u64(163);
        let a = random_cloud(&mut rng, 8);
        let b: Vec<Vec3> = a.iter().map(|p| [p[0], p[1], -p[2]]).collect();
        let r = kabsch_align(&a, &b).unwrap();
        assert!((det(&r.rotation) - 1.0).abs() < 1e-10);
        assert!(r.rmsd > 0.5, "mirror should not be reachable, rmsd {}", r.rmsd);
    }

    #[test]
    fn collinear_sets_error() {
        let a: Vec<Vec3> = (0..5).map(|i| [i as f64, 0.0, 0.0]).collect();
        let err = kabsch_align(&a, &a).unwrap_err();
        assert_eq!(err.category(), "degenerate");
    }
}
