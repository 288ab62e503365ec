//! Real spherical harmonics up to degree 3.
//!
//! Basis conventions used throughout the crate:
//! * l=0 is the constant `[1.0]`.
//! * l=1 components are ordered so they coincide with Cartesian `(x, y, z)`;
//!   the degree-1 Wigner matrix is then the ordinary rotation matrix.
//! * l>=2 components follow the standard real-harmonic order `m = -l..l`.
//!
//! Each degree is scaled so that the output has unit Euclidean norm for any
//! unit input vector.

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Highest degree with an implemented basis.
pub const MAX_DEGREE: usize = 3;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT15: f64 = 3.872_983_346_207_417;

/// Degree-l real spherical harmonics of a unit vector.
///
/// Checks that `u` is normalized to 1e-9 and that the degree is supported.
pub fn spherical_harmonics(l: usize, u: Vec3) -> Result<Vec<f64>> {
    let n2 = u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    if (n2.sqrt() - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "spherical_harmonics expects a unit vector, got norm {}",
            n2.sqrt()
        )));
    }
    if l > MAX_DEGREE {
        return Err(Error::UnsupportedDegree { requested: l, max: MAX_DEGREE });
    }
    Ok(sh_unchecked(l, u))
}

/// Same as [`spherical_harmonics`] without precondition checks. For l >= 1
/// the zero vector maps to zeros, which removes the singularity at
/// coincident points.
pub fn sh_unchecked(l: usize, u: Vec3) -> Vec<f64> {
    let [x, y, z] = u;
    if l > 0 && x == 0.0 && y == 0.0 && z == 0.0 {
        return vec![0.0; 2 * l + 1];
    }
    match l {
        0 => vec![1.0],
        1 => vec![x, y, z],
        2 => vec![
            SQRT3 * x * y,
            SQRT3 * y * z,
            0.5 * (3.0 * z * z - 1.0),
            SQRT3 * x * z,
            0.5 * SQRT3 * (x * x - y * y),
        ],
        3 => {
            let c33 = (5.0 / 8.0f64).sqrt();
            let c31 = (3.0 / 8.0f64).sqrt();
            vec![
                c33 * y * (3.0 * x * x - y * y),
                SQRT15 * x * y * z,
                c31 * y * (5.0 * z * z - 1.0),
                0.5 * z * (5.0 * z * z - 3.0),
                c31 * x * (5.0 * z * z - 1.0),
                0.5 * SQRT15 * z * (x * x - y * y),
                c33 * x * (x * x - 3.0 * y * y),
            ]
        }
        _ => panic!("degree {l} beyond MAX_DEGREE"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::normalize;
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
                return normalize(v);
            }
        }
    }

    /// Independent oracle: orthonormal real harmonics from the textbook
    /// table, rescaled by sqrt(4*pi/(2l+1)).
    fn oracle(l: usize, u: Vec3) -> Vec<f64> {
        use std::f64::consts::PI;
        let [x, y, z] = u;
        let scale = (4.0 * PI / (2 * l + 1) as f64).sqrt();
        let ortho: Vec<f64> = match l {
            0 => vec![0.5 * (1.0 / PI).sqrt()],
            1 => {
                let c = (3.0 / (4.0 * PI)).sqrt();
                vec![c * x, c * y, c * z]
            }
            2 => vec![
                0.5 * (15.0 / PI).sqrt() * x * y,
                0.5 * (15.0 / PI).sqrt() * y * z,
                0.25 * (5.0 / PI).sqrt() * (3.0 * z * z - 1.0),
                0.5 * (15.0 / PI).sqrt() * x * z,
                0.25 * (15.0 / PI).sqrt() * (x * x - y * y),
            ],
            3 => vec![
                0.25 * (35.0 / (2.0 * PI)).sqrt() * y * (3.0 * x * x - y * y),
                0.5 * (105.0 / PI).sqrt() * x * y * z,
                0.25 * (21.0 / (2.0 * PI)).sqrt() * y * (5.0 * z * z - 1.0),
                0.25 * (7.0 / PI).sqrt() * (5.0 * z * z * z - 3.0 * z),
                0.25 * (21.0 / (2.0 * PI)).sqrt() * x * (5.0 * z * z - 1.0),
                0.25 * (105.0 / PI).sqrt() * z * (x * x - y * y),
                0.25 * (35.0 / (2.0 * PI)).sqrt() * x * (x * x - 3.0 * y * y),
            ],
            _ => unreachable!(),
        };
        ortho.iter().map(|v| v * scale).collect()
    }

    #[test]
    fn degree_zero_is_one() {
        assert_eq!(spherical_harmonics(0, [0.0, 0.0, 1.0]).unwrap(), vec![1.0]);
        assert_eq!(spherical_harmonics(0, [1.0, 0.0, 0.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn degree_one_is_identity_embedding() {
        let u = [0.0, 0.0, 1.0];
        assert_eq!(spherical_harmonics(1, u).unwrap(), vec![0.0, 0.0, 1.0]);
        let v = normalize([0.3, -0.2, 0.9]);
        let sh = spherical_harmonics(1, v).unwrap();
        assert_eq!(sh, vec![v[0], v[1], v[2]]);
    }

    #[test]
    fn matches_polynomial_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        for l in 0..=MAX_DEGREE {
            for _ in 0..200 {
                let u = random_unit(&mut rng);
                let got = spherical_harmonics(l, u).unwrap();
                let want = oracle(l, u);
                for (g, w) in got.iter().zip(&want) {
                    assert!((g - w).abs() < 1e-12, "l={l} got {g} want {w}");
                }
            }
        }
    }

    #[test]
    fn degree_two_at_pole() {
        let got = spherical_harmonics(2, [0.0, 0.0, 1.0]).unwrap();
        let want = oracle(2, [0.0, 0.0, 1.0]);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-14);
        }
        assert_eq!(got[2], 1.0);
    }

    #[test]
    fn constant_norm_over_sphere() {
        let mut rng = StdRng::seed_from_u64(12);
        for l in 0..=MAX_DEGREE {
            for _ in 0..1000 {
                let u = random_unit(&mut rng);
                let sh = spherical_harmonics(l, u).unwrap();
                let n: f64 = sh.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-10, "l={l} norm {n}");
            }
        }
    }

    #[test]
    fn rejects_non_unit_input() {
        assert!(spherical_harmonics(1, [0.0, 0.0, 2.0]).is_err());
        assert!(matches!(
            spherical_harmonics(9, [0.0, 0.0, 1.0]),
            Err(crate::error::Error::UnsupportedDegree { .. })
        ));
    }

    #[test]
    fn zero_vector_maps_to_zero_for_higher_degrees() {
        assert_eq!(sh_unchecked(1, [0.0; 3]), vec![0.0; 3]);
        assert_eq!(sh_unchecked(2, [0.0; 3]), vec![0.0; 5]);
        assert_eq!(sh_unchecked(0, [0.0; 3]), vec![1.0]);
    }
}
