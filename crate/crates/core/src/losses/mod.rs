//! Training objectives: vector-map Huber, residue cross entropy, chemical
//! terms, clash, permutation resolution, latent regularization and the
//! weighted total.

pub mod objective;
pub mod permutation;
pub mod plan;

pub use objective::{report_from_tape, total_loss_tape, LossReport, LossVars};
pub use permutation::{resolve_pair_flips, FlipChoice};
pub use plan::{LossPlan, ResidueSlots};

use crate::geom::Vec3;
use crate::irreps::IrrepTensor;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub vector_map: f64,
    pub cross_entropy: f64,
    pub bond: f64,
    pub angle: f64,
    pub dihedral: f64,
    pub clash: f64,
    pub latent_reg: f64,
    pub huber_delta: f64,
    pub clash_tau: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            vector_map: 1.0,
            cross_entropy: 1.0,
            bond: 0.5,
            angle: 0.25,
            dihedral: 0.1,
            clash: 0.25,
            latent_reg: 0.0,
            huber_delta: 1.0,
            clash_tau: 0.85,
        }
    }
}

fn huber(e: f64, delta: f64) -> f64 {
    let a = e.abs();
    if a <= delta {
        0.5 * e * e
    } else {
        delta * (a - 0.5 * delta)
    }
}

/// Mean elementwise Huber between the internal vector maps of two equal
/// point sets (ordered pairs i != j, three components each). Translation
/// invariant by construction.
pub fn vector_map_huber(pred: &[Vec3], truth: &[Vec3], delta: f64) -> f64 {
    assert_eq!(pred.len(), truth.len(), "atom count mismatch");
    let n = pred.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for c in 0..3 {
                let vp = pred[i][c] - pred[j][c];
                let vt = truth[i][c] - truth[j][c];
                acc += huber(vp - vt, delta);
            }
        }
    }
    acc / (n * (n - 1) * 3) as f64
}

/// Mean negative log softmax probability of the true labels.
pub fn residue_cross_entropy(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    assert_eq!(logits.len(), labels.len());
    let mut acc = 0.0;
    for (row, &y) in logits.iter().zip(labels) {
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|&x| (x - mx).exp()).sum();
        acc += z.ln() + mx - row[y];
    }
    acc / labels.len() as f64
}

/// First term: sum over channels of relu(1 - channel norm); second term:
/// sum over unordered distinct channel pairs of inner products, per degree.
/// Rotation invariant (norms and inner products only).
pub fn latent_regularization(v: &IrrepTensor) -> f64 {
    let mut total = 0.0;
    for (idx, &(l, d)) in v.signature().entries().iter().enumerate() {
        let n = 2 * l + 1;
        let block = &v.blocks()[idx];
        for c in 0..d {
            let norm: f64 = block[c * n..(c + 1) * n]
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            if norm < 1.0 {
                total += 1.0 - norm;
            }
            for c2 in (c + 1)..d {
                for m in 0..n {
                    total += block[c * n + m] * block[c2 * n + m];
                }
            }
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irreps::{apply_rotation, IrrepsSignature, RotationSpec};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn vector_map_zero_on_identity_and_translation() {
        let pts = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 0.5], [3.0, -1.0, 2.0]];
        assert_eq!(vector_map_huber(&pts, &pts, 1.0), 0.0);
        let shifted: Vec<Vec3> = pts.iter().map(|p| [p[0] + 4.0, p[1] - 7.0, p[2] + 0.1]).collect();
        assert!(vector_map_huber(&shifted, &pts, 1.0).abs() < 1e-12);
    }

    #[test]
    fn vector_map_rotation_matches_bruteforce() {
        // 90 degrees about z with non-collinear atoms: strictly positive,
        // equal to the directly evaluated Huber sum.
        let pts = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let rot: Vec<Vec3> = pts.iter().map(|p| [-p[1], p[0], p[2]]).collect();
        let got = vector_map_huber(&rot, &pts, 1.0);
        assert!(got > 0.0);
        // Independent brute force.
        let mut acc = 0.0;
        let mut count = 0;
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                for c in 0..3 {
                    let e = (rot[i][c] - rot[j][c]) - (pts[i][c] - pts[j][c]);
                    acc += huber(e, 1.0);
                    count += 1;
                }
            }
        }
        assert!((got - acc / count as f64).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let logits = vec![vec![0.0; 20]; 4];
        let labels = vec![0, 5, 10, 19];
        let ce = residue_cross_entropy(&logits, &labels);
        assert!((ce - 20.0f64.ln()).abs() < 1e-9);
        let mut confident = vec![vec![0.0; 20]; 2];
        confident[0][3] = 50.0;
        confident[1][7] = 50.0;
        assert!(residue_cross_entropy(&confident, &[3, 7]) < 1e-9);
    }

    #[test]
    fn cross_entropy_matches_direct_formula_on_random_logits() {
        let mut rng = StdRng::seed_from_u64(131);
        let logits: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..20).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..20)).collect();
        let got = residue_cross_entropy(&logits, &labels);
        let mut want = 0.0;
        for (row, &y) in logits.iter().zip(&labels) {
            let z: f64 = row.iter().map(|x| x.exp()).sum();
            want -= (row[y].exp() / z).ln();
        }
        want /= 8.0;
        assert!((got - want).abs() < 1e-7);
    }

    #[test]
    fn latent_reg_examples() {
        // Two orthogonal unit l=1 channels -> 0.
        let sig = IrrepsSignature::parse("2x1").unwrap();
        let t = IrrepTensor::from_blocks(
            sig.clone(),
            vec![vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]],
        )
        .unwrap();
        assert!(latent_regularization(&t).abs() < 1e-12);
        // One channel of norm 0.25 -> first term 0.75.
        let one = IrrepTensor::from_blocks(
            IrrepsSignature::parse("1x1").unwrap(),
            vec![vec![0.25, 0.0, 0.0]],
        )
        .unwrap();
        assert!((latent_regularization(&one) - 0.75).abs() < 1e-12);
        // Two identical unit channels -> second term 1.0 (one unordered pair).
        let same = IrrepTensor::from_blocks(
            sig,
            vec![vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        assert!((latent_regularization(&same) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn latent_reg_is_rotation_invariant() {
        let mut rng = StdRng::seed_from_u64(132);
        let sig = IrrepsSignature::parse("4x0+4x1+4x2").unwrap();
        let t = IrrepTensor::standard_normal(sig, &mut rng);
        let base = latent_regularization(&t);
        for _ in 0..30 {
            let r = RotationSpec::random(&mut rng);
            let rotated = latent_regularization(&apply_rotation(&t, &r));
            assert!((rotated - base).abs() < 1e-10);
        }
    }
}
