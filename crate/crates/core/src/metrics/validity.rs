//! Chemical-validity scan: bond/angle deviations against the bundled ideal
//! tables and van der Waals clash counting; per-frame series for
//! trajectories.

use crate::error::{Error, Result};
use crate::geom::{norm, sub};
use crate::layers::codec::CodecLayout;
use crate::losses::plan::LossPlan;
use crate::protein_io::ideal::measure_angle;
use crate::protein_io::types::ProteinFragment;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidityReport {
    pub bond_mean_dev: f64,
    pub bond_max_dev: f64,
    /// Min and mean of measured/ideal bond length; compression of rigid
    /// interpolants shows up here as a factor below one.
    pub bond_scale_min: f64,
    pub bond_scale_mean: f64,
    pub angle_mean_dev: f64,
    pub angle_max_dev: f64,
    pub clash_count: usize,
    pub n_bonds: usize,
    pub n_angles: usize,
}

/// Scan one complete structure.
pub fn chemical_validity_scan(
    fragment: &ProteinFragment,
    layout: &CodecLayout,
    clash_tau: f64,
) -> Result<ValidityReport> {
    for r in &fragment.residues {
        let covered = layout.covered_atoms(r.label);
        if covered.iter().any(|&i| r.relative[i].is_none()) {
            return Err(Error::Precondition(
                "validity scan requires complete residues".into(),
            ));
        }
    }
    let plan = LossPlan::new(fragment, layout, true);
    let positions = &plan.gt;
    let mut bond_sum = 0.0;
    let mut bond_max = 0.0f64;
    let mut scale_min = f64::INFINITY;
    let mut scale_sum = 0.0;
    for &(a, b, ideal) in &plan.bonds {
        let d = norm(sub(positions[a], positions[b]));
        let dev = (d - ideal).abs();
        bond_sum += dev;
        bond_max = bond_max.max(dev);
        let s = d / ideal;
        scale_min = scale_min.min(s);
        scale_sum += s;
    }
    let mut angle_sum = 0.0;
    let mut angle_max = 0.0f64;
    for &(a, b, c, ideal) in &plan.angles {
        let dev = (measure_angle(positions[a], positions[b], positions[c]) - ideal).abs();
        angle_sum += dev;
        angle_max = angle_max.max(dev);
    }
    let mut clash_count = 0;
    for &(i, j, sumr) in &plan.clash_pairs {
        if clash_tau * sumr - norm(sub(positions[i], positions[j])) > 0.0 {
            clash_count += 1;
        }
    }
    let nb = plan.bonds.len();
    Ok(ValidityReport {
        bond_mean_dev: if nb == 0 { 0.0 } else { bond_sum / nb as f64 },
        bond_max_dev: bond_max,
        bond_scale_min: if nb == 0 { 1.0 } else { scale_min },
        bond_scale_mean: if nb == 0 { 1.0 } else { scale_sum / nb as f64 },
        angle_mean_dev: if plan.angles.is_empty() {
            0.0
        } else {
            angle_sum / plan.angles.len() as f64
        },
        angle_max_dev: angle_max,
        clash_count,
        n_bonds: nb,
        n_angles: plan.angles.len(),
    })
}

/// Scan every frame of a trajectory.
pub fn trajectory_validity(
    frames: &[ProteinFragment],
    layout: &CodecLayout,
    clash_tau: f64,
) -> Result<Vec<ValidityReport>> {
    frames
        .iter()
        .map(|f| chemical_validity_scan(f, layout, clash_tau))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{add, normalize, scale, Vec3};
    use crate::layers::codec::AtomMode;
    use crate::protein_io::ideal::{
        build_fragment, ideal_test_fragment, BackboneTorsion,
    };
    use crate::protein_io::types::ResidueLabel;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn ideal_fragments_scan_clean() {
        let mut rng = StdRng::seed_from_u64(181);
        let layout = CodecLayout::new(AtomMode::AllAtom);
        for i in 0..6 {
            let frag = ideal_test_fragment(&mut rng, 12 + i, "t");
            let report = chemical_validity_scan(&frag, &layout, 0.85).unwrap();
            assert!(report.bond_max_dev < 1e-9, "{report:?}");
            assert!(report.angle_max_dev < 1e-9);
            assert_eq!(report.clash_count, 0);
            assert!((report.bond_scale_mean - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rigid_interpolation_midpoint_compresses_bonds_by_cos_half_angle() {
        // Midpoint of a linear interpolation between X and a rotated copy:
        // separations perpendicular to the axis scale by cos(theta/2), so
        // with the axis chosen perpendicular to one bond the minimum bond
        // scale factor equals cos(45 deg) exactly.
        let frag = build_fragment(
            &[ResidueLabel::Ala, ResidueLabel::Leu, ResidueLabel::Ser],
            &[BackboneTorsion::helix(); 3],
            &[],
            "t",
        );
        // Bond N-CA of residue 0 defines the perpendicular plane.
        let n_vec = frag.residues[0].relative[0].unwrap();
        let axis = normalize(crate::geom::cross(n_vec, [0.13, 0.82, 0.55]));
        let angle = std::f64::consts::FRAC_PI_2;
        let rot = crate::geom::Quaternion::from_axis_angle(axis, angle).to_matrix();
        let rotated = crate::protein_io::ideal::transform_fragment(&frag, &rot, [0.0; 3]);
        let mut mid = frag.clone();
        for (rm, (ra, rb)) in mid
            .residues
            .iter_mut()
            .zip(frag.residues.iter().zip(&rotated.residues))
        {
            rm.ca = scale(add(ra.ca, rb.ca), 0.5);
            for (idx, p) in rm.relative.iter_mut().enumerate() {
                let a = add(ra.ca, ra.relative[idx].unwrap());
                let b = add(rb.ca, rb.relative[idx].unwrap());
                let global: Vec3 = scale(add(a, b), 0.5);
                *p = Some(sub(global, rm.ca));
            }
        }
        let layout = CodecLayout::new(AtomMode::AllAtom);
        let report = chemical_validity_scan(&mid, &layout, 0.85).unwrap();
        let want = (angle / 2.0).cos();
        assert!(
            (report.bond_scale_min - want).abs() < 1e-3,
            "scale {} vs {want}",
            report.bond_scale_min
        );
        assert!(report.bond_scale_mean < 1.0);
        assert!(report.bond_mean_dev > 0.1);
    }

    #[test]
    fn trajectory_series_length() {
        let mut rng = StdRng::seed_from_u64(182);
        let frames: Vec<ProteinFragment> = (0..7)
            .map(|_| ideal_test_fragment(&mut rng, 5, "t"))
            .collect();
        let layout = CodecLayout::new(AtomMode::AllAtom);
        let reports = trajectory_validity(&frames, &layout, 0.85).unwrap();
        assert_eq!(reports.len(), 7);
    }
}
