//! C-alpha chirality screening via the (N, C, CB) triple product.

use crate::geom::{cross, dot, Vec3};
use crate::protein_io::ideal::place_atom;
use crate::protein_io::topology::{backbone, topology};
use crate::protein_io::types::ProteinFragment;

/// Sign of the triple product (N-CA) x (C-CA) . (CB-CA); positive for
/// L-amino acids under this crate's conventions.
pub const L_SIGN: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ChiralityReport {
    pub per_residue: Vec<Option<f64>>,
    pub pass: bool,
}

/// Virtual CB from backbone atoms using the ideal improper placement.
pub fn virtual_cb(n: Vec3, ca: Vec3, c: Vec3) -> Vec3 {
    let deg = std::f64::consts::PI / 180.0;
    place_atom(
        c,
        n,
        ca,
        backbone::CA_CB,
        backbone::ANGLE_N_CA_CB * deg,
        backbone::CB_IMPROPER * deg,
    )
}

/// Checks every residue shares the configured handedness. Residues without
/// backbone atoms report None and do not affect the verdict.
pub fn chirality_check(fragment: &ProteinFragment, expected_sign: f64) -> ChiralityReport {
    let mut per_residue = Vec::with_capacity(fragment.residues.len());
    let mut pass = true;
    for r in &fragment.residues {
        let topo = topology(r.label);
        let rel = topo.relative_atom_names();
        let find = |name: &str| -> Option<Vec3> {
            rel.iter().position(|&x| x == name).and_then(|i| r.relative[i])
        };
        let (Some(n), Some(c)) = (find("N"), find("C")) else {
            per_residue.push(None);
            continue;
        };
        let cb = match find("CB") {
            Some(cb) => cb,
            None => {
                // GLY (or missing CB): construct a virtual one from the
                // backbone, in CA-relative coordinates.
                let v = virtual_cb(n, [0.0; 3], c);
                v
            }
        };
        let s = dot(cross(n, c), cb);
        let sign = if s >= 0.0 { 1.0 } else { -1.0 };
        if sign != expected_sign {
            pass = false;
        }
        per_residue.push(Some(sign));
    }
    ChiralityReport { per_residue, pass }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{norm, sub};
    use crate::protein_io::ideal::{build_fragment, BackboneTorsion};
    use crate::protein_io::types::ResidueLabel;

    fn mirror(frag: &ProteinFragment) -> ProteinFragment {
        let mut out = frag.clone();
        for r in out.residues.iter_mut() {
            r.ca[2] = -r.ca[2];
            for p in r.relative.iter_mut() {
                if let Some(v) = p {
                    *p = Some([v[0], v[1], -v[2]]);
                }
            }
        }
        out
    }

    #[test]
    fn standard_structures_pass() {
        let frag = build_fragment(
            &[ResidueLabel::Ala, ResidueLabel::Gly, ResidueLabel::Leu],
            &[BackboneTorsion::helix(); 3],
            &[],
            "t",
        );
        let report = chirality_check(&frag, L_SIGN);
        assert!(report.pass, "{:?}", report.per_residue);
    }

    #[test]
    fn mirrored_structures_fail() {
        let frag = build_fragment(
            &[ResidueLabel::Ala, ResidueLabel::Gly, ResidueLabel::Ser],
            &[BackboneTorsion::strand(); 3],
            &[],
            "t",
        );
        let report = chirality_check(&mirror(&frag), L_SIGN);
        assert!(!report.pass);
    }

    #[test]
    fn gly_virtual_cb_matches_real_cb_construction() {
        // Build ALA; its CB was placed with the same ideal internal
        // coordinates the virtual construction uses.
        let frag = build_fragment(
            &[ResidueLabel::Ala],
            &[BackboneTorsion::helix()],
            &[],
            "t",
        );
        let r = &frag.residues[0];
        let topo = topology(ResidueLabel::Ala);
        let rel = topo.relative_atom_names();
        let n = r.relative[rel.iter().position(|&x| x == "N").unwrap()].unwrap();
        let c = r.relative[rel.iter().position(|&x| x == "C").unwrap()].unwrap();
        let cb = r.relative[rel.iter().position(|&x| x == "CB").unwrap()].unwrap();
        let v = virtual_cb(n, [0.0; 3], c);
        assert!(norm(sub(v, cb)) < 1e-9);
    }
}
