//! Residue topology: canonical heavy-atom order, internal-coordinate
//! construction table, bond graph, unorderable pairs and van der Waals
//! radii. The construction table is the single source of ideal geometry;
//! the ideal bond/angle tables used by the chemical losses are measured
//! from reference builds of this table (see `ideal.rs`), so generator and
//! losses agree exactly.

use crate::protein_io::types::{ResidueLabel, ALL_LABELS};
use std::collections::HashMap;
use std::sync::OnceLock;

pub const TOPOLOGY_VERSION: &str = "1.0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    C,
    N,
    O,
    S,
}

impl Element {
    pub fn vdw_radius(self) -> f64 {
        match self {
            Element::C => 1.70,
            Element::N => 1.55,
            Element::O => 1.52,
            Element::S => 1.80,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::S => "S",
        }
    }

    pub fn of_atom_name(name: &str) -> Element {
        match name.as_bytes()[0] {
            b'N' => Element::N,
            b'O' => Element::O,
            b'S' => Element::S,
            _ => Element::C,
        }
    }
}

/// Torsion rule for placing an atom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dihedral {
    /// Backbone phi: torsion(C(-1), N, CA, C).
    Phi,
    /// Backbone psi, used for the next N: torsion(N, CA, C, N(+1)).
    Psi,
    /// Carbonyl O sits opposite the next N: psi + 180.
    PsiPlus180,
    /// Backbone omega: torsion(CA(-1), C(-1), N, CA).
    Omega,
    /// Side-chain chi k plus a fixed offset (degrees).
    Chi(u8, f64),
    /// Fixed torsion in degrees (rings, planar groups, the CB improper).
    Fixed(f64),
}

/// Internal-coordinate placement of one side-chain atom. References are
/// atom names within the same residue.
#[derive(Debug, Clone, Copy)]
pub struct AtomSpec {
    pub name: &'static str,
    pub parent: &'static str,
    pub angle_ref: &'static str,
    pub dihedral_ref: &'static str,
    pub bond: f64,
    pub angle_deg: f64,
    pub dihedral: Dihedral,
}

const fn atom(
    name: &'static str,
    parent: &'static str,
    angle_ref: &'static str,
    dihedral_ref: &'static str,
    bond: f64,
    angle_deg: f64,
    dihedral: Dihedral,
) -> AtomSpec {
    AtomSpec { name, parent, angle_ref, dihedral_ref, bond, angle_deg, dihedral }
}

/// Ideal backbone internal coordinates shared by all residues.
pub mod backbone {
    pub const N_CA: f64 = 1.458;
    pub const CA_C: f64 = 1.525;
    pub const C_O: f64 = 1.231;
    pub const C_N: f64 = 1.329;
    pub const ANGLE_N_CA_C: f64 = 111.2;
    pub const ANGLE_CA_C_O: f64 = 120.8;
    pub const ANGLE_CA_C_N: f64 = 116.2;
    pub const ANGLE_C_N_CA: f64 = 121.7;
    /// Improper torsion(C, N, CA, CB) fixing L chirality.
    pub const CB_IMPROPER: f64 = -122.6;
    pub const ANGLE_N_CA_CB: f64 = 110.5;
    pub const CA_CB: f64 = 1.530;
}

#[derive(Debug, Clone)]
pub struct ResidueTopology {
    pub label: ResidueLabel,
    /// Side-chain construction entries, in canonical order (CB first).
    pub side_chain: Vec<AtomSpec>,
    /// Ring-closure bonds not implied by parent links.
    pub extra_bonds: Vec<(&'static str, &'static str)>,
    /// Unorderable atom-name pairs (chemically equivalent two-flips).
    pub pairs: Vec<(&'static str, &'static str)>,
    pub chi_count: usize,
    /// Full canonical heavy-atom order: N, CA, C, O, then side chain.
    pub atom_names: Vec<&'static str>,
    /// Complete intra-residue bond list (names).
    pub bonds: Vec<(&'static str, &'static str)>,
}

impl ResidueTopology {
    /// Canonical order with CA excluded (relative-position storage order).
    pub fn relative_atom_names(&self) -> Vec<&'static str> {
        self.atom_names.iter().copied().filter(|&n| n != "CA").collect()
    }

    pub fn atom_index(&self, name: &str) -> Option<usize> {
        self.relative_atom_names().iter().position(|&n| n == name)
    }

    pub fn heavy_atom_count(&self) -> usize {
        self.atom_names.len()
    }

    /// Indices (into the relative order) that belong to unorderable pairs.
    pub fn pair_indices(&self) -> Vec<(usize, usize)> {
        self.pairs
            .iter()
            .map(|&(a, b)| (self.atom_index(a).unwrap(), self.atom_index(b).unwrap()))
            .collect()
    }

    /// Indices of orderable relative atoms (not in any pair), in order.
    pub fn orderable_indices(&self) -> Vec<usize> {
        let paired: Vec<usize> = self.pair_indices().iter().flat_map(|&(a, b)| [a, b]).collect();
        (0..self.relative_atom_names().len())
            .filter(|i| !paired.contains(i))
            .collect()
    }

    pub fn element(&self, relative_idx: usize) -> Element {
        Element::of_atom_name(self.relative_atom_names()[relative_idx])
    }
}

fn cb(angle_deg: f64) -> AtomSpec {
    atom("CB", "CA", "N", "C", backbone::CA_CB, angle_deg, Dihedral::Fixed(backbone::CB_IMPROPER))
}

fn side_chain(label: ResidueLabel) -> (Vec<AtomSpec>, Vec<(&'static str, &'static str)>, Vec<(&'static str, &'static str)>, usize) {
    use Dihedral::{Chi, Fixed};
    use ResidueLabel::*;
    match label {
        Gly => (vec![], vec![], vec![], 0),
        Ala => (vec![cb(110.5)], vec![], vec![], 0),
        Ser => (
            vec![cb(110.5), atom("OG", "CB", "CA", "N", 1.417, 110.8, Chi(0, 0.0))],
            vec![],
            vec![],
            1,
        ),
        Cys => (
            vec![cb(110.5), atom("SG", "CB", "CA", "N", 1.808, 113.8, Chi(0, 0.0))],
            vec![],
            vec![],
            1,
        ),
        Thr => (
            vec![
                cb(110.5),
                atom("OG1", "CB", "CA", "N", 1.433, 109.6, Chi(0, 0.0)),
                atom("CG2", "CB", "CA", "N", 1.521, 110.5, Chi(0, -120.0)),
            ],
            vec![],
            vec![],
            1,
        ),
        Val => (
            vec![
                cb(110.5),
                atom("CG1", "CB", "CA", "N", 1.521, 110.5, Chi(0, 0.0)),
                atom("CG2", "CB", "CA", "N", 1.521, 110.5, Chi(0, 122.6)),
            ],
            vec![],
            vec![],
            1,
        ),
        Leu => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.530, 116.3, Chi(0, 0.0)),
                atom("CD1", "CG", "CB", "CA", 1.521, 110.7, Chi(1, 0.0)),
                atom("CD2", "CG", "CB", "CA", 1.521, 110.7, Chi(1, 122.6)),
            ],
            vec![],
            vec![],
            2,
        ),
        Ile => (
            vec![
                cb(110.5),
                atom("CG1", "CB", "CA", "N", 1.530, 110.4, Chi(0, 0.0)),
                atom("CG2", "CB", "CA", "N", 1.521, 110.5, Chi(0, -122.6)),
                atom("CD1", "CG1", "CB", "CA", 1.513, 113.9, Chi(1, 0.0)),
            ],
            vec![],
            vec![],
            2,
        ),
        Met => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.520, 114.1, Chi(0, 0.0)),
                atom("SD", "CG", "CB", "CA", 1.803, 112.7, Chi(1, 0.0)),
                atom("CE", "SD", "CG", "CB", 1.791, 100.9, Chi(2, 0.0)),
            ],
            vec![],
            vec![],
            3,
        ),
        Pro => (
            vec![
                atom("CB", "CA", "N", "C", backbone::CA_CB, 103.3, Fixed(backbone::CB_IMPROPER)),
                atom("CG", "CB", "CA", "N", 1.495, 104.5, Fixed(-9.75)),
                atom("CD", "CG", "CB", "CA", 1.507, 106.1, Fixed(31.5)),
            ],
            vec![("CD", "N")],
            vec![],
            0,
        ),
        Phe => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.502, 113.8, Chi(0, 0.0)),
                atom("CD1", "CG", "CB", "CA", 1.39, 120.0, Chi(1, 0.0)),
                atom("CD2", "CG", "CB", "CA", 1.39, 120.0, Chi(1, 180.0)),
                atom("CE1", "CD1", "CG", "CB", 1.39, 120.0, Fixed(180.0)),
                atom("CE2", "CD2", "CG", "CB", 1.39, 120.0, Fixed(180.0)),
                atom("CZ", "CE1", "CD1", "CG", 1.39, 120.0, Fixed(0.0)),
            ],
            vec![("CZ", "CE2")],
            vec![("CD1", "CD2"), ("CE1", "CE2")],
            2,
        ),
        Tyr => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.502, 113.8, Chi(0, 0.0)),
                atom("CD1", "CG", "CB", "CA", 1.39, 120.0, Chi(1, 0.0)),
                atom("CD2", "CG", "CB", "CA", 1.39, 120.0, Chi(1, 180.0)),
                atom("CE1", "CD1", "CG", "CB", 1.39, 120.0, Fixed(180.0)),
                atom("CE2", "CD2", "CG", "CB", 1.39, 120.0, Fixed(180.0)),
                atom("CZ", "CE1", "CD1", "CG", 1.39, 120.0, Fixed(0.0)),
                atom("OH", "CZ", "CE1", "CD1", 1.376, 120.0, Fixed(180.0)),
            ],
            vec![("CZ", "CE2")],
            vec![("CD1", "CD2"), ("CE1", "CE2")],
            2,
        ),
        Trp => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.50, 114.0, Chi(0, 0.0)),
                atom("CD1", "CG", "CB", "CA", 1.40, 126.0, Chi(1, 0.0)),
                atom("CD2", "CG", "CB", "CA", 1.40, 126.0, Chi(1, 180.0)),
                atom("NE1", "CD1", "CG", "CB", 1.40, 108.0, Fixed(180.0)),
                atom("CE2", "NE1", "CD1", "CG", 1.40, 108.0, Fixed(0.0)),
                atom("CE3", "CD2", "CE2", "NE1", 1.40, 120.0, Fixed(180.0)),
                atom("CZ2", "CE2", "CD2", "CE3", 1.40, 120.0, Fixed(0.0)),
                atom("CZ3", "CE3", "CD2", "CE2", 1.40, 120.0, Fixed(0.0)),
                atom("CH2", "CZ2", "CE2", "CD2", 1.40, 120.0, Fixed(0.0)),
            ],
            vec![("CE2", "CD2"), ("CH2", "CZ3")],
            vec![],
            2,
        ),
        Asp => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.516, 112.6, Chi(0, 0.0)),
                atom("OD1", "CG", "CB", "CA", 1.249, 118.4, Chi(1, 0.0)),
                atom("OD2", "CG", "CB", "CA", 1.249, 118.4, Chi(1, 180.0)),
            ],
            vec![],
            vec![("OD1", "OD2")],
            2,
        ),
        Glu => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.520, 114.1, Chi(0, 0.0)),
                atom("CD", "CG", "CB", "CA", 1.516, 112.6, Chi(1, 0.0)),
                atom("OE1", "CD", "CG", "CB", 1.249, 118.4, Chi(2, 0.0)),
                atom("OE2", "CD", "CG", "CB", 1.249, 118.4, Chi(2, 180.0)),
            ],
            vec![],
            vec![("OE1", "OE2")],
            3,
        ),
        Asn => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.516, 112.6, Chi(0, 0.0)),
                atom("OD1", "CG", "CB", "CA", 1.231, 120.8, Chi(1, 0.0)),
                atom("ND2", "CG", "CB", "CA", 1.328, 116.4, Chi(1, 180.0)),
            ],
            vec![],
            vec![],
            2,
        ),
        Gln => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.520, 114.1, Chi(0, 0.0)),
                atom("CD", "CG", "CB", "CA", 1.516, 112.6, Chi(1, 0.0)),
                atom("OE1", "CD", "CG", "CB", 1.231, 120.8, Chi(2, 0.0)),
                atom("NE2", "CD", "CG", "CB", 1.328, 116.4, Chi(2, 180.0)),
            ],
            vec![],
            vec![],
            3,
        ),
        His => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.50, 113.8, Chi(0, 0.0)),
                atom("ND1", "CG", "CB", "CA", 1.37, 126.0, Chi(1, 0.0)),
                atom("CD2", "CG", "CB", "CA", 1.37, 126.0, Chi(1, 180.0)),
                atom("CE1", "ND1", "CG", "CB", 1.37, 108.0, Fixed(180.0)),
                atom("NE2", "CE1", "ND1", "CG", 1.37, 108.0, Fixed(0.0)),
            ],
            vec![("NE2", "CD2")],
            vec![],
            2,
        ),
        Lys => (
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.520, 114.1, Chi(0, 0.0)),
                atom("CD", "CG", "CB", "CA", 1.520, 111.3, Chi(1, 0.0)),
                atom("CE", "CD", "CG", "CB", 1.520, 111.3, Chi(2, 0.0)),
                atom("NZ", "CE", "CD", "CG", 1.489, 111.9, Chi(3, 0.0)),
            ],
            vec![],
            vec![],
            4,
        ),
        Arg => (
            // NH1/NH2 are treated as orderable (see module notes); the
            // guanidinium is built planar.
            vec![
                cb(110.5),
                atom("CG", "CB", "CA", "N", 1.520, 114.1, Chi(0, 0.0)),
                atom("CD", "CG", "CB", "CA", 1.520, 111.3, Chi(1, 0.0)),
                atom("NE", "CD", "CG", "CB", 1.460, 112.0, Chi(2, 0.0)),
                atom("CZ", "NE", "CD", "CG", 1.329, 124.2, Chi(3, 0.0)),
                atom("NH1", "CZ", "NE", "CD", 1.326, 120.3, Fixed(0.0)),
                atom("NH2", "CZ", "NE", "CD", 1.326, 120.3, Fixed(180.0)),
            ],
            vec![],
            vec![],
            4,
        ),
    }
}

fn build_topology(label: ResidueLabel) -> ResidueTopology {
    let (side, extra_bonds, pairs, chi_count) = side_chain(label);
    let mut atom_names: Vec<&'static str> = vec!["N", "CA", "C", "O"];
    atom_names.extend(side.iter().map(|a| a.name));
    let mut bonds: Vec<(&'static str, &'static str)> =
        vec![("N", "CA"), ("CA", "C"), ("C", "O")];
    for a in &side {
        bonds.push((a.parent, a.name));
    }
    bonds.extend(extra_bonds.iter().copied());
    ResidueTopology {
        label,
        side_chain: side,
        extra_bonds,
        pairs,
        chi_count,
        atom_names,
        bonds,
    }
}

/// The topology table, built once.
pub fn topology(label: ResidueLabel) -> &'static ResidueTopology {
    static TABLE: OnceLock<HashMap<ResidueLabel, ResidueTopology>> = OnceLock::new();
    let table = TABLE.get_or_init(|| {
        ALL_LABELS
            .iter()
            .map(|&l| (l, build_topology(l)))
            .collect()
    });
    &table[&label]
}

/// Widest codec layout over all residues: orderable l=1 slots, pair slots.
pub fn max_orderable_slots() -> usize {
    ALL_LABELS
        .iter()
        .map(|&l| topology(l).orderable_indices().len())
        .max()
        .unwrap()
}

pub fn max_pair_slots() -> usize {
    ALL_LABELS
        .iter()
        .map(|&l| topology(l).pairs.len())
        .max()
        .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ResidueLabel::*;

    #[test]
    fn heavy_atom_counts_match_chemistry() {
        let expect = [
            (Gly, 4),
            (Ala, 5),
            (Ser, 6),
            (Cys, 6),
            (Thr, 7),
            (Val, 7),
            (Pro, 7),
            (Leu, 8),
            (Ile, 8),
            (Met, 8),
            (Asp, 8),
            (Asn, 8),
            (Glu, 9),
            (Gln, 9),
            (Lys, 9),
            (His, 10),
            (Arg, 11),
            (Phe, 11),
            (Tyr, 12),
            (Trp, 14),
        ];
        for (label, count) in expect {
            assert_eq!(
                topology(label).heavy_atom_count(),
                count,
                "{}",
                label.three_letter()
            );
        }
    }

    #[test]
    fn pair_sets_match_the_four_exception_residues() {
        assert_eq!(topology(Asp).pairs, vec![("OD1", "OD2")]);
        assert_eq!(topology(Glu).pairs, vec![("OE1", "OE2")]);
        assert_eq!(topology(Phe).pairs, vec![("CD1", "CD2"), ("CE1", "CE2")]);
        assert_eq!(topology(Tyr).pairs, vec![("CD1", "CD2"), ("CE1", "CE2")]);
        for l in [Gly, Ala, Arg, Trp, His, Lys] {
            assert!(topology(l).pairs.is_empty(), "{}", l.three_letter());
        }
    }

    #[test]
    fn slot_budget_is_determined_by_widest_residues() {
        // TRP: 13 orderable non-CA atoms; PHE/TYR carry 2 pairs.
        assert_eq!(max_orderable_slots(), 13);
        assert_eq!(max_pair_slots(), 2);
    }

    #[test]
    fn orderable_plus_paired_covers_relative_atoms() {
        for &l in ALL_LABELS.iter() {
            let topo = topology(l);
            let orderable = topo.orderable_indices().len();
            let paired = 2 * topo.pairs.len();
            assert_eq!(
                orderable + paired,
                topo.heavy_atom_count() - 1,
                "{}",
                l.three_letter()
            );
        }
    }

    #[test]
    fn bonds_reference_known_atoms() {
        for &l in ALL_LABELS.iter() {
            let topo = topology(l);
            for &(a, b) in &topo.bonds {
                assert!(topo.atom_names.contains(&a), "{a} in {}", l.three_letter());
                assert!(topo.atom_names.contains(&b), "{b} in {}", l.three_letter());
            }
            for &(a, b) in &topo.pairs {
                assert!(topo.atom_names.contains(&a));
                assert!(topo.atom_names.contains(&b));
            }
        }
    }

    #[test]
    fn gly_relative_order_is_n_c_o() {
        assert_eq!(topology(Gly).relative_atom_names(), vec!["N", "C", "O"]);
    }
}
