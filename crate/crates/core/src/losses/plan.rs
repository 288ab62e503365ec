//! Per-fragment precomputation shared by the objective and the metrics:
//! flat atom layout, ground-truth positions, bond/angle/torsion tables and
//! the non-bonded pair list with 1-2/1-3 exclusions.

use crate::geom::{add, Vec3};
use crate::layers::codec::CodecLayout;
use crate::protein_io::ideal::ideal_tables;
use crate::protein_io::topology::{topology, Element};
use crate::protein_io::types::{ProteinFragment, ResidueLabel};
use std::collections::HashSet;

#[derive(Debug, Clone)]
pub struct ResidueSlots {
    pub label: ResidueLabel,
    /// Flat index of the CA atom; covered relative atoms follow in order.
    pub flat_start: usize,
    /// Covered relative-atom indices, ascending.
    pub covered_rel: Vec<usize>,
    /// (flat a, flat b, pair index) for each unorderable pair.
    pub pairs: Vec<(usize, usize, usize)>,
}

impl ResidueSlots {
    pub fn n_atoms(&self) -> usize {
        1 + self.covered_rel.len()
    }

    /// Flat index of a full-order atom (CA = full index 1), if covered.
    pub fn flat_of_full(&self, full: usize) -> Option<usize> {
        if full == 1 {
            return Some(self.flat_start);
        }
        let rel = if full == 0 { 0 } else { full - 1 };
        self.covered_rel
            .iter()
            .position(|&r| r == rel)
            .map(|pos| self.flat_start + 1 + pos)
    }

    pub fn flat_range(&self) -> std::ops::Range<usize> {
        self.flat_start..self.flat_start + self.n_atoms()
    }
}

#[derive(Debug, Clone)]
pub struct LossPlan {
    pub residues: Vec<ResidueSlots>,
    pub n_atoms: usize,
    /// Ground-truth global positions, flat order (before flip resolution).
    pub gt: Vec<Vec3>,
    pub labels: Vec<usize>,
    pub bonds: Vec<(usize, usize, f64)>,
    pub angles: Vec<(usize, usize, usize, f64)>,
    /// Torsion quadruples compared against ground truth: side-chain chis
    /// plus backbone phi/psi/omega.
    pub torsion_quads: Vec<[usize; 4]>,
    /// Non-bonded pairs (i < j, vdW radius sum), 1-2 and 1-3 excluded.
    pub clash_pairs: Vec<(usize, usize, f64)>,
    pub vdw: Vec<f64>,
}

impl LossPlan {
    pub fn new(fragment: &ProteinFragment, layout: &CodecLayout, with_clash: bool) -> LossPlan {
        let tables = ideal_tables();
        let mut residues = Vec::with_capacity(fragment.len());
        let mut gt: Vec<Vec3> = Vec::new();
        let mut vdw: Vec<f64> = Vec::new();
        let mut labels = Vec::with_capacity(fragment.len());
        for r in &fragment.residues {
            let covered_rel = layout.covered_atoms(r.label);
            let flat_start = gt.len();
            gt.push(r.ca);
            vdw.push(Element::C.vdw_radius());
            let topo = topology(r.label);
            let rel_names = topo.relative_atom_names();
            for &rel in &covered_rel {
                let p = r.relative[rel].expect("loss plan needs complete residues");
                gt.push(add(r.ca, p));
                vdw.push(Element::of_atom_name(rel_names[rel]).vdw_radius());
            }
            let mut slots = ResidueSlots {
                label: r.label,
                flat_start,
                covered_rel,
                pairs: Vec::new(),
            };
            for (pair_idx, (a, b)) in layout.pair_atoms(r.label).into_iter().enumerate() {
                let fa = slots.flat_of_full(full_of_rel(a)).unwrap();
                let fb = slots.flat_of_full(full_of_rel(b)).unwrap();
                slots.pairs.push((fa, fb, pair_idx));
            }
            labels.push(r.label.index());
            residues.push(slots);
        }
        let n_atoms = gt.len();

        let mut bonds = Vec::new();
        let mut angles = Vec::new();
        let mut torsion_quads = Vec::new();
        for (i, slots) in residues.iter().enumerate() {
            let ideal = &tables.per_label[&slots.label];
            for &(a, b, len) in &ideal.bonds {
                if let (Some(fa), Some(fb)) = (slots.flat_of_full(a), slots.flat_of_full(b)) {
                    bonds.push((fa, fb, len));
                }
            }
            for &(a, b, c, ang) in &ideal.angles {
                if let (Some(fa), Some(fb), Some(fc)) = (
                    slots.flat_of_full(a),
                    slots.flat_of_full(b),
                    slots.flat_of_full(c),
                ) {
                    angles.push((fa, fb, fc, ang));
                }
            }
            for quad in &ideal.chi_quads {
                let mapped: Option<Vec<usize>> =
                    quad.iter().map(|&f| slots.flat_of_full(f)).collect();
                if let Some(m) = mapped {
                    torsion_quads.push([m[0], m[1], m[2], m[3]]);
                }
            }
            if i + 1 < residues.len() {
                let next = &residues[i + 1];
                let (c_i, n_next) = (
                    slots.flat_of_full(2).unwrap(),
                    next.flat_of_full(0).unwrap(),
                );
                bonds.push((c_i, n_next, tables.peptide_bond));
                let ca_i = slots.flat_of_full(1).unwrap();
                let o_i = slots.flat_of_full(3).unwrap();
                let ca_next = next.flat_of_full(1).unwrap();
                angles.push((ca_i, c_i, n_next, tables.angle_ca_c_n));
                angles.push((o_i, c_i, n_next, tables.angle_o_c_n));
                angles.push((c_i, n_next, ca_next, tables.angle_c_n_ca));
                // Backbone torsions: psi(i), omega(i+1), phi(i+1).
                let n_i = slots.flat_of_full(0).unwrap();
                let c_next = next.flat_of_full(2).unwrap();
                torsion_quads.push([n_i, ca_i, c_i, n_next]);
                torsion_quads.push([ca_i, c_i, n_next, ca_next]);
                torsion_quads.push([c_i, n_next, ca_next, c_next]);
            }
        }

        let clash_pairs = if with_clash {
            build_clash_pairs(n_atoms, &bonds, &vdw)
        } else {
            Vec::new()
        };
        LossPlan {
            residues,
            n_atoms,
            gt,
            labels,
            bonds,
            angles,
            torsion_quads,
            clash_pairs,
            vdw,
        }
    }
}

/// Relative index (N, C, O, side...) to full canonical index (N, CA, C, O,
/// side...).
pub fn full_of_rel(rel: usize) -> usize {
    if rel == 0 {
        0
    } else {
        rel + 1
    }
}

fn build_clash_pairs(
    n_atoms: usize,
    bonds: &[(usize, usize, f64)],
    vdw: &[f64],
) -> Vec<(usize, usize, f64)> {
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n_atoms];
    for &(a, b, _) in bonds {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    // Exclude pairs within graph distance 3 (1-2, 1-3 and 1-4): covalent
    // geometry and torsion-governed contacts are handled by the bond,
    // angle and dihedral terms, not the clash term.
    let mut excluded: HashSet<(usize, usize)> = HashSet::new();
    let key = |a: usize, b: usize| if a < b { (a, b) } else { (b, a) };
    for a in 0..n_atoms {
        for &b in &adjacency[a] {
            excluded.insert(key(a, b));
            for &c in &adjacency[b] {
                if c != a {
                    excluded.insert(key(a, c));
                    for &d in &adjacency[c] {
                        if d != a && d != b {
                            excluded.insert(key(a, d));
                        }
                    }
                }
            }
        }
    }
    let mut pairs = Vec::new();
    for i in 0..n_atoms {
        for j in (i + 1)..n_atoms {
            if !excluded.contains(&(i, j)) {
                pairs.push((i, j, vdw[i] + vdw[j]));
            }
        }
    }
    pairs
}
