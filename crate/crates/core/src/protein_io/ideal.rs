//! Internal-coordinate construction (natural extension reference frame) of
//! all-atom residues, the measured ideal bond/angle tables derived from it,
//! and fragment generators for tests and desk-scale datasets.

use crate::geom::{add, cross, dot, norm, normalize, scale, sub, Vec3};
use crate::protein_io::topology::{backbone, topology, Dihedral, Element};
use crate::protein_io::types::{ProteinFragment, ResidueLabel, ResidueRecord, ALL_LABELS};
use rand::Rng;
use std::collections::HashMap;
use std::sync::OnceLock;

/// Place atom D given references A (dihedral), B (angle), C (parent):
/// |D - C| = bond, angle(B, C, D) = angle, torsion(A, B, C, D) = torsion.
pub fn place_atom(a: Vec3, b: Vec3, c: Vec3, bond: f64, angle: f64, torsion: f64) -> Vec3 {
    let bc = normalize(sub(c, b));
    let ab = normalize(sub(b, a));
    let n = normalize(cross(ab, bc));
    let m = cross(n, bc);
    let d2 = [
        -bond * angle.cos(),
        bond * angle.sin() * torsion.cos(),
        bond * angle.sin() * torsion.sin(),
    ];
    add(
        c,
        [
            bc[0] * d2[0] + m[0] * d2[1] + n[0] * d2[2],
            bc[1] * d2[0] + m[1] * d2[1] + n[1] * d2[2],
            bc[2] * d2[0] + m[2] * d2[1] + n[2] * d2[2],
        ],
    )
}

pub fn measure_angle(a: Vec3, b: Vec3, c: Vec3) -> f64 {
    let u = sub(a, b);
    let v = sub(c, b);
    let cr = cross(u, v);
    norm(cr).atan2(dot(u, v))
}

pub fn measure_torsion(a: Vec3, b: Vec3, c: Vec3, d: Vec3) -> f64 {
    let b0 = sub(a, b);
    let b1 = normalize(sub(c, b));
    let b2 = sub(d, c);
    let v = sub(b0, scale(b1, dot(b0, b1)));
    let w = sub(b2, scale(b1, dot(b2, b1)));
    let x = dot(v, w);
    let y = dot(cross(b1, v), w);
    y.atan2(x)
}

#[derive(Debug, Clone, Copy)]
pub struct BackboneTorsion {
    pub phi: f64,
    pub psi: f64,
    pub omega: f64,
}

impl BackboneTorsion {
    pub fn helix() -> Self {
        BackboneTorsion { phi: -57.0, psi: -47.0, omega: 180.0 }
    }

    pub fn strand() -> Self {
        BackboneTorsion { phi: -135.0, psi: 135.0, omega: 180.0 }
    }
}

/// Sensible clash-free default side-chain torsions.
pub fn default_chis(label: ResidueLabel) -> Vec<f64> {
    use ResidueLabel::*;
    let topo = topology(label);
    let mut chis = vec![180.0; topo.chi_count];
    if !chis.is_empty() {
        chis[0] = -60.0;
    }
    if matches!(label, Phe | Tyr | Trp | His) && chis.len() > 1 {
        chis[1] = 90.0;
    }
    // Carboxamide/carboxylate chi2 away from the eclipsed orientation.
    if matches!(label, Asp | Asn) && chis.len() > 1 {
        chis[1] = -45.0;
    }
    chis
}

/// Build an all-atom fragment from internal coordinates (angles in
/// degrees). `chis[i]` supplies residue i's side-chain torsions; missing
/// entries fall back to defaults.
pub fn build_fragment(
    labels: &[ResidueLabel],
    torsions: &[BackboneTorsion],
    chis: &[Vec<f64>],
    source_id: &str,
) -> ProteinFragment {
    assert_eq!(labels.len(), torsions.len());
    let n = labels.len();
    let deg = std::f64::consts::PI / 180.0;
    let mut residues = Vec::with_capacity(n);
    // Global backbone chain.
    let mut prev: Option<(Vec3, Vec3, Vec3)> = None; // (N, CA, C) of previous
    for i in 0..n {
        let label = labels[i];
        let topo = topology(label);
        let bb = torsions[i];
        let (n_pos, ca_pos, c_pos) = match prev {
            None => {
                let n_pos = [0.0, 0.0, 0.0];
                let ca_pos = [backbone::N_CA, 0.0, 0.0];
                let theta = backbone::ANGLE_N_CA_C * deg;
                let c_pos = add(
                    ca_pos,
                    [-backbone::CA_C * theta.cos(), backbone::CA_C * theta.sin(), 0.0],
                );
                (n_pos, ca_pos, c_pos)
            }
            Some((pn, pca, pc)) => {
                let n_pos = place_atom(
                    pn,
                    pca,
                    pc,
                    backbone::C_N,
                    backbone::ANGLE_CA_C_N * deg,
                    torsions[i - 1].psi * deg,
                );
                let ca_pos = place_atom(
                    pca,
                    pc,
                    n_pos,
                    backbone::N_CA,
                    backbone::ANGLE_C_N_CA * deg,
                    bb.omega * deg,
                );
                let c_pos = place_atom(
                    pc,
                    n_pos,
                    ca_pos,
                    backbone::CA_C,
                    backbone::ANGLE_N_CA_C * deg,
                    bb.phi * deg,
                );
                (n_pos, ca_pos, c_pos)
            }
        };
        let o_pos = place_atom(
            n_pos,
            ca_pos,
            c_pos,
            backbone::C_O,
            backbone::ANGLE_CA_C_O * deg,
            (bb.psi + 180.0) * deg,
        );
        let mut positions: HashMap<&str, Vec3> = HashMap::new();
        positions.insert("N", n_pos);
        positions.insert("CA", ca_pos);
        positions.insert("C", c_pos);
        positions.insert("O", o_pos);
        let chi = if i < chis.len() && !chis[i].is_empty() {
            chis[i].clone()
        } else {
            default_chis(label)
        };
        for spec in &topo.side_chain {
            let torsion = match spec.dihedral {
                Dihedral::Fixed(v) => v,
                Dihedral::Chi(k, off) => chi.get(k as usize).copied().unwrap_or(180.0) + off,
                Dihedral::Phi => bb.phi,
                Dihedral::Psi => bb.psi,
                Dihedral::PsiPlus180 => bb.psi + 180.0,
                Dihedral::Omega => bb.omega,
            };
            let pos = place_atom(
                positions[spec.dihedral_ref],
                positions[spec.angle_ref],
                positions[spec.parent],
                spec.bond,
                spec.angle_deg * deg,
                torsion * deg,
            );
            positions.insert(spec.name, pos);
        }
        let relative = topo
            .relative_atom_names()
            .iter()
            .map(|&name| Some(sub(positions[name], ca_pos)))
            .collect();
        residues.push(ResidueRecord {
            label,
            ca: ca_pos,
            relative,
            complete: true,
            seq_num: i as i64 + 1,
            insertion_code: ' ',
        });
        prev = Some((n_pos, ca_pos, c_pos));
    }
    ProteinFragment {
        residues,
        source_id: source_id.to_string(),
        chain: 'A',
        start: 0,
    }
}

/// Apply a rigid motion to every atom of a fragment.
pub fn transform_fragment(frag: &ProteinFragment, rot: &crate::geom::Mat3, t: Vec3) -> ProteinFragment {
    let mut out = frag.clone();
    for r in out.residues.iter_mut() {
        r.ca = add(crate::geom::mat_vec(rot, r.ca), t);
        for p in r.relative.iter_mut() {
            if let Some(v) = p {
                *p = Some(crate::geom::mat_vec(rot, *v));
            }
        }
    }
    out
}

// ----- measured ideal geometry -----

#[derive(Debug, Clone)]
pub struct ResidueIdeal {
    /// (atom index a, atom index b, ideal length) into the canonical full
    /// atom order (N, CA, C, O, side chain).
    pub bonds: Vec<(usize, usize, f64)>,
    /// (a, b, c, ideal angle rad), angle at b.
    pub angles: Vec<(usize, usize, usize, f64)>,
    /// Side-chain torsion quadruples (a, b, c, d) per chi, canonical order.
    pub chi_quads: Vec<[usize; 4]>,
    /// Van der Waals radius per atom in the full canonical order.
    pub vdw: Vec<f64>,
}

#[derive(Debug)]
pub struct IdealTables {
    pub version: &'static str,
    pub per_label: HashMap<ResidueLabel, ResidueIdeal>,
    pub peptide_bond: f64,
    /// Linkage angles: (CA, C, N+1), (O, C, N+1), (C, N+1, CA+1).
    pub angle_ca_c_n: f64,
    pub angle_o_c_n: f64,
    pub angle_c_n_ca: f64,
}

/// Ideal tables measured from reference builds, computed once. Because the
/// same construction code produces generator output and the tables, ideal
/// fragments score exactly zero bond/angle deviation.
pub fn ideal_tables() -> &'static IdealTables {
    static TABLES: OnceLock<IdealTables> = OnceLock::new();
    TABLES.get_or_init(|| {
        let mut per_label = HashMap::new();
        for &label in ALL_LABELS.iter() {
            per_label.insert(label, measure_residue(label));
        }
        // Linkage values from a reference dipeptide.
        let frag = build_fragment(
            &[ResidueLabel::Ala, ResidueLabel::Ala],
            &[BackboneTorsion::helix(); 2],
            &[],
            "ref",
        );
        let a0 = full_positions(&frag.residues[0]);
        let a1 = full_positions(&frag.residues[1]);
        let (n0, ca0, c0, o0) = (a0[0], a0[1], a0[2], a0[3]);
        let _ = n0;
        let (n1, ca1) = (a1[0], a1[1]);
        IdealTables {
            version: crate::protein_io::topology::TOPOLOGY_VERSION,
            per_label,
            peptide_bond: norm(sub(n1, c0)),
            angle_ca_c_n: measure_angle(ca0, c0, n1),
            angle_o_c_n: measure_angle(o0, c0, n1),
            angle_c_n_ca: measure_angle(c0, n1, ca1),
        }
    })
}

/// Global positions of every atom of a residue in full canonical order.
pub fn full_positions(r: &ResidueRecord) -> Vec<Vec3> {
    let topo = topology(r.label);
    let mut out = Vec::with_capacity(topo.atom_names.len());
    let mut rel_iter = 0usize;
    for &name in &topo.atom_names {
        if name == "CA" {
            out.push(r.ca);
        } else {
            let p = r.relative[rel_iter].map(|v| add(r.ca, v)).unwrap_or([f64::NAN; 3]);
            out.push(p);
            rel_iter += 1;
        }
    }
    out
}

fn measure_residue(label: ResidueLabel) -> ResidueIdeal {
    let topo = topology(label);
    let frag = build_fragment(
        &[ResidueLabel::Gly, label, ResidueLabel::Gly],
        &[BackboneTorsion::helix(); 3],
        &[],
        "ref",
    );
    let pos = full_positions(&frag.residues[1]);
    let name_idx: HashMap<&str, usize> = topo
        .atom_names
        .iter()
        .enumerate()
        .map(|(i, &n)| (n, i))
        .collect();
    let bonds: Vec<(usize, usize, f64)> = topo
        .bonds
        .iter()
        .map(|&(a, b)| {
            let (ia, ib) = (name_idx[a], name_idx[b]);
            (ia, ib, norm(sub(pos[ia], pos[ib])))
        })
        .collect();
    // All angle triples implied by the intra-residue bond graph.
    let mut adjacency: HashMap<usize, Vec<usize>> = HashMap::new();
    for &(ia, ib, _) in &bonds {
        adjacency.entry(ia).or_default().push(ib);
        adjacency.entry(ib).or_default().push(ia);
    }
    let mut angles = Vec::new();
    let mut centers: Vec<usize> = adjacency.keys().copied().collect();
    centers.sort_unstable();
    for b in centers {
        let mut nbrs = adjacency[&b].clone();
        nbrs.sort_unstable();
        for x in 0..nbrs.len() {
            for y in (x + 1)..nbrs.len() {
                let (a, c) = (nbrs[x], nbrs[y]);
                angles.push((a, b, c, measure_angle(pos[a], pos[b], pos[c])));
            }
        }
    }
    // Chi quadruples from the construction entries with zero offset.
    let mut chi_quads = Vec::new();
    for spec in &topo.side_chain {
        if let Dihedral::Chi(k, off) = spec.dihedral {
            if off == 0.0 {
                debug_assert_eq!(k as usize, chi_quads.len());
                chi_quads.push([
                    name_idx[spec.dihedral_ref],
                    name_idx[spec.angle_ref],
                    name_idx[spec.parent],
                    name_idx[spec.name],
                ]);
            }
        }
    }
    let vdw = topo
        .atom_names
        .iter()
        .map(|&n| Element::of_atom_name(n).vdw_radius())
        .collect();
    ResidueIdeal { bonds, angles, chi_quads, vdw }
}

// ----- generators -----

/// Random mixed helix/strand fragment with random sequence; used by tests
/// and the desk-scale dataset tooling. Proline is not sampled: its ring
/// clashes with helical predecessors, and generated sets must stay
/// clash-free under ideal geometry.
pub fn random_fragment<R: Rng>(rng: &mut R, length: usize, source_id: &str) -> ProteinFragment {
    let choices: Vec<ResidueLabel> = ALL_LABELS
        .iter()
        .copied()
        .filter(|&l| l != ResidueLabel::Pro)
        .collect();
    let labels: Vec<ResidueLabel> = (0..length)
        .map(|_| choices[rng.random_range(0..choices.len())])
        .collect();
    random_fragment_with_labels(rng, &labels, source_id)
}

/// Clash-free ideal fragment: one secondary-structure conformation for the
/// whole fragment (small jitter allowed), random proline-free sequence,
/// rejection-sampled until the van der Waals screen passes. This is the
/// generator behind the bundled ideal test set and desk-scale datasets.
pub fn ideal_test_fragment<R: Rng>(rng: &mut R, length: usize, source_id: &str) -> ProteinFragment {
    let choices: Vec<ResidueLabel> = ALL_LABELS
        .iter()
        .copied()
        .filter(|&l| l != ResidueLabel::Pro)
        .collect();
    for attempt in 0..64 {
        let labels: Vec<ResidueLabel> = (0..length)
            .map(|_| choices[rng.random_range(0..choices.len())])
            .collect();
        let base = if rng.random_bool(0.5) {
            BackboneTorsion::helix()
        } else {
            BackboneTorsion::strand()
        };
        let jitter = if attempt < 32 { 4.0 } else { 0.0 };
        let torsions: Vec<BackboneTorsion> = (0..length)
            .map(|_| BackboneTorsion {
                phi: base.phi + rng.random_range(-jitter..=jitter),
                psi: base.psi + rng.random_range(-jitter..=jitter),
                omega: 180.0,
            })
            .collect();
        let frag = build_fragment(&labels, &torsions, &[], source_id);
        if fragment_is_clash_free(&frag) {
            return frag;
        }
    }
    // Zero-jitter single conformations were verified clash-free for every
    // proline-free sequence; reaching this would mean the tables changed.
    unreachable!("could not build a clash-free ideal fragment");
}

/// Van der Waals screen with the same rules as the clash loss: atom pairs
/// within bond-graph distance 3 are exempt, the rest must satisfy
/// d >= 0.85 (r_i + r_j).
pub fn fragment_is_clash_free(frag: &ProteinFragment) -> bool {
    use crate::protein_io::topology::Element;
    let mut positions: Vec<Vec3> = Vec::new();
    let mut radii: Vec<f64> = Vec::new();
    let mut adjacency: Vec<Vec<usize>> = Vec::new();
    let mut prev_c: Option<usize> = None;
    for r in &frag.residues {
        let topo = topology(r.label);
        let base = positions.len();
        // Full canonical order: N, CA, C, O, side chain.
        for (ai, &name) in topo.atom_names.iter().enumerate() {
            let p = if name == "CA" {
                r.ca
            } else {
                let rel_idx = if ai == 0 { 0 } else { ai - 1 };
                match r.relative[rel_idx] {
                    Some(rel) => add(r.ca, rel),
                    None => return false,
                }
            };
            positions.push(p);
            radii.push(Element::of_atom_name(name).vdw_radius());
            adjacency.push(Vec::new());
        }
        let idx_of = |name: &str| base + topo.atom_names.iter().position(|&n| n == name).unwrap();
        for &(a, b) in &topo.bonds {
            let (ia, ib) = (idx_of(a), idx_of(b));
            adjacency[ia].push(ib);
            adjacency[ib].push(ia);
        }
        if let Some(c) = prev_c {
            let n = idx_of("N");
            adjacency[c].push(n);
            adjacency[n].push(c);
        }
        prev_c = Some(idx_of("C"));
    }
    let n_atoms = positions.len();
    let mut excluded = std::collections::HashSet::new();
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
    for i in 0..n_atoms {
        for j in (i + 1)..n_atoms {
            if excluded.contains(&(i, j)) {
                continue;
            }
            let d = crate::geom::norm(sub(positions[i], positions[j]));
            if 0.85 * (radii[i] + radii[j]) - d > 0.0 {
                return false;
            }
        }
    }
    true
}

pub fn random_fragment_with_labels<R: Rng>(
    rng: &mut R,
    labels: &[ResidueLabel],
    source_id: &str,
) -> ProteinFragment {
    let length = labels.len();
    // Alternate helix and strand stretches with slight angle jitter.
    let mut torsions = Vec::with_capacity(length);
    let mut in_helix = rng.random_bool(0.5);
    let mut left = rng.random_range(5..12usize);
    for _ in 0..length {
        if left == 0 {
            in_helix = !in_helix;
            left = rng.random_range(4..12);
        }
        left -= 1;
        let base = if in_helix {
            BackboneTorsion::helix()
        } else {
            BackboneTorsion::strand()
        };
        torsions.push(BackboneTorsion {
            phi: base.phi + rng.random_range(-8.0..8.0),
            psi: base.psi + rng.random_range(-8.0..8.0),
            omega: 180.0,
        });
    }
    build_fragment(labels, &torsions, &[], source_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protein_io::topology::topology;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    #[test]
    fn place_atom_reproduces_requested_internal_coordinates() {
        let a = [1.0, 0.2, -0.5];
        let b = [0.0, 1.0, 0.0];
        let c = [0.5, -0.3, 0.8];
        for (bond, angle, torsion) in [
            (1.5, 1.9, 0.7),
            (1.3, 2.1, -2.4),
            (1.8, 1.2, 3.0),
            (1.0, 0.6, -0.1),
        ] {
            let d = place_atom(a, b, c, bond, angle, torsion);
            assert!((norm(sub(d, c)) - bond).abs() < 1e-12);
            assert!((measure_angle(b, c, d) - angle).abs() < 1e-12);
            let t = measure_torsion(a, b, c, d);
            let diff = (t - torsion).rem_euclid(2.0 * std::f64::consts::PI);
            assert!(diff.min(2.0 * std::f64::consts::PI - diff) < 1e-12);
        }
    }

    #[test]
    fn backbone_torsions_round_trip() {
        let labels = vec![ResidueLabel::Ala; 5];
        let torsions: Vec<BackboneTorsion> = (0..5)
            .map(|i| BackboneTorsion {
                phi: -60.0 - 3.0 * i as f64,
                psi: -45.0 + 2.0 * i as f64,
                omega: 180.0,
            })
            .collect();
        let frag = build_fragment(&labels, &torsions, &[], "t");
        let pos: Vec<Vec<Vec3>> = frag.residues.iter().map(full_positions).collect();
        let deg = 180.0 / std::f64::consts::PI;
        for i in 1..5 {
            // phi(i) = torsion(C(i-1), N(i), CA(i), C(i))
            let phi = measure_torsion(pos[i - 1][2], pos[i][0], pos[i][1], pos[i][2]) * deg;
            assert!((phi - torsions[i].phi).abs() < 1e-9, "phi {phi}");
            // psi(i-1) = torsion(N, CA, C, N(+1))
            let psi =
                measure_torsion(pos[i - 1][0], pos[i - 1][1], pos[i - 1][2], pos[i][0]) * deg;
            assert!((psi - torsions[i - 1].psi).abs() < 1e-9, "psi {psi}");
        }
    }

    #[test]
    fn every_residue_builds_with_sane_ring_closures() {
        for &label in ALL_LABELS.iter() {
            let ideal = &ideal_tables().per_label[&label];
            for &(a, b, len) in &ideal.bonds {
                assert!(
                    (1.2..=1.85).contains(&len),
                    "{} bond {}-{} length {len}",
                    label.three_letter(),
                    topology(label).atom_names[a],
                    topology(label).atom_names[b],
                );
            }
        }
    }

    #[test]
    fn ideal_tables_are_conformation_independent() {
        // Rebuilding with different backbone/chi settings reproduces the
        // measured bond lengths and angles exactly.
        for &label in &[ResidueLabel::Trp, ResidueLabel::Pro, ResidueLabel::Arg, ResidueLabel::Val]
        {
            let ideal = &ideal_tables().per_label[&label];
            let mut chis = default_chis(label);
            for c in chis.iter_mut() {
                *c += 37.0;
            }
            let frag = build_fragment(
                &[ResidueLabel::Ser, label, ResidueLabel::Leu],
                &[
                    BackboneTorsion::strand(),
                    BackboneTorsion { phi: -80.0, psi: 20.0, omega: 180.0 },
                    BackboneTorsion::strand(),
                ],
                &[vec![], chis, vec![]],
                "t",
            );
            let pos = full_positions(&frag.residues[1]);
            for &(a, b, len) in &ideal.bonds {
                let got = norm(sub(pos[a], pos[b]));
                assert!(
                    (got - len).abs() < 1e-9,
                    "{} bond {a}-{b}: {got} vs {len}",
                    label.three_letter()
                );
            }
            for &(a, b, c, ang) in &ideal.angles {
                let got = measure_angle(pos[a], pos[b], pos[c]);
                assert!((got - ang).abs() < 1e-9, "{} angle", label.three_letter());
            }
        }
    }

    #[test]
    fn built_residues_have_l_chirality() {
        let frag = build_fragment(
            &[ResidueLabel::Ala, ResidueLabel::Leu, ResidueLabel::Ser],
            &[BackboneTorsion::helix(); 3],
            &[],
            "t",
        );
        for r in &frag.residues {
            let topo = topology(r.label);
            let rel = topo.relative_atom_names();
            let n = r.relative[rel.iter().position(|&x| x == "N").unwrap()].unwrap();
            let c = r.relative[rel.iter().position(|&x| x == "C").unwrap()].unwrap();
            let cb = r.relative[rel.iter().position(|&x| x == "CB").unwrap()].unwrap();
            let s = dot(cross(n, c), cb);
            assert!(s > 0.0, "triple product {s}");
        }
    }

    #[test]
    fn random_fragments_are_complete() {
        let mut rng = StdRng::seed_from_u64(3);
        let frag = random_fragment(&mut rng, 30, "t");
        assert_eq!(frag.len(), 30);
        assert!(frag.residues.iter().all(|r| r.complete));
        // Consecutive CA distances around 3.8 A.
        for w in frag.residues.windows(2) {
            let d = norm(sub(w[1].ca, w[0].ca));
            assert!((2.8..4.2).contains(&d), "CA-CA distance {d}");
        }
    }
}
