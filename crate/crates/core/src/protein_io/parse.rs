//! Fixed-column PDB parsing: ATOM records only, first model, altlocs
//! resolved to highest occupancy, hydrogens and non-standard residues
//! dropped with counts.

use crate::error::Result;
use crate::geom::{norm, sub, Vec3};
use crate::protein_io::topology::topology;
use crate::protein_io::types::{Chain, ResidueLabel, ResidueRecord};
use std::collections::HashMap;
use std::io::BufRead;

#[derive(Debug, Default, Clone)]
pub struct ParseReport {
    pub dropped_hydrogens: usize,
    pub dropped_nonstandard: usize,
    pub skipped_malformed: usize,
    pub unknown_atom_names: usize,
    pub missing_ca: usize,
    pub incomplete_residues: usize,
}

#[derive(Debug)]
pub struct ParsedStructure {
    pub chains: Vec<Chain>,
    pub resolution: Option<f64>,
    pub report: ParseReport,
}

#[derive(Debug, Clone)]
pub struct RawAtom {
    pub name: String,
    pub altloc: char,
    pub position: Vec3,
    pub occupancy: f64,
}

#[derive(Debug, Clone)]
pub struct RawResidue {
    pub label: ResidueLabel,
    pub seq_num: i64,
    pub insertion_code: char,
    pub atoms: Vec<RawAtom>,
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

/// Parse a PDB text stream into canonicalized chains.
pub fn parse_pdb<R: BufRead>(reader: R) -> Result<ParsedStructure> {
    let mut report = ParseReport::default();
    let mut resolution = None;
    // (chain, seq, icode) -> residue accumulator; insertion order kept.
    let mut order: Vec<(char, i64, char)> = Vec::new();
    let mut map: HashMap<(char, i64, char), RawResidue> = HashMap::new();
    let mut in_first_model = true;

    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        let _ = line_no;
        if line.starts_with("MODEL") {
            // Only the first model is consumed.
            continue;
        }
        if line.starts_with("ENDMDL") {
            in_first_model = false;
            continue;
        }
        if line.starts_with("REMARK   2 RESOLUTION.") {
            // e.g. "REMARK   2 RESOLUTION.    1.74 ANGSTROMS."
            let rest = &line[22..];
            if let Some(tok) = rest.split_whitespace().next() {
                if let Some(v) = parse_f64(tok) {
                    resolution = Some(v);
                }
            }
            continue;
        }
        if !in_first_model || !line.starts_with("ATOM  ") {
            continue;
        }
        if line.len() < 54 {
            report.skipped_malformed += 1;
            continue;
        }
        let atom_name = line[12..16].trim().to_string();
        let altloc = line.as_bytes()[16] as char;
        let res_name = line[17..20].trim().to_string();
        let chain_id = line.as_bytes()[21] as char;
        let seq_num = match line[22..26].trim().parse::<i64>() {
            Ok(v) => v,
            Err(_) => {
                report.skipped_malformed += 1;
                continue;
            }
        };
        let icode = line.as_bytes()[26] as char;
        let (x, y, z) = match (
            parse_f64(&line[30..38]),
            parse_f64(&line[38..46]),
            parse_f64(&line[46..54]),
        ) {
            (Some(x), Some(y), Some(z)) => (x, y, z),
            _ => {
                report.skipped_malformed += 1;
                continue;
            }
        };
        let occupancy = if line.len() >= 60 {
            parse_f64(&line[54..60]).unwrap_or(1.0)
        } else {
            1.0
        };
        // Hydrogens: element column or name starting with H/digit-H.
        let element = if line.len() >= 78 { line[76..78].trim() } else { "" };
        let is_h = element == "H" || element == "D" || {
            let t = atom_name.trim_start_matches(|c: char| c.is_ascii_digit());
            t.starts_with('H') || t.starts_with('D')
        };
        if is_h {
            report.dropped_hydrogens += 1;
            continue;
        }
        let Some(label) = ResidueLabel::from_three_letter(&res_name) else {
            report.dropped_nonstandard += 1;
            continue;
        };
        if atom_name == "OXT" {
            // Terminal oxygen ignored: keeps atom counts label-determined.
            continue;
        }
        let key = (chain_id, seq_num, icode);
        let entry = map.entry(key).or_insert_with(|| {
            order.push(key);
            RawResidue { label, seq_num, insertion_code: icode, atoms: Vec::new() }
        });
        entry.atoms.push(RawAtom {
            name: atom_name,
            altloc,
            position: [x, y, z],
            occupancy,
        });
    }

    // Group into chains preserving file order.
    let mut chains: Vec<Chain> = Vec::new();
    for key in order {
        let raw = map.remove(&key).unwrap();
        let record = match canonicalize_residue(&raw, &mut report) {
            Some(r) => r,
            None => continue,
        };
        match chains.last_mut() {
            Some(c) if c.id == key.0 => c.residues.push(record),
            _ => chains.push(Chain { id: key.0, residues: vec![record] }),
        }
    }
    Ok(ParsedStructure { chains, resolution, report })
}

/// Reorder a raw residue's atoms to the topology's canonical order,
/// resolving altlocs by occupancy. Returns None when CA is missing.
pub fn canonicalize_residue(raw: &RawResidue, report: &mut ParseReport) -> Option<ResidueRecord> {
    let topo = topology(raw.label);
    // Resolve altlocs: keep highest occupancy per atom name (ties by
    // altloc character for determinism).
    let mut best: HashMap<&str, &RawAtom> = HashMap::new();
    for atom in &raw.atoms {
        if topo.atom_names.iter().all(|&n| n != atom.name) {
            report.unknown_atom_names += 1;
            continue;
        }
        match best.get(atom.name.as_str()) {
            Some(cur)
                if (cur.occupancy, std::cmp::Reverse(cur.altloc))
                    >= (atom.occupancy, std::cmp::Reverse(atom.altloc)) => {}
            _ => {
                best.insert(atom.name.as_str(), atom);
            }
        }
    }
    let Some(ca) = best.get("CA").map(|a| a.position) else {
        report.missing_ca += 1;
        return None;
    };
    let rel_names = topo.relative_atom_names();
    let mut relative: Vec<Option<Vec3>> = Vec::with_capacity(rel_names.len());
    let mut complete = true;
    for name in rel_names {
        match best.get(name) {
            Some(a) => {
                let rel = sub(a.position, ca);
                if norm(rel) >= 10.0 {
                    // Sanity screen: side-chain atom unreasonably far.
                    relative.push(None);
                    complete = false;
                } else {
                    relative.push(Some(rel));
                }
            }
            None => {
                relative.push(None);
                complete = false;
            }
        }
    }
    if !complete {
        report.incomplete_residues += 1;
    }
    Some(ResidueRecord {
        label: raw.label,
        ca,
        relative,
        complete,
        seq_num: raw.seq_num,
        insertion_code: raw.insertion_code,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom_line(
        serial: usize,
        name: &str,
        altloc: char,
        res: &str,
        chain: char,
        seq: i64,
        pos: [f64; 3],
        occ: f64,
    ) -> String {
        let padded = if name.len() >= 4 {
            name.to_string()
        } else {
            format!(" {name:<3}")
        };
        format!(
            "ATOM  {serial:>5} {padded}{altloc}{res:>3} {chain}{seq:>4}    {:>8.3}{:>8.3}{:>8.3}{occ:>6.2}{:>6.2}          {:>2}",
            pos[0], pos[1], pos[2], 0.0, &name[0..1]
        )
    }

    #[test]
    fn crafted_atom_line_parses_exactly() {
        let text = [
            atom_line(1, "N", ' ', "GLY", 'A', 1, [1.234, -2.5, 1.0], 1.0),
            atom_line(2, "CA", ' ', "GLY", 'A', 1, [2.0, 0.0, 0.0], 1.0),
            atom_line(3, "C", ' ', "GLY", 'A', 1, [3.0, 0.5, 0.25], 1.0),
            atom_line(4, "O", ' ', "GLY", 'A', 1, [4.0, 1.0, 0.5], 1.0),
        ]
        .join("\n");
        let parsed = parse_pdb(text.as_bytes()).unwrap();
        assert_eq!(parsed.chains.len(), 1);
        let r = &parsed.chains[0].residues[0];
        assert_eq!(r.label, ResidueLabel::Gly);
        assert!(r.complete);
        assert_eq!(r.ca, [2.0, 0.0, 0.0]);
        let n_rel = r.relative[0].unwrap();
        assert!((n_rel[0] - (1.234 - 2.0)).abs() < 1e-9);
        assert!((n_rel[1] + 2.5).abs() < 1e-9);
        assert!((n_rel[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn altloc_keeps_highest_occupancy() {
        let text = [
            atom_line(1, "N", 'A', "GLY", 'A', 1, [0.0, 0.0, 0.0], 0.6),
            atom_line(2, "N", 'B', "GLY", 'A', 1, [9.0, 9.0, 9.0], 0.4),
            atom_line(3, "CA", ' ', "GLY", 'A', 1, [1.0, 0.0, 0.0], 1.0),
            atom_line(4, "C", ' ', "GLY", 'A', 1, [2.0, 0.0, 0.0], 1.0),
            atom_line(5, "O", ' ', "GLY", 'A', 1, [3.0, 0.0, 0.0], 1.0),
        ]
        .join("\n");
        let parsed = parse_pdb(text.as_bytes()).unwrap();
        let r = &parsed.chains[0].residues[0];
        let n_rel = r.relative[0].unwrap();
        assert_eq!(n_rel, [-1.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_ca_residue_is_dropped_and_counted() {
        let text = [
            atom_line(1, "N", ' ', "GLY", 'A', 1, [0.0, 0.0, 0.0], 1.0),
            atom_line(2, "C", ' ', "GLY", 'A', 1, [2.0, 0.0, 0.0], 1.0),
        ]
        .join("\n");
        let parsed = parse_pdb(text.as_bytes()).unwrap();
        assert!(parsed.chains.is_empty());
        assert_eq!(parsed.report.missing_ca, 1);
    }

    #[test]
    fn hydrogens_and_nonstandard_are_dropped() {
        let text = [
            atom_line(1, "N", ' ', "GLY", 'A', 1, [0.0, 0.0, 0.0], 1.0),
            atom_line(2, "CA", ' ', "GLY", 'A', 1, [1.0, 0.0, 0.0], 1.0),
            atom_line(3, "C", ' ', "GLY", 'A', 1, [2.0, 0.0, 0.0], 1.0),
            atom_line(4, "O", ' ', "GLY", 'A', 1, [3.0, 0.0, 0.0], 1.0),
            atom_line(5, "HA", ' ', "GLY", 'A', 1, [1.5, 0.5, 0.0], 1.0),
            atom_line(6, "N", ' ', "MSE", 'A', 2, [4.0, 0.0, 0.0], 1.0),
        ]
        .join("\n");
        let parsed = parse_pdb(text.as_bytes()).unwrap();
        assert_eq!(parsed.report.dropped_hydrogens, 1);
        assert_eq!(parsed.report.dropped_nonstandard, 1);
        assert_eq!(parsed.chains[0].residues.len(), 1);
    }

    #[test]
    fn resolution_remark_is_parsed() {
        let text = "REMARK   2 RESOLUTION.    1.74 ANGSTROMS.\n";
        let parsed = parse_pdb(text.as_bytes()).unwrap();
        assert_eq!(parsed.resolution, Some(1.74));
    }

    #[test]
    fn malformed_numeric_field_is_skipped_with_tally() {
        let good = atom_line(1, "CA", ' ', "GLY", 'A', 1, [1.0, 0.0, 0.0], 1.0);
        let mut bad = atom_line(2, "N", ' ', "GLY", 'A', 1, [0.0, 0.0, 0.0], 1.0);
        bad.replace_range(30..38, "  xx.xxx");
        let text = [good, bad].join("\n");
        let parsed = parse_pdb(text.as_bytes()).unwrap();
        assert_eq!(parsed.report.skipped_malformed, 1);
    }
}
