//! Fixed-column PDB emission.

use crate::error::{Error, Result};
use crate::protein_io::ideal::full_positions;
use crate::protein_io::topology::{topology, Element};
use crate::protein_io::types::ProteinFragment;

/// Render a fragment as ATOM records (canonical atom order, missing atoms
/// skipped). Round-trips through the parser to 1e-3 Angstrom.
pub fn write_pdb(fragment: &ProteinFragment) -> Result<String> {
    let mut out = String::new();
    let mut serial = 1usize;
    for (ri, residue) in fragment.residues.iter().enumerate() {
        let topo = topology(residue.label);
        let positions = full_positions(residue);
        let mut rel_idx = 0usize;
        for (ai, &name) in topo.atom_names.iter().enumerate() {
            let pos = positions[ai];
            if name != "CA" {
                let present = residue.relative[rel_idx].is_some();
                rel_idx += 1;
                if !present {
                    continue;
                }
            }
            for &c in &pos {
                if !c.is_finite() {
                    return Err(Error::Precondition("non-finite coordinate".into()));
                }
                if !(-999.999..10000.0).contains(&c) {
                    return Err(Error::Precondition(format!(
                        "coordinate {c} overflows the fixed-column format"
                    )));
                }
            }
            let padded_name = if name.len() >= 4 {
                name.to_string()
            } else {
                format!(" {name:<3}")
            };
            let element = Element::of_atom_name(name).symbol();
            out.push_str(&format!(
                "ATOM  {serial:>5} {padded_name} {res:>3} {chain}{seq:>4}{icode}   {x:>8.3}{y:>8.3}{z:>8.3}{occ:>6.2}{b:>6.2}          {element:>2}\n",
                res = residue.label.three_letter(),
                chain = fragment.chain,
                seq = residue.seq_num.min(9999).max(-999),
                icode = residue.insertion_code,
                x = pos[0],
                y = pos[1],
                z = pos[2],
                occ = 1.0,
                b = 0.0,
            ));
            serial += 1;
        }
        if ri + 1 == fragment.residues.len() {
            out.push_str(&format!("TER   {serial:>5}\n"));
        }
    }
    out.push_str("END\n");
    Ok(out)
}
