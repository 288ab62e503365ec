//! Fragment extraction with dataset filters and the persistent index.

use crate::error::{Error, Result};
use crate::protein_io::chirality::{chirality_check, L_SIGN};
use crate::protein_io::parse::parse_pdb;
use crate::protein_io::types::{
    content_hash, Chain, DatasetIndex, FilterProvenance, IndexEntry, ProteinFragment,
};
use std::path::Path;

/// All length-L windows of complete, contiguous residues at the given
/// stride, as (start, length) pairs.
pub fn windows_of_chain(chain: &Chain, length: usize, stride: usize) -> Vec<usize> {
    assert!(length >= 2, "fragment length must be at least 2");
    let stride = stride.max(1);
    let n = chain.residues.len();
    let mut ok_run = vec![false; n]; // residue i starts a valid window?
    // Precompute completeness and contiguity.
    let complete: Vec<bool> = chain.residues.iter().map(|r| r.complete).collect();
    let contiguous: Vec<bool> = chain
        .residues
        .windows(2)
        .map(|w| w[1].seq_num == w[0].seq_num + 1)
        .collect();
    for start in 0..n.saturating_sub(length - 1) {
        let mut good = true;
        for i in start..start + length {
            if !complete[i] {
                good = false;
                break;
            }
            if i + 1 < start + length && !contiguous[i] {
                good = false;
                break;
            }
        }
        ok_run[start] = good;
    }
    let mut starts = Vec::new();
    let mut s = 0;
    while s + length <= n {
        if ok_run[s] {
            starts.push(s);
        }
        s += stride;
    }
    starts
}

pub fn fragment_at(chain: &Chain, source_id: &str, start: usize, length: usize) -> ProteinFragment {
    ProteinFragment {
        residues: chain.residues[start..start + length].to_vec(),
        source_id: source_id.to_string(),
        chain: chain.id,
        start,
    }
}

/// Scan a directory of PDB files and build the dataset index under the
/// given filters.
pub fn build_index(dir: &Path, filters: &FilterProvenance) -> Result<DatasetIndex> {
    let mut entries = Vec::new();
    let mut hash_input = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .map(|e| e == "pdb" || e == "ent")
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!("no PDB files under {}", dir.display())));
    }
    for path in paths {
        let file = std::fs::File::open(&path)?;
        let parsed = parse_pdb(std::io::BufReader::new(file))?;
        // Resolution filter: reject only when a parseable resolution
        // exceeds the cutoff; files without one are kept.
        if let Some(res) = parsed.resolution {
            if res > filters.resolution_cutoff {
                continue;
            }
        }
        for chain in &parsed.chains {
            if chain.residues.len() > filters.max_sequence_length {
                continue;
            }
            for start in windows_of_chain(chain, filters.fragment_length, filters.stride) {
                let frag = fragment_at(
                    chain,
                    &path.display().to_string(),
                    start,
                    filters.fragment_length,
                );
                if filters.require_chirality && !chirality_check(&frag, L_SIGN).pass {
                    continue;
                }
                hash_input.extend_from_slice(path.display().to_string().as_bytes());
                hash_input.push(chain.id as u8);
                hash_input.extend_from_slice(&start.to_le_bytes());
                entries.push(IndexEntry {
                    path: path.display().to_string(),
                    chain: chain.id,
                    start,
                    length: filters.fragment_length,
                });
            }
        }
    }
    Ok(DatasetIndex {
        entries,
        filters: filters.clone(),
        content_hash: content_hash(&hash_input),
    })
}

/// Load the fragments named by an index.
pub fn load_fragments(index: &DatasetIndex) -> Result<Vec<ProteinFragment>> {
    let mut out = Vec::with_capacity(index.entries.len());
    for entry in &index.entries {
        let file = std::fs::File::open(&entry.path)?;
        let parsed = parse_pdb(std::io::BufReader::new(file))?;
        let chain = parsed
            .chains
            .iter()
            .find(|c| c.id == entry.chain)
            .ok_or_else(|| {
                Error::Config(format!("chain {} missing in {}", entry.chain, entry.path))
            })?;
        if entry.start + entry.length > chain.residues.len() {
            return Err(Error::Config(format!(
                "index entry out of range for {}",
                entry.path
            )));
        }
        out.push(fragment_at(chain, &entry.path, entry.start, entry.length));
    }
    Ok(out)
}
