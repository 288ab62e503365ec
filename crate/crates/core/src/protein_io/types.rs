use crate::error::{Error, Result};
use crate::geom::Vec3;
use serde::{Deserialize, Serialize};

/// The 20 standard residue types, ordered alphabetically by 3-letter code.
/// The discriminant is the label index used for logits and embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResidueLabel {
    Ala,
    Arg,
    Asn,
    Asp,
    Cys,
    Gln,
    Glu,
    Gly,
    His,
    Ile,
    Leu,
    Lys,
    Met,
    Phe,
    Pro,
    Ser,
    Thr,
    Trp,
    Tyr,
    Val,
}

pub const ALPHABET_SIZE: usize = 20;

pub const ALL_LABELS: [ResidueLabel; 20] = [
    ResidueLabel::Ala,
    ResidueLabel::Arg,
    ResidueLabel::Asn,
    ResidueLabel::Asp,
    ResidueLabel::Cys,
    ResidueLabel::Gln,
    ResidueLabel::Glu,
    ResidueLabel::Gly,
    ResidueLabel::His,
    ResidueLabel::Ile,
    ResidueLabel::Leu,
    ResidueLabel::Lys,
    ResidueLabel::Met,
    ResidueLabel::Phe,
    ResidueLabel::Pro,
    ResidueLabel::Ser,
    ResidueLabel::Thr,
    ResidueLabel::Trp,
    ResidueLabel::Tyr,
    ResidueLabel::Val,
];

impl ResidueLabel {
    pub fn index(self) -> usize {
        ALL_LABELS.iter().position(|&l| l == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<ResidueLabel> {
        ALL_LABELS.get(i).copied()
    }

    pub fn three_letter(self) -> &'static str {
        match self {
            ResidueLabel::Ala => "ALA",
            ResidueLabel::Arg => "ARG",
            ResidueLabel::Asn => "ASN",
            ResidueLabel::Asp => "ASP",
            ResidueLabel::Cys => "CYS",
            ResidueLabel::Gln => "GLN",
            ResidueLabel::Glu => "GLU",
            ResidueLabel::Gly => "GLY",
            ResidueLabel::His => "HIS",
            ResidueLabel::Ile => "ILE",
            ResidueLabel::Leu => "LEU",
            ResidueLabel::Lys => "LYS",
            ResidueLabel::Met => "MET",
            ResidueLabel::Phe => "PHE",
            ResidueLabel::Pro => "PRO",
            ResidueLabel::Ser => "SER",
            ResidueLabel::Thr => "THR",
            ResidueLabel::Trp => "TRP",
            ResidueLabel::Tyr => "TYR",
            ResidueLabel::Val => "VAL",
        }
    }

    pub fn from_three_letter(code: &str) -> Option<ResidueLabel> {
        ALL_LABELS
            .iter()
            .find(|l| l.three_letter() == code.trim())
            .copied()
    }

    pub fn one_letter(self) -> char {
        match self {
            ResidueLabel::Ala => 'A',
            ResidueLabel::Arg => 'R',
            ResidueLabel::Asn => 'N',
            ResidueLabel::Asp => 'D',
            ResidueLabel::Cys => 'C',
            ResidueLabel::Gln => 'Q',
            ResidueLabel::Glu => 'E',
            ResidueLabel::Gly => 'G',
            ResidueLabel::His => 'H',
            ResidueLabel::Ile => 'I',
            ResidueLabel::Leu => 'L',
            ResidueLabel::Lys => 'K',
            ResidueLabel::Met => 'M',
            ResidueLabel::Phe => 'F',
            ResidueLabel::Pro => 'P',
            ResidueLabel::Ser => 'S',
            ResidueLabel::Thr => 'T',
            ResidueLabel::Trp => 'W',
            ResidueLabel::Tyr => 'Y',
            ResidueLabel::Val => 'V',
        }
    }
}

/// A canonicalized residue: label, global C-alpha position and the other
/// heavy atoms relative to it, indexed by the topology's canonical atom
/// order (N, C, O, then side chain). `None` marks a missing atom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResidueRecord {
    pub label: ResidueLabel,
    pub ca: Vec3,
    pub relative: Vec<Option<Vec3>>,
    pub complete: bool,
    /// Source numbering, used for contiguity checks.
    pub seq_num: i64,
    pub insertion_code: char,
}

impl ResidueRecord {
    pub fn atom_global(&self, idx: usize) -> Option<Vec3> {
        self.relative[idx].map(|p| [self.ca[0] + p[0], self.ca[1] + p[1], self.ca[2] + p[2]])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Chain {
    pub id: char,
    pub residues: Vec<ResidueRecord>,
}

/// Ordered, contiguous stretch of complete residues.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProteinFragment {
    pub residues: Vec<ResidueRecord>,
    pub source_id: String,
    pub chain: char,
    pub start: usize,
}

impl ProteinFragment {
    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }

    pub fn labels(&self) -> Vec<ResidueLabel> {
        self.residues.iter().map(|r| r.label).collect()
    }

    pub fn ca_positions(&self) -> Vec<Vec3> {
        self.residues.iter().map(|r| r.ca).collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FilterProvenance {
    /// Entries with a parseable resolution above this are rejected.
    pub resolution_cutoff: f64,
    /// Chains longer than this are rejected outright.
    pub max_sequence_length: usize,
    pub fragment_length: usize,
    pub stride: usize,
    pub require_chirality: bool,
}

impl Default for FilterProvenance {
    fn default() -> Self {
        FilterProvenance {
            resolution_cutoff: 2.5,
            max_sequence_length: 512,
            fragment_length: 160,
            stride: 160,
            require_chirality: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    pub path: String,
    pub chain: char,
    pub start: usize,
    pub length: usize,
}

/// Persistent list of extraction windows plus the filters that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub entries: Vec<IndexEntry>,
    pub filters: FilterProvenance,
    pub content_hash: String,
}

impl DatasetIndex {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<DatasetIndex> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(Error::from)
    }
}

/// FNV-1a content hash used for manifest/data provenance.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    format!("{h:016x}")
}
