//! PDB ingestion, residue canonicalization against bundled topology
//! tables, fragment extraction, ideal-geometry construction and PDB
//! emission.

pub mod chirality;
pub mod fragment;
pub mod ideal;
pub mod parse;
pub mod topology;
pub mod types;
pub mod write;

pub use chirality::{chirality_check, virtual_cb, ChiralityReport, L_SIGN};
pub use fragment::{build_index, fragment_at, load_fragments, windows_of_chain};
pub use ideal::{
    build_fragment, default_chis, fragment_is_clash_free, full_positions, ideal_tables,
    ideal_test_fragment, measure_angle, measure_torsion, place_atom, random_fragment,
    random_fragment_with_labels, transform_fragment, BackboneTorsion, IdealTables, ResidueIdeal,
};
pub use parse::{canonicalize_residue, parse_pdb, ParseReport, ParsedStructure};
pub use topology::{
    backbone, max_orderable_slots, max_pair_slots, topology, AtomSpec, Dihedral, Element,
    ResidueTopology, TOPOLOGY_VERSION,
};
pub use types::{
    content_hash, Chain, DatasetIndex, FilterProvenance, IndexEntry, ProteinFragment,
    ResidueLabel, ResidueRecord, ALL_LABELS, ALPHABET_SIZE,
};
