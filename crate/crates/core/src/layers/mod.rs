//! The equivariant layer set: all-atom codec, self-interaction, sequence
//! convolution and its transpose, spatial convolution, and the hourglass
//! encoder/decoder composition.

pub mod blocks;
pub mod codec;
pub mod model;
pub mod self_interaction;
pub mod sequence_conv;
pub mod spatial_conv;
pub mod transpose_conv;

pub use blocks::{
    average_irreps, concat_irreps, gate_irrep, input_irrep, normalize3_safe, read_irrep,
    tensor_square_fwd, weighted_sh_product, CgCtx, IrrepVar, LinearMixParams, NodeVar, NormParams,
};
pub use codec::{
    atom_decode, atom_encode, decode_with_label, decoded_to_fragment, pair_halfdiff_from_l2,
    pair_l2_coeffs, unpack_l2, AtomMode, CodecLayout, DecodedResidue, NodeState,
};
pub use model::{
    decode_against_labels, decode_atoms, decode_latent, fragment_states, run_autoencoder,
    AeOutput, DecodedNodeVars, HourglassModel, ModelConfig,
};
pub use self_interaction::SelfInteractionParams;
pub use sequence_conv::{coarse_len, SequenceConvParams};
pub use spatial_conv::{SpatialConvParams, ANCHOR_UPDATE_SCALE};
pub use transpose_conv::TransposeConvParams;
