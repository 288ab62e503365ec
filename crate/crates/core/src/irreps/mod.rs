//! SO(3) representation algebra: signatures, spherical harmonics, Wigner
//! matrices, Clebsch-Gordan coupling, tensor products, norms and gates.

pub mod cg;
pub mod sh;
pub mod signature;
pub mod tensor;
pub mod wigner;

pub use cg::{clebsch_gordan, selection_rule, warm_cache, CgTable};
pub use sh::{sh_unchecked, spherical_harmonics, MAX_DEGREE};
pub use signature::IrrepsSignature;
pub use tensor::{
    apply_rotation, concat_channels, equivariance_residual, l_wise_norm, linear_mix,
    product_paths, scalar_gate, tensor_product, tensor_product_signature, tensor_square_chunked,
    tensor_square_chunked_signature, IrrepTensor, LinearWeights, NORM_EPS,
};
pub use wigner::{wigner_apply, wigner_d, wigner_d_from_matrix, wigner_stack, RotationSpec};
