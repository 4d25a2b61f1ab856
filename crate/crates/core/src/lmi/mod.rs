//! Affine symmetric pencils and the constructions built on them.

pub mod learning;
pub mod pencil;
pub mod sdpa;
pub mod verification;

pub use learning::{build_learning, schur_check, LayerShape, LearningLayout, LearningVariables};
pub use pencil::{AffinePencil, PencilBlock, PencilBuilder, Sign, Term, Variable};
pub use sdpa::{parse_sdpa, write_sdpa, SdpaProblem};
pub use verification::{build_verification, build_verification_multilayer, local_sectors};
