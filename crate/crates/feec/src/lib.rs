//! Finite element differential forms on simplicial meshes.
//!
//! The crate provides the polynomial form families P_rΛ^k and P_r⁻Λ^k over
//! simplicial complexes, their geometric decomposition into trace-free bubble
//! spaces, facet-moment degrees of freedom, a localized biorthogonal system,
//! and the Clément and Scott-Zhang quasi-interpolants with partial boundary
//! conditions, together with a study harness that verifies the predicted
//! approximation orders under uniform mesh refinement.

pub mod error;
pub mod facetdual;
pub mod harness;
pub mod interp;
pub mod proxy3d;
pub mod exterior;
pub mod linalg;
pub mod mesh;
pub mod biorth;
pub mod dofs;
pub mod spaces;

pub use error::{FeecError, Result};
