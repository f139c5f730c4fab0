//! Cross-sections: meshes, the warping problem and the effective rod stiffness.

pub mod corrector;
pub mod mesh;
pub mod stiffness;

pub use corrector::{corrector_solve, CorrectorSystem, WarpingField};
pub use mesh::{disk_mesh, generate_mesh, rectangle_mesh, CrossSectionMesh, Moments, SectionSpec};
pub use stiffness::{bmin, effective_stiffness, stiffness_profile, BoundConstants, EffectiveStiffness};
