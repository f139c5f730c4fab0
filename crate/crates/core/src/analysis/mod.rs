//! Diagnostics relating thin 3D equilibria to the limit rod: slice frames,
//! strain and stress fields, the rod-like decomposition of displacements and
//! the thickness ladder study.

mod frames;
mod griso;
mod stress;
mod study;

pub use frames::{extract_ansatz_fields, fit_slice_rotations, slice_mean_gradients, slice_mean_positions, AnsatzFields, SliceFrameField};
pub use griso::{griso_decompose, random_displacement, synthetic_displacement, GrisoBound, GrisoDecomposition};
pub use stress::{compute_strain_stress, StrainStressFields};
pub use study::{convergence_study, ConvergenceReport, LadderEntry, LadderMetrics, StudyConfig, Thresholds, Verdict};
