//! Numerical toolkit for a constrained steady-flow relaxation: pointwise
//! constraint-set geometry, oscillation directions and decompositions,
//! closed-form localized corrector waves, subsolution factories, and a
//! defect-driven refinement loop over periodic and compactly supported
//! domains.

pub mod cone;
pub mod cutoff;
pub mod error;
pub mod grid;
pub mod matrix;
pub mod profile1d;
pub mod rng;
pub mod solvers;
pub mod spectral;
pub mod state;
pub mod tiling;
pub mod wave;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;

pub use cone::{
    admissible_segment, caratheodory_decompose, wave_cone_test, AdmissibleSegment,
    CaratheodoryDecomposition, LambdaDirection,
};
pub use matrix::SymTraceFree;
pub use solvers::{
    compact_anti_divergence, compact_poisson_on_grid, BoxRegion, CompactPoisson,
};
pub use state::{
    defect, exact_distance_to_K, hull_membership, relaxation_e, ConstraintParams, DistanceEstimate,
    FlowState, HullCertificate,
};
pub use wave::{
    build_localized_wave, potential_R_delta2, two_phase_regions, Factor, FactorTable,
    LocalizedWave, TermSum, TwoPhaseReport,
};
