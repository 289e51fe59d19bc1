//! Interpretation-specific collapse mechanisms: GRW localisation hits and
//! de Broglie-Bohm guidance, each comparable against decoherence branches.

mod bohm;
mod grw;

pub use bohm::{
    bohm_evolve, bohm_velocity, BohmEnsemble, BohmRun, BranchOccupancy, Checkpoint, GuidanceTable, GuidingState,
    VelocityField, BOHM_CSV_HEADER, DENSITY_FLOOR, DISJOINT_OVERLAP,
};
pub use grw::{
    apply_hit, compatibility_score, grw_ensemble, grw_evolve, hit_log_csv, Compatibility, GRWParams, GrwRun, Hit,
    HIT_LOG_HEADER,
};
