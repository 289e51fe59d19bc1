//! Branch trees, Born-rule trajectories and an explicit system ⊗ qubit-bath
//! model for decoherence-functional and superorthogonality checks.

mod explicit;
mod sampler;
mod tree;

pub use explicit::{
    decoherence_functional, evolve_explicit, position_projectors, superorthogonality_overlap, DecoherenceReport,
    ExplicitModel, ExplicitOptions, HistoryReport, MAX_HISTORIES, MAX_HISTORY_STEPS, MAX_QUBITS,
};
pub use sampler::{
    sample_trajectory, trajectories_csv, Outcome, Sampler, TrajPoint, Trajectory, TRAJECTORY_CSV_HEADER,
};
pub(crate) use tree::readout;
pub use tree::{branch_step, mixture_consistency, BranchNode, BranchTree, NodeRecord, TreeConfig};
