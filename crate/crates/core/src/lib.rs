pub mod error;
pub mod linalg;
pub mod observables;

pub use error::{DataSide, Error, Result};
pub use observables::{BasisTransform, DataMatrix, Dictionary, DictionarySpec, Observable};
pub mod edmd;

pub use edmd::{
    check_full_rank, edmd_eigenpairs, edmd_solve, fit_forward_backward, predict, residual_error,
    EdmdModel, Eigenpairs, FitOptions, ModelExport, Predictor, RankReport, ResidualError,
};
pub mod consistency;

pub use consistency::{
    consistency_index, consistency_matrix, consistency_report, empirical_l2_norm,
    projection_difference_sprad, rrmse, verify_basis_invariance, worst_case_function,
    ComputationPath, ConsistencyReport, PrincipalAngleData, WorstCase,
};
pub mod dynamics;

pub use dynamics::{
    example1_dataset, sample_uniform_initials, simulate_snapshots, DynamicalSystem, SnapshotData,
};
pub mod sweep;

pub use sweep::{alpha_sweep, log_grid, SweepPoint, SweepResult};
