//! Piecewise-linear hybrid systems: model transformations, Hankel-based
//! realization, clustering-based identification from sampled trajectories,
//! simulation and evaluation.

pub mod eval;
pub mod identify;
pub mod linalg;
pub mod model;
pub mod presets;
pub mod realization;
pub mod sim;

pub use eval::{match_modes, segmentation_agreement, verify_ar, ArSignal, EvalError, MatchReport};
pub use identify::{identify, AffineLaw, Dataset, IdentifyConfig, IdentifyError, IdentifyResult, ModeParams, Weights};
pub use model::{
    dimension, embed_affine_to_linear, merge_to_lssj, reduce_minimal, sars_to_pwl, split_by_partition, AffineMode,
    InitialStates, Lssj, ModelError, Partition, PwlSystem, SarsModel, SystemDimension,
};
pub use realization::{
    build_hankel, kalman_ho, kn_realize, markov_from_lssj, HankelMatrix, MarkovTable, PartitionSearch, RealizationError,
};
pub use sim::{simulate_ode, simulate_pwl, Lorenz, SimError, SimOptions, SwitchingLaw, Trajectory};
