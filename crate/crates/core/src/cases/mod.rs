//! Problem builders for the two applications plus random instance generators.

mod mpc;
mod opf;
pub mod random;

pub use mpc::{
    build_mpc, centralized_closed_loop, condensed_objective, default_building, mpc_closed_loop,
    random_inputs, rollout_objective, BuildingModel, ClosedLoopOptions, MpcStep, MpcTrajectory,
    Room, CSV_VERSION as MPC_CSV_VERSION,
};
pub use opf::{
    build_opf, flows, opf_adjacency, opf_toy, random_feeder, BranchLimit, Der, FeederModel,
};
