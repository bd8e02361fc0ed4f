//! Synchronous federated training: masked local SGD, data-volume-weighted
//! aggregation, model publication, and the full round loop.

mod aggregate;
mod engine;
mod objective;
mod sgd;

pub use aggregate::{aggregate, global_loss, local_loss, publish, PublishedModel};
pub use engine::{
    run_round, DeviceRoundInfo, DeviceState, FlState, RoundOptions, RoundReport,
};
pub use objective::LocalObjective;
pub use sgd::local_train;
