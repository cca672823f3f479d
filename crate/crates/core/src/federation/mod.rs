//! Deterministic federated-learning simulation.

mod client;
mod config;
mod data;
mod model;
mod server;

pub use client::{client_update, ClientTask, LocalResult, LocalTraining};
pub use config::{FederationConfig, SyntheticDataSpec};
pub use data::{generate_federation, ClientDataset, Samples, TEST_FRACTION};
pub use model::{accuracy, gradient, mean_loss, param_count, GlobalModel};
pub use server::{run, run_device, run_silo, sample_clients, Evaluation, RoundRecord, RunAborted, RunOutput};
