//! Shared shapes for the criterion benches.

use tawsim_core::{ClusterTopology, CommCostModel, TrainConfig};

/// The 24-GPU experiment shape (3 nodes x 8 devices, 48 layers).
pub fn experiment_cfg() -> TrainConfig {
    TrainConfig::new(24, 3, 48, 1024, 16384, 4, 384)
}

pub fn experiment_topo() -> ClusterTopology {
    ClusterTopology::new(3, 8).unwrap()
}

pub fn experiment_cost() -> CommCostModel {
    CommCostModel::preset_a800_10gbe()
}

pub const A800_FLOPS: f64 = 312e12;
