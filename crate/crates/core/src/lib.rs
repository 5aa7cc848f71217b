//! Discrete-event simulator and analytical toolkit for pipeline-parallel
//! training schedules over hierarchical (node/device) clusters.
//!
//! The crate is organized bottom-up:
//! - `topology`: cluster shape and the alpha-beta communication cost model
//! - `workload`: sizing formulas, shard ownership, per-step group roles
//! - `schedule`: instruction set, programs, and the schedule generators
//! - `simulator`: deterministic discrete-event execution of a program
//! - `analysis`: closed-form predictions and the semantic validator
//! - `trace`: Chrome trace-event export of a simulated timeline

pub mod analysis;
pub mod error;
pub mod schedule;
pub mod simulator;
pub mod topology;
pub mod trace;
pub mod validator;
pub mod workload;

pub use analysis::{
    activation_pass_comm_per_step, analytic_weight_buffer, onefb_bubble_formula,
    taw_bubble_formula, weight_pass_comm_per_layer,
};
pub use error::{Error, Result};
pub use simulator::{
    bubble_ratio, memory_profile, simulate, DeviceBytes, DeviceMetrics, MemoryBreakdown, Metrics,
    Row, RowKind, SimResult, Timeline,
};
pub use schedule::{
    gen_1f1b, gen_fsdp, gen_tawpipe, gen_tawpipe_no_gwps, gen_weipipe, generate,
    steady_state_recv_elements, InstrId, InstrKind, Instruction, MbRange, Program,
    RecvBreakdown, Strategy,
};
pub use trace::trace_json;
pub use validator::{validate_semantics, CheckResult, ValidationReport, CHECK_NAMES};
pub use topology::{
    ClusterTopology, CollectiveShape, CommCostModel, DeviceId, LinkClass, NodeId,
};
pub use workload::{
    activation_elements, build_shard_map, build_shard_map_with, gwps_step_log, layer_flops,
    layer_params, model_params, shard_of_device, Direction, ShardId, ShardMap, TrainConfig,
};
