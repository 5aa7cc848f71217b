//! Closed-form estimates that the simulator can be checked against:
//! pipeline bubble ratios, steady-state communication volume per layer,
//! and transient weight-buffer sizes.

use crate::error::{Error, Result};
use crate::schedule::Strategy;
use crate::workload::TrainConfig;

/// Idle fraction of the weight-passing group schedule with P devices,
/// D groups, and N micro-batches: ((D-1)P + N) / ((3N + D - 1)P + N).
/// Unit-step model: one forward step per shard, backward costs 3 forward
/// steps (recompute included), warmup staggers groups by one step.
pub fn taw_bubble_formula(p: u32, d: u32, n: u32) -> Result<f64> {
    if p == 0 || d == 0 || n == 0 {
        return Err(Error::config("bubble formula needs p, d, n >= 1"));
    }
    if p % d != 0 {
        return Err(Error::config(format!(
            "bubble formula needs d | p, got p={p} d={d}"
        )));
    }
    let p = p as f64;
    let d = d as f64;
    let n = n as f64;
    Ok(((d - 1.0) * p + n) / ((3.0 * n + d - 1.0) * p + n))
}

/// Idle fraction of the activation-passing baseline: (P-1) / (N + P-1).
pub fn onefb_bubble_formula(p: u32, n: u32) -> Result<f64> {
    if p == 0 || n == 0 {
        return Err(Error::config("bubble formula needs p, n >= 1"));
    }
    Ok((p as f64 - 1.0) / (n as f64 + p as f64 - 1.0))
}

/// Steady-state per-device weight+grad traffic per layer, in elements.
/// Group-scheduled weight passing moves each layer's weights once and its
/// gradients once (24 h^2); the ring relay moves weights twice and
/// gradients once (36 h^2). Activation passing has no per-layer figure.
pub fn weight_pass_comm_per_layer(strategy: Strategy, h: u64) -> Result<u64> {
    let layer = crate::workload::layer_params(h);
    match strategy {
        Strategy::Tawpipe | Strategy::TawpipeNoCco => Ok(2 * layer),
        Strategy::Weipipe | Strategy::TawpipeNoGwps => Ok(3 * layer),
        _ => Err(Error::config(format!(
            "{} does not pass weights layer-wise",
            strategy.name()
        ))),
    }
}

/// Per-step activation traffic of the activation-passing baseline, in
/// elements: each of P stage boundaries forwards and back-propagates a
/// B x S x H tensor.
pub fn activation_pass_comm_per_step(p: u64, b: u64, s: u64, h: u64) -> u64 {
    2 * p * b * s * h
}

/// Transient weight-buffer bytes per device beyond the owned shard:
/// single staging slot for the group schedule, double buffer for the ring.
pub fn analytic_weight_buffer(strategy: Strategy, cfg: &TrainConfig) -> Result<u64> {
    let mw = cfg.shard_weight_bytes();
    match strategy {
        Strategy::Tawpipe | Strategy::TawpipeNoCco => Ok(mw),
        Strategy::Weipipe | Strategy::TawpipeNoGwps => Ok(2 * mw),
        _ => Err(Error::config(format!(
            "{} does not stage whole weight shards",
            strategy.name()
        ))),
    }
}

// ---------------------------------------------------------------------------
