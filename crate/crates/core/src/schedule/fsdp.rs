//! Fully sharded baseline: every device holds 1/P of each layer, gathers the
//! full layer right before using it, and reduce-scatters layer gradients
//! right after producing them. Collectives are blocking and interleave with
//! the computes in stream order (gather, compute, gather, compute, ...);
//! under checkpointing the backward pass re-gathers every layer.

use super::{Builder, InstrId, InstrKind, MbRange, Program, Strategy};
use crate::error::{Error, Result};
use crate::workload::{build_shard_map_with, layer_flops, layer_params, Direction, TrainConfig};

pub fn gen_fsdp(cfg: &TrainConfig, iterations: u32) -> Result<Program> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(Error::config("iterations must be at least 1"));
    }
    let mut cfg = cfg.clone();
    cfg.iterations = iterations;

    let p = cfg.p;
    let l = cfg.l;
    let mbs_per_dev = cfg.mb_per_device();
    let layer_w_bytes = layer_params(cfg.h as u64) * cfg.bytes_param as u64;
    let layer_g_bytes = layer_params(cfg.h as u64) * cfg.bytes_grad as u64;
    let all: Vec<u32> = (0..p).collect();
    let fwd_flops = (mbs_per_dev as u64
        * layer_flops(cfg.b as u64, cfg.s as u64, cfg.h as u64, Direction::Forward, false))
        as f64;
    let bwd_flops = (mbs_per_dev as u64
        * layer_flops(
            cfg.b as u64,
            cfg.s as u64,
            cfg.h as u64,
            Direction::Backward,
            cfg.activation_checkpointing,
        )) as f64;

    let mut b = Builder::new(p);
    // per-layer update ids of the previous iteration
    let mut prev_updates: Vec<Vec<InstrId>> = vec![Vec::new(); l as usize];

    for it in 0..iterations {
        let mut last_fwd: Vec<Option<InstrId>> = vec![None; p as usize];
        let mut fwd_of: Vec<Vec<InstrId>> = vec![Vec::new(); l as usize];
        let mut rs_ids: Vec<InstrId> = Vec::new();

        for layer in 0..l {
            let ag = b.push(
                0,
                InstrKind::AllGatherWeights {
                    participants: all.clone(),
                },
                layer,
                MbRange::EMPTY,
                layer_w_bytes,
                0.0,
                prev_updates[layer as usize].clone(),
                false,
                it,
                it,
            );
            for q in 0..p {
                let mut deps = vec![ag];
                if let Some(prev) = last_fwd[q as usize] {
                    deps.push(prev);
                }
                let f = b.push(
                    q,
                    InstrKind::ForwardCompute,
                    layer,
                    MbRange::new(q * mbs_per_dev, mbs_per_dev),
                    0,
                    fwd_flops,
                    deps,
                    false,
                    it,
                    it,
                );
                last_fwd[q as usize] = Some(f);
                fwd_of[layer as usize].push(f);
            }
        }

        let mut last_bwd: Vec<Option<InstrId>> = vec![None; p as usize];
        for layer in (0..l).rev() {
            let mut ag_deps = prev_updates[layer as usize].clone();
            if layer == l - 1 {
                // backward starts once every device finished the forward pass
                ag_deps.extend(fwd_of[(l - 1) as usize].iter().copied());
            }
            let ag = b.push(
                0,
                InstrKind::AllGatherWeights {
                    participants: all.clone(),
                },
                layer,
                MbRange::EMPTY,
                layer_w_bytes,
                0.0,
                ag_deps,
                false,
                it,
                it,
            );
            let mut bwd_of: Vec<InstrId> = Vec::new();
            for q in 0..p {
                let mut deps = vec![ag, fwd_of[layer as usize][q as usize]];
                if let Some(prev) = last_bwd[q as usize] {
                    deps.push(prev);
                }
                let bw = b.push(
                    q,
                    InstrKind::BackwardCompute,
                    layer,
                    MbRange::new(q * mbs_per_dev, mbs_per_dev),
                    0,
                    bwd_flops,
                    deps,
                    false,
                    it,
                    it,
                );
                last_bwd[q as usize] = Some(bw);
                bwd_of.push(bw);
            }
            let rs = b.push(
                0,
                InstrKind::ReduceScatterGrads {
                    participants: all.clone(),
                },
                layer,
                MbRange::EMPTY,
                layer_g_bytes,
                0.0,
                bwd_of,
                false,
                it,
                it,
            );
            rs_ids.push(rs);
        }

        // updates per (device, layer) on each device's own parameter shard
        for layer in 0..l {
            let rs = rs_ids[(l - 1 - layer) as usize];
            let mut ids = Vec::with_capacity(p as usize);
            for q in 0..p {
                let uid = b.push(
                    q,
                    InstrKind::Update,
                    layer,
                    MbRange::EMPTY,
                    0,
                    0.0,
                    vec![rs],
                    false,
                    it,
                    it,
                );
                ids.push(uid);
            }
            prev_updates[layer as usize] = ids;
        }
    }

    let map = build_shard_map_with(p, p)?;
    // one gathered layer lives at a time under blocking collectives
    let transient = layer_w_bytes;
    let act_bound = mbs_per_dev as u64 * l as u64 * cfg.mb_activation_bytes();
    Ok(b.finish(Strategy::Fsdp, &cfg, map, transient, 1, act_bound))
}

// ---------------------------------------------------------------------------
