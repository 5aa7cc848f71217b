//! Hop-by-hop ring weight passing: WeiPipe and the flat-ring ablation.
//!
//! Ownership is identity (device q owns W_q). Forward: shard W_s starts at
//! its owner and relays s -> s+1 -> ... -> s-1 while every device computes
//! shards ascending over its own micro-batch slice; per step a device's
//! issue order is [recv W_s, send W_s, Fwd(s)], so the warmup ripple runs at
//! link speed. Backward repeats the cycle re-sourced from the owners'
//! permanent copies with shards visited descending (the same ring direction
//! delivers descending arrivals). Gradients ride an accumulating circle
//! s+1 -> ... -> s that ends at the owner, which then updates.
//!
//! WeiPipe issues every transfer blocking on the device stream; the ablation
//! keeps communication-computation overlap (and device-bound ownership for
//! updates) and differs from WeiPipe only in transfer eligibility.

use super::{activation_bound, Builder, InstrId, InstrKind, MbRange, Program, Strategy};
use crate::error::{Error, Result};
use crate::workload::{build_shard_map_with, layer_flops, Direction, ShardMap, TrainConfig};

pub fn gen_weipipe(cfg: &TrainConfig, iterations: u32) -> Result<Program> {
    ring_program(cfg, iterations, false, Strategy::Weipipe)
}

/// Group-wise passing replaced by the flat ring over all P devices; overlap
/// eligibility and owner-bound updates are retained.
pub fn gen_tawpipe_no_gwps(
    cfg: &TrainConfig,
    map: &ShardMap,
    iterations: u32,
) -> Result<Program> {
    if map.p != cfg.p || map.d != cfg.d {
        return Err(Error::schedule(format!(
            "shard map shape ({}, {}) does not match config ({}, {})",
            map.p, map.d, cfg.p, cfg.d
        )));
    }
    ring_program(cfg, iterations, true, Strategy::TawpipeNoGwps)
}

fn ring_program(
    cfg: &TrainConfig,
    iterations: u32,
    eligible: bool,
    strategy: Strategy,
) -> Result<Program> {
    cfg.validate()?;
    if iterations == 0 {
        return Err(Error::config("iterations must be at least 1"));
    }
    let mut cfg = cfg.clone();
    cfg.iterations = iterations;

    let p = cfg.p;
    let mw = cfg.shard_weight_bytes();
    let grad_bytes = cfg.shard_grad_bytes();
    let mbs_per_dev = cfg.mb_per_device();
    let lps = cfg.layers_per_shard() as u64;
    let fwd_flops = (mbs_per_dev as u64
        * lps
        * layer_flops(cfg.b as u64, cfg.s as u64, cfg.h as u64, Direction::Forward, false))
        as f64;
    let bwd_flops = (mbs_per_dev as u64
        * lps
        * layer_flops(
            cfg.b as u64,
            cfg.s as u64,
            cfg.h as u64,
            Direction::Backward,
            cfg.activation_checkpointing,
        )) as f64;

    let mut b = Builder::new(p);
    let mut prev_updates: Vec<Option<InstrId>> = vec![None; p as usize];

    for it in 0..iterations {
        let mut last_fwd: Vec<Option<InstrId>> = vec![None; p as usize];
        let mut last_bwd: Vec<Option<InstrId>> = vec![None; p as usize];
        let mut fwd_ids: Vec<Vec<InstrId>> = vec![Vec::new(); p as usize];
        let mut bwd_ids: Vec<Vec<InstrId>> = vec![Vec::new(); p as usize];
        let mut upd_deps: Vec<Vec<InstrId>> = vec![Vec::new(); p as usize];

        // one weight relay cycle: recv/send per ring slot, then the computes
        let cycle = |b: &mut Builder,
                         shard: u32,
                         pace: &dyn Fn(u32) -> Option<InstrId>,
                         prev_updates: &[Option<InstrId>]|
         -> Vec<Option<InstrId>> {
            // possession[q] = delivery instruction for W_shard on q, None for
            // the owner
            let mut possession: Vec<Option<InstrId>> = vec![None; p as usize];
            let mut prev_send: Option<InstrId> = None;
            for j in 0..p {
                let q = (shard + j) % p;
                if j > 0 {
                    let from = (q + p - 1) % p;
                    let recv = b.push(
                        q,
                        InstrKind::RecvWeights { from },
                        shard,
                        MbRange::EMPTY,
                        mw,
                        0.0,
                        vec![prev_send.expect("hop must follow a send")],
                        eligible,
                        it,
                        it,
                    );
                    possession[q as usize] = Some(recv);
                }
                if j + 1 < p {
                    let mut deps = Vec::new();
                    match possession[q as usize] {
                        Some(r) => deps.push(r),
                        None => {
                            // owner-sourced start of the relay
                            if let Some(u) = prev_updates[shard as usize] {
                                deps.push(u);
                            }
                            if let Some(x) = pace(q) {
                                deps.push(x);
                            }
                        }
                    }
                    let send = b.push(
                        q,
                        InstrKind::SendWeights { to: (q + 1) % p },
                        shard,
                        MbRange::EMPTY,
                        mw,
                        0.0,
                        deps,
                        eligible,
                        it,
                        it,
                    );
                    prev_send = Some(send);
                }
            }
            possession
        };

        // --- forward cycle ---
        for s in 0..p {
            let pace = |_q: u32| -> Option<InstrId> { None };
            let possession = cycle(&mut b, s, &pace, &prev_updates);
            for q in 0..p {
                let mut deps = Vec::new();
                match possession[q as usize] {
                    Some(r) => deps.push(r),
                    None => {
                        if let Some(u) = prev_updates[s as usize] {
                            deps.push(u);
                        }
                    }
                }
                if let Some(prev) = last_fwd[q as usize] {
                    deps.push(prev);
                }
                let f = b.push(
                    q,
                    InstrKind::ForwardCompute,
                    s,
                    MbRange::new(q * mbs_per_dev, mbs_per_dev),
                    0,
                    fwd_flops,
                    deps,
                    false,
                    it,
                    it,
                );
                last_fwd[q as usize] = Some(f);
                fwd_ids[q as usize].push(f);
            }
        }

        // --- backward cycle with the gradient circle ---
        for u in 0..p {
            let s = p - 1 - u;
            // owner re-sources one backward step ahead of need
            let fwd_tail = &fwd_ids;
            let bwd_sofar = &bwd_ids;
            let pace = |q: u32| -> Option<InstrId> {
                if u == 0 {
                    Some(fwd_tail[q as usize][(p - 1) as usize])
                } else {
                    Some(bwd_sofar[q as usize][(u - 1) as usize])
                }
            };
            let possession = cycle(&mut b, s, &pace, &prev_updates);
            for q in 0..p {
                let mut deps = Vec::new();
                if let Some(r) = possession[q as usize] {
                    deps.push(r);
                }
                match last_bwd[q as usize] {
                    Some(prev) => deps.push(prev),
                    None => deps.push(fwd_ids[q as usize][(p - 1) as usize]),
                }
                let bw = b.push(
                    q,
                    InstrKind::BackwardCompute,
                    s,
                    MbRange::new(q * mbs_per_dev, mbs_per_dev),
                    0,
                    bwd_flops,
                    deps,
                    false,
                    it,
                    it,
                );
                last_bwd[q as usize] = Some(bw);
                bwd_ids[q as usize].push(bw);
            }

            // accumulating grad circle s+1 -> s+2 -> ... -> s
            if p > 1 {
                let mut prev_hop: Option<InstrId> = None;
                for j in 1..p {
                    let r = (s + j) % p;
                    let mut deps = vec![bwd_ids[r as usize][u as usize]];
                    if let Some(ph) = prev_hop {
                        let recv = b.push(
                            r,
                            InstrKind::RecvGrads { from: (r + p - 1) % p },
                            s,
                            MbRange::EMPTY,
                            grad_bytes,
                            0.0,
                            vec![ph],
                            eligible,
                            it,
                            it,
                        );
                        deps.push(recv);
                    }
                    let send = b.push(
                        r,
                        InstrKind::SendGrads { to: (r + 1) % p },
                        s,
                        MbRange::EMPTY,
                        grad_bytes,
                        0.0,
                        deps,
                        eligible,
                        it,
                        it,
                    );
                    prev_hop = Some(send);
                }
                let final_recv = b.push(
                    s,
                    InstrKind::RecvGrads { from: (s + p - 1) % p },
                    s,
                    MbRange::EMPTY,
                    grad_bytes,
                    0.0,
                    vec![prev_hop.expect("circle has at least one hop")],
                    eligible,
                    it,
                    it,
                );
                upd_deps[s as usize].push(final_recv);
            }
            upd_deps[s as usize].push(bwd_ids[s as usize][u as usize]);
        }

        // --- updates at the owners ---
        for s in 0..p {
            let uid = b.push(
                s,
                InstrKind::Update,
                s,
                MbRange::EMPTY,
                0,
                0.0,
                std::mem::take(&mut upd_deps[s as usize]),
                false,
                it,
                it,
            );
            prev_updates[s as usize] = Some(uid);
        }
    }

    let map: ShardMap = build_shard_map_with(p, p)?;
    let act_bound = activation_bound(&cfg, mbs_per_dev as u64 * p as u64);
    Ok(b.finish(strategy, &cfg, map, 2 * mw, 2, act_bound))
}

// ---------------------------------------------------------------------------
