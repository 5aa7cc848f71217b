//! Deterministic discrete-event execution of a schedule program.
//!
//! Resources: each device runs one serial compute stream plus one send and
//! one recv port per link class. Stream-bound instructions (computes and any
//! transfer not flagged overlap-eligible) issue in per-device list order;
//! eligible transfers run as soon as their dependencies allow, subject only
//! to port availability. A matched send/recv pair occupies one link interval
//! computed at send commit: the link starts once the sender's dependencies,
//! the receiver's non-send dependencies, and both ports are free. Collectives
//! occupy the send and recv ports of every participant at the worst pairwise
//! link class for their duration. Ties are broken by instruction id, so a
//! rerun of the same inputs reproduces the timeline bit for bit.

use crate::error::{Error, Result};
use crate::schedule::{InstrId, InstrKind, Program};
use crate::topology::{ClusterTopology, CommCostModel, DeviceId, LinkClass};

// ---------------------------------------------------------------------------
// results

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Compute,
    Link,
}

#[derive(Debug, Clone, Copy)]
pub struct Row {
    pub id: InstrId,
    pub device: DeviceId,
    pub start: f64,
    pub end: f64,
    pub kind: RowKind,
}

#[derive(Debug, Clone, Default)]
pub struct Timeline {
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DeviceBytes {
    pub intra_in: f64,
    pub intra_out: f64,
    pub inter_in: f64,
    pub inter_out: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MemoryBreakdown {
    pub weights_static: u64,
    pub transient_weights: u64,
    pub grads: u64,
    pub optimizer: u64,
    pub activation_peak: u64,
    pub total: u64,
}

#[derive(Debug, Clone)]
pub struct DeviceMetrics {
    pub busy: f64,
    pub idle: f64,
    pub bubble: f64,
    pub comm_busy: f64,
    pub comm_nonoverlapped: f64,
    pub bytes: DeviceBytes,
    pub peak: MemoryBreakdown,
}

#[derive(Debug, Clone)]
pub struct Metrics {
    pub makespan: f64,
    pub per_device: Vec<DeviceMetrics>,
    pub throughput_tokens_per_s: f64,
    pub intra_bytes: f64,
    pub inter_bytes: f64,
    pub peak_mem_bytes: u64,
    /// mean over devices of communication time not overlapped by that
    /// device's own compute, as a fraction of makespan
    pub comm_nonoverlap_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub timeline: Timeline,
    pub metrics: Metrics,
}

impl SimResult {
    /// Mean compute-idle fraction over devices.
    pub fn bubble_ratio(&self) -> Result<f64> {
        bubble_ratio(&self.metrics)
    }
}

/// Mean over devices of (makespan - compute busy) / makespan.
pub fn bubble_ratio(metrics: &Metrics) -> Result<f64> {
    if metrics.per_device.is_empty() {
        return Err(Error::config("bubble ratio of an empty timeline"));
    }
    let sum: f64 = metrics.per_device.iter().map(|d| d.bubble).sum();
    Ok(sum / metrics.per_device.len() as f64)
}

// ---------------------------------------------------------------------------
// engine

struct PortBank {
    // indexed [device][class 0=intra 1=inter]
    send: Vec<[f64; 2]>,
    recv: Vec<[f64; 2]>,
}

fn class_slot(c: LinkClass) -> Option<usize> {
    match c {
        LinkClass::SelfLink => None,
        LinkClass::IntraNode => Some(0),
        LinkClass::InterNode => Some(1),
    }
}

/// Execute `prog` on `topo` under `cost`, with `compute_flops_per_s` scaling
/// compute durations.
pub fn simulate(
    prog: &Program,
    topo: &ClusterTopology,
    cost: &CommCostModel,
    compute_flops_per_s: f64,
) -> Result<SimResult> {
    if topo.num_devices() != prog.cfg.p {
        return Err(Error::config(format!(
            "topology has {} devices but the program needs {}",
            topo.num_devices(),
            prog.cfg.p
        )));
    }
    if !(compute_flops_per_s > 0.0) || !compute_flops_per_s.is_finite() {
        return Err(Error::config("compute_flops_per_s must be positive"));
    }
    let n = prog.len();
    let p = prog.cfg.p as usize;

    // --- dependency graph with virtual send->recv coupling ---
    let mut dep_remaining: Vec<u32> = vec![0; n];
    let mut dependents: Vec<Vec<InstrId>> = vec![Vec::new(); n];
    // recv id paired with each send, and vice versa
    let mut recv_of_send: Vec<Option<InstrId>> = vec![None; n];
    for i in &prog.instrs {
        for &d in &i.deps {
            if d as usize >= n {
                return Err(Error::schedule(format!(
                    "instruction {} depends on unknown id {}",
                    i.id, d
                )));
            }
            dep_remaining[i.id as usize] += 1;
            dependents[d as usize].push(i.id);
        }
        if i.kind.is_recv() {
            let from = i.kind.peer().expect("recv carries a peer");
            let mut matched = None;
            for &d in &i.deps {
                let cand = prog.instr(d);
                if cand.kind.is_send() && cand.device == from && cand.kind.peer() == Some(i.device)
                {
                    matched = Some(d);
                    break;
                }
            }
            let send = matched.ok_or_else(|| {
                Error::schedule(format!(
                    "recv {} has no matching send among its dependencies",
                    i.id
                ))
            })?;
            if recv_of_send[send as usize].is_some() {
                return Err(Error::schedule(format!(
                    "send {} matched by more than one recv",
                    send
                )));
            }
            recv_of_send[send as usize] = Some(i.id);
            // the send also waits on the recv's other dependencies so the
            // link interval respects receiver pacing
            for &d in &i.deps {
                if d != send {
                    dep_remaining[send as usize] += 1;
                    dependents[d as usize].push(send);
                }
            }
        }
    }
    for i in &prog.instrs {
        if i.kind.is_send() && recv_of_send[i.id as usize].is_none() {
            return Err(Error::schedule(format!("send {} has no matching recv", i.id)));
        }
    }

    // --- stream queues of stream-bound instructions per device ---
    let stream_bound = |id: InstrId| -> bool { !prog.instr(id).overlap_eligible };
    let mut stream_q: Vec<std::collections::VecDeque<InstrId>> =
        vec![std::collections::VecDeque::new(); p];
    for dev in 0..p {
        for &id in prog.device_list(dev as DeviceId) {
            if stream_bound(id) {
                stream_q[dev].push_back(id);
            }
        }
    }

    let devices_of = |id: InstrId| -> Vec<DeviceId> {
        let i = prog.instr(id);
        match i.kind.participants() {
            Some(parts) => parts.to_vec(),
            None => vec![i.device],
        }
    };
    let gate_pass = |id: InstrId, stream_q: &[std::collections::VecDeque<InstrId>]| -> bool {
        if !stream_bound(id) {
            return true;
        }
        devices_of(id)
            .iter()
            .all(|&d| stream_q[d as usize].front() == Some(&id))
    };

    // --- mutable execution state ---
    let mut committed: Vec<bool> = vec![false; n];
    let mut end_time: Vec<f64> = vec![0.0; n];
    let mut ready_max: Vec<f64> = vec![0.0; n];
    let mut stream_free: Vec<f64> = vec![0.0; p];
    let mut ports = PortBank {
        send: vec![[0.0; 2]; p],
        recv: vec![[0.0; 2]; p],
    };
    let mut busy: Vec<f64> = vec![0.0; p];
    let mut comm_busy: Vec<f64> = vec![0.0; p];
    let mut bytes: Vec<DeviceBytes> = vec![DeviceBytes::default(); p];
    let mut rows: Vec<Row> = Vec::with_capacity(n + p);
    // per-device compute intervals for overlap accounting
    let mut compute_iv: Vec<Vec<(f64, f64)>> = vec![Vec::new(); p];
    // per-device comm intervals (link spans the device takes part in)
    let mut comm_iv: Vec<Vec<(f64, f64)>> = vec![Vec::new(); p];

    use std::cmp::Reverse;
    use std::collections::BinaryHeap;
    // min-heap keyed by (ready time bits, id); f64 keys are non-negative so
    // the bit pattern orders like total_cmp
    let key = |t: f64, id: InstrId| -> (u64, InstrId) { (t.to_bits(), id) };
    let mut heap: BinaryHeap<Reverse<(u64, InstrId)>> = BinaryHeap::new();
    let mut queued: Vec<bool> = vec![false; n];

    let push_if_ready =
        |id: InstrId,
         heap: &mut BinaryHeap<Reverse<(u64, InstrId)>>,
         queued: &mut Vec<bool>,
         dep_remaining: &[u32],
         ready_max: &[f64],
         stream_q: &[std::collections::VecDeque<InstrId>]| {
            if !queued[id as usize]
                && dep_remaining[id as usize] == 0
                && gate_pass(id, stream_q)
            {
                queued[id as usize] = true;
                heap.push(Reverse(key(ready_max[id as usize], id)));
            }
        };

    for i in &prog.instrs {
        push_if_ready(i.id, &mut heap, &mut queued, &dep_remaining, &ready_max, &stream_q);
    }

    let mut done = 0usize;
    while let Some(Reverse((_, id))) = heap.pop() {
        if committed[id as usize] {
            continue;
        }
        let i = prog.instr(id);
        let ready = ready_max[id as usize];

        // commit: compute the occupation interval per kind
        let (start, end) = match &i.kind {
            InstrKind::ForwardCompute | InstrKind::BackwardCompute | InstrKind::Update => {
                let start = ready.max(stream_free[i.device as usize]);
                let dur = i.flops / compute_flops_per_s;
                let end = start + dur;
                stream_free[i.device as usize] = end;
                busy[i.device as usize] += dur;
                compute_iv[i.device as usize].push((start, end));
                rows.push(Row {
                    id,
                    device: i.device,
                    start,
                    end,
                    kind: RowKind::Compute,
                });
                (start, end)
            }
            k if k.is_send() => {
                let dst = k.peer().expect("send carries a peer");
                let cls = topo.link_class(i.device, dst)?;
                let mut start = ready;
                if !i.overlap_eligible {
                    start = start.max(stream_free[i.device as usize]);
                }
                let dur = cost.p2p_time(cls, i.bytes);
                if let Some(slot) = class_slot(cls) {
                    start = start
                        .max(ports.send[i.device as usize][slot])
                        .max(ports.recv[dst as usize][slot]);
                }
                let end = start + dur;
                if let Some(slot) = class_slot(cls) {
                    ports.send[i.device as usize][slot] = end;
                    ports.recv[dst as usize][slot] = end;
                    let b = i.bytes as f64;
                    if cls == LinkClass::IntraNode {
                        bytes[i.device as usize].intra_out += b;
                        bytes[dst as usize].intra_in += b;
                    } else {
                        bytes[i.device as usize].inter_out += b;
                        bytes[dst as usize].inter_in += b;
                    }
                    comm_busy[i.device as usize] += dur;
                    comm_busy[dst as usize] += dur;
                    comm_iv[i.device as usize].push((start, end));
                    comm_iv[dst as usize].push((start, end));
                }
                if !i.overlap_eligible {
                    stream_free[i.device as usize] = stream_free[i.device as usize].max(end);
                }
                rows.push(Row {
                    id,
                    device: i.device,
                    start,
                    end,
                    kind: RowKind::Link,
                });
                (start, end)
            }
            k if k.is_recv() => {
                // data arrived at the matched send's link end (a dep);
                // a blocking recv completes when its stream reaches it
                let mut end = ready;
                if !i.overlap_eligible {
                    end = end.max(stream_free[i.device as usize]);
                    stream_free[i.device as usize] = end;
                }
                // the shared link interval was recorded at send commit
                (ready, end)
            }
            InstrKind::BroadcastWeights { root, participants }
            | InstrKind::ReduceGrads { root, participants } => {
                let worst = topo.worst_class(participants)?;
                let fanout = participants.len() as u32 - 1;
                let dur = if fanout == 0 {
                    0.0
                } else {
                    match i.kind {
                        InstrKind::BroadcastWeights { .. } => {
                            cost.broadcast_time(worst, fanout, i.bytes)?
                        }
                        _ => cost.reduce_time(worst, fanout, i.bytes)?,
                    }
                };
                let (start, end) = commit_collective(
                    i.overlap_eligible,
                    ready,
                    dur,
                    participants,
                    worst,
                    &mut stream_free,
                    &mut ports,
                );
                // edge attribution: root <-> each member
                for &m in participants {
                    if m == *root {
                        continue;
                    }
                    let cls = topo.link_class(*root, m)?;
                    let b = i.bytes as f64;
                    let (src, dstd) = match i.kind {
                        InstrKind::BroadcastWeights { .. } => (*root, m),
                        _ => (m, *root),
                    };
                    match cls {
                        LinkClass::IntraNode => {
                            bytes[src as usize].intra_out += b;
                            bytes[dstd as usize].intra_in += b;
                        }
                        LinkClass::InterNode => {
                            bytes[src as usize].inter_out += b;
                            bytes[dstd as usize].inter_in += b;
                        }
                        LinkClass::SelfLink => {}
                    }
                }
                for &m in participants {
                    if dur > 0.0 {
                        comm_busy[m as usize] += dur;
                        comm_iv[m as usize].push((start, end));
                        rows.push(Row {
                            id,
                            device: m,
                            start,
                            end,
                            kind: RowKind::Link,
                        });
                    }
                }
                (start, end)
            }
            InstrKind::AllGatherWeights { participants }
            | InstrKind::ReduceScatterGrads { participants } => {
                let worst = topo.worst_class(participants)?;
                let parts = participants.len() as u64;
                let dur = if parts <= 1 {
                    0.0
                } else {
                    cost.ring_time(worst, parts as u32, i.bytes)
                };
                let (start, end) = commit_collective(
                    i.overlap_eligible,
                    ready,
                    dur,
                    participants,
                    worst,
                    &mut stream_free,
                    &mut ports,
                );
                // ring attribution: each device moves (P-1)/P of the payload
                // to and from its ring neighbors
                if parts > 1 {
                    let share = i.bytes as f64 * (parts - 1) as f64 / parts as f64;
                    for (x, &m) in participants.iter().enumerate() {
                        let pred = participants[(x + participants.len() - 1) % participants.len()];
                        let cls = topo.link_class(pred, m)?;
                        match cls {
                            LinkClass::IntraNode => {
                                bytes[pred as usize].intra_out += share;
                                bytes[m as usize].intra_in += share;
                            }
                            LinkClass::InterNode => {
                                bytes[pred as usize].inter_out += share;
                                bytes[m as usize].inter_in += share;
                            }
                            LinkClass::SelfLink => {}
                        }
                    }
                    for &m in participants {
                        comm_busy[m as usize] += dur;
                        comm_iv[m as usize].push((start, end));
                        rows.push(Row {
                            id,
                            device: m,
                            start,
                            end,
                            kind: RowKind::Link,
                        });
                    }
                }
                (start, end)
            }
            _ => unreachable!("all kinds handled"),
        };
        committed[id as usize] = true;
        end_time[id as usize] = end;
        done += 1;

        // matched recv rows share the send's link interval
        if i.kind.is_send() {
            if let Some(r) = recv_of_send[id as usize] {
                let dst = prog.instr(r).device;
                rows.push(Row {
                    id: r,
                    device: dst,
                    start,
                    end,
                    kind: RowKind::Link,
                });
            }
        }

        // release dependents
        for &dep in &dependents[id as usize] {
            dep_remaining[dep as usize] -= 1;
            ready_max[dep as usize] = ready_max[dep as usize].max(end);
            push_if_ready(dep, &mut heap, &mut queued, &dep_remaining, &ready_max, &stream_q);
        }
        // advance stream queues and re-examine new fronts
        if stream_bound(id) {
            for d in devices_of(id) {
                let q = &mut stream_q[d as usize];
                debug_assert_eq!(q.front(), Some(&id));
                q.pop_front();
            }
            for d in devices_of(id) {
                if let Some(&f) = stream_q[d as usize].front() {
                    push_if_ready(f, &mut heap, &mut queued, &dep_remaining, &ready_max, &stream_q);
                }
            }
        }
    }

    if done != n {
        return Err(Error::schedule(format!(
            "deadlock: only {} of {} instructions executed",
            done, n
        )));
    }

    let makespan = end_time.iter().fold(0.0f64, |a, &b| a.max(b));
    rows.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then(a.id.cmp(&b.id))
            .then(a.device.cmp(&b.device))
    });

    // --- per-device metrics ---
    let mut per_device = Vec::with_capacity(p);
    for dev in 0..p {
        let nonoverlap = nonoverlapped_time(&comm_iv[dev], &compute_iv[dev]);
        let peak = device_memory(prog, dev as DeviceId);
        let b = busy[dev];
        per_device.push(DeviceMetrics {
            busy: b,
            idle: makespan - b,
            bubble: if makespan > 0.0 { (makespan - b) / makespan } else { 0.0 },
            comm_busy: comm_busy[dev],
            comm_nonoverlapped: nonoverlap,
            bytes: bytes[dev],
            peak,
        });
    }
    let intra_bytes: f64 = per_device.iter().map(|d| d.bytes.intra_in).sum();
    let inter_bytes: f64 = per_device.iter().map(|d| d.bytes.inter_in).sum();
    let peak_mem_bytes = per_device.iter().map(|d| d.peak.total).max().unwrap_or(0);
    let tokens = prog.cfg.n as f64
        * prog.cfg.b as f64
        * prog.cfg.s as f64
        * prog.cfg.iterations as f64;
    let comm_nonoverlap_fraction = if makespan > 0.0 && p > 0 {
        per_device
            .iter()
            .map(|d| d.comm_nonoverlapped / makespan)
            .sum::<f64>()
            / p as f64
    } else {
        0.0
    };
    let metrics = Metrics {
        makespan,
        per_device,
        throughput_tokens_per_s: if makespan > 0.0 { tokens / makespan } else { 0.0 },
        intra_bytes,
        inter_bytes,
        peak_mem_bytes,
        comm_nonoverlap_fraction,
    };
    Ok(SimResult {
        timeline: Timeline { rows },
        metrics,
    })
}

#[allow(clippy::too_many_arguments)]
fn commit_collective(
    eligible: bool,
    ready: f64,
    dur: f64,
    participants: &[DeviceId],
    worst: LinkClass,
    stream_free: &mut [f64],
    ports: &mut PortBank,
) -> (f64, f64) {
    let mut start = ready;
    if !eligible {
        for &m in participants {
            start = start.max(stream_free[m as usize]);
        }
    }
    if dur > 0.0 {
        if let Some(slot) = class_slot(worst) {
            for &m in participants {
                start = start
                    .max(ports.send[m as usize][slot])
                    .max(ports.recv[m as usize][slot]);
            }
        }
    }
    let end = start + dur;
    if dur > 0.0 {
        if let Some(slot) = class_slot(worst) {
            for &m in participants {
                ports.send[m as usize][slot] = end;
                ports.recv[m as usize][slot] = end;
            }
        }
    }
    if !eligible {
        for &m in participants {
            stream_free[m as usize] = stream_free[m as usize].max(end);
        }
    }
    (start, end)
}

/// Total time covered by `comm` intervals and not covered by `compute`.
fn nonoverlapped_time(comm: &[(f64, f64)], compute: &[(f64, f64)]) -> f64 {
    // merge comm intervals, then subtract compute coverage
    let mut cm: Vec<(f64, f64)> = comm.to_vec();
    cm.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (s, e) in cm {
        if let Some(last) = merged.last_mut() {
            if s <= last.1 {
                last.1 = last.1.max(e);
                continue;
            }
        }
        merged.push((s, e));
    }
    let mut cp: Vec<(f64, f64)> = compute.to_vec();
    cp.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    for (s, e) in merged {
        let mut cur = s;
        for &(cs, ce) in &cp {
            if ce <= cur {
                continue;
            }
            if cs >= e {
                break;
            }
            if cs > cur {
                total += (cs.min(e)) - cur;
            }
            cur = cur.max(ce);
            if cur >= e {
                break;
            }
        }
        if cur < e {
            total += e - cur;
        }
    }
    total
}

/// Static + declared + swept activation peak for one device.
fn device_memory(prog: &Program, dev: DeviceId) -> MemoryBreakdown {
    let cfg = &prog.cfg;
    let weights_static = if prog.strategy == crate::schedule::Strategy::Fsdp {
        crate::workload::layer_params(cfg.h as u64) * cfg.l as u64 * cfg.bytes_param as u64
            / cfg.p as u64
    } else {
        cfg.shard_weight_bytes()
    };
    let grads = weights_static / cfg.bytes_param as u64 * cfg.bytes_grad as u64;
    let optimizer = weights_static * cfg.opt_state_multiplier as u64;

    // activation sweep: produce at forward end, release at backward end;
    // program id order is a valid execution order for peak purposes
    let layers_per_instr = if prog.strategy == crate::schedule::Strategy::Fsdp {
        1u64
    } else {
        cfg.layers_per_shard() as u64
    };
    let mult = if cfg.activation_checkpointing {
        1
    } else {
        layers_per_instr
    };
    let mut cur: i128 = 0;
    let mut peak: i128 = 0;
    for &id in prog.device_list(dev) {
        let i = prog.instr(id);
        let delta = (i.mbs.count as u64 * cfg.mb_activation_bytes() * mult) as i128;
        match i.kind {
            InstrKind::ForwardCompute => {
                cur += delta;
                peak = peak.max(cur);
            }
            InstrKind::BackwardCompute => {
                cur -= delta;
            }
            _ => {}
        }
    }
    let activation_peak = peak.max(0) as u64;
    let transient_weights = prog.transient_weight_bytes;
    MemoryBreakdown {
        weights_static,
        transient_weights,
        grads,
        optimizer,
        activation_peak,
        total: weights_static + transient_weights + grads + optimizer + activation_peak,
    }
}

/// Peak memory for every device without running the full simulation.
pub fn memory_profile(prog: &Program) -> Vec<MemoryBreakdown> {
    (0..prog.cfg.p).map(|d| device_memory(prog, d)).collect()
}

// ---------------------------------------------------------------------------
