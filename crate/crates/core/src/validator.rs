//! Semantic validation of schedule programs.
//!
//! Seven checks, reported in a stable order. All of them work on the
//! dependency structure and per-device instruction lists, never on simulated
//! timestamps, so a program can be validated without picking a cost model.
//!
//! - weight-presence: computes and weight sends hold the shard they touch,
//!   either by ownership or by a direct dependency on a delivery.
//! - gradient-exactly-once: every update aggregates the expected direct
//!   inputs and its dependency closure covers each micro-batch exactly once.
//! - update-ordering: updates sit at the owner, once per shard and
//!   iteration, positioned after the owner's own backward and after every
//!   same-device aggregation input.
//! - version-consistency: computes run at their iteration's weight version,
//!   and every delivery past iteration zero descends from the prior update.
//! - activation-consume-once: forward and backward instructions pair up
//!   one-to-one per (device, shard, micro-batch range, iteration).
//! - buffer-bounds: at no point (in dependency order) does a device hold
//!   more unconsumed weight deliveries than its declared staging budget.
//! - send-recv-matching: point-to-point transfers pair up FIFO per route,
//!   each recv depending on its send; collectives name sane participants.

use std::collections::HashMap;

use crate::schedule::{InstrId, InstrKind, Instruction, MbRange, Program, Strategy};
use crate::topology::DeviceId;

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

pub const CHECK_NAMES: [&str; 7] = [
    "weight-presence",
    "gradient-exactly-once",
    "update-ordering",
    "version-consistency",
    "activation-consume-once",
    "buffer-bounds",
    "send-recv-matching",
];

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed_names(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "semantic validation: {} ({} checks)\n",
            if self.passed() { "PASS" } else { "FAIL" },
            self.checks.len()
        ));
        for c in &self.checks {
            out.push_str(&format!(
                "  {:4} {}: {}\n",
                if c.passed { "ok" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// shared helpers

fn is_weight_delivery(kind: &InstrKind) -> bool {
    matches!(
        kind,
        InstrKind::RecvWeights { .. }
            | InstrKind::BroadcastWeights { .. }
            | InstrKind::AllGatherWeights { .. }
    )
}

/// Does `dep` prove device `dev` holds shard `s`? A broadcast vouches for
/// every participant (the root's possession is checked on the broadcast
/// itself), and a same-device compute on the same shard proves the shard is
/// still resident in the active slot.
fn proves_presence(dep: &Instruction, dev: DeviceId, s: u32) -> bool {
    if dep.shard != s {
        return false;
    }
    match &dep.kind {
        InstrKind::RecvWeights { .. } => dep.device == dev,
        InstrKind::BroadcastWeights { participants, .. } => participants.contains(&dev),
        InstrKind::AllGatherWeights { participants } => participants.contains(&dev),
        InstrKind::ForwardCompute | InstrKind::BackwardCompute => dep.device == dev,
        _ => false,
    }
}

/// Full owner of a shard, when the strategy has one.
fn owner_of(prog: &Program, shard: u32) -> Option<DeviceId> {
    match prog.strategy {
        Strategy::Fsdp => None, // every device holds a slice, nobody the whole layer
        _ => prog.map.owner_of_shard.get(shard as usize).copied(),
    }
}

/// Kahn order by smallest id; None when the graph has a cycle.
fn topo_order(prog: &Program) -> Option<Vec<InstrId>> {
    let n = prog.len();
    let mut remaining: Vec<u32> = vec![0; n];
    let mut dependents: Vec<Vec<InstrId>> = vec![Vec::new(); n];
    for i in &prog.instrs {
        for &d in &i.deps {
            remaining[i.id as usize] += 1;
            dependents[d as usize].push(i.id);
        }
    }
    let mut heap: std::collections::BinaryHeap<std::cmp::Reverse<InstrId>> = (0..n)
        .filter(|&i| remaining[i] == 0)
        .map(|i| std::cmp::Reverse(i as InstrId))
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(std::cmp::Reverse(id)) = heap.pop() {
        order.push(id);
        for &dep in &dependents[id as usize] {
            remaining[dep as usize] -= 1;
            if remaining[dep as usize] == 0 {
                heap.push(std::cmp::Reverse(dep));
            }
        }
    }
    if order.len() == n {
        Some(order)
    } else {
        None
    }
}

/// BFS over the dependency closure of `start`, visiting each node once.
fn walk_closure(prog: &Program, start: InstrId, mut visit: impl FnMut(&Instruction) -> bool) {
    let mut seen = vec![false; prog.len()];
    let mut stack: Vec<InstrId> = prog.instr(start).deps.clone();
    while let Some(id) = stack.pop() {
        if seen[id as usize] {
            continue;
        }
        seen[id as usize] = true;
        let i = prog.instr(id);
        if visit(i) {
            return; // early exit once the caller found what it wanted
        }
        stack.extend_from_slice(&i.deps);
    }
}

// ---------------------------------------------------------------------------
// checks

fn check_weight_presence(prog: &Program) -> CheckResult {
    let name = "weight-presence";
    for i in &prog.instrs {
        let holder_needed = match &i.kind {
            InstrKind::ForwardCompute | InstrKind::BackwardCompute => Some(i.device),
            InstrKind::SendWeights { .. } => Some(i.device),
            InstrKind::BroadcastWeights { root, .. } => Some(*root),
            _ => None,
        };
        let Some(dev) = holder_needed else { continue };
        if owner_of(prog, i.shard) == Some(dev) {
            continue;
        }
        let delivered = i.deps.iter().any(|&d| proves_presence(prog.instr(d), dev, i.shard));
        if !delivered {
            return CheckResult {
                name,
                passed: false,
                detail: format!(
                    "instruction {} ({}) on device {} touches shard {} without owning or receiving it",
                    i.id,
                    i.kind.name(),
                    dev,
                    i.shard
                ),
            };
        }
    }
    CheckResult {
        name,
        passed: true,
        detail: "every compute and weight send holds its shard".into(),
    }
}

fn expected_grad_inputs(prog: &Program) -> usize {
    match prog.strategy {
        Strategy::Tawpipe | Strategy::TawpipeNoCco => prog.cfg.d as usize,
        Strategy::Weipipe | Strategy::TawpipeNoGwps => {
            if prog.cfg.p >= 2 {
                2
            } else {
                1
            }
        }
        Strategy::OneFOneB => prog.cfg.n as usize,
        Strategy::Fsdp => 1,
    }
}

fn check_gradient_exactly_once(prog: &Program) -> CheckResult {
    let name = "gradient-exactly-once";
    let expected = expected_grad_inputs(prog);
    let n_mb = prog.cfg.n as usize;
    for u in &prog.instrs {
        if u.kind != InstrKind::Update {
            continue;
        }
        let inputs = u
            .deps
            .iter()
            .filter(|&&d| {
                matches!(
                    prog.instr(d).kind,
                    InstrKind::ReduceGrads { .. }
                        | InstrKind::RecvGrads { .. }
                        | InstrKind::BackwardCompute
                        | InstrKind::ReduceScatterGrads { .. }
                )
            })
            .count();
        if inputs != expected {
            return CheckResult {
                name,
                passed: false,
                detail: format!(
                    "update for shard {} iteration {} aggregates {} gradient inputs, expected {}",
                    u.shard, u.iteration, inputs, expected
                ),
            };
        }
        // every micro-batch's gradient reaches this update exactly once
        let mut counts = vec![0u32; n_mb];
        walk_closure(prog, u.id, |i| {
            if i.kind == InstrKind::BackwardCompute
                && i.shard == u.shard
                && i.iteration == u.iteration
            {
                for m in i.mbs.start..i.mbs.end() {
                    counts[m as usize] += 1;
                }
            }
            false
        });
        if let Some(m) = counts.iter().position(|&c| c != 1) {
            return CheckResult {
                name,
                passed: false,
                detail: format!(
                    "shard {} iteration {}: micro-batch {} contributes {} times to the update",
                    u.shard, u.iteration, m, counts[m]
                ),
            };
        }
    }
    CheckResult {
        name,
        passed: true,
        detail: "each update aggregates every micro-batch gradient exactly once".into(),
    }
}

fn check_update_ordering(prog: &Program) -> CheckResult {
    let name = "update-ordering";
    // list position of every instruction on its devices
    let mut pos: Vec<HashMap<InstrId, usize>> = vec![HashMap::new(); prog.cfg.p as usize];
    for dev in 0..prog.cfg.p as usize {
        for (x, &id) in prog.device_list(dev as DeviceId).iter().enumerate() {
            pos[dev].insert(id, x);
        }
    }
    let mut per_key: HashMap<(u32, u32), Vec<InstrId>> = HashMap::new();
    for u in &prog.instrs {
        if u.kind == InstrKind::Update {
            per_key.entry((u.shard, u.iteration)).or_default().push(u.id);
        }
    }
    for it in 0..prog.cfg.iterations {
        let shard_range: Vec<u32> = prog
            .instrs
            .iter()
            .filter(|i| i.kind == InstrKind::Update && i.iteration == it)
            .map(|i| i.shard)
            .collect();
        if shard_range.is_empty() {
            return CheckResult {
                name,
                passed: false,
                detail: format!("iteration {} performs no updates", it),
            };
        }
    }
    for ((shard, it), ids) in {
        let mut v: Vec<_> = per_key.into_iter().collect();
        v.sort();
        v
    } {
        // placement: one update at the owner, or one per device for the
        // fully sharded strategy
        match prog.strategy {
            Strategy::Fsdp => {
                if ids.len() != prog.cfg.p as usize {
                    return CheckResult {
                        name,
                        passed: false,
                        detail: format!(
                            "layer {} iteration {} has {} updates, expected one per device",
                            shard,
                            it,
                            ids.len()
                        ),
                    };
                }
            }
            _ => {
                let owner = prog.map.owner_of_shard[shard as usize];
                if ids.len() != 1 || prog.instr(ids[0]).device != owner {
                    return CheckResult {
                        name,
                        passed: false,
                        detail: format!(
                            "shard {} iteration {} must be updated exactly once at device {}",
                            shard, it, owner
                        ),
                    };
                }
            }
        }
        for &uid in &ids {
            let u = prog.instr(uid);
            let dev = u.device as usize;
            let upos = pos[dev][&uid];
            // after the owner's own backward work for this shard
            for i in &prog.instrs {
                if i.kind == InstrKind::BackwardCompute
                    && i.device == u.device
                    && i.shard == shard
                    && i.iteration == it
                    && pos[dev][&i.id] > upos
                {
                    return CheckResult {
                        name,
                        passed: false,
                        detail: format!(
                            "update for shard {} iteration {} runs before backward at device {}",
                            shard, it, u.device
                        ),
                    };
                }
            }
            // after every same-device aggregation input
            for &d in &u.deps {
                if prog.instr(d).device == u.device {
                    if let Some(&dpos) = pos[dev].get(&d) {
                        if dpos > upos {
                            return CheckResult {
                                name,
                                passed: false,
                                detail: format!(
                                    "update for shard {} iteration {} precedes its input {} at device {}",
                                    shard, it, d, u.device
                                ),
                            };
                        }
                    }
                }
            }
        }
    }
    CheckResult {
        name,
        passed: true,
        detail: "updates sit at their owners after all gradient inputs".into(),
    }
}

fn check_version_consistency(prog: &Program) -> CheckResult {
    let name = "version-consistency";
    for i in &prog.instrs {
        if i.kind.is_compute() && i.version != i.iteration {
            return CheckResult {
                name,
                passed: false,
                detail: format!(
                    "instruction {} computes with weight version {} in iteration {}",
                    i.id, i.version, i.iteration
                ),
            };
        }
        if is_weight_delivery(&i.kind) && i.iteration > 0 {
            let want_it = i.iteration - 1;
            let mut found = false;
            walk_closure(prog, i.id, |x| {
                if x.kind == InstrKind::Update && x.shard == i.shard && x.iteration == want_it {
                    found = true;
                    return true;
                }
                false
            });
            if !found {
                return CheckResult {
                    name,
                    passed: false,
                    detail: format!(
                        "delivery {} of shard {} in iteration {} does not descend from the iteration-{} update",
                        i.id, i.shard, i.iteration, want_it
                    ),
                };
            }
        }
    }
    CheckResult {
        name,
        passed: true,
        detail: "weight versions advance once per iteration".into(),
    }
}

fn check_activation_consume_once(prog: &Program) -> CheckResult {
    let name = "activation-consume-once";
    let mut balance: HashMap<(DeviceId, u32, u32, u32, u32), i64> = HashMap::new();
    for i in &prog.instrs {
        let delta = match i.kind {
            InstrKind::ForwardCompute => 1,
            InstrKind::BackwardCompute => -1,
            _ => continue,
        };
        *balance
            .entry((i.device, i.shard, i.mbs.start, i.mbs.count, i.iteration))
            .or_insert(0) += delta;
    }
    let mut bad: Vec<_> = balance.iter().filter(|(_, &v)| v != 0).collect();
    bad.sort();
    if let Some(&(&(dev, shard, mb, _, it), &v)) = bad.first() {
        return CheckResult {
            name,
            passed: false,
            detail: format!(
                "device {} shard {} micro-batch {} iteration {}: {} {} without a partner",
                dev,
                shard,
                mb,
                it,
                if v > 0 { "forward" } else { "backward" },
                if v > 0 { "stashes activations" } else { "consumes activations" },
            ),
        };
    }
    CheckResult {
        name,
        passed: true,
        detail: "forward and backward passes pair one-to-one".into(),
    }
}

fn check_buffer_bounds(prog: &Program, order: &[InstrId]) -> CheckResult {
    let name = "buffer-bounds";
    let mut pos: Vec<usize> = vec![0; prog.len()];
    for (x, &id) in order.iter().enumerate() {
        pos[id as usize] = x;
    }
    // windows[dev] = (open position, close position) per pending delivery
    let mut windows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); prog.cfg.p as usize];
    // first same-device consumer of each delivery, by dependency order
    let mut first_use: HashMap<(InstrId, DeviceId), usize> = HashMap::new();
    for i in &prog.instrs {
        for &d in &i.deps {
            if !is_weight_delivery(&prog.instr(d).kind) {
                continue;
            }
            let on = match i.kind.participants() {
                Some(parts) => parts.to_vec(),
                None => vec![i.device],
            };
            for dev in on {
                let e = first_use.entry((d, dev)).or_insert(usize::MAX);
                *e = (*e).min(pos[i.id as usize]);
            }
        }
    }
    for i in &prog.instrs {
        match &i.kind {
            InstrKind::RecvWeights { .. } => {
                if owner_of(prog, i.shard) != Some(i.device) {
                    let close =
                        first_use.get(&(i.id, i.device)).copied().unwrap_or(usize::MAX);
                    windows[i.device as usize].push((pos[i.id as usize], close));
                }
            }
            InstrKind::BroadcastWeights { root, participants } => {
                for &m in participants {
                    if m != *root && owner_of(prog, i.shard) != Some(m) {
                        let close = first_use.get(&(i.id, m)).copied().unwrap_or(usize::MAX);
                        windows[m as usize].push((pos[i.id as usize], close));
                    }
                }
            }
            InstrKind::AllGatherWeights { participants } => {
                for &m in participants {
                    let close = first_use.get(&(i.id, m)).copied().unwrap_or(usize::MAX);
                    windows[m as usize].push((pos[i.id as usize], close));
                }
            }
            _ => {}
        }
    }
    let budget = prog.resident_shard_bound as i64;
    for (dev, w) in windows.iter().enumerate() {
        let mut events: Vec<(usize, i64)> = Vec::with_capacity(w.len() * 2);
        for &(open, close) in w {
            events.push((open, 1));
            if close != usize::MAX {
                events.push((close, -1));
            }
        }
        // consume before the next delivery opens at the same position
        events.sort_by_key(|&(p, delta)| (p, delta));
        let mut pending = 0i64;
        for (_, delta) in events {
            pending += delta;
            if pending > budget {
                return CheckResult {
                    name,
                    passed: false,
                    detail: format!(
                        "device {} holds {} unconsumed weight deliveries, staging budget is {}",
                        dev, pending, budget
                    ),
                };
            }
        }
    }
    CheckResult {
        name,
        passed: true,
        detail: "pending weight deliveries stay within the staging budget".into(),
    }
}

fn check_send_recv_matching(prog: &Program) -> CheckResult {
    let name = "send-recv-matching";
    type Key = (u8, u32, DeviceId, DeviceId, u32, u32, u32);
    let family = |k: &InstrKind| -> Option<(u8, bool)> {
        match k {
            InstrKind::SendWeights { .. } => Some((0, true)),
            InstrKind::RecvWeights { .. } => Some((0, false)),
            InstrKind::SendGrads { .. } => Some((1, true)),
            InstrKind::RecvGrads { .. } => Some((1, false)),
            InstrKind::SendActivations { .. } => Some((2, true)),
            InstrKind::RecvActivations { .. } => Some((2, false)),
            _ => None,
        }
    };
    let mut sends: HashMap<Key, Vec<InstrId>> = HashMap::new();
    let mut recvs: HashMap<Key, Vec<InstrId>> = HashMap::new();
    for i in &prog.instrs {
        if let Some((fam, is_send)) = family(&i.kind) {
            let peer = i.kind.peer().expect("p2p kinds carry a peer");
            let key: Key = if is_send {
                (fam, i.shard, i.device, peer, i.mbs.start, i.mbs.count, i.iteration)
            } else {
                (fam, i.shard, peer, i.device, i.mbs.start, i.mbs.count, i.iteration)
            };
            if is_send {
                sends.entry(key).or_default().push(i.id);
            } else {
                recvs.entry(key).or_default().push(i.id);
            }
        } else if let Some(parts) = i.kind.participants() {
            if parts.is_empty() {
                return CheckResult {
                    name,
                    passed: false,
                    detail: format!("collective {} has no participants", i.id),
                };
            }
            let mut sorted = parts.to_vec();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != parts.len() || !parts.contains(&i.device) {
                return CheckResult {
                    name,
                    passed: false,
                    detail: format!("collective {} names a bad participant set", i.id),
                };
            }
            if let InstrKind::BroadcastWeights { root, .. }
            | InstrKind::ReduceGrads { root, .. } = &i.kind
            {
                if !parts.contains(root) {
                    return CheckResult {
                        name,
                        passed: false,
                        detail: format!("collective {} roots outside its participants", i.id),
                    };
                }
            }
        }
    }
    let mut keys: Vec<Key> = sends.keys().chain(recvs.keys()).copied().collect();
    keys.sort();
    keys.dedup();
    for key in keys {
        let empty = Vec::new();
        let s = sends.get(&key).unwrap_or(&empty);
        let r = recvs.get(&key).unwrap_or(&empty);
        if s.len() != r.len() {
            let i = prog.instr(*s.first().or(r.first()).expect("one side exists"));
            return CheckResult {
                name,
                passed: false,
                detail: format!(
                    "{} of shard {} between devices {} and {} iteration {}: {} sends vs {} recvs",
                    i.kind.name(),
                    key.1,
                    key.2,
                    key.3,
                    key.6,
                    s.len(),
                    r.len()
                ),
            };
        }
        for (&sid, &rid) in s.iter().zip(r.iter()) {
            if !prog.instr(rid).deps.contains(&sid) {
                return CheckResult {
                    name,
                    passed: false,
                    detail: format!("recv {} is not wired to its send {}", rid, sid),
                };
            }
        }
    }
    CheckResult {
        name,
        passed: true,
        detail: "all transfers pair up and collectives are well formed".into(),
    }
}

/// Run all seven checks. Never panics on a structurally sound `Program`;
/// a cyclic dependency graph fails every check.
pub fn validate_semantics(prog: &Program) -> ValidationReport {
    let Some(order) = topo_order(prog) else {
        return ValidationReport {
            checks: CHECK_NAMES
                .iter()
                .map(|&name| CheckResult {
                    name,
                    passed: false,
                    detail: "dependency graph has a cycle".into(),
                })
                .collect(),
        };
    };
    ValidationReport {
        checks: vec![
            check_weight_presence(prog),
            check_gradient_exactly_once(prog),
            check_update_ordering(prog),
            check_version_consistency(prog),
            check_activation_consume_once(prog),
            check_buffer_bounds(prog, &order),
            check_send_recv_matching(prog),
        ],
    }
}

// ---------------------------------------------------------------------------
// mutations: semantic-bug injectors, one per check they must trip

pub mod mutations {
    use super::*;
    use crate::error::{Error, Result};

    /// Rebuild with `remove` dropped. With `splice`, dependents inherit the
    /// removed instruction's own dependencies; without it, the edge is cut.
    fn remove_ids(prog: &Program, remove: &[InstrId], splice: bool) -> Program {
        let gone = |id: InstrId| remove.contains(&id);
        let mut new_id: Vec<Option<InstrId>> = Vec::with_capacity(prog.len());
        let mut next = 0u32;
        for i in &prog.instrs {
            if gone(i.id) {
                new_id.push(None);
            } else {
                new_id.push(Some(next));
                next += 1;
            }
        }
        let mut instrs = Vec::with_capacity(next as usize);
        for i in &prog.instrs {
            if gone(i.id) {
                continue;
            }
            let mut deps = Vec::with_capacity(i.deps.len());
            let push_dep = |d: InstrId, deps: &mut Vec<InstrId>| {
                if let Some(nd) = new_id[d as usize] {
                    if !deps.contains(&nd) {
                        deps.push(nd);
                    }
                }
            };
            for &d in &i.deps {
                if gone(d) {
                    if splice {
                        for &dd in &prog.instr(d).deps {
                            push_dep(dd, &mut deps);
                        }
                    }
                } else {
                    push_dep(d, &mut deps);
                }
            }
            let mut ni = i.clone();
            ni.id = new_id[i.id as usize].expect("kept");
            ni.deps = deps;
            instrs.push(ni);
        }
        let per_device = prog
            .per_device
            .iter()
            .map(|l| l.iter().filter_map(|&id| new_id[id as usize]).collect())
            .collect();
        Program {
            instrs,
            per_device,
            ..prog.clone()
        }
    }

    /// Insert a send/recv pair immediately before (in id order) `anchor`.
    fn insert_pair_before(prog: &Program, anchor: InstrId, send: Instruction, recv: Instruction) -> Program {
        let shift = |id: InstrId| if id < anchor { id } else { id + 2 };
        let mut instrs: Vec<Instruction> = Vec::with_capacity(prog.len() + 2);
        for i in &prog.instrs {
            if i.id == anchor {
                instrs.push(send.clone());
                instrs.push(recv.clone());
            }
            let mut ni = i.clone();
            ni.id = shift(i.id);
            ni.deps = i.deps.iter().map(|&d| shift(d)).collect();
            instrs.push(ni);
        }
        let mut per_device: Vec<Vec<InstrId>> = prog
            .per_device
            .iter()
            .map(|l| l.iter().map(|&id| shift(id)).collect())
            .collect();
        for ni in [&send, &recv] {
            let list = &mut per_device[ni.device as usize];
            let at = list.partition_point(|&x| x < ni.id);
            list.insert(at, ni.id);
        }
        Program {
            instrs,
            per_device,
            ..prog.clone()
        }
    }

    /// Drop a weight broadcast, splicing its dependencies through, so group
    /// members compute on a shard they never received. Trips weight-presence.
    pub fn drop_weight_broadcast(prog: &Program) -> Result<Program> {
        let target = prog
            .instrs
            .iter()
            .find(|i| matches!(i.kind, InstrKind::BroadcastWeights { .. }) && i.shard == 1)
            .or_else(|| {
                prog.instrs
                    .iter()
                    .find(|i| matches!(i.kind, InstrKind::BroadcastWeights { .. }))
            })
            .ok_or_else(|| Error::schedule("program has no weight broadcast to drop"))?;
        Ok(remove_ids(prog, &[target.id], true))
    }

    /// Drop one gradient hand-off pair (send and its recv) so a group's
    /// gradients never reach the owner. Trips gradient-exactly-once.
    pub fn drop_grad_exchange(prog: &Program) -> Result<Program> {
        let recv = prog
            .instrs
            .iter()
            .find(|i| matches!(i.kind, InstrKind::RecvGrads { .. }))
            .ok_or_else(|| Error::schedule("program exchanges no gradients to drop"))?;
        let send = recv
            .deps
            .iter()
            .copied()
            .find(|&d| matches!(prog.instr(d).kind, InstrKind::SendGrads { .. }))
            .ok_or_else(|| Error::schedule("gradient recv has no wired send"))?;
        Ok(remove_ids(prog, &[send, recv.id], false))
    }

    /// Reorder the owner's list so the update sits before its own backward
    /// pass, dependencies untouched. Trips update-ordering.
    pub fn misplace_update(prog: &Program) -> Result<Program> {
        let u = prog
            .instrs
            .iter()
            .find(|i| i.kind == InstrKind::Update)
            .ok_or_else(|| Error::schedule("program has no update"))?;
        let mut out = prog.clone();
        let list = &mut out.per_device[u.device as usize];
        let bwd_pos = list
            .iter()
            .position(|&id| {
                let x = prog.instr(id);
                x.kind == InstrKind::BackwardCompute
                    && x.shard == u.shard
                    && x.iteration == u.iteration
            })
            .ok_or_else(|| Error::schedule("owner performs no backward for its shard"))?;
        let upd_pos = list.iter().position(|&id| id == u.id).expect("update listed");
        if upd_pos < bwd_pos {
            return Err(Error::schedule("update already precedes backward"));
        }
        list.remove(upd_pos);
        list.insert(bwd_pos, u.id);
        Ok(out)
    }

    /// Append a second backward for a micro-batch range that is not wired
    /// into any reduction. Trips activation-consume-once.
    pub fn duplicate_backward(prog: &Program) -> Result<Program> {
        let b = prog
            .instrs
            .iter()
            .find(|i| {
                i.kind == InstrKind::BackwardCompute
                    && owner_of(prog, i.shard) != Some(i.device)
            })
            .ok_or_else(|| Error::schedule("no non-owner backward to duplicate"))?;
        let mut out = prog.clone();
        let mut dup = b.clone();
        dup.id = prog.len() as InstrId;
        out.per_device[dup.device as usize].push(dup.id);
        out.instrs.push(dup);
        Ok(out)
    }

    /// Inject a matched weight delivery that nothing consumes, arriving
    /// alongside a staged prefetch. Trips buffer-bounds.
    pub fn inject_early_delivery(prog: &Program) -> Result<Program> {
        let anchor = prog
            .instrs
            .iter()
            .find(|i| {
                matches!(i.kind, InstrKind::RecvWeights { .. })
                    && owner_of(prog, i.shard) != Some(i.device)
            })
            .ok_or_else(|| Error::schedule("program stages no weight deliveries"))?;
        let dst = anchor.device;
        let far = (0..prog.cfg.p)
            .find(|&s| s != anchor.shard && prog.map.owner_of_shard[s as usize] != dst)
            .ok_or_else(|| Error::schedule("no far shard available"))?;
        let src = prog.map.owner_of_shard[far as usize];
        let send = Instruction {
            id: anchor.id,
            device: src,
            kind: InstrKind::SendWeights { to: dst },
            shard: far,
            mbs: MbRange::EMPTY,
            bytes: prog.cfg.shard_weight_bytes(),
            flops: 0.0,
            deps: vec![],
            overlap_eligible: true,
            iteration: 0,
            version: 0,
        };
        let recv = Instruction {
            id: anchor.id + 1,
            device: dst,
            kind: InstrKind::RecvWeights { from: src },
            shard: far,
            mbs: MbRange::EMPTY,
            bytes: prog.cfg.shard_weight_bytes(),
            flops: 0.0,
            deps: vec![anchor.id],
            overlap_eligible: true,
            iteration: 0,
            version: 0,
        };
        Ok(insert_pair_before(prog, anchor.id, send, recv))
    }

    /// Append a weight send that no receiver answers. Trips
    /// send-recv-matching.
    pub fn orphan_weight_send(prog: &Program) -> Result<Program> {
        let shard = 0u32;
        let src = prog.map.owner_of_shard[shard as usize];
        let dst = (0..prog.cfg.p)
            .find(|&cand| {
                cand != src
                    && !prog.instrs.iter().any(|i| {
                        matches!(i.kind, InstrKind::SendWeights { to } if to == cand)
                            && i.device == src
                            && i.shard == shard
                    })
            })
            .ok_or_else(|| Error::schedule("no free destination for an orphan send"))?;
        let mut out = prog.clone();
        let send = Instruction {
            id: prog.len() as InstrId,
            device: src,
            kind: InstrKind::SendWeights { to: dst },
            shard,
            mbs: MbRange::EMPTY,
            bytes: prog.cfg.shard_weight_bytes(),
            flops: 0.0,
            deps: vec![],
            overlap_eligible: true,
            iteration: 0,
            version: 0,
        };
        out.per_device[src as usize].push(send.id);
        out.instrs.push(send);
        Ok(out)
    }

    pub struct Mutation {
        pub name: &'static str,
        pub expect_fail: &'static str,
        pub prog: Program,
    }

    /// All six surgeries applied to `base`, each tagged with the single
    /// check it must trip.
    pub fn all_mutations(base: &Program) -> Result<Vec<Mutation>> {
        Ok(vec![
            Mutation {
                name: "drop-weight-broadcast",
                expect_fail: "weight-presence",
                prog: drop_weight_broadcast(base)?,
            },
            Mutation {
                name: "drop-grad-exchange",
                expect_fail: "gradient-exactly-once",
                prog: drop_grad_exchange(base)?,
            },
            Mutation {
                name: "misplace-update",
                expect_fail: "update-ordering",
                prog: misplace_update(base)?,
            },
            Mutation {
                name: "duplicate-backward",
                expect_fail: "activation-consume-once",
                prog: duplicate_backward(base)?,
            },
            Mutation {
                name: "inject-early-delivery",
                expect_fail: "buffer-bounds",
                prog: inject_early_delivery(base)?,
            },
            Mutation {
                name: "orphan-weight-send",
                expect_fail: "send-recv-matching",
                prog: orphan_weight_send(base)?,
            },
        ])
    }
}

// ---------------------------------------------------------------------------
