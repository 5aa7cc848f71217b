//! Model/training sizing derived from configuration scalars, plus the
//! interleaved shard-to-device mapping and per-step group roles.

use crate::error::{Error, Result};
use crate::topology::DeviceId;

pub type ShardId = u32;

// --- train config ---

/// All schedule-relevant scalars. Element widths are bytes per element;
/// defaults model fp16 training with fp32 optimizer state (multiplier 6:
/// master weights + two moments over fp16 storage).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainConfig {
    pub p: u32,
    pub d: u32,
    pub l: u32,
    pub h: u32,
    pub s: u32,
    pub b: u32,
    pub n: u32,
    pub bytes_param: u32,
    pub bytes_act: u32,
    pub bytes_grad: u32,
    pub opt_state_multiplier: u32,
    pub vocab: u32,
    pub activation_checkpointing: bool,
    pub iterations: u32,
}

impl TrainConfig {
    pub fn new(p: u32, d: u32, l: u32, h: u32, s: u32, b: u32, n: u32) -> Self {
        TrainConfig {
            p,
            d,
            l,
            h,
            s,
            b,
            n,
            bytes_param: 2,
            bytes_act: 2,
            bytes_grad: 2,
            opt_state_multiplier: 6,
            vocab: 32000,
            activation_checkpointing: true,
            iterations: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("P", self.p),
            ("D", self.d),
            ("L", self.l),
            ("H", self.h),
            ("S", self.s),
            ("B", self.b),
            ("N", self.n),
            ("bytes_param", self.bytes_param),
            ("bytes_act", self.bytes_act),
            ("bytes_grad", self.bytes_grad),
            ("iterations", self.iterations),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be >= 1, got 0")));
            }
        }
        if self.d > self.p {
            return Err(Error::config(format!(
                "group count D={} exceeds device count P={}",
                self.d, self.p
            )));
        }
        if self.p % self.d != 0 {
            return Err(Error::config(format!(
                "P mod D = 0 violated: P={} D={}",
                self.p, self.d
            )));
        }
        if self.l % self.p != 0 {
            return Err(Error::config(format!(
                "L mod P = 0 violated: L={} P={}",
                self.l, self.p
            )));
        }
        if self.n % self.p != 0 {
            return Err(Error::config(format!(
                "N mod P = 0 violated: N={} P={}",
                self.n, self.p
            )));
        }
        Ok(())
    }

    pub fn group_size(&self) -> u32 {
        self.p / self.d
    }

    /// Micro-batches each device runs per shard step (even static split).
    pub fn mb_per_device(&self) -> u32 {
        self.n / self.p
    }

    pub fn layers_per_shard(&self) -> u32 {
        self.l / self.p
    }

    pub fn shard_param_elements(&self) -> u64 {
        layer_params(self.h as u64) * self.layers_per_shard() as u64
    }

    /// M_W: one weight shard in bytes, 12H^2 * (L/P) * bytes_param.
    pub fn shard_weight_bytes(&self) -> u64 {
        self.shard_param_elements() * self.bytes_param as u64
    }

    pub fn shard_grad_bytes(&self) -> u64 {
        self.shard_param_elements() * self.bytes_grad as u64
    }

    /// Boundary activation bytes for one micro-batch: B*S*H * bytes_act.
    pub fn mb_activation_bytes(&self) -> u64 {
        activation_elements(self.b as u64, self.s as u64, self.h as u64) * self.bytes_act as u64
    }
}

// --- sizing formulas ---

/// Parameters of one transformer layer: 12 H^2.
pub fn layer_params(h: u64) -> u64 {
    12 * h * h
}

/// Whole-model parameters: L * 12H^2 plus input/output embeddings (2 * vocab * H).
pub fn model_params(cfg: &TrainConfig) -> u64 {
    cfg.l as u64 * layer_params(cfg.h as u64) + 2 * cfg.vocab as u64 * cfg.h as u64
}

/// Boundary activation volume for one micro-batch: B * S * H elements.
pub fn activation_elements(b: u64, s: u64, h: u64) -> u64 {
    b * s * h
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// FLOPs for one micro-batch through one layer: dense 24BSH^2 plus attention
/// score/value 4BS^2H; backward costs 2x, plus 1x recompute when activation
/// checkpointing is on.
pub fn layer_flops(b: u64, s: u64, h: u64, dir: Direction, recompute: bool) -> u64 {
    let fwd = 24 * b * s * h * h + 4 * b * s * s * h;
    match dir {
        Direction::Forward => fwd,
        Direction::Backward => {
            if recompute {
                3 * fwd
            } else {
                2 * fwd
            }
        }
    }
}

// --- shard map ---

/// Shard held by member i of group k: W_{(D*i + k) mod P}.
pub fn shard_of_device(k: u32, i: u32, p: u32, d: u32) -> Result<ShardId> {
    if d == 0 || p == 0 || p % d != 0 {
        return Err(Error::config(format!("invalid grouping P={p} D={d}")));
    }
    if k >= d || i >= p / d {
        return Err(Error::config(format!(
            "group index k={k} or member index i={i} out of range for P={p} D={d}"
        )));
    }
    Ok((d * i + k) % p)
}

/// Ownership, groups, and per-(group, step) master/staging roles for both
/// pipeline directions. Forward step t processes shard t; backward step u
/// processes shard P-1-u. staging_fwd[k][t] is the member prefetching the
/// shard of step t+1 (None when that shard is group-local or t is last);
/// masters_bwd[k][0] is the forward master of the last shard, which is still
/// resident on every member, so backward step 0 emits no delivery.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShardMap {
    pub p: u32,
    pub d: u32,
    pub owner_of_shard: Vec<DeviceId>,
    pub shard_of: Vec<ShardId>,
    pub groups: Vec<Vec<DeviceId>>,
    pub group_of: Vec<u32>,
    pub masters_fwd: Vec<Vec<DeviceId>>,
    pub staging_fwd: Vec<Vec<Option<DeviceId>>>,
    pub masters_bwd: Vec<Vec<DeviceId>>,
    pub staging_bwd: Vec<Vec<Option<DeviceId>>>,
}

impl ShardMap {
    pub fn group_size(&self) -> u32 {
        self.p / self.d
    }
}

pub fn build_shard_map(cfg: &TrainConfig) -> Result<ShardMap> {
    cfg.validate()?;
    build_shard_map_with(cfg.p, cfg.d)
}

/// Grouping-only construction; used directly by the flat-ring ablation which
/// replaces the configured grouping with P singleton groups.
pub fn build_shard_map_with(p: u32, d: u32) -> Result<ShardMap> {
    if d == 0 || p == 0 || p % d != 0 {
        return Err(Error::config(format!("P mod D = 0 violated: P={p} D={d}")));
    }
    let g = p / d;
    let mut owner_of_shard = vec![0; p as usize];
    let mut shard_of = vec![0; p as usize];
    let mut groups = Vec::with_capacity(d as usize);
    let mut group_of = vec![0; p as usize];
    for k in 0..d {
        let members: Vec<DeviceId> = (k * g..(k + 1) * g).collect();
        for (i, &dev) in members.iter().enumerate() {
            let s = shard_of_device(k, i as u32, p, d)?;
            owner_of_shard[s as usize] = dev;
            shard_of[dev as usize] = s;
            group_of[dev as usize] = k;
        }
        groups.push(members);
    }

    let fwd_seq: Vec<ShardId> = (0..p).collect();
    let bwd_seq: Vec<ShardId> = (0..p).rev().collect();
    let mut masters_fwd = Vec::new();
    let mut staging_fwd = Vec::new();
    let mut masters_bwd = Vec::new();
    let mut staging_bwd = Vec::new();
    for k in 0..d as usize {
        let members = &groups[k];
        // Forward: the first shard arrives at member 0 when remotely owned.
        let owner0 = owner_of_shard[fwd_seq[0] as usize];
        let seed_fwd = if group_of[owner0 as usize] == k as u32 { owner0 } else { members[0] };
        let (mf, sf) = roles_for_sequence(&fwd_seq, members, &owner_of_shard, &shard_of, &group_of, k as u32, seed_fwd);
        // Backward: the last forward shard is still resident; its forward
        // master seeds the role walk.
        let seed_bwd = mf[p as usize - 1];
        let (mb, sb) = roles_for_sequence(&bwd_seq, members, &owner_of_shard, &shard_of, &group_of, k as u32, seed_bwd);
        masters_fwd.push(mf);
        staging_fwd.push(sf);
        masters_bwd.push(mb);
        staging_bwd.push(sb);
    }

    Ok(ShardMap {
        p,
        d,
        owner_of_shard,
        shard_of,
        groups,
        group_of,
        masters_fwd,
        staging_fwd,
        masters_bwd,
        staging_bwd,
    })
}

/// Walk a shard sequence assigning the master (holder at each step) and the
/// staging device (prefetcher for the next step's shard when remotely owned).
/// Staging rule: among non-master members whose owned shard is not needed in
/// the next G steps, pick round-robin by step index; fall back to any
/// non-master member, then to the master itself (single-member groups).
fn roles_for_sequence(
    seq: &[ShardId],
    members: &[DeviceId],
    owner_of_shard: &[DeviceId],
    shard_of: &[ShardId],
    group_of: &[u32],
    k: u32,
    seed_master: DeviceId,
) -> (Vec<DeviceId>, Vec<Option<DeviceId>>) {
    let g = members.len();
    let steps = seq.len();
    let mut masters = vec![0; steps];
    let mut staging = vec![None; steps];
    for u in 0..steps {
        let owner = owner_of_shard[seq[u] as usize];
        masters[u] = if u == 0 {
            seed_master
        } else if group_of[owner as usize] == k {
            owner
        } else {
            staging[u - 1].expect("remote shard must have a staging prefetcher")
        };
        if u + 1 < steps {
            let next_owner = owner_of_shard[seq[u + 1] as usize];
            if group_of[next_owner as usize] != k {
                let horizon: Vec<ShardId> =
                    seq[u + 1..steps.min(u + 1 + g)].to_vec();
                let eligible: Vec<DeviceId> = members
                    .iter()
                    .copied()
                    .filter(|&m| m != masters[u] && !horizon.contains(&shard_of[m as usize]))
                    .collect();
                let pool: Vec<DeviceId> = if !eligible.is_empty() {
                    eligible
                } else {
                    let non_master: Vec<DeviceId> =
                        members.iter().copied().filter(|&m| m != masters[u]).collect();
                    if !non_master.is_empty() { non_master } else { vec![masters[u]] }
                };
                staging[u] = Some(pool[(u % g) % pool.len()]);
            }
        }
    }
    (masters, staging)
}

// ---------------------------------------------------------------------------
// step narration

/// Human-readable per-step role log for the grouped weight-passing schedule:
/// which member holds the active shard at each step and which member is
/// receiving the next shard from its owner. One line per (step, group), a
/// forward block then a backward block.
pub fn gwps_step_log(map: &ShardMap) -> Vec<String> {
    let p = map.p as usize;
    let mut lines = Vec::with_capacity(2 * p * map.d as usize + 2);
    let blocks: [(&str, &Vec<Vec<DeviceId>>, &Vec<Vec<Option<DeviceId>>>); 2] = [
        ("forward pass:", &map.masters_fwd, &map.staging_fwd),
        ("backward pass:", &map.masters_bwd, &map.staging_bwd),
    ];
    for (bi, (header, masters, staging)) in blocks.into_iter().enumerate() {
        lines.push(header.to_string());
        for t in 0..p {
            // forward walks shards 0..P, backward walks P-1..0
            let shard = if bi == 0 { t } else { p - 1 - t };
            let next = if bi == 0 {
                (t + 1 < p).then(|| t + 1)
            } else {
                (t + 1 < p).then(|| p - 2 - t)
            };
            for k in 0..map.d as usize {
                let mut line = format!("  t={t} g{k}: P_{} holds W_{shard}", masters[k][t]);
                if let Some(ns) = next {
                    let owner = map.owner_of_shard[ns];
                    match staging[k][t] {
                        Some(stg) => line.push_str(&format!(
                            ", receives W_{ns} from P_{owner} (staging P_{stg})"
                        )),
                        None => line.push_str(&format!(", W_{ns} already in-group at P_{owner}")),
                    }
                }
                lines.push(line);
            }
        }
    }
    lines
}

// --- tests ---

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shard_of_device_p6_d2_layout() {
        // P=6, D=2: group 0 members own shards 0,2,4; P_2 holds W_4.
        assert_eq!(shard_of_device(0, 0, 6, 2).unwrap(), 0);
        assert_eq!(shard_of_device(0, 1, 6, 2).unwrap(), 2);
        assert_eq!(shard_of_device(0, 2, 6, 2).unwrap(), 4);
        assert_eq!(shard_of_device(1, 2, 6, 2).unwrap(), 5);
    }

    #[test]
    fn shard_of_device_single_group_is_identity() {
        for i in 0..8 {
            assert_eq!(shard_of_device(0, i, 8, 1).unwrap(), i);
        }
    }

    #[test]
    fn shard_owners_p8_d2_by_enumeration() {
        let map = build_shard_map_with(8, 2).unwrap();
        assert_eq!(map.owner_of_shard, vec![0, 4, 1, 5, 2, 6, 3, 7]);
    }

    #[test]
    fn shard_of_device_range_errors() {
        assert!(shard_of_device(2, 0, 6, 2).is_err());
        assert!(shard_of_device(0, 3, 6, 2).is_err());
    }

    #[test]
    fn layer_params_examples() {
        assert_eq!(layer_params(1024), 12_582_912);
        assert_eq!(layer_params(1), 12);
        assert_eq!(layer_params(4096), 201_326_592);
    }

    #[test]
    fn model_params_small_llama_like() {
        let cfg = TrainConfig::new(24, 3, 48, 1024, 16384, 4, 384);
        assert_eq!(model_params(&cfg), 669_515_776);
    }

    #[test]
    fn model_params_ten_billion_scale() {
        let cfg = TrainConfig::new(24, 3, 48, 4096, 16384, 4, 384);
        assert_eq!(model_params(&cfg), 9_925_820_416);
    }

    #[test]
    fn model_params_without_embeddings() {
        let mut cfg = TrainConfig::new(24, 3, 48, 1024, 16384, 4, 384);
        cfg.vocab = 0;
        assert_eq!(model_params(&cfg), 48 * 12_582_912);
    }

    #[test]
    fn model_params_monotone() {
        let base = TrainConfig::new(8, 2, 16, 256, 128, 1, 8);
        let v = model_params(&base);
        for (dl, dh, dv) in [(1u32, 0u32, 0u32), (0, 1, 0), (0, 0, 1)] {
            let mut c = base.clone();
            c.l += dl;
            c.h += dh;
            c.vocab += dv;
            assert!(model_params(&c) > v);
        }
    }

    #[test]
    fn activation_elements_examples() {
        assert_eq!(activation_elements(4, 16384, 1024), 67_108_864);
        assert_eq!(activation_elements(1, 1, 1), 1);
        // B*S invariance
        assert_eq!(activation_elements(16, 4096, 1024), 67_108_864);
    }

    #[test]
    fn layer_flops_unit_scale() {
        assert_eq!(layer_flops(1, 1, 1, Direction::Forward, false), 28);
    }

    #[test]
    fn layer_flops_hand_arithmetic() {
        let f = layer_flops(4, 16384, 1024, Direction::Forward, false);
        assert_eq!(f, 6_047_313_952_768);
        assert_eq!(layer_flops(4, 16384, 1024, Direction::Backward, true), 3 * f);
        assert_eq!(layer_flops(4, 16384, 1024, Direction::Backward, false), 2 * f);
    }

    #[test]
    fn shard_map_p6_d2_groups_and_owners() {
        let cfg = TrainConfig::new(6, 2, 6, 64, 16, 1, 6);
        let map = build_shard_map(&cfg).unwrap();
        assert_eq!(map.groups, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(map.owner_of_shard[1], 3);
        assert_eq!(map.owner_of_shard[5], 5);
        assert_eq!(map.owner_of_shard[4], 2);
    }

    #[test]
    fn shard_map_p6_d2_forward_roles() {
        let cfg = TrainConfig::new(6, 2, 6, 64, 16, 1, 6);
        let map = build_shard_map(&cfg).unwrap();
        // Group 0 holders step by step, with the staging member who prefetched
        // each remotely-owned shard becoming the next master.
        assert_eq!(map.masters_fwd[0], vec![0, 2, 1, 0, 2, 1]);
        assert_eq!(
            map.staging_fwd[0],
            vec![Some(2), None, Some(0), None, Some(1), None]
        );
        // Worked six-device moment: at step 4 the holder of W_4 is P_2 while P_1
        // receives W_5 from its owner P_5.
        assert_eq!(map.masters_fwd[0][4], 2);
        assert_eq!(map.staging_fwd[0][4], Some(1));
        // Group 1 starts from W_0 delivered to its first member P_3.
        assert_eq!(map.masters_fwd[1], vec![3, 3, 5, 4, 3, 5]);
        assert_eq!(
            map.staging_fwd[1],
            vec![None, Some(5), None, Some(3), None, None]
        );
    }

    #[test]
    fn shard_map_p6_d2_backward_roles() {
        let cfg = TrainConfig::new(6, 2, 6, 64, 16, 1, 6);
        let map = build_shard_map(&cfg).unwrap();
        // Backward walks shards 5,4,3,2,1,0; step 0 reuses the resident last
        // shard (seed = forward master of W_5).
        assert_eq!(map.masters_bwd[0], vec![1, 2, 0, 1, 2, 0]);
        assert_eq!(
            map.staging_bwd[0],
            vec![None, Some(0), None, Some(2), None, None]
        );
    }

    #[test]
    fn step_log_narrates_holder_and_prefetch() {
        let cfg = TrainConfig::new(6, 2, 6, 64, 16, 1, 6);
        let map = build_shard_map(&cfg).unwrap();
        let log = gwps_step_log(&map);
        // one line per (step, group) per direction, plus two headers
        assert_eq!(log.len(), 2 + 2 * 6 * 2);
        assert_eq!(log[0], "forward pass:");
        assert_eq!(
            log[1 + 4 * 2],
            "  t=4 g0: P_2 holds W_4, receives W_5 from P_5 (staging P_1)"
        );
        // local handoff needs no prefetch
        assert!(log
            .iter()
            .any(|l| l.contains("already in-group")));
        // backward block narrates the reverse walk
        let bh = log.iter().position(|l| l == "backward pass:").unwrap();
        assert!(log[bh + 1].contains("holds W_5"));
    }

    #[test]
    fn singleton_groups_master_is_self() {
        let map = build_shard_map_with(4, 4).unwrap();
        for k in 0..4usize {
            assert_eq!(map.groups[k], vec![k as u32]);
            for t in 0..4usize {
                assert_eq!(map.masters_fwd[k][t], k as u32);
                if let Some(st) = map.staging_fwd[k][t] {
                    assert_eq!(st, k as u32);
                }
            }
        }
        // Identity ownership
        assert_eq!(map.owner_of_shard, vec![0, 1, 2, 3]);
    }

    #[test]
    fn bijection_and_partition_exhaustive() {
        for p in 1..=64u32 {
            for d in 1..=p {
                if p % d != 0 {
                    continue;
                }
                let map = build_shard_map_with(p, d).unwrap();
                let mut seen = vec![false; p as usize];
                for &o in &map.owner_of_shard {
                    assert!(!seen[o as usize], "P={p} D={d}: owner repeated");
                    seen[o as usize] = true;
                }
                for dev in 0..p {
                    assert_eq!(map.owner_of_shard[map.shard_of[dev as usize] as usize], dev);
                }
            }
        }
    }

    #[test]
    fn master_never_equals_staging_in_real_groups() {
        for p in [4u32, 6, 8, 12, 24] {
            for d in 1..=p {
                if p % d != 0 || p / d < 2 {
                    continue;
                }
                let map = build_shard_map_with(p, d).unwrap();
                for k in 0..d as usize {
                    for t in 0..p as usize {
                        if let Some(st) = map.staging_fwd[k][t] {
                            assert_ne!(map.masters_fwd[k][t], st, "P={p} D={d} k={k} t={t}");
                        }
                        if let Some(st) = map.staging_bwd[k][t] {
                            assert_ne!(map.masters_bwd[k][t], st, "bwd P={p} D={d} k={k} t={t}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn config_validation_names_violated_constraint() {
        let bad_d = TrainConfig::new(6, 4, 6, 64, 16, 1, 6);
        let err = bad_d.validate().unwrap_err().to_string();
        assert!(err.contains("P mod D"), "{err}");
        let bad_l = TrainConfig::new(6, 2, 7, 64, 16, 1, 6);
        assert!(bad_l.validate().unwrap_err().to_string().contains("L mod P"));
        let bad_n = TrainConfig::new(6, 2, 6, 64, 16, 1, 7);
        assert!(bad_n.validate().unwrap_err().to_string().contains("N mod P"));
        let mut zero = TrainConfig::new(6, 2, 6, 64, 16, 1, 6);
        zero.h = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn shard_weight_bytes_is_m_w() {
        // 12*1024^2 elements/layer * 2 layers * 2 B = one stage of weights.
        let cfg = TrainConfig::new(24, 3, 48, 1024, 16384, 4, 384);
        assert_eq!(cfg.shard_weight_bytes(), 50_331_648);
        assert_eq!(2 * cfg.shard_weight_bytes(), 100_663_296);
    }
}
