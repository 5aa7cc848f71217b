//! Acceptance suite: one test per headline claim, each printing a single
//! PASS/FAIL line (run with `-- --nocapture` to see them on success).
//!
//! Tolerances are pinned inline; exact-equality asserts are bit-level on
//! purpose, the quantities are either integers in f64 or correctly rounded
//! quotients of integers.

use std::time::Instant;

use tawsim_core::validator::mutations::all_mutations;
use tawsim_core::{
    activation_pass_comm_per_step, analytic_weight_buffer, build_shard_map, bubble_ratio,
    generate, gwps_step_log, layer_flops, memory_profile, model_params, onefb_bubble_formula,
    simulate, taw_bubble_formula, validate_semantics, weight_pass_comm_per_layer,
    ClusterTopology, CollectiveShape, CommCostModel, Direction, Program, SimResult, Strategy,
    TrainConfig,
};

// ---------------------------------------------------------------------------
// plumbing

macro_rules! req {
    ($cond:expr, $($t:tt)*) => {
        if !($cond) {
            return Err(format!($($t)*));
        }
    };
}

fn check(n: u32, desc: &str, r: Result<(), String>) {
    match &r {
        Ok(()) => println!("acceptance C{n:02} PASS {desc}"),
        Err(e) => println!("acceptance C{n:02} FAIL {desc}: {e}"),
    }
    if let Err(e) = r {
        panic!("C{n:02} {desc}: {e}");
    }
}

fn near_zero_cost() -> CommCostModel {
    CommCostModel::new(0.0, 1e-30, 0.0, 1e-30, CollectiveShape::Flat, CollectiveShape::Flat)
        .unwrap()
}

/// One forward compute instruction of `prog`'s config == 1 second.
fn unit_rate(cfg: &TrainConfig) -> f64 {
    let per_layer = layer_flops(
        cfg.b as u64,
        cfg.s as u64,
        cfg.h as u64,
        Direction::Forward,
        false,
    );
    (per_layer * cfg.layers_per_shard() as u64 * cfg.mb_per_device() as u64) as f64
}

/// Per-microbatch forward rate for the activation-passing schedule.
fn unit_rate_1f1b(cfg: &TrainConfig) -> f64 {
    let per_layer = layer_flops(
        cfg.b as u64,
        cfg.s as u64,
        cfg.h as u64,
        Direction::Forward,
        false,
    );
    (per_layer * cfg.layers_per_shard() as u64) as f64
}

// the 24-GPU experiment shape: 3 nodes x 8 devices, 48 layers, long context
fn experiment_cfg(h: u32) -> TrainConfig {
    let mut cfg = TrainConfig::new(24, 3, 48, h, 16384, 4, 384);
    cfg.vocab = 32000;
    cfg
}

fn experiment_topo() -> ClusterTopology {
    ClusterTopology::new(3, 8).unwrap()
}

const A800_FLOPS: f64 = 312e12;

fn sim_experiment(s: Strategy, h: u32) -> SimResult {
    let cfg = experiment_cfg(h);
    let prog = generate(s, &cfg, 1).unwrap();
    simulate(&prog, &experiment_topo(), &CommCostModel::preset_a800_10gbe(), A800_FLOPS).unwrap()
}

// ---------------------------------------------------------------------------
// C1: role tables and step narration for the worked six-device walkthrough

#[test]
fn c01_six_device_role_walkthrough() {
    let body = || -> Result<(), String> {
        let cfg = TrainConfig::new(6, 2, 6, 64, 16, 1, 6);
        let map = build_shard_map(&cfg).map_err(|e| e.to_string())?;
        req!(map.owner_of_shard == vec![0, 3, 1, 4, 2, 5], "ownership layout drifted");
        req!(map.masters_fwd[0] == vec![0, 2, 1, 0, 2, 1], "g0 forward masters drifted");
        req!(map.masters_fwd[1] == vec![3, 3, 5, 4, 3, 5], "g1 forward masters drifted");
        req!(
            map.staging_fwd[0] == vec![Some(2), None, Some(0), None, Some(1), None],
            "g0 forward staging drifted"
        );
        req!(map.masters_bwd[0] == vec![1, 2, 0, 1, 2, 0], "g0 backward masters drifted");
        let log = gwps_step_log(&map);
        let want = "  t=4 g0: P_2 holds W_4, receives W_5 from P_5 (staging P_1)";
        req!(
            log.iter().any(|l| l == want),
            "narration missing the step-4 moment; got:\n{}",
            log.join("\n")
        );
        Ok(())
    };
    check(1, "six-device role walkthrough", body());
}

// ---------------------------------------------------------------------------
// C2: per-layer weight traffic 24h^2 vs 36h^2, per-step activation traffic

#[test]
fn c02_communication_volume_conventions() {
    let body = || -> Result<(), String> {
        for h in [64u64, 512, 1024, 4096] {
            let taw = weight_pass_comm_per_layer(Strategy::Tawpipe, h).map_err(|e| e.to_string())?;
            let wei = weight_pass_comm_per_layer(Strategy::Weipipe, h).map_err(|e| e.to_string())?;
            req!(taw == 24 * h * h, "grouped per-layer volume at h={h}: {taw}");
            req!(wei == 36 * h * h, "ring per-layer volume at h={h}: {wei}");
            req!(taw * 3 == wei * 2, "2:3 ratio broken at h={h}");
        }
        let act = activation_pass_comm_per_step(24, 4, 16384, 1024);
        req!(act == 3_221_225_472, "activation-passing per-step elements: {act}");
        Ok(())
    };
    check(2, "communication volume conventions", body());
}

// ---------------------------------------------------------------------------
// C3: weight buffer footprint at the experiment shape, exact bytes

#[test]
fn c03_weight_buffer_footprint() {
    let body = || -> Result<(), String> {
        let cfg = experiment_cfg(1024);
        let taw = analytic_weight_buffer(Strategy::Tawpipe, &cfg).map_err(|e| e.to_string())?;
        let wei = analytic_weight_buffer(Strategy::Weipipe, &cfg).map_err(|e| e.to_string())?;
        req!(taw == 50_331_648, "single-buffer bytes: {taw}");
        req!(wei == 100_663_296, "double-buffer bytes: {wei}");
        // generated programs must declare the same transient footprint
        for (s, want) in [(Strategy::Tawpipe, taw), (Strategy::Weipipe, wei)] {
            let prog = generate(s, &cfg, 1).map_err(|e| e.to_string())?;
            let peak = memory_profile(&prog)
                .iter()
                .map(|m| m.transient_weights)
                .max()
                .unwrap_or(0);
            req!(peak == want, "{} program transient {peak}, analytic {want}", s.name());
        }
        Ok(())
    };
    check(3, "weight buffer footprint", body());
}

// ---------------------------------------------------------------------------
// C4: activation-passing bubble, simulation == closed form bit-exactly

#[test]
fn c04_activation_passing_bubble_exact() {
    let body = || -> Result<(), String> {
        for p in [2u32, 4, 8] {
            for n in [p, 2 * p, 4 * p] {
                let cfg = TrainConfig::new(p, 1, p, 64, 16, 1, n);
                let prog = generate(Strategy::OneFOneB, &cfg, 1).map_err(|e| e.to_string())?;
                let topo = ClusterTopology::new(1, p).unwrap();
                let res = simulate(&prog, &topo, &near_zero_cost(), unit_rate_1f1b(&cfg))
                    .map_err(|e| e.to_string())?;
                let formula = onefb_bubble_formula(p, n).map_err(|e| e.to_string())?;
                // every stage idles the same amount; each per-device ratio
                // must equal the closed form bit-exactly
                for (dev, m) in res.metrics.per_device.iter().enumerate() {
                    req!(
                        m.bubble.to_bits() == formula.to_bits(),
                        "P={p} N={n} dev {dev}: sim {:.17} vs formula {formula:.17}",
                        m.bubble
                    );
                }
                // the mean may round its partial sums; allow one part in 1e12
                let sim = bubble_ratio(&res.metrics).map_err(|e| e.to_string())?;
                req!(
                    (sim - formula).abs() <= 1e-12 * formula,
                    "P={p} N={n}: mean {sim} far from formula {formula}"
                );
            }
        }
        Ok(())
    };
    check(4, "activation-passing bubble matches closed form exactly", body());
}

// ---------------------------------------------------------------------------
// C5: weight-passing bubble formula values and schedule-shape advantage

#[test]
fn c05_weight_passing_bubble_advantage() {
    let body = || -> Result<(), String> {
        let t0 = Instant::now();
        // frozen hand evaluations of the closed form
        let b1 = taw_bubble_formula(6, 2, 6).map_err(|e| e.to_string())?;
        req!(b1.to_bits() == (12.0f64 / 120.0).to_bits(), "hand value (6,2,6): {b1}");
        let b2 = taw_bubble_formula(24, 3, 16).map_err(|e| e.to_string())?;
        req!(b2.to_bits() == (64.0f64 / 1216.0).to_bits(), "hand value (24,3,16): {b2}");

        for p in [8u32, 16, 24] {
            let n = 2 * p;
            let l = 2 * p;
            // near-zero transfers: compare pure schedule shape
            let cfg1 = TrainConfig::new(p, 1, l, 64, 16, 1, n);
            let onefb = generate(Strategy::OneFOneB, &cfg1, 1).map_err(|e| e.to_string())?;
            let flat = ClusterTopology::new(1, p).unwrap();
            let ob = bubble_ratio(
                &simulate(&onefb, &flat, &near_zero_cost(), unit_rate_1f1b(&cfg1))
                    .map_err(|e| e.to_string())?
                    .metrics,
            )
            .map_err(|e| e.to_string())?;
            for d in [1u32, 2, 3, 4] {
                if p % d != 0 {
                    continue;
                }
                let cfg = TrainConfig::new(p, d, l, 64, 16, 1, n);
                let taw = generate(Strategy::Tawpipe, &cfg, 1).map_err(|e| e.to_string())?;
                let tb = bubble_ratio(
                    &simulate(&taw, &flat, &near_zero_cost(), unit_rate(&cfg))
                        .map_err(|e| e.to_string())?
                        .metrics,
                )
                .map_err(|e| e.to_string())?;
                req!(
                    tb < ob,
                    "P={p} D={d} N={n}: weight-passing bubble {tb} not below {ob}"
                );
                let formula = taw_bubble_formula(p, d, n).map_err(|e| e.to_string())?;
                println!(
                    "  C05 info P={p} D={d} N={n}: sim bubble {tb:.4}, formula {formula:.4} \
                     (formula charges one transfer slot per compute step)"
                );
            }
        }
        let dt = t0.elapsed();
        req!(dt.as_secs() < 30, "took {dt:?}, budget 30s");
        Ok(())
    };
    check(5, "weight-passing bubble advantage over activation passing", body());
}

// ---------------------------------------------------------------------------
// C6: end-to-end throughput ordering at the 24-GPU experiment shape

#[test]
fn c06_experiment_throughput_ordering() {
    let body = || -> Result<(), String> {
        let t0 = Instant::now();
        for h in [1024u32, 4096] {
            let taw = sim_experiment(Strategy::Tawpipe, h);
            let wei = sim_experiment(Strategy::Weipipe, h);
            let onefb = sim_experiment(Strategy::OneFOneB, h);
            let (tt, tw, to) = (
                taw.metrics.throughput_tokens_per_s,
                wei.metrics.throughput_tokens_per_s,
                onefb.metrics.throughput_tokens_per_s,
            );
            println!(
                "  C06 info H={h}: tokens/s taw {tt:.0}, wei {tw:.0}, 1f1b {to:.0} \
                 (makespans {:.2}s / {:.2}s / {:.2}s)",
                taw.metrics.makespan, wei.metrics.makespan, onefb.metrics.makespan
            );
            req!(tt > tw, "H={h}: grouped {tt} not above ring {tw}");
            req!(tw > to, "H={h}: ring {tw} not above activation passing {to}");
        }
        let dt = t0.elapsed();
        req!(dt.as_secs() < 60, "took {dt:?}, budget 60s");
        Ok(())
    };
    check(6, "experiment-shape throughput ordering", body());
}

// ---------------------------------------------------------------------------
// C7: non-overlapped communication fraction, grouped schedule strictly lowest

#[test]
fn c07_nonoverlapped_comm_fraction() {
    let body = || -> Result<(), String> {
        let mut frac = Vec::new();
        for s in Strategy::ALL {
            let res = sim_experiment(s, 1024);
            frac.push((s, res.metrics.comm_nonoverlap_fraction));
        }
        let taw = frac
            .iter()
            .find(|(s, _)| *s == Strategy::Tawpipe)
            .unwrap()
            .1;
        for &(s, f) in &frac {
            println!("  C07 info {}: non-overlapped comm fraction {f:.5}", s.name());
        }
        for &(s, f) in &frac {
            if s == Strategy::Tawpipe {
                continue;
            }
            req!(taw < f, "{} fraction {f} not above grouped {taw}", s.name());
        }
        Ok(())
    };
    check(7, "grouped schedule hides the most communication", body());
}

// ---------------------------------------------------------------------------
// C8: both ablations cost throughput; overlap matters more at larger h

#[test]
fn c08_ablations_cost_throughput() {
    let body = || -> Result<(), String> {
        let mut deg_nocco = Vec::new();
        for h in [1024u32, 4096] {
            let full = sim_experiment(Strategy::Tawpipe, h).metrics.throughput_tokens_per_s;
            let nocco = sim_experiment(Strategy::TawpipeNoCco, h)
                .metrics
                .throughput_tokens_per_s;
            let nogwps = sim_experiment(Strategy::TawpipeNoGwps, h)
                .metrics
                .throughput_tokens_per_s;
            println!(
                "  C08 info H={h}: tokens/s full {full:.0}, no-overlap {nocco:.0}, \
                 ungrouped {nogwps:.0}"
            );
            req!(full > nocco, "H={h}: overlap ablation did not cost throughput");
            req!(full > nogwps, "H={h}: grouping ablation did not cost throughput");
            deg_nocco.push((full - nocco) / full);
        }
        req!(
            deg_nocco[1] > deg_nocco[0],
            "overlap penalty should grow with h: {:?}",
            deg_nocco
        );
        Ok(())
    };
    check(8, "ablations cost throughput, overlap more so at larger h", body());
}

// ---------------------------------------------------------------------------
// C9: semantic validator, clean programs pass and each mutation is caught

#[test]
fn c09_validator_catches_each_defect() {
    let body = || -> Result<(), String> {
        let t0 = Instant::now();
        for (p, d) in [(4u32, 1u32), (6, 2), (8, 4)] {
            let cfg = TrainConfig::new(p, d, p, 64, 16, 1, p);
            for s in Strategy::ALL {
                let prog = generate(s, &cfg, 1).map_err(|e| e.to_string())?;
                let report = validate_semantics(&prog);
                req!(
                    report.passed(),
                    "{} P={p} D={d} flagged clean program: {:?}",
                    s.name(),
                    report.failed_names()
                );
            }
        }
        let base = generate(
            Strategy::Tawpipe,
            &TrainConfig::new(6, 2, 6, 64, 16, 1, 6),
            1,
        )
        .map_err(|e| e.to_string())?;
        for m in all_mutations(&base).map_err(|e| e.to_string())? {
            let failed = validate_semantics(&m.prog).failed_names();
            req!(
                failed == vec![m.expect_fail.to_string()],
                "mutation {}: failed {:?}, expected only {}",
                m.name,
                failed,
                m.expect_fail
            );
        }
        let dt = t0.elapsed();
        req!(dt.as_secs() < 30, "took {dt:?}, budget 30s");
        Ok(())
    };
    check(9, "validator catches each injected defect exactly", body());
}

// ---------------------------------------------------------------------------
// C10: determinism, bit-identical reruns

#[test]
fn c10_bit_identical_reruns() {
    let body = || -> Result<(), String> {
        let cfg = experiment_cfg(1024);
        let gen_a = generate(Strategy::Tawpipe, &cfg, 1).map_err(|e| e.to_string())?;
        let gen_b = generate(Strategy::Tawpipe, &cfg, 1).map_err(|e| e.to_string())?;
        req!(gen_a.to_text() == gen_b.to_text(), "generator not reproducible");
        let run = |prog: &Program| {
            simulate(prog, &experiment_topo(), &CommCostModel::preset_a800_10gbe(), A800_FLOPS)
        };
        let a = run(&gen_a).map_err(|e| e.to_string())?;
        let b = run(&gen_a).map_err(|e| e.to_string())?;
        req!(
            a.metrics.makespan.to_bits() == b.metrics.makespan.to_bits(),
            "makespan differs across reruns"
        );
        req!(a.timeline.rows.len() == b.timeline.rows.len(), "row count differs");
        for (ra, rb) in a.timeline.rows.iter().zip(&b.timeline.rows) {
            req!(
                ra.id == rb.id
                    && ra.start.to_bits() == rb.start.to_bits()
                    && ra.end.to_bits() == rb.end.to_bits(),
                "row {} differs across reruns",
                ra.id
            );
        }
        Ok(())
    };
    check(10, "bit-identical reruns", body());
}

// ---------------------------------------------------------------------------
// C11: parameter-count sanity at the experiment shapes

#[test]
fn c11_model_size_sanity() {
    let body = || -> Result<(), String> {
        let small = model_params(&experiment_cfg(1024));
        req!(small == 669_515_776, "h=1024 parameter count: {small}");
        req!(
            (663_000_000..=675_000_000).contains(&small),
            "h=1024 outside published band: {small}"
        );
        let large = model_params(&experiment_cfg(4096));
        req!(large == 9_925_820_416, "h=4096 parameter count: {large}");
        req!(
            (9_600_000_000..=10_100_000_000).contains(&large),
            "h=4096 outside published band: {large}"
        );
        Ok(())
    };
    check(11, "model size sanity", body());
}
