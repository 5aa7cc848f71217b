//! Chrome trace-event export of a simulated timeline.
//!
//! Emits the JSON object format: one complete event (`ph:"X"`) per timeline
//! row, `pid` = node, `tid` = device, timestamps in microseconds. The file
//! loads directly in chrome://tracing and Perfetto.

use serde_json::{json, Value};

use crate::error::Result;
use crate::schedule::Program;
use crate::simulator::{RowKind, SimResult};
use crate::topology::ClusterTopology;

const US_PER_S: f64 = 1e6;

/// Render `result` as a trace-event JSON string. Rows keep their timeline
/// order (start, id, device), so output is deterministic for a given run.
pub fn trace_json(prog: &Program, topo: &ClusterTopology, result: &SimResult) -> Result<String> {
    let mut events: Vec<Value> = Vec::with_capacity(result.timeline.rows.len() + 64);

    // metadata: name processes after nodes, threads after devices
    for node in 0..topo.num_nodes {
        events.push(json!({
            "name": "process_name", "ph": "M", "pid": node, "tid": 0,
            "args": {"name": format!("node{node}")}
        }));
    }
    for d in 0..topo.num_devices() {
        let node = topo.node_of(d)?;
        events.push(json!({
            "name": "thread_name", "ph": "M", "pid": node, "tid": d,
            "args": {"name": format!("device{d}")}
        }));
    }

    for row in &result.timeline.rows {
        let ins = prog.instr(row.id);
        let node = topo.node_of(row.device)?;
        let (cat, detail) = match row.kind {
            RowKind::Compute => ("compute", json!({"flops": ins.flops})),
            RowKind::Link => ("link", json!({"bytes": ins.bytes, "eligible": ins.overlap_eligible})),
        };
        let name = if ins.mbs.is_empty() {
            format!("{} s{}", ins.kind.name(), ins.shard)
        } else {
            format!("{} s{} mb{}", ins.kind.name(), ins.shard, ins.mbs)
        };
        let mut args = json!({"id": row.id, "iteration": ins.iteration});
        merge(&mut args, detail);
        events.push(json!({
            "name": name,
            "cat": cat,
            "ph": "X",
            "ts": row.start * US_PER_S,
            "dur": (row.end - row.start) * US_PER_S,
            "pid": node,
            "tid": row.device,
            "args": args,
        }));
    }

    let doc = json!({
        "traceEvents": events,
        "displayTimeUnit": "ms",
    });
    Ok(serde_json::to_string_pretty(&doc).expect("trace serialization"))
}

fn merge(into: &mut Value, from: Value) {
    if let (Value::Object(a), Value::Object(b)) = (into, from) {
        for (k, v) in b {
            a.insert(k, v);
        }
    }
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::{generate, Strategy};
    use crate::simulator::simulate;
    use crate::topology::CommCostModel;
    use crate::workload::TrainConfig;

    fn tiny_run() -> (Program, ClusterTopology, SimResult) {
        let cfg = TrainConfig::new(4, 2, 4, 64, 16, 1, 4);
        let prog = generate(Strategy::Tawpipe, &cfg, 1).unwrap();
        let topo = ClusterTopology::new(2, 2).unwrap();
        let cost = CommCostModel::preset_a800_10gbe();
        let res = simulate(&prog, &topo, &cost, 1e12).unwrap();
        (prog, topo, res)
    }

    #[test]
    fn trace_is_valid_json_with_one_event_per_row() {
        let (prog, topo, res) = tiny_run();
        let text = trace_json(&prog, &topo, &res).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let events = doc["traceEvents"].as_array().unwrap();
        let complete: Vec<_> = events.iter().filter(|e| e["ph"] == "X").collect();
        assert_eq!(complete.len(), res.timeline.rows.len());
        // metadata rows name every device thread
        let threads = events.iter().filter(|e| e["name"] == "thread_name").count();
        assert_eq!(threads, 4);
    }

    #[test]
    fn events_carry_node_pid_and_device_tid() {
        let (prog, topo, res) = tiny_run();
        let text = trace_json(&prog, &topo, &res).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        for e in doc["traceEvents"].as_array().unwrap() {
            if e["ph"] != "X" {
                continue;
            }
            let tid = e["tid"].as_u64().unwrap() as u32;
            let pid = e["pid"].as_u64().unwrap() as u32;
            assert_eq!(pid, topo.node_of(tid).unwrap());
            assert!(e["ts"].as_f64().unwrap() >= 0.0);
            assert!(e["dur"].as_f64().unwrap() >= 0.0);
        }
    }

    #[test]
    fn trace_is_deterministic() {
        let (prog, topo, res) = tiny_run();
        let a = trace_json(&prog, &topo, &res).unwrap();
        let b = trace_json(&prog, &topo, &res).unwrap();
        assert_eq!(a, b);
    }
}
