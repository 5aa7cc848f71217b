//! Output rendering: run summaries as key=value lines, sweep and comparison
//! results as aligned tables or raw comma-separated rows.

use tawsim_core::{Program, SimResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Rows,
}

impl Format {
    pub fn parse(s: &str) -> anyhow::Result<Format> {
        match s {
            "table" => Ok(Format::Table),
            "rows" => Ok(Format::Rows),
            other => anyhow::bail!("config error: unknown format {other:?} (table or rows)"),
        }
    }
}

// ---------------------------------------------------------------------------
// run summary

/// Stable machine-readable summary, one key=value per line. Floats use the
/// shortest round-trip form so reruns diff clean.
pub fn run_summary(prog: &Program, res: &SimResult, validation: &str) -> String {
    let m = &res.metrics;
    let cfg = &prog.cfg;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        out.push_str(k);
        out.push('=');
        out.push_str(&v);
        out.push('\n');
    };
    kv("strategy", prog.strategy.name().to_string());
    kv("p", cfg.p.to_string());
    kv("d", cfg.d.to_string());
    kv("l", cfg.l.to_string());
    kv("h", cfg.h.to_string());
    kv("s", cfg.s.to_string());
    kv("b", cfg.b.to_string());
    kv("n", cfg.n.to_string());
    kv("iterations", cfg.iterations.to_string());
    kv("makespan_s", format!("{}", m.makespan));
    kv("throughput_tokens_per_s", format!("{}", m.throughput_tokens_per_s));
    let mean = tawsim_core::bubble_ratio(m).map(|b| format!("{b}")).unwrap_or_default();
    kv("bubble_mean", mean);
    kv(
        "bubble_per_device",
        m.per_device
            .iter()
            .map(|d| format!("{}", d.bubble))
            .collect::<Vec<_>>()
            .join(","),
    );
    kv("intra_bytes", format!("{:.0}", m.intra_bytes));
    kv("inter_bytes", format!("{:.0}", m.inter_bytes));
    kv("comm_nonoverlap_fraction", format!("{}", m.comm_nonoverlap_fraction));
    // memory decomposition of the device with the largest footprint
    if let Some(peak) = m.per_device.iter().map(|d| &d.peak).max_by_key(|mb| mb.total) {
        kv("mem_weights_bytes", peak.weights_static.to_string());
        kv("mem_transient_weight_bytes", peak.transient_weights.to_string());
        kv("mem_grad_bytes", peak.grads.to_string());
        kv("mem_optimizer_bytes", peak.optimizer.to_string());
        kv("mem_activation_peak_bytes", peak.activation_peak.to_string());
        kv("mem_peak_total_bytes", peak.total.to_string());
    }
    kv("validation", validation.to_string());
    out
}

// ---------------------------------------------------------------------------
// tables

pub const SWEEP_HEADER: [&str; 15] = [
    "strategy",
    "p",
    "d",
    "n",
    "h",
    "s",
    "b",
    "makespan_s",
    "throughput_tok_s",
    "bubble",
    "intra_bytes",
    "inter_bytes",
    "peak_mem_bytes",
    "valid",
    "reason",
];

pub const COMPARE_HEADER: [&str; 6] = [
    "strategy",
    "makespan_s",
    "throughput_tok_s",
    "comm_s",
    "comm_nonoverlapped_s",
    "nonoverlap_fraction",
];

/// Render header + rows either as raw comma-separated lines or as an aligned
/// table with a rule under the header.
pub fn render(header: &[&str], rows: &[Vec<String>], format: Format) -> String {
    match format {
        Format::Rows => {
            let mut out = header.join(",");
            out.push('\n');
            for r in rows {
                out.push_str(&r.join(","));
                out.push('\n');
            }
            out
        }
        Format::Table => {
            let cols = header.len();
            let mut width = vec![0usize; cols];
            for (i, h) in header.iter().enumerate() {
                width[i] = h.len();
            }
            for r in rows {
                for (i, cell) in r.iter().enumerate() {
                    width[i] = width[i].max(cell.len());
                }
            }
            let mut out = String::new();
            let pad_row = |out: &mut String, cells: &[String]| {
                for (i, cell) in cells.iter().enumerate() {
                    if i > 0 {
                        out.push_str("  ");
                    }
                    out.push_str(cell);
                    for _ in cell.len()..width[i] {
                        out.push(' ');
                    }
                }
                while out.ends_with(' ') {
                    out.pop();
                }
                out.push('\n');
            };
            let hdr: Vec<String> = header.iter().map(|s| s.to_string()).collect();
            pad_row(&mut out, &hdr);
            let rule_len = width.iter().sum::<usize>() + 2 * (cols - 1);
            out.push_str(&"-".repeat(rule_len));
            out.push('\n');
            for r in rows {
                pad_row(&mut out, r);
            }
            out
        }
    }
}
