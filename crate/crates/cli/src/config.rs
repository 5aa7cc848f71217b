//! Run configuration file: TOML with named sections and scalar keys.
//!
//! Sections: [topology], [cost], [train] always; [run] for the run
//! subcommand; [sweep] axes for sweep; [compare] strategy list for compare.
//! Cost models come either from `preset = "..."` or from explicit alpha/beta
//! keys, never both.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tawsim_core::{ClusterTopology, CollectiveShape, CommCostModel, Strategy, TrainConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub topology: TopologySec,
    pub cost: CostSec,
    pub train: TrainSec,
    pub run: Option<RunSec>,
    pub sweep: Option<SweepSec>,
    pub compare: Option<CompareSec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySec {
    pub nodes: u32,
    pub devices_per_node: u32,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSec {
    pub preset: Option<String>,
    pub intra_alpha_s: Option<f64>,
    pub intra_beta_s_per_byte: Option<f64>,
    pub inter_alpha_s: Option<f64>,
    pub inter_beta_s_per_byte: Option<f64>,
    /// "flat" or "linear"; defaults to flat
    pub broadcast: Option<String>,
    pub reduce: Option<String>,
    pub compute_flops_per_s: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSec {
    pub p: u32,
    pub d: u32,
    pub l: u32,
    pub h: u32,
    pub s: u32,
    pub b: u32,
    pub n: u32,
    pub bytes_param: Option<u32>,
    pub bytes_grad: Option<u32>,
    pub bytes_act: Option<u32>,
    pub opt_state_multiplier: Option<u32>,
    pub vocab: Option<u32>,
    pub activation_checkpointing: Option<bool>,
    pub iterations: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSec {
    pub strategy: String,
    /// Print the per-step holder/receiver narration (grouped strategies).
    pub show_steps: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSec {
    pub strategies: Vec<String>,
    pub p: Vec<u32>,
    /// Group counts to try per p; defaults to the derived node count.
    pub d: Option<Vec<u32>>,
    pub h: Option<Vec<u32>>,
    /// Explicit microbatch totals, or scale with p via n_per_p.
    pub n: Option<Vec<u32>>,
    pub n_per_p: Option<u32>,
    /// Explicit layer counts, or scale with p via l_per_p.
    pub l: Option<Vec<u32>>,
    pub l_per_p: Option<u32>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSec {
    pub strategies: Vec<String>,
}

// ---------------------------------------------------------------------------

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("config error: cannot read {}", path.display()))?;
        let cfg: FileConfig = toml::from_str(&text)
            .with_context(|| format!("config error: cannot parse {}", path.display()))?;
        Ok(cfg)
    }

    pub fn topology(&self) -> Result<ClusterTopology> {
        Ok(ClusterTopology::new(self.topology.nodes, self.topology.devices_per_node)?)
    }

    pub fn cost_model(&self) -> Result<CommCostModel> {
        let c = &self.cost;
        let explicit = [
            c.intra_alpha_s,
            c.intra_beta_s_per_byte,
            c.inter_alpha_s,
            c.inter_beta_s_per_byte,
        ];
        match (&c.preset, explicit.iter().any(|v| v.is_some())) {
            (Some(name), false) => match name.as_str() {
                "a800-10gbe" => Ok(CommCostModel::preset_a800_10gbe()),
                other => bail!("config error: unknown cost preset {other:?}"),
            },
            (Some(_), true) => {
                bail!("config error: give either a cost preset or explicit alpha/beta, not both")
            }
            (None, _) => {
                let all = [
                    ("intra_alpha_s", c.intra_alpha_s),
                    ("intra_beta_s_per_byte", c.intra_beta_s_per_byte),
                    ("inter_alpha_s", c.inter_alpha_s),
                    ("inter_beta_s_per_byte", c.inter_beta_s_per_byte),
                ];
                for (k, v) in all {
                    if v.is_none() {
                        bail!("config error: cost section missing {k}");
                    }
                }
                Ok(CommCostModel::new(
                    c.intra_alpha_s.unwrap(),
                    c.intra_beta_s_per_byte.unwrap(),
                    c.inter_alpha_s.unwrap(),
                    c.inter_beta_s_per_byte.unwrap(),
                    shape(c.broadcast.as_deref())?,
                    shape(c.reduce.as_deref())?,
                )?)
            }
        }
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let mut cfg = TrainConfig::new(t.p, t.d, t.l, t.h, t.s, t.b, t.n);
        if let Some(v) = t.bytes_param {
            cfg.bytes_param = v;
        }
        if let Some(v) = t.bytes_grad {
            cfg.bytes_grad = v;
        }
        if let Some(v) = t.bytes_act {
            cfg.bytes_act = v;
        }
        if let Some(v) = t.opt_state_multiplier {
            cfg.opt_state_multiplier = v;
        }
        if let Some(v) = t.vocab {
            cfg.vocab = v;
        }
        if let Some(v) = t.activation_checkpointing {
            cfg.activation_checkpointing = v;
        }
        if let Some(v) = t.iterations {
            cfg.iterations = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run_section(&self) -> Result<&RunSec> {
        self.run
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("config error: missing [run] section"))
    }

    pub fn sweep_section(&self) -> Result<&SweepSec> {
        self.sweep
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("config error: missing [sweep] section"))
    }

    pub fn compare_section(&self) -> Result<&CompareSec> {
        self.compare
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("config error: missing [compare] section"))
    }
}

fn shape(name: Option<&str>) -> Result<CollectiveShape> {
    match name {
        None | Some("flat") => Ok(CollectiveShape::Flat),
        Some("linear") => Ok(CollectiveShape::LinearInFanout),
        Some(other) => bail!("config error: unknown collective shape {other:?}"),
    }
}

pub fn parse_strategy(name: &str) -> Result<Strategy> {
    Ok(Strategy::from_name(name)?)
}
