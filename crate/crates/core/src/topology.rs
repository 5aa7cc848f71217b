//! Physical cluster model: nodes, devices, link classes, and the alpha-beta
//! communication cost model distinguishing intra-node from inter-node links.

use crate::error::{Error, Result};

pub type DeviceId = u32;
pub type NodeId = u32;

// --- topology ---

/// Devices are laid out node-major: device d lives on node d / devices_per_node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterTopology {
    pub num_nodes: u32,
    pub devices_per_node: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LinkClass {
    /// a == b: local data movement, free by convention.
    SelfLink,
    IntraNode,
    InterNode,
}

impl LinkClass {
    pub fn name(self) -> &'static str {
        match self {
            LinkClass::SelfLink => "self",
            LinkClass::IntraNode => "intra",
            LinkClass::InterNode => "inter",
        }
    }
}

impl ClusterTopology {
    pub fn new(num_nodes: u32, devices_per_node: u32) -> Result<Self> {
        if num_nodes == 0 || devices_per_node == 0 {
            return Err(Error::config(format!(
                "topology must have at least one node and one device per node, got {num_nodes} x {devices_per_node}"
            )));
        }
        Ok(ClusterTopology { num_nodes, devices_per_node })
    }

    pub fn num_devices(&self) -> u32 {
        self.num_nodes * self.devices_per_node
    }

    pub fn node_of(&self, d: DeviceId) -> Result<NodeId> {
        if d >= self.num_devices() {
            return Err(Error::config(format!(
                "device id {d} out of range for {} devices",
                self.num_devices()
            )));
        }
        Ok(d / self.devices_per_node)
    }

    pub fn link_class(&self, a: DeviceId, b: DeviceId) -> Result<LinkClass> {
        let na = self.node_of(a)?;
        let nb = self.node_of(b)?;
        Ok(if a == b {
            LinkClass::SelfLink
        } else if na == nb {
            LinkClass::IntraNode
        } else {
            LinkClass::InterNode
        })
    }

    /// Worst (slowest) pairwise link class among a participant set; used to
    /// time collectives that span node boundaries.
    pub fn worst_class(&self, devices: &[DeviceId]) -> Result<LinkClass> {
        let mut worst = LinkClass::SelfLink;
        for (i, &a) in devices.iter().enumerate() {
            for &b in &devices[i + 1..] {
                worst = worst.max(self.link_class(a, b)?);
            }
        }
        Ok(worst)
    }
}

// --- cost model ---

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CollectiveShape {
    /// Switch-like full-bandwidth collective: alpha + bytes * beta.
    Flat,
    /// PCIe-like serialized fanout: alpha + fanout * bytes * beta.
    LinearInFanout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommCostModel {
    pub intra_alpha: f64,
    pub intra_beta: f64,
    pub inter_alpha: f64,
    pub inter_beta: f64,
    pub broadcast_model: CollectiveShape,
    pub reduce_model: CollectiveShape,
}

impl CommCostModel {
    pub fn new(
        intra_alpha: f64,
        intra_beta: f64,
        inter_alpha: f64,
        inter_beta: f64,
        broadcast_model: CollectiveShape,
        reduce_model: CollectiveShape,
    ) -> Result<Self> {
        if !(intra_alpha >= 0.0) || !(inter_alpha >= 0.0) {
            return Err(Error::config("cost model alphas must be >= 0"));
        }
        if !(intra_beta > 0.0) || !(inter_beta > 0.0) {
            return Err(Error::config("cost model betas must be > 0"));
        }
        Ok(CommCostModel {
            intra_alpha,
            intra_beta,
            inter_alpha,
            inter_beta,
            broadcast_model,
            reduce_model,
        })
    }

    /// Calibration preset: NVLink-class intra-node fabric plus 10GbE between
    /// nodes. intra 200 GB/s / 5 us, inter 1.25 GB/s / 30 us, flat collectives.
    pub fn preset_a800_10gbe() -> Self {
        CommCostModel {
            intra_alpha: 5e-6,
            intra_beta: 1.0 / 200e9,
            inter_alpha: 30e-6,
            inter_beta: 1.0 / 1.25e9,
            broadcast_model: CollectiveShape::Flat,
            reduce_model: CollectiveShape::Flat,
        }
    }

    /// Hierarchical-bandwidth sanity warnings; violations are accepted.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        if self.inter_beta < self.intra_beta {
            w.push(format!(
                "inter_beta ({}) is faster than intra_beta ({}); hierarchical bandwidth assumption violated",
                self.inter_beta, self.intra_beta
            ));
        }
        w
    }

    fn alpha(&self, cls: LinkClass) -> f64 {
        match cls {
            LinkClass::SelfLink => 0.0,
            LinkClass::IntraNode => self.intra_alpha,
            LinkClass::InterNode => self.inter_alpha,
        }
    }

    fn beta(&self, cls: LinkClass) -> f64 {
        match cls {
            LinkClass::SelfLink => 0.0,
            LinkClass::IntraNode => self.intra_beta,
            LinkClass::InterNode => self.inter_beta,
        }
    }

    /// Point-to-point time: alpha(cls) + bytes * beta(cls). SelfLink is free.
    pub fn p2p_time(&self, cls: LinkClass, bytes: u64) -> f64 {
        if cls == LinkClass::SelfLink {
            return 0.0;
        }
        self.alpha(cls) + bytes as f64 * self.beta(cls)
    }

    pub fn broadcast_time(&self, cls: LinkClass, fanout: u32, bytes: u64) -> Result<f64> {
        self.collective_time(self.broadcast_model, cls, fanout, bytes)
    }

    pub fn reduce_time(&self, cls: LinkClass, fanin: u32, bytes: u64) -> Result<f64> {
        self.collective_time(self.reduce_model, cls, fanin, bytes)
    }

    fn collective_time(
        &self,
        shape: CollectiveShape,
        cls: LinkClass,
        fanout: u32,
        bytes: u64,
    ) -> Result<f64> {
        if fanout == 0 {
            return Err(Error::config("collective fanout/fanin must be >= 1"));
        }
        if cls == LinkClass::SelfLink {
            return Ok(0.0);
        }
        let byte_term = match shape {
            CollectiveShape::Flat => bytes as f64 * self.beta(cls),
            CollectiveShape::LinearInFanout => fanout as f64 * bytes as f64 * self.beta(cls),
        };
        Ok(self.alpha(cls) + byte_term)
    }

    /// Ring collective (all-gather / reduce-scatter): P-1 sequential hops of
    /// bytes/P each at the given class.
    pub fn ring_time(&self, cls: LinkClass, participants: u32, bytes: u64) -> f64 {
        if participants <= 1 || cls == LinkClass::SelfLink {
            return 0.0;
        }
        let slice = bytes as f64 / participants as f64;
        (participants - 1) as f64 * (self.alpha(cls) + slice * self.beta(cls))
    }
}

// --- tests ---
