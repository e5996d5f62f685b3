//! Substrate network and slice request data model, plus the reference
//! instances used throughout the experiments.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;

/// Format tag written into serialized topology files.
pub const PSN_FORMAT_TAG: &str = "psn-v1";

/// Inter-DC distances from the reference deployment. Recorded as metadata
/// only; nothing in the placement pipeline consumes them.
pub const EDC_CDC_DISTANCE_KM: f64 = 100.0;
pub const CDC_CCP_DISTANCE_KM: f64 = 300.0;

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("lifetime must be strictly positive, got {0}")]
    NonPositiveLifetime(f64),
    #[error("unsupported topology format tag {0:?}, expected {PSN_FORMAT_TAG:?}")]
    BadFormat(String),
    #[error("topology invariant violated: {0}")]
    Invariant(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed topology file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Server,
    Switch,
    Router,
    Uap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcKind {
    Ccp,
    Cdc,
    Edc,
}

/// A physical node. Resource amounts are abstract units; non-server nodes
/// carry zero CPU/RAM capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsnNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub max_cpu: u64,
    pub avail_cpu: u64,
    pub max_ram: u64,
    pub avail_ram: u64,
}

/// An undirected physical link, stored once; direction is handled at the
/// path level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PsnLink {
    pub a: NodeId,
    pub b: NodeId,
    pub max_bw: u64,
    pub avail_bw: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DcGroup {
    pub id: usize,
    pub kind: DcKind,
    pub switch: NodeId,
    pub servers: Vec<NodeId>,
}

/// The physical substrate network.
#[derive(Debug, Clone, PartialEq)]
pub struct PsnGraph {
    pub nodes: Vec<PsnNode>,
    pub links: Vec<PsnLink>,
    pub dc_groups: Vec<DcGroup>,
    /// adjacency[n] = (neighbor, link index), derived from `links`.
    adjacency: Vec<Vec<(NodeId, usize)>>,
    servers: Vec<NodeId>,
}

impl PsnGraph {
    pub fn new(
        nodes: Vec<PsnNode>,
        links: Vec<PsnLink>,
        dc_groups: Vec<DcGroup>,
    ) -> Result<Self, TopologyError> {
        let mut g = PsnGraph {
            nodes,
            links,
            dc_groups,
            adjacency: Vec::new(),
            servers: Vec::new(),
        };
        g.rebuild_derived();
        g.validate()?;
        Ok(g)
    }

    fn rebuild_derived(&mut self) {
        self.adjacency = vec![Vec::new(); self.nodes.len()];
        for (idx, l) in self.links.iter().enumerate() {
            if l.a < self.nodes.len() && l.b < self.nodes.len() {
                self.adjacency[l.a].push((l.b, idx));
                self.adjacency[l.b].push((l.a, idx));
            }
        }
        self.servers = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Server)
            .map(|n| n.id)
            .collect();
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(TopologyError::Invariant(format!(
                    "node at position {i} has id {}",
                    n.id
                )));
            }
            if n.avail_cpu > n.max_cpu || n.avail_ram > n.max_ram {
                return Err(TopologyError::Invariant(format!(
                    "node {i}: availability exceeds capacity"
                )));
            }
            if n.kind != NodeKind::Server && (n.max_cpu != 0 || n.max_ram != 0) {
                return Err(TopologyError::Invariant(format!(
                    "non-server node {i} carries CPU/RAM capacity"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for (i, l) in self.links.iter().enumerate() {
            if l.a == l.b {
                return Err(TopologyError::Invariant(format!("link {i} is a self-loop")));
            }
            if l.a >= self.nodes.len() || l.b >= self.nodes.len() {
                return Err(TopologyError::Invariant(format!(
                    "link {i} references a missing node"
                )));
            }
            if l.avail_bw > l.max_bw {
                return Err(TopologyError::Invariant(format!(
                    "link {i}: availability exceeds capacity"
                )));
            }
            let key = (l.a.min(l.b), l.a.max(l.b));
            if !seen.insert(key) {
                return Err(TopologyError::Invariant(format!(
                    "duplicate undirected link {key:?}"
                )));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn servers(&self) -> &[NodeId] {
        &self.servers
    }

    pub fn neighbors(&self, n: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[n]
    }

    /// Index of the undirected link between `a` and `b`, if any.
    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency[a]
            .iter()
            .find(|(nb, _)| *nb == b)
            .map(|(_, idx)| *idx)
    }

    pub fn is_server(&self, n: NodeId) -> bool {
        self.nodes[n].kind == NodeKind::Server
    }

    /// Aggregated available bandwidth over all links incident to `n`.
    pub fn node_avail_bw(&self, n: NodeId) -> u64 {
        self.adjacency[n]
            .iter()
            .map(|&(_, idx)| self.links[idx].avail_bw)
            .sum()
    }

    /// Aggregated maximum bandwidth over all links incident to `n`.
    pub fn node_max_bw(&self, n: NodeId) -> u64 {
        self.adjacency[n]
            .iter()
            .map(|&(_, idx)| self.links[idx].max_bw)
            .sum()
    }

    /// Largest per-node maximum capacities over the whole network, used to
    /// normalize resource features into [0, 1].
    pub fn norm_caps(&self) -> NormCaps {
        NormCaps {
            cpu: self.nodes.iter().map(|n| n.max_cpu).max().unwrap_or(0),
            ram: self.nodes.iter().map(|n| n.max_ram).max().unwrap_or(0),
            bw: (0..self.nodes.len())
                .map(|n| self.node_max_bw(n))
                .max()
                .unwrap_or(0),
        }
    }

    /// Total CPU capacity over all servers (the `C` of the load formula).
    pub fn total_server_cpu(&self) -> u64 {
        self.servers.iter().map(|&s| self.nodes[s].max_cpu).sum()
    }

    pub fn save(&self, path: &Path) -> Result<(), TopologyError> {
        let file = PsnFile {
            format: PSN_FORMAT_TAG.to_string(),
            nodes: self.nodes.clone(),
            links: self.links.clone(),
            dc_groups: self.dc_groups.clone(),
        };
        let mut f = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, &file)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TopologyError> {
        let mut buf = String::new();
        std::fs::File::open(path)?.read_to_string(&mut buf)?;
        let file: PsnFile = serde_json::from_str(&buf)?;
        if file.format != PSN_FORMAT_TAG {
            return Err(TopologyError::BadFormat(file.format));
        }
        PsnGraph::new(file.nodes, file.links, file.dc_groups)
    }
}

#[derive(Serialize, Deserialize)]
struct PsnFile {
    format: String,
    nodes: Vec<PsnNode>,
    links: Vec<PsnLink>,
    dc_groups: Vec<DcGroup>,
}

/// Network-wide maxima used as normalization denominators.
#[derive(Debug, Clone, Copy)]
pub struct NormCaps {
    pub cpu: u64,
    pub ram: u64,
    pub bw: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VnfDemand {
    pub req_cpu: u64,
    pub req_ram: u64,
}

/// A virtual link between VNF indices `src` and `dst` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlDemand {
    pub src: usize,
    pub dst: usize,
    pub req_bw: u64,
}

/// A network slice placement request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nspr {
    pub id: u64,
    pub vnfs: Vec<VnfDemand>,
    pub vls: Vec<VlDemand>,
    pub arrival_time: f64,
    pub lifetime: f64,
}

impl Nspr {
    pub fn vnf_count(&self) -> usize {
        self.vnfs.len()
    }

    /// Sum of bandwidth demands of all VLs incident to VNF `v`.
    pub fn vnf_incident_bw(&self, v: usize) -> u64 {
        self.vls
            .iter()
            .filter(|vl| vl.src == v || vl.dst == v)
            .map(|vl| vl.req_bw)
            .sum()
    }

    /// The chain VL arriving at VNF `v`, i.e. (v-1, v), if present.
    pub fn incoming_vl(&self, v: usize) -> Option<(usize, &VlDemand)> {
        self.vls
            .iter()
            .enumerate()
            .find(|(_, vl)| vl.dst == v)
    }
}

/// eMBB reference demand profile.
pub const EMBB_VNF_COUNT: usize = 5;
pub const EMBB_REQ_CPU: u64 = 25;
pub const EMBB_REQ_RAM: u64 = 150;
pub const EMBB_REQ_BW: u64 = 2;

/// Builds an eMBB slice request: 5 VNFs (25 CPU / 150 RAM each) chained by
/// 4 VLs of 2 bandwidth units.
pub fn generate_embb_nspr(id: u64, arrival_time: f64, lifetime: f64) -> Result<Nspr, TopologyError> {
    if !(lifetime > 0.0) {
        return Err(TopologyError::NonPositiveLifetime(lifetime));
    }
    Ok(generate_chain_nspr(
        id,
        arrival_time,
        lifetime,
        EMBB_VNF_COUNT,
        EMBB_REQ_CPU,
        EMBB_REQ_RAM,
        EMBB_REQ_BW,
    ))
}

/// Builds a chain-shaped NSPR with uniform demands. Used for the eMBB
/// profile and for the timing sweeps over VNF counts.
pub fn generate_chain_nspr(
    id: u64,
    arrival_time: f64,
    lifetime: f64,
    vnf_count: usize,
    req_cpu: u64,
    req_ram: u64,
    req_bw: u64,
) -> Nspr {
    let vnfs = vec![VnfDemand { req_cpu, req_ram }; vnf_count];
    let vls = (1..vnf_count)
        .map(|v| VlDemand {
            src: v - 1,
            dst: v,
            req_bw,
        })
        .collect();
    Nspr {
        id,
        vnfs,
        vls,
        arrival_time,
        lifetime,
    }
}

/// Reference substrate: 1 CCP (16 servers), 5 CDCs (10 servers each),
/// 15 EDCs (4 servers each). Every server has 50 CPU / 300 RAM. Each DC is
/// one switch with a star of server links at the DC's intra-DC bandwidth
/// (100 for CCP/CDC, 10 for EDC). CDCs form a full mesh, each CDC connects
/// to the CCP and to its 3 EDCs; one UAP hangs off each EDC switch.
pub fn build_reference_psn() -> PsnGraph {
    build_scaled_psn(16, 5, 10, 3, 4)
}

/// The reference substrate layout at a configurable scale: one CCP,
/// `cdc_count` CDCs in a full mesh (each linked to the CCP), and
/// `edc_per_cdc` EDCs (plus one UAP each) hanging off every CDC. Used for
/// the execution-time sweeps over substrate size.
pub fn build_scaled_psn(
    ccp_servers: usize,
    cdc_count: usize,
    cdc_servers: usize,
    edc_per_cdc: usize,
    edc_servers: usize,
) -> PsnGraph {
    const SERVER_CPU: u64 = 50;
    const SERVER_RAM: u64 = 300;
    const HIGH_BW: u64 = 100;
    const LOW_BW: u64 = 10;

    let mut nodes: Vec<PsnNode> = Vec::new();
    let mut links: Vec<PsnLink> = Vec::new();
    let mut dc_groups: Vec<DcGroup> = Vec::new();

    let add_node = |nodes: &mut Vec<PsnNode>, kind: NodeKind, cpu: u64, ram: u64| -> NodeId {
        let id = nodes.len();
        nodes.push(PsnNode {
            id,
            kind,
            max_cpu: cpu,
            avail_cpu: cpu,
            max_ram: ram,
            avail_ram: ram,
        });
        id
    };
    let add_link = |links: &mut Vec<PsnLink>, a: NodeId, b: NodeId, bw: u64| {
        links.push(PsnLink {
            a,
            b,
            max_bw: bw,
            avail_bw: bw,
        });
    };

    let build_dc = |nodes: &mut Vec<PsnNode>,
                        links: &mut Vec<PsnLink>,
                        dc_groups: &mut Vec<DcGroup>,
                        kind: DcKind,
                        server_count: usize,
                        intra_bw: u64|
     -> NodeId {
        let switch = add_node(nodes, NodeKind::Switch, 0, 0);
        let mut servers = Vec::with_capacity(server_count);
        for _ in 0..server_count {
            let s = add_node(nodes, NodeKind::Server, SERVER_CPU, SERVER_RAM);
            add_link(links, switch, s, intra_bw);
            servers.push(s);
        }
        dc_groups.push(DcGroup {
            id: dc_groups.len(),
            kind,
            switch,
            servers,
        });
        switch
    };

    let ccp = build_dc(
        &mut nodes,
        &mut links,
        &mut dc_groups,
        DcKind::Ccp,
        ccp_servers,
        HIGH_BW,
    );
    let cdcs: Vec<NodeId> = (0..cdc_count)
        .map(|_| {
            build_dc(
                &mut nodes,
                &mut links,
                &mut dc_groups,
                DcKind::Cdc,
                cdc_servers,
                HIGH_BW,
            )
        })
        .collect();
    for &cdc in &cdcs {
        add_link(&mut links, cdc, ccp, HIGH_BW);
    }
    for i in 0..cdcs.len() {
        for j in (i + 1)..cdcs.len() {
            add_link(&mut links, cdcs[i], cdcs[j], HIGH_BW);
        }
    }
    for &cdc in &cdcs {
        for _ in 0..edc_per_cdc {
            let edc = build_dc(
                &mut nodes,
                &mut links,
                &mut dc_groups,
                DcKind::Edc,
                edc_servers,
                LOW_BW,
            );
            add_link(&mut links, cdc, edc, LOW_BW);
            let uap = add_node(&mut nodes, NodeKind::Uap, 0, 0);
            add_link(&mut links, edc, uap, LOW_BW);
        }
    }

    PsnGraph::new(nodes, links, dc_groups).expect("generated topology is valid")
}

/// Per-node substrate features and the request features for the VNF being
/// placed. Resource features are divided by the network-wide maximum of the
/// corresponding capacity; the placement counter and the remaining-VNF
/// count are passed through unscaled.
///
/// `chi[n]` counts the VNFs of the current NSPR already placed on node `n`.
/// Returns (per-node features, |N| x 4) and the 4 request features.
pub fn normalized_features(
    psn: &PsnGraph,
    nspr: &Nspr,
    vnf_index: usize,
    chi: &[u32],
) -> (Array2<f64>, [f64; 4]) {
    assert!(vnf_index < nspr.vnf_count(), "vnf index out of range");
    assert_eq!(chi.len(), psn.node_count());
    let caps = psn.norm_caps();
    let norm = |v: u64, m: u64| if m == 0 { 0.0 } else { v as f64 / m as f64 };

    let mut feats = Array2::zeros((psn.node_count(), 4));
    for n in 0..psn.node_count() {
        feats[(n, 0)] = norm(psn.nodes[n].avail_cpu, caps.cpu);
        feats[(n, 1)] = norm(psn.nodes[n].avail_ram, caps.ram);
        feats[(n, 2)] = norm(psn.node_avail_bw(n), caps.bw);
        feats[(n, 3)] = chi[n] as f64;
    }
    let vnf = &nspr.vnfs[vnf_index];
    let remaining = (nspr.vnf_count() - vnf_index) as f64;
    let nspr_feats = [
        norm(vnf.req_cpu, caps.cpu),
        norm(vnf.req_ram, caps.ram),
        norm(nspr.vnf_incident_bw(vnf_index), caps.bw),
        remaining,
    ];
    (feats, nspr_feats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_psn_matches_table_counts() {
        let psn = build_reference_psn();
        assert_eq!(psn.servers().len(), 126);
        // 21 switches + 15 UAPs on top of the servers.
        assert_eq!(psn.node_count(), 162);
        assert_eq!(psn.dc_groups.len(), 21);
        assert_eq!(
            psn.dc_groups.iter().filter(|d| d.kind == DcKind::Ccp).count(),
            1
        );
        assert_eq!(
            psn.dc_groups.iter().filter(|d| d.kind == DcKind::Cdc).count(),
            5
        );
        assert_eq!(
            psn.dc_groups.iter().filter(|d| d.kind == DcKind::Edc).count(),
            15
        );
        for dc in &psn.dc_groups {
            let expect = match dc.kind {
                DcKind::Ccp => 16,
                DcKind::Cdc => 10,
                DcKind::Edc => 4,
            };
            assert_eq!(dc.servers.len(), expect);
        }
        for &s in psn.servers() {
            assert_eq!(psn.nodes[s].max_cpu, 50);
            assert_eq!(psn.nodes[s].max_ram, 300);
        }
        // 126 star links + 5 CCP-CDC + 10 CDC mesh + 15 CDC-EDC + 15 UAP.
        assert_eq!(psn.links.len(), 171);
    }

    #[test]
    fn reference_psn_link_capacities() {
        let psn = build_reference_psn();
        let ccp = &psn.dc_groups[0];
        let cdc = psn.dc_groups.iter().find(|d| d.kind == DcKind::Cdc).unwrap();
        let edc = psn.dc_groups.iter().find(|d| d.kind == DcKind::Edc).unwrap();
        // Intra-DC stars.
        for &s in &ccp.servers {
            let l = psn.link_between(ccp.switch, s).unwrap();
            assert_eq!(psn.links[l].max_bw, 100);
        }
        for &s in &edc.servers {
            let l = psn.link_between(edc.switch, s).unwrap();
            assert_eq!(psn.links[l].max_bw, 10);
        }
        // EDC uplink to its CDC is 10, CDC uplink to CCP is 100.
        let cdc_of_edc = psn
            .dc_groups
            .iter()
            .filter(|d| d.kind == DcKind::Cdc)
            .find(|d| psn.link_between(d.switch, edc.switch).is_some())
            .unwrap();
        let up = psn.link_between(cdc_of_edc.switch, edc.switch).unwrap();
        assert_eq!(psn.links[up].max_bw, 10);
        let core = psn.link_between(cdc.switch, ccp.switch).unwrap();
        assert_eq!(psn.links[core].max_bw, 100);
        // CDCs pairwise interconnected.
        let cdcs: Vec<_> = psn
            .dc_groups
            .iter()
            .filter(|d| d.kind == DcKind::Cdc)
            .collect();
        for i in 0..cdcs.len() {
            for j in (i + 1)..cdcs.len() {
                assert!(psn.link_between(cdcs[i].switch, cdcs[j].switch).is_some());
            }
        }
    }

    #[test]
    fn reference_psn_is_deterministic() {
        assert_eq!(build_reference_psn(), build_reference_psn());
    }

    #[test]
    fn embb_nspr_profile() {
        let nspr = generate_embb_nspr(1, 0.0, 100.0).unwrap();
        assert_eq!(nspr.vnf_count(), 5);
        assert_eq!(nspr.vls.len(), 4);
        for v in &nspr.vnfs {
            assert_eq!(v.req_cpu, 25);
            assert_eq!(v.req_ram, 150);
        }
        for vl in &nspr.vls {
            assert_eq!(vl.req_bw, 2);
        }
        assert!(generate_embb_nspr(1, 0.0, 0.0).is_err());
        assert!(generate_embb_nspr(1, 0.0, -3.0).is_err());
    }

    #[test]
    fn normalized_feature_extremes() {
        let psn = build_reference_psn();
        let nspr = generate_embb_nspr(1, 0.0, 100.0).unwrap();
        let chi = vec![0u32; psn.node_count()];
        let (feats, nspr_feats) = normalized_features(&psn, &nspr, 0, &chi);
        let s = psn.servers()[0];
        // Fully free server whose capacity is the network maximum.
        assert_eq!(feats[(s, 0)], 1.0);
        assert_eq!(feats[(s, 1)], 1.0);
        // m_v for the first VNF of a 5-VNF request.
        assert_eq!(nspr_feats[3], 5.0);

        let mut drained = psn.clone();
        drained.nodes[s].avail_cpu = 0;
        let (feats, _) = normalized_features(&drained, &nspr, 0, &chi);
        assert_eq!(feats[(s, 0)], 0.0);
    }

    #[test]
    fn normalized_features_stay_in_unit_interval() {
        let psn = build_reference_psn();
        let nspr = generate_embb_nspr(1, 0.0, 100.0).unwrap();
        let chi = vec![0u32; psn.node_count()];
        for v in 0..nspr.vnf_count() {
            let (feats, nspr_feats) = normalized_features(&psn, &nspr, v, &chi);
            for x in feats.iter() {
                assert!((0.0..=1.0).contains(x) || *x == 0.0);
            }
            for x in &nspr_feats[..3] {
                assert!((0.0..=1.0).contains(x));
            }
            assert_eq!(nspr_feats[3], (5 - v) as f64);
        }
    }

    #[test]
    fn topology_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("psn.json");
        let psn = build_reference_psn();
        psn.save(&path).unwrap();
        let loaded = PsnGraph::load(&path).unwrap();
        assert_eq!(psn, loaded);

        // Tampered format tag is rejected.
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace(PSN_FORMAT_TAG, "psn-v999");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            PsnGraph::load(&path),
            Err(TopologyError::BadFormat(_))
        ));
    }
}
