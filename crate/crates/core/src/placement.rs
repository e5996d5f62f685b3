//! Placement state, the constraint system, objective evaluation, resource
//! accounting and a brute-force exact solver for small instances.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Nspr, PsnGraph};

/// Default cap on `|servers|^|VNFs|` for the exact solver.
pub const DEFAULT_EXACT_BOUND: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum PlacementError {
    #[error("placement references missing topology elements: {0}")]
    Structural(String),
    #[error("instance too large for exact solve: {assignments} assignments exceed bound {bound}")]
    InstanceTooLarge { assignments: u64, bound: u64 },
    #[error("commit rejected: placement violates constraints: {0:?}")]
    CommitRejected(ConstraintReport),
    #[error("commit rejected: placement is not accepted")]
    CommitUnaccepted,
    #[error("release would exceed capacity (double release?): {0}")]
    ReleaseOverflow(String),
}

/// A mapping of VNFs to servers and VLs to directed physical link walks.
/// `vl_paths[i]` realizes `nspr.vls[i]`; an empty walk means both endpoint
/// VNFs share a server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub nspr_id: u64,
    pub vnf_assignment: Vec<Option<NodeId>>,
    pub vl_paths: Vec<Vec<(NodeId, NodeId)>>,
    pub accepted: bool,
}

impl Placement {
    pub fn empty(nspr: &Nspr) -> Self {
        Placement {
            nspr_id: nspr.id,
            vnf_assignment: vec![None; nspr.vnf_count()],
            vl_paths: vec![Vec::new(); nspr.vls.len()],
            accepted: false,
        }
    }

    pub fn rejection(nspr: &Nspr) -> Self {
        Self::empty(nspr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintId {
    NodeMapping,
    Cpu,
    Ram,
    Bw,
    FlowConservation,
    LinkDirection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub id: ConstraintId,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, id: ConstraintId, detail: String) {
        self.violations.push(Violation { id, detail });
    }
}

/// Verifies a full placement against the substrate: every VNF on exactly
/// one server, per-server CPU/RAM sums within availability, per-link
/// bandwidth sums within availability, every VL walk connected from the
/// source VNF's server to the destination VNF's server, and no physical
/// link used twice by one VL.
///
/// Dangling node/link references are a structural error, not a violation.
pub fn check_constraints(
    psn: &PsnGraph,
    nspr: &Nspr,
    p: &Placement,
) -> Result<ConstraintReport, PlacementError> {
    if p.vnf_assignment.len() != nspr.vnf_count() {
        return Err(PlacementError::Structural(format!(
            "assignment covers {} VNFs, request has {}",
            p.vnf_assignment.len(),
            nspr.vnf_count()
        )));
    }
    if p.vl_paths.len() != nspr.vls.len() {
        return Err(PlacementError::Structural(format!(
            "paths cover {} VLs, request has {}",
            p.vl_paths.len(),
            nspr.vls.len()
        )));
    }
    for (v, a) in p.vnf_assignment.iter().enumerate() {
        if let Some(n) = a {
            if *n >= psn.node_count() {
                return Err(PlacementError::Structural(format!(
                    "VNF {v} assigned to missing node {n}"
                )));
            }
        }
    }
    for (i, path) in p.vl_paths.iter().enumerate() {
        for &(a, b) in path {
            if a >= psn.node_count() || b >= psn.node_count() {
                return Err(PlacementError::Structural(format!(
                    "VL {i} walk references missing node ({a},{b})"
                )));
            }
            if psn.link_between(a, b).is_none() {
                return Err(PlacementError::Structural(format!(
                    "VL {i} walk uses non-existent link ({a},{b})"
                )));
            }
        }
    }

    let mut report = ConstraintReport::default();

    for (v, a) in p.vnf_assignment.iter().enumerate() {
        match a {
            None => report.push(ConstraintId::NodeMapping, format!("VNF {v} is unplaced")),
            Some(n) if !psn.is_server(*n) => report.push(
                ConstraintId::NodeMapping,
                format!("VNF {v} assigned to non-server node {n}"),
            ),
            Some(_) => {}
        }
    }

    // Per-server CPU/RAM sums.
    let mut cpu_use = vec![0u64; psn.node_count()];
    let mut ram_use = vec![0u64; psn.node_count()];
    for (v, a) in p.vnf_assignment.iter().enumerate() {
        if let Some(n) = a {
            cpu_use[*n] += nspr.vnfs[v].req_cpu;
            ram_use[*n] += nspr.vnfs[v].req_ram;
        }
    }
    for n in 0..psn.node_count() {
        if cpu_use[n] > psn.nodes[n].avail_cpu {
            report.push(
                ConstraintId::Cpu,
                format!(
                    "node {n}: demand {} exceeds available CPU {}",
                    cpu_use[n], psn.nodes[n].avail_cpu
                ),
            );
        }
        if ram_use[n] > psn.nodes[n].avail_ram {
            report.push(
                ConstraintId::Ram,
                format!(
                    "node {n}: demand {} exceeds available RAM {}",
                    ram_use[n], psn.nodes[n].avail_ram
                ),
            );
        }
    }

    // Per-link bandwidth sums over all VL walks.
    let mut bw_use = vec![0u64; psn.links.len()];
    for (i, path) in p.vl_paths.iter().enumerate() {
        for &(a, b) in path {
            let l = psn.link_between(a, b).expect("checked above");
            bw_use[l] += nspr.vls[i].req_bw;
        }
    }
    for l in 0..psn.links.len() {
        if bw_use[l] > psn.links[l].avail_bw {
            report.push(
                ConstraintId::Bw,
                format!(
                    "link {l}: demand {} exceeds available bandwidth {}",
                    bw_use[l], psn.links[l].avail_bw
                ),
            );
        }
    }

    // Flow conservation and single-direction use, per VL walk.
    for (i, vl) in nspr.vls.iter().enumerate() {
        let (src, dst) = match (p.vnf_assignment[vl.src], p.vnf_assignment[vl.dst]) {
            (Some(s), Some(d)) => (s, d),
            _ => continue, // already reported as NodeMapping
        };
        let path = &p.vl_paths[i];
        if path.is_empty() {
            if src != dst {
                report.push(
                    ConstraintId::FlowConservation,
                    format!("VL {i}: empty walk but endpoints on distinct servers"),
                );
            }
            continue;
        }
        if path[0].0 != src {
            report.push(
                ConstraintId::FlowConservation,
                format!("VL {i}: walk starts at {} instead of {}", path[0].0, src),
            );
        }
        if path[path.len() - 1].1 != dst {
            report.push(
                ConstraintId::FlowConservation,
                format!(
                    "VL {i}: walk ends at {} instead of {}",
                    path[path.len() - 1].1,
                    dst
                ),
            );
        }
        for w in path.windows(2) {
            if w[0].1 != w[1].0 {
                report.push(
                    ConstraintId::FlowConservation,
                    format!("VL {i}: walk is disconnected at ({},{})", w[0].1, w[1].0),
                );
            }
        }
        let mut used = std::collections::HashSet::new();
        for &(a, b) in path {
            let l = psn.link_between(a, b).expect("checked above");
            if !used.insert(l) {
                report.push(
                    ConstraintId::LinkDirection,
                    format!("VL {i}: link {l} used more than once"),
                );
            }
        }
    }

    Ok(report)
}

/// Minimum-hop path from `src` to `dst` over links with at least `req_bw`
/// available bandwidth. Among equal-hop paths the lexicographically
/// smallest node sequence is returned, which keeps path selection
/// deterministic and cross-checkable. `None` when disconnected under the
/// bandwidth filter; an empty path when `src == dst`.
pub fn shortest_feasible_path(
    psn: &PsnGraph,
    src: NodeId,
    dst: NodeId,
    req_bw: u64,
) -> Option<Vec<(NodeId, NodeId)>> {
    assert!(src < psn.node_count() && dst < psn.node_count());
    if src == dst {
        return Some(Vec::new());
    }
    // BFS from the destination gives hop distances; the walk from the
    // source then greedily picks the smallest next node that moves one
    // step closer.
    let mut dist = vec![usize::MAX; psn.node_count()];
    dist[dst] = 0;
    let mut queue = std::collections::VecDeque::from([dst]);
    while let Some(n) = queue.pop_front() {
        for &(nb, l) in psn.neighbors(n) {
            if psn.links[l].avail_bw >= req_bw && dist[nb] == usize::MAX {
                dist[nb] = dist[n] + 1;
                queue.push_back(nb);
            }
        }
    }
    if dist[src] == usize::MAX {
        return None;
    }
    let mut path = Vec::with_capacity(dist[src]);
    let mut cur = src;
    while cur != dst {
        let next = psn
            .neighbors(cur)
            .iter()
            .filter(|&&(nb, l)| psn.links[l].avail_bw >= req_bw && dist[nb] + 1 == dist[cur])
            .map(|&(nb, _)| nb)
            .min()
            .expect("distance labels guarantee a successor");
        path.push((cur, next));
        cur = next;
    }
    Some(path)
}

/// Subtracts the placement's demands from the substrate availabilities.
/// Rejected when the placement is unaccepted or violates constraints.
pub fn commit(psn: &mut PsnGraph, nspr: &Nspr, p: &Placement) -> Result<(), PlacementError> {
    if !p.accepted {
        return Err(PlacementError::CommitUnaccepted);
    }
    let report = check_constraints(psn, nspr, p)?;
    if !report.ok() {
        return Err(PlacementError::CommitRejected(report));
    }
    for (v, a) in p.vnf_assignment.iter().enumerate() {
        let n = a.expect("checked by constraints");
        psn.nodes[n].avail_cpu -= nspr.vnfs[v].req_cpu;
        psn.nodes[n].avail_ram -= nspr.vnfs[v].req_ram;
    }
    for (i, path) in p.vl_paths.iter().enumerate() {
        for &(a, b) in path {
            let l = psn.link_between(a, b).expect("checked by constraints");
            psn.links[l].avail_bw -= nspr.vls[i].req_bw;
        }
    }
    Ok(())
}

/// Returns the placement's demands to the substrate. The inverse of
/// `commit`: applied to the state `commit` produced, it restores the prior
/// availabilities exactly. A release that would push any availability above
/// capacity is rejected.
pub fn release(psn: &mut PsnGraph, nspr: &Nspr, p: &Placement) -> Result<(), PlacementError> {
    // Dry-run first so a rejected release leaves the graph untouched.
    let mut cpu_back = vec![0u64; psn.node_count()];
    let mut ram_back = vec![0u64; psn.node_count()];
    let mut bw_back = vec![0u64; psn.links.len()];
    for (v, a) in p.vnf_assignment.iter().enumerate() {
        let n = a.ok_or_else(|| PlacementError::Structural(format!("VNF {v} unplaced")))?;
        if n >= psn.node_count() {
            return Err(PlacementError::Structural(format!("missing node {n}")));
        }
        cpu_back[n] += nspr.vnfs[v].req_cpu;
        ram_back[n] += nspr.vnfs[v].req_ram;
    }
    for (i, path) in p.vl_paths.iter().enumerate() {
        for &(a, b) in path {
            let l = psn
                .link_between(a, b)
                .ok_or_else(|| PlacementError::Structural(format!("missing link ({a},{b})")))?;
            bw_back[l] += nspr.vls[i].req_bw;
        }
    }
    for n in 0..psn.node_count() {
        if psn.nodes[n].avail_cpu + cpu_back[n] > psn.nodes[n].max_cpu
            || psn.nodes[n].avail_ram + ram_back[n] > psn.nodes[n].max_ram
        {
            return Err(PlacementError::ReleaseOverflow(format!("node {n}")));
        }
    }
    for l in 0..psn.links.len() {
        if psn.links[l].avail_bw + bw_back[l] > psn.links[l].max_bw {
            return Err(PlacementError::ReleaseOverflow(format!("link {l}")));
        }
    }
    for n in 0..psn.node_count() {
        psn.nodes[n].avail_cpu += cpu_back[n];
        psn.nodes[n].avail_ram += ram_back[n];
    }
    for l in 0..psn.links.len() {
        psn.links[l].avail_bw += bw_back[l];
    }
    Ok(())
}

/// Total bandwidth consumed by the placement: hop count times demand,
/// summed over VLs. Zero iff every walk is empty.
pub fn objective_bandwidth(nspr: &Nspr, p: &Placement) -> u64 {
    p.vl_paths
        .iter()
        .zip(&nspr.vls)
        .map(|(path, vl)| path.len() as u64 * vl.req_bw)
        .sum()
}

/// Load-balance score: sum over placed VNFs of the hosting server's
/// availability ratios, evaluated against the availability snapshot in
/// `psn` (by convention, the state before the placement is committed).
pub fn objective_load_balance(psn: &PsnGraph, p: &Placement) -> f64 {
    p.vnf_assignment
        .iter()
        .flatten()
        .map(|&n| load_balance_term(psn, n))
        .sum()
}

/// The per-server availability-ratio term of the load-balance objective.
pub fn load_balance_term(psn: &PsnGraph, n: NodeId) -> f64 {
    let node = &psn.nodes[n];
    let ratio = |avail: u64, max: u64| if max == 0 { 0.0 } else { avail as f64 / max as f64 };
    ratio(node.avail_cpu, node.max_cpu) + ratio(node.avail_ram, node.max_ram)
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveWeights {
    pub bw: f64,
    pub lb: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights { bw: 1.0, lb: 1.0 }
    }
}

/// Exhaustively enumerates VNF-to-server assignments, mapping each VL by
/// the shortest feasible path with incremental bandwidth accounting.
/// Acceptance dominates; among accepted assignments the weighted
/// bandwidth-minus-load-balance score is minimized, ties going to the
/// lowest-index assignment. `Ok(None)` means no feasible assignment exists.
pub fn exact_solve(
    psn: &PsnGraph,
    nspr: &Nspr,
    weights: ObjectiveWeights,
    max_assignments: u64,
) -> Result<Option<Placement>, PlacementError> {
    let servers = psn.servers();
    let vnf_count = nspr.vnf_count();
    if servers.is_empty() {
        return Ok(None);
    }
    let mut total: u64 = 1;
    for _ in 0..vnf_count {
        total = total.saturating_mul(servers.len() as u64);
        if total > max_assignments {
            return Err(PlacementError::InstanceTooLarge {
                assignments: total,
                bound: max_assignments,
            });
        }
    }

    let mut best: Option<(f64, Placement)> = None;
    let mut choice = vec![0usize; vnf_count];
    loop {
        if let Some(p) = try_assignment(psn, nspr, servers, &choice) {
            let score =
                weights.bw * objective_bandwidth(nspr, &p) as f64 - weights.lb * objective_load_balance(psn, &p);
            let better = match &best {
                None => true,
                Some((s, _)) => score < *s,
            };
            if better {
                best = Some((score, p));
            }
        }
        // Odometer over server choices, most significant digit first so
        // earlier assignments have lower index.
        let mut i = vnf_count;
        loop {
            if i == 0 {
                return Ok(best.map(|(_, p)| p));
            }
            i -= 1;
            choice[i] += 1;
            if choice[i] < servers.len() {
                break;
            }
            choice[i] = 0;
        }
    }
}

fn try_assignment(
    psn: &PsnGraph,
    nspr: &Nspr,
    servers: &[NodeId],
    choice: &[usize],
) -> Option<Placement> {
    // CPU/RAM feasibility of the aggregate assignment.
    let mut cpu_use = vec![0u64; psn.node_count()];
    let mut ram_use = vec![0u64; psn.node_count()];
    for (v, &c) in choice.iter().enumerate() {
        let n = servers[c];
        cpu_use[n] += nspr.vnfs[v].req_cpu;
        ram_use[n] += nspr.vnfs[v].req_ram;
        if cpu_use[n] > psn.nodes[n].avail_cpu || ram_use[n] > psn.nodes[n].avail_ram {
            return None;
        }
    }
    // Map VLs in order on a scratch copy so bandwidth accounting is
    // incremental.
    let mut scratch = psn.clone();
    let mut vl_paths = Vec::with_capacity(nspr.vls.len());
    for vl in &nspr.vls {
        let src = servers[choice[vl.src]];
        let dst = servers[choice[vl.dst]];
        let path = shortest_feasible_path(&scratch, src, dst, vl.req_bw)?;
        for &(a, b) in &path {
            let l = scratch.link_between(a, b).expect("path uses real links");
            scratch.links[l].avail_bw -= vl.req_bw;
        }
        vl_paths.push(path);
    }
    Some(Placement {
        nspr_id: nspr.id,
        vnf_assignment: choice.iter().map(|&c| Some(servers[c])).collect(),
        vl_paths,
        accepted: true,
    })
}
