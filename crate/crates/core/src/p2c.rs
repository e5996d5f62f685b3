//! Power-of-Two-Choices greedy placement: the standalone baseline and the
//! suggestion source for the heuristically assisted agent.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::placement::{self, Placement};
use crate::topology::{NodeId, Nspr, PsnGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2cConfig {
    /// Servers drawn per attempt; the classic scheme uses 2.
    pub candidate_count: usize,
    /// Weight on the incoming-VL hop count.
    pub w_bw: f64,
    /// Weight on the post-placement load-balance headroom.
    pub w_lb: f64,
    /// Weight on the congestion of the incoming-VL path: how close its
    /// bottleneck link would be to exhaustion after mapping. Steers chains
    /// away from nearly-full aggregation links, where the next VL would
    /// have nowhere to go.
    pub w_congestion: f64,
    /// Fresh candidate pairs drawn before giving up on a VNF whose VL
    /// cannot be routed from any candidate.
    pub retry_budget: usize,
}

impl Default for P2cConfig {
    fn default() -> Self {
        P2cConfig {
            candidate_count: 2,
            w_bw: 1.0,
            w_lb: 1.0,
            w_congestion: 4.0,
            retry_budget: 3,
        }
    }
}

impl P2cConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.candidate_count < 2 {
            return Err("candidate_count must be at least 2".into());
        }
        if self.w_bw < 0.0 || self.w_lb < 0.0 || (self.w_bw == 0.0 && self.w_lb == 0.0) {
            return Err("score weights must be non-negative and not both zero".into());
        }
        Ok(())
    }
}

/// One step of the heuristic: the chosen server plus the walk realizing
/// the VNF's incoming VL (empty for the first VNF or co-location).
#[derive(Debug, Clone, PartialEq)]
pub struct VnfChoice {
    pub server: NodeId,
    pub incoming_path: Vec<(NodeId, NodeId)>,
}

/// Draws candidate servers among those with enough CPU/RAM for the VNF,
/// scores each by hop count of the incoming VL against post-placement
/// load-balance headroom, and keeps the better one. `psn` must already
/// reflect the partial placement's resource commitments.
pub fn p2c_place_vnf<R: Rng>(
    psn: &PsnGraph,
    nspr: &Nspr,
    vnf_index: usize,
    partial: &Placement,
    cfg: &P2cConfig,
    rng: &mut R,
) -> Option<VnfChoice> {
    let vnf = &nspr.vnfs[vnf_index];
    let feasible: Vec<NodeId> = psn
        .servers()
        .iter()
        .copied()
        .filter(|&s| {
            psn.nodes[s].avail_cpu >= vnf.req_cpu && psn.nodes[s].avail_ram >= vnf.req_ram
        })
        .collect();
    if feasible.is_empty() {
        return None;
    }

    let incoming = nspr.incoming_vl(vnf_index).map(|(_, vl)| {
        let prev = partial.vnf_assignment[vl.src].expect("earlier VNFs are placed");
        (prev, vl.req_bw)
    });

    for _ in 0..=cfg.retry_budget {
        let mut candidates: Vec<NodeId> = feasible
            .choose_multiple(rng, cfg.candidate_count.min(feasible.len()))
            .copied()
            .collect();
        // The sampled pair alone almost never contains the previous
        // VNF's host, so chains would always stretch across the network.
        // Keeping the host in the running (when it can still fit the
        // VNF) lets the score weigh co-location against spreading.
        if let Some((prev, _)) = incoming {
            if !candidates.contains(&prev) && feasible.contains(&prev) {
                candidates.push(prev);
            }
        }
        let mut best: Option<(f64, VnfChoice)> = None;
        for &s in &candidates {
            let path = match incoming {
                None => Vec::new(),
                Some((prev, req_bw)) => {
                    match placement::shortest_feasible_path(psn, prev, s, req_bw) {
                        Some(p) => p,
                        None => continue, // VL unroutable from this candidate
                    }
                }
            };
            let headroom = load_balance_term_after(psn, s, vnf.req_cpu, vnf.req_ram);
            let congestion = match incoming {
                Some((_, req_bw)) if !path.is_empty() => path_congestion(psn, &path, req_bw),
                _ => 0.0,
            };
            let score = cfg.w_bw * path.len() as f64 + cfg.w_congestion * congestion
                - cfg.w_lb * headroom;
            let better = match &best {
                None => true,
                Some((b, c)) => score < *b || (score == *b && s < c.server),
            };
            if better {
                best = Some((
                    score,
                    VnfChoice {
                        server: s,
                        incoming_path: path,
                    },
                ));
            }
        }
        if let Some((_, choice)) = best {
            return Some(choice);
        }
        // Both candidates were unroutable; redraw.
    }
    None
}

/// How exhausted the path's tightest link would be once the VL is mapped:
/// 1 minus the bottleneck's post-mapping availability ratio, in [0, 1].
fn path_congestion(psn: &PsnGraph, path: &[(NodeId, NodeId)], req_bw: u64) -> f64 {
    let bottleneck = path
        .iter()
        .map(|&(a, b)| {
            let l = &psn.links[psn.link_between(a, b).expect("path uses real links")];
            (l.avail_bw - req_bw) as f64 / l.max_bw as f64
        })
        .fold(f64::INFINITY, f64::min);
    1.0 - bottleneck
}

/// Load-balance headroom of server `s` as if the VNF were already placed.
fn load_balance_term_after(psn: &PsnGraph, s: NodeId, req_cpu: u64, req_ram: u64) -> f64 {
    let node = &psn.nodes[s];
    let ratio = |avail: u64, req: u64, max: u64| {
        if max == 0 {
            0.0
        } else {
            (avail - req) as f64 / max as f64
        }
    };
    ratio(node.avail_cpu, req_cpu, node.max_cpu) + ratio(node.avail_ram, req_ram, node.max_ram)
}

/// Places a whole request VNF by VNF on a scratch copy of the substrate.
/// Returns an accepted placement, or `None` when any VNF fails; the caller
/// owns committing the result.
pub fn p2c_place_nspr<R: Rng>(
    psn: &PsnGraph,
    nspr: &Nspr,
    cfg: &P2cConfig,
    rng: &mut R,
) -> Option<Placement> {
    let mut scratch = psn.clone();
    let mut p = Placement::empty(nspr);
    for v in 0..nspr.vnf_count() {
        let choice = p2c_place_vnf(&scratch, nspr, v, &p, cfg, rng)?;
        apply_choice(&mut scratch, nspr, v, &choice);
        p.vnf_assignment[v] = Some(choice.server);
        if let Some((vl_idx, _)) = nspr.incoming_vl(v) {
            p.vl_paths[vl_idx] = choice.incoming_path;
        }
    }
    p.accepted = true;
    debug_assert!(placement::check_constraints(psn, nspr, &p)
        .map(|r| r.ok())
        .unwrap_or(false));
    Some(p)
}

/// Commits one VNF (and its incoming VL walk) to a scratch substrate.
pub fn apply_choice(psn: &mut PsnGraph, nspr: &Nspr, vnf_index: usize, choice: &VnfChoice) {
    let vnf = &nspr.vnfs[vnf_index];
    psn.nodes[choice.server].avail_cpu -= vnf.req_cpu;
    psn.nodes[choice.server].avail_ram -= vnf.req_ram;
    if let Some((_, vl)) = nspr.incoming_vl(vnf_index) {
        for &(a, b) in &choice.incoming_path {
            let l = psn.link_between(a, b).expect("path uses real links");
            psn.links[l].avail_bw -= vl.req_bw;
        }
    }
}

/// The suggestion entry point used by the assisted agent: identical
/// candidate and scoring logic, no commitment. `None` means no suggestion.
pub fn heu_suggest<R: Rng>(
    psn: &PsnGraph,
    nspr: &Nspr,
    vnf_index: usize,
    partial: &Placement,
    cfg: &P2cConfig,
    rng: &mut R,
) -> Option<NodeId> {
    p2c_place_vnf(psn, nspr, vnf_index, partial, cfg, rng).map(|c| c.server)
}
