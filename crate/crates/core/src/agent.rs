//! Sequential placement agent: state encoding, action selection, the
//! reward scheme, the heuristic policy modifier, and per-episode
//! advantage actor-critic updates.

use ndarray::Array1;
use rand::Rng;

use crate::neural::{
    argmax, backward_actor, backward_critic, forward_actor, forward_critic, softmax, Cache,
    ActorCriticParams, NetParams, NetShape, NormAdj, Tensor2,
};
use crate::p2c::{self, P2cConfig};
use crate::placement::{self, Placement};
use crate::topology::{normalized_features, NodeId, Nspr, PsnGraph};

/// Acceptance-reward magnitude: +100 on a successful action, -100 on a
/// failed one.
pub const ACCEPT_REWARD: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Sample the acting policy.
    Train,
    /// Argmax of the acting policy, lowest index on ties.
    Eval,
}

/// One decision point: the substrate and request features fed to both
/// networks, plus the index of the VNF being placed.
#[derive(Debug, Clone)]
pub struct AgentState {
    pub node_feats: Tensor2,
    pub nspr_feats: Array1<f64>,
    pub vnf_index: usize,
}

pub fn encode_state(psn: &PsnGraph, nspr: &Nspr, vnf_index: usize, chi: &[u32]) -> AgentState {
    let (node_feats, nspr_feats) = normalized_features(psn, nspr, vnf_index, chi);
    AgentState {
        node_feats,
        nspr_feats: Array1::from_vec(nspr_feats.to_vec()),
        vnf_index,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    /// Actor learning rate.
    pub alpha: f64,
    /// Critic learning rate.
    pub alpha_critic: f64,
    /// Entropy weight.
    pub phi: f64,
    /// Discount; the update rule is used exactly as printed with 1.0.
    pub gamma: f64,
    /// Heuristic-modifier exponent.
    pub beta: f64,
    /// Heuristic-modifier gain; 0 disables the modifier.
    pub xi: f64,
    /// Heuristic-modifier offset.
    pub eta: f64,
    /// Target interval for normalized terminal rewards.
    pub reward_min: f64,
    pub reward_max: f64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 1e-4,
            alpha_critic: 2.5e-3,
            phi: 0.5,
            gamma: 1.0,
            beta: 1.0,
            xi: 1.0,
            eta: 0.0,
            reward_min: 0.0,
            reward_max: 10.0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha_critic > 0.0) {
            return Err("learning rates must be positive".into());
        }
        if self.phi < 0.0 {
            return Err("entropy weight must be nonnegative".into());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err("discount must lie in (0, 1]".into());
        }
        if self.xi < 0.0 {
            return Err("xi must be nonnegative".into());
        }
        if self.beta <= 0.0 {
            return Err("beta must be positive".into());
        }
        if self.eta < 0.0 {
            return Err("eta must be nonnegative".into());
        }
        if self.reward_max <= self.reward_min {
            return Err("empty reward interval".into());
        }
        Ok(())
    }
}

/// One step of an episode with everything the update rule needs cached.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: AgentState,
    pub action: usize,
    pub reward: f64,
    pub next_state: Option<AgentState>,
    pub terminal: bool,
    /// Probability of the taken action under the acting (possibly
    /// modified) policy.
    pub pi_a: f64,
    /// Critic value of `state`; 0 in evaluation mode.
    pub value: f64,
    /// Full acting policy.
    pub policy: Array1<f64>,
    /// Raw pre-modifier actor scores.
    pub z: Array1<f64>,
    /// Heuristic suggestion in force at this step, if any.
    pub a_star: Option<usize>,
    pub actor_cache: Cache,
    pub critic_cache: Option<Cache>,
}

pub fn select_action<R: Rng>(policy: &Array1<f64>, mode: Mode, rng: &mut R) -> usize {
    match mode {
        Mode::Eval => argmax(policy),
        Mode::Train => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in policy.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            policy.len() - 1
        }
    }
}

/// Intermediary rewards for one successful action: acceptance, resource
/// (path-length), and load-balance terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReward {
    pub delta_a: f64,
    pub delta_c: f64,
    pub delta_b: f64,
}

impl StepReward {
    pub fn product(&self) -> f64 {
        self.delta_a * self.delta_c * self.delta_b
    }
}

/// Rewards for a successful placement of `vnf_index` on `server` over
/// `path` (the incoming virtual link's walk; empty when co-located or for
/// the first VNF). `psn` must be the substrate *before* this VNF's commit:
/// the load-balance term snapshots the hosting server's availability at
/// decision time.
pub fn step_reward(psn: &PsnGraph, vnf_index: usize, path: &[(NodeId, NodeId)], server: NodeId) -> StepReward {
    let delta_c = if vnf_index == 0 || path.is_empty() {
        1.0
    } else {
        1.0 / path.len() as f64
    };
    let node = &psn.nodes[server];
    let delta_b = node.avail_cpu as f64 / node.max_cpu as f64
        + node.avail_ram as f64 / node.max_ram as f64;
    StepReward {
        delta_a: ACCEPT_REWARD,
        delta_c,
        delta_b,
    }
}

/// The reward returned to the agent at step `t`: zero mid-episode, the
/// normalized sum of the per-step products on terminal success, -100 on
/// failure. Normalization divides by the analytic per-episode maximum
/// (100 * 2 * 1 per step) and scales into the configured interval top.
pub fn global_reward(
    step_products: &[f64],
    terminal: bool,
    success: bool,
    vnf_count: usize,
    cfg: &TrainingConfig,
) -> f64 {
    if !success {
        return -ACCEPT_REWARD;
    }
    if !terminal {
        return 0.0;
    }
    let sum: f64 = step_products.iter().sum();
    let max = ACCEPT_REWARD * 2.0 * vnf_count as f64;
    sum / max * cfg.reward_max
}

/// H over actions: the gap between the best raw score and the suggested
/// action's score, plus `eta`, on the suggested action only.
pub fn heuristic_function(z: &Array1<f64>, a_star: Option<usize>, eta: f64) -> Array1<f64> {
    let mut h = Array1::zeros(z.len());
    if let Some(a) = a_star {
        let best = z[argmax(z)];
        h[a] = best - z[a] + eta;
    }
    h
}

/// Elementwise `Z + xi * H^beta`; softmax of the result is the acting
/// policy while the heuristic is active.
pub fn apply_heuristic_modifier(z: &Array1<f64>, h: &Array1<f64>, xi: f64, beta: f64) -> Array1<f64> {
    if xi == 0.0 {
        return z.clone();
    }
    let mut out = z.clone();
    for (o, &hv) in out.iter_mut().zip(h.iter()) {
        if hv != 0.0 {
            *o += xi * hv.powf(beta);
        }
    }
    out
}

/// Chain rule through the modifier: given dL/dZ' returns dL/dZ. The only
/// non-identity terms come from the suggested entry, whose boost depends
/// on Z at the raw argmax and at the suggestion itself.
pub fn modifier_backward(
    z: &Array1<f64>,
    a_star: Option<usize>,
    eta: f64,
    xi: f64,
    beta: f64,
    dz_mod: &Array1<f64>,
) -> Array1<f64> {
    let mut dz = dz_mod.clone();
    let a = match a_star {
        Some(a) if xi != 0.0 => a,
        _ => return dz,
    };
    let abar = argmax(z);
    let h = z[abar] - z[a] + eta;
    if h <= 0.0 {
        // H is clamped at zero scale; the boost is flat here.
        return dz;
    }
    let coeff = xi * beta * h.powf(beta - 1.0) * dz_mod[a];
    dz[abar] += coeff;
    dz[a] -= coeff;
    dz
}

/// The outcome of one placement episode.
#[derive(Debug)]
pub struct EpisodeResult {
    pub transitions: Vec<Transition>,
    pub placement: Placement,
}

/// Plays one NSPR to acceptance or first failure. Works on an internal
/// copy of the substrate, so the caller's graph is untouched; committing
/// an accepted placement is the caller's responsibility.
pub fn run_episode<R: Rng>(
    psn: &PsnGraph,
    nspr: &Nspr,
    params: &ActorCriticParams,
    adj: &NormAdj,
    cfg: &TrainingConfig,
    mode: Mode,
    heuristic: Option<&P2cConfig>,
    rng: &mut R,
) -> EpisodeResult {
    let shape = &params.shape;
    let mut scratch = psn.clone();
    let mut chi = vec![0u32; psn.node_count()];
    let mut p = Placement::empty(nspr);
    let mut products: Vec<f64> = Vec::with_capacity(nspr.vnf_count());
    let mut transitions: Vec<Transition> = Vec::new();
    let mut success = true;

    for v in 0..nspr.vnf_count() {
        let state = encode_state(&scratch, nspr, v, &chi);
        let actor_cache = forward_actor(&params.actor, shape, adj, &state.node_feats, &state.nspr_feats);
        let z = actor_cache.z_values().clone();
        let a_star = heuristic
            .and_then(|hcfg| p2c::heu_suggest(&scratch, nspr, v, &p, hcfg, rng));
        let h = heuristic_function(&z, a_star, cfg.eta);
        let z_mod = apply_heuristic_modifier(&z, &h, cfg.xi, cfg.beta);
        let policy = softmax(&z_mod);
        let action = select_action(&policy, mode, rng);

        let (critic_cache, value) = match mode {
            Mode::Train => {
                let c = forward_critic(&params.critic, shape, adj, &state.node_feats, &state.nspr_feats);
                let v = c.value;
                (Some(c), v)
            }
            Mode::Eval => (None, 0.0),
        };

        // Incremental feasibility: server capacity for the VNF plus a
        // bandwidth-feasible walk for its incoming virtual link.
        let vnf = &nspr.vnfs[v];
        let capacity_ok = scratch.is_server(action)
            && scratch.nodes[action].avail_cpu >= vnf.req_cpu
            && scratch.nodes[action].avail_ram >= vnf.req_ram;
        let path = if !capacity_ok {
            None
        } else {
            match nspr.incoming_vl(v) {
                None => Some(Vec::new()),
                Some((_, vl)) => {
                    let prev = p.vnf_assignment[vl.src].expect("earlier VNFs are placed");
                    if prev == action {
                        Some(Vec::new())
                    } else {
                        placement::shortest_feasible_path(&scratch, prev, action, vl.req_bw)
                    }
                }
            }
        };

        let step_success = path.is_some();
        let terminal = !step_success || v == nspr.vnf_count() - 1;
        let reward;
        if let Some(path) = path {
            let sr = step_reward(&scratch, v, &path, action);
            products.push(sr.product());
            let choice = p2c::VnfChoice {
                server: action,
                incoming_path: path.clone(),
            };
            p2c::apply_choice(&mut scratch, nspr, v, &choice);
            p.vnf_assignment[v] = Some(action);
            if let Some((vl_idx, _)) = nspr.incoming_vl(v) {
                p.vl_paths[vl_idx] = path;
            }
            chi[action] += 1;
            reward = global_reward(&products, terminal, true, nspr.vnf_count(), cfg);
        } else {
            success = false;
            reward = global_reward(&products, true, false, nspr.vnf_count(), cfg);
        }

        transitions.push(Transition {
            state,
            action,
            reward,
            next_state: None,
            terminal,
            pi_a: policy[action],
            value,
            policy,
            z,
            a_star,
            actor_cache,
            critic_cache,
        });
        if !step_success {
            break;
        }
    }

    // Link successor states now that the trajectory is fixed.
    for t in 1..transitions.len() {
        let s = transitions[t].state.clone();
        transitions[t - 1].next_state = Some(s);
    }

    let placement = if success {
        p.accepted = true;
        debug_assert!(placement::check_constraints(psn, nspr, &p)
            .map(|r| r.ok())
            .unwrap_or(false));
        p
    } else {
        Placement::rejection(nspr)
    };
    EpisodeResult {
        transitions,
        placement,
    }
}

/// TD advantages `r_{t+1} + gamma * v(s_{t+1}) - v(s_t)` with terminal
/// successor value zero.
pub fn advantages(episode: &[Transition], gamma: f64) -> Vec<f64> {
    (0..episode.len())
        .map(|t| {
            let next_v = if episode[t].terminal {
                0.0
            } else {
                episode[t + 1].value
            };
            episode[t].reward + gamma * next_v - episode[t].value
        })
        .collect()
}

/// Accumulated gradients of the actor objective and the critic loss for
/// one episode, plus the scalar values of both.
pub struct EpisodeGrads {
    pub actor: NetParams,
    pub critic: NetParams,
    pub actor_objective: f64,
    pub critic_loss: f64,
}

/// Gradients of the episode's actor objective
/// `sum_t [A_t log pi'(a_t) + phi * entropy_t]` (to be ascended) and of the
/// critic's squared-TD loss `sum_t A_t^2` (to be descended, differentiating
/// through both value terms).
pub fn episode_gradients(
    episode: &[Transition],
    params: &ActorCriticParams,
    adj: &NormAdj,
    cfg: &TrainingConfig,
) -> EpisodeGrads {
    assert!(!episode.is_empty(), "empty episode");
    let shape = &params.shape;
    let adv = advantages(episode, cfg.gamma);
    let mut actor_g = params.actor.zeros_like();
    let mut critic_g = params.critic.zeros_like();
    let mut actor_obj = 0.0;
    let mut critic_loss = 0.0;

    for (t, tr) in episode.iter().enumerate() {
        let pi = &tr.policy;
        let entropy: f64 = -pi
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>();
        actor_obj += adv[t] * tr.pi_a.ln() + cfg.phi * entropy;

        // d/dZ' of [A log pi'(a) + phi * entropy] under pi' = softmax(Z').
        let mut dz_mod = Array1::zeros(pi.len());
        for (b, d) in dz_mod.iter_mut().enumerate() {
            let indicator = if b == tr.action { 1.0 } else { 0.0 };
            // -p ln p tends to 0 as p -> 0; guard against 0 * -inf.
            let dentropy = if pi[b] > 0.0 {
                -pi[b] * (pi[b].ln() + entropy)
            } else {
                0.0
            };
            *d = adv[t] * (indicator - pi[b]) + cfg.phi * dentropy;
        }
        let dz = modifier_backward(&tr.z, tr.a_star, cfg.eta, cfg.xi, cfg.beta, &dz_mod);
        backward_actor(&params.actor, shape, adj, &tr.actor_cache, &dz, &mut actor_g);
    }

    // Critic: every value estimate appears in its own TD error and, with
    // gamma weighting, in the previous step's.
    for (t, tr) in episode.iter().enumerate() {
        critic_loss += adv[t] * adv[t];
        let mut seed = -2.0 * adv[t];
        if t > 0 {
            seed += 2.0 * cfg.gamma * adv[t - 1];
        }
        let cache = tr.critic_cache.as_ref().expect("training episode");
        backward_critic(&params.critic, shape, adj, cache, seed, &mut critic_g);
    }

    EpisodeGrads {
        actor: actor_g,
        critic: critic_g,
        actor_objective: actor_obj,
        critic_loss,
    }
}

/// Loss statistics reported by one update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub actor_objective: f64,
    pub critic_loss: f64,
    pub mean_advantage: f64,
}

/// One end-of-episode update: ascend the actor by alpha/T, descend the
/// critic by alpha'/T, where T is the episode length.
pub fn a3c_update(
    episode: &[Transition],
    params: &mut ActorCriticParams,
    adj: &NormAdj,
    cfg: &TrainingConfig,
) -> UpdateStats {
    let grads = episode_gradients(episode, params, adj, cfg);
    let t = episode.len() as f64;
    params.actor.axpy(cfg.alpha / t, &grads.actor);
    params.critic.axpy(-cfg.alpha_critic / t, &grads.critic);
    let adv = advantages(episode, cfg.gamma);
    UpdateStats {
        actor_objective: grads.actor_objective,
        critic_loss: grads.critic_loss,
        mean_advantage: adv.iter().sum::<f64>() / t,
    }
}

/// Recomputes the actor objective from recorded states and fixed
/// advantages under arbitrary actor parameters. Companion to
/// `episode_gradients` for derivative checks.
pub fn actor_objective(
    episode: &[Transition],
    advantages: &[f64],
    actor: &NetParams,
    shape: &NetShape,
    adj: &NormAdj,
    cfg: &TrainingConfig,
) -> f64 {
    let mut obj = 0.0;
    for (t, tr) in episode.iter().enumerate() {
        let cache = forward_actor(actor, shape, adj, &tr.state.node_feats, &tr.state.nspr_feats);
        let z = cache.z_values();
        let h = heuristic_function(z, tr.a_star, cfg.eta);
        let z_mod = apply_heuristic_modifier(z, &h, cfg.xi, cfg.beta);
        let pi = softmax(&z_mod);
        let entropy: f64 = -pi
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>();
        obj += advantages[t] * pi[tr.action].ln() + cfg.phi * entropy;
    }
    obj
}

/// Recomputes the squared-TD loss from recorded states and rewards under
/// arbitrary critic parameters.
pub fn critic_loss(
    episode: &[Transition],
    critic: &NetParams,
    shape: &NetShape,
    adj: &NormAdj,
    cfg: &TrainingConfig,
) -> f64 {
    let values: Vec<f64> = episode
        .iter()
        .map(|tr| forward_critic(critic, shape, adj, &tr.state.node_feats, &tr.state.nspr_feats).value)
        .collect();
    let mut loss = 0.0;
    for (t, tr) in episode.iter().enumerate() {
        let next_v = if tr.terminal { 0.0 } else { values[t + 1] };
        let e = tr.reward + cfg.gamma * next_v - values[t];
        loss += e * e;
    }
    loss
}

/// Human-readable episode trace for debugging.
pub fn trace(episode: &[Transition]) -> String {
    use std::fmt::Write;
    let mut out = String::new();
    for (t, tr) in episode.iter().enumerate() {
        let _ = writeln!(
            out,
            "t={t} vnf={} action={} pi={:.6} value={:.6} reward={:.4} terminal={} a_star={:?}",
            tr.state.vnf_index, tr.action, tr.pi_a, tr.value, tr.reward, tr.terminal, tr.a_star
        );
    }
    out
}
