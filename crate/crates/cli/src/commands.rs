//! The experiment commands: training runs, the heuristic baseline,
//! checkpoint validation, and the execution-time sweep. Each command
//! returns its summary JSON and the list of artifacts it wrote; the
//! caller wraps that in a run manifest.

use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use nsp_core::neural::{load_params, save_params, ActorCriticParams, NetShape};
use nsp_core::sim::{
    run_simulation, validation_run, wall_clock_probe, AgentKind, SimConfig, SimMetrics, SliceClass,
};
use nsp_core::topology::{build_reference_psn, build_scaled_psn, PsnGraph};

use crate::config::Resolved;
use crate::manifest::{RunManifest, SCHEMA_CUMULATIVE, SCHEMA_PHASE, SCHEMA_STEADY, SCHEMA_TIMING};

/// Phases of the heuristic baseline discarded as warm-up when reporting
/// steady state.
const WARMUP_PHASES: usize = 10;

/// Offset so network-initialization draws are decoupled from the event
/// stream seed.
const INIT_SEED_SALT: u64 = 0x9e3779b97f4a7c15;

pub type CmdResult = Result<Value, String>;

fn load_topology(cfg: &Resolved) -> Result<PsnGraph, String> {
    match &cfg.file.sim.topology {
        Some(path) => PsnGraph::load(path).map_err(|e| format!("{}: {e}", path.display())),
        None => Ok(build_reference_psn()),
    }
}

fn write_phase_csv(path: &PathBuf, metrics: &SimMetrics) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(["phase", "acceptance_ratio"])
        .map_err(|e| e.to_string())?;
    for (i, r) in metrics.phase_ratios.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string()])
            .map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn write_cumulative_csv(path: &PathBuf, metrics: &SimMetrics) -> Result<(), String> {
    let mut w = csv::Writer::from_path(path).map_err(|e| e.to_string())?;
    w.write_record(["arrival", "cumulative_ratio"])
        .map_err(|e| e.to_string())?;
    for (i, r) in metrics.cumulative.iter().enumerate() {
        w.write_record([(i + 1).to_string(), r.to_string()])
            .map_err(|e| e.to_string())?;
    }
    w.flush().map_err(|e| e.to_string())
}

fn init_params(psn: &PsnGraph, seed: u64) -> ActorCriticParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(INIT_SEED_SALT));
    ActorCriticParams::init(NetShape::reference(psn.node_count()), &mut rng)
}

/// Trains the configured agent and writes the per-phase acceptance CSV,
/// the final checkpoint, and the manifest summary.
pub fn cmd_train(cfg: &Resolved, manifest: &mut RunManifest) -> CmdResult {
    let psn = load_topology(cfg)?;
    let sim = cfg.sim_config().map_err(|e| e.to_string())?;
    manifest.seeds.push(sim.seed);

    let label = sim.agent.label();
    let mut params;
    let metrics = match sim.agent {
        AgentKind::Heu => run_simulation(&sim, &psn, None)?,
        _ => {
            params = init_params(&psn, sim.seed);
            let m = run_simulation(&sim, &psn, Some(&mut params))?;
            let ckpt = cfg
                .checkpoint
                .clone()
                .unwrap_or_else(|| cfg.out_dir.join(format!("{label}-seed{}.ckpt", sim.seed)));
            save_params(&ckpt, &params).map_err(|e| e.to_string())?;
            manifest.record(ckpt, None);
            m
        }
    };

    let csv_path = cfg
        .out_dir
        .join(format!("{label}-seed{}-phases.csv", sim.seed));
    write_phase_csv(&csv_path, &metrics)?;
    manifest.record(csv_path, Some(SCHEMA_PHASE));

    Ok(json!({
        "agent": label,
        "phases": metrics.phase_ratios.len(),
        "arrivals": metrics.arrivals,
        "accepts": metrics.accepts,
        "final_phase_ratio": metrics.phase_ratios.last(),
        "final_cumulative": metrics.final_cumulative(),
    }))
}

/// Runs the training-free heuristic across the requested loads and reports
/// warm-up-discarded steady-state acceptance per load.
pub fn cmd_baseline_heu(cfg: &Resolved, rhos: &[f64], manifest: &mut RunManifest) -> CmdResult {
    let psn = load_topology(cfg)?;
    let base = cfg.sim_config().map_err(|e| e.to_string())?;
    manifest.seeds.push(base.seed);

    let mut rows: Vec<(f64, f64)> = Vec::new();
    for &rho in rhos {
        let sim = SimConfig {
            rho,
            agent: AgentKind::Heu,
            train: false,
            ..base.clone()
        };
        sim.validate()?;
        let metrics = run_simulation(&sim, &psn, None)?;
        let csv_path = cfg
            .out_dir
            .join(format!("heu-rho{rho}-seed{}-phases.csv", sim.seed));
        write_phase_csv(&csv_path, &metrics)?;
        manifest.record(csv_path, Some(SCHEMA_PHASE));
        rows.push((rho, metrics.steady_state(WARMUP_PHASES)));
    }

    let summary_path = cfg.out_dir.join(format!("heu-steady-seed{}.csv", base.seed));
    {
        let mut w = csv::Writer::from_path(&summary_path).map_err(|e| e.to_string())?;
        w.write_record(["rho", "steady_state_ratio"])
            .map_err(|e| e.to_string())?;
        for (rho, s) in &rows {
            w.write_record([rho.to_string(), s.to_string()])
                .map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    manifest.record(summary_path, Some(SCHEMA_STEADY));

    Ok(json!({
        "warmup_phases": WARMUP_PHASES,
        "steady_state": rows
            .iter()
            .map(|(rho, s)| json!({ "rho": rho, "ratio": s }))
            .collect::<Vec<_>>(),
    }))
}

/// Evaluates a frozen checkpoint: argmax actions, no updates, cumulative
/// acceptance series over the configured arrivals.
pub fn cmd_validate(cfg: &Resolved, manifest: &mut RunManifest) -> CmdResult {
    let ckpt_path = cfg
        .checkpoint
        .as_ref()
        .ok_or("validate needs --checkpoint")?;
    let params = load_params(ckpt_path).map_err(|e| format!("{}: {e}", ckpt_path.display()))?;
    let psn = load_topology(cfg)?;
    let sim = cfg.sim_config().map_err(|e| e.to_string())?;
    manifest.seeds.push(sim.seed);

    let metrics = validation_run(&params, &psn, &sim)?;
    let csv_path = cfg.out_dir.join(format!(
        "validate-{}-rho{}-seed{}.csv",
        sim.agent.label(),
        sim.rho,
        sim.seed
    ));
    write_cumulative_csv(&csv_path, &metrics)?;
    manifest.record(csv_path, Some(SCHEMA_CUMULATIVE));

    Ok(json!({
        "checkpoint": ckpt_path,
        "arrivals": metrics.arrivals,
        "final_cumulative": metrics.final_cumulative(),
        "heu_at_eval": sim.heu_at_eval,
    }))
}

/// Mean per-request placement time for each agent over sweeps of request
/// size (VNFs per chain) and substrate size (CDC count at the reference
/// layout). One CSV row per (agent, sweep point).
pub fn cmd_timing(cfg: &Resolved, probe_requests: usize, manifest: &mut RunManifest) -> CmdResult {
    let base = cfg.sim_config().map_err(|e| e.to_string())?;
    manifest.seeds.push(base.seed);
    let training = base.effective_training();
    let agents = [
        AgentKind::Heu,
        AgentKind::Drl,
        AgentKind::HaDrl {
            beta: cfg.file.sim.beta,
        },
    ];

    // Request-size sweep at the full reference substrate, then substrate
    // sweep (scaling CDC count, each bringing its EDCs) at the reference
    // request size.
    let vnf_counts = [2usize, 3, 5, 8, 12];
    let cdc_counts = [1usize, 2, 3, 4, 5];

    let mut rows: Vec<(String, usize, usize, f64)> = Vec::new();
    let probe =
        |psn: &PsnGraph, vnf_count: usize, rows: &mut Vec<(String, usize, usize, f64)>| {
            let class = SliceClass {
                vnf_count,
                ..SliceClass::embb()
            };
            let nsprs: Vec<_> = (0..probe_requests)
                .map(|i| class.make_nspr(i as u64, 0.0, 100.0))
                .collect();
            let params = init_params(psn, base.seed);
            for agent in &agents {
                let p = match agent {
                    AgentKind::Heu => None,
                    _ => Some(&params),
                };
                let mean = wall_clock_probe(agent, psn, p, &nsprs, &base.p2c, &training, base.seed);
                rows.push((agent.label(), psn.servers().len(), vnf_count, mean));
            }
        };

    let reference = build_reference_psn();
    for &v in &vnf_counts {
        probe(&reference, v, &mut rows);
    }
    for &c in &cdc_counts {
        let psn = build_scaled_psn(16, c, 10, 3, 4);
        probe(&psn, SliceClass::embb().vnf_count, &mut rows);
    }

    let csv_path = cfg.out_dir.join("timing.csv");
    {
        let mut w = csv::Writer::from_path(&csv_path).map_err(|e| e.to_string())?;
        w.write_record(["agent", "servers", "vnf_count", "mean_seconds"])
            .map_err(|e| e.to_string())?;
        for (agent, servers, vnfs, mean) in &rows {
            w.write_record([
                agent.clone(),
                servers.to_string(),
                vnfs.to_string(),
                mean.to_string(),
            ])
            .map_err(|e| e.to_string())?;
        }
        w.flush().map_err(|e| e.to_string())?;
    }
    manifest.record(csv_path, Some(SCHEMA_TIMING));

    let max = rows.iter().map(|r| r.3).fold(0.0f64, f64::max);
    Ok(json!({
        "probe_requests": probe_requests,
        "rows": rows.len(),
        "max_mean_seconds": max,
    }))
}
