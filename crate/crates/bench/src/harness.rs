//! Trial execution and metric aggregation.
//!
//! Trials are distributed over a rayon worker pool; results are gathered and
//! sorted by (seed, policy) before any file is written, so output bytes do
//! not depend on scheduling. All statistics are population moments (divide
//! by n), computed in sorted order.

use std::fs;
use std::path::Path;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;

use nbv_grasp_core::error::Error as CoreError;
use nbv_grasp_core::policy::{
    oblique_initial_camera, run_policy, run_policy_traced, PolicyConfig, PolicyKind, TrialResult,
    TrialStatus,
};
use nbv_grasp_core::scene::{generate_packed_scene, select_target, Scene};

use crate::config::ExperimentConfig;

/// One line of the summary CSV. Column order is part of the file format.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct MetricsRow {
    pub policy: String,
    pub sr: f64,
    pub fr: f64,
    pub ar: f64,
    pub views_mean: f64,
    pub views_std: f64,
    pub search_s_mean: f64,
    pub search_s_std: f64,
    pub total_s_mean: f64,
    pub total_s_std: f64,
    pub n: usize,
}

/// One line of the per-trial CSV.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TrialRow {
    pub seed: u64,
    pub policy: String,
    pub status: String,
    pub views: u32,
    pub search_s: f64,
    pub total_s: f64,
}

/// Seeds dropped before any trial ran, with the reason.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SkipRow {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub summary: Vec<MetricsRow>,
    pub trials: Vec<TrialRow>,
    pub skipped: Vec<SkipRow>,
}

fn status_name(s: TrialStatus) -> &'static str {
    match s {
        TrialStatus::Succeeded => "succeeded",
        TrialStatus::FailedExecution => "failed_execution",
        TrialStatus::Aborted => "aborted",
    }
}

/// Generate the seed's scene and pick its target, or explain why it must be
/// skipped.
fn prepare_scene(seed: u64, config: &ExperimentConfig) -> Result<Scene, String> {
    let workspace = nbv_grasp_core::scene::default_workspace();
    let mut scene = generate_packed_scene(seed, config.n_objects, workspace)
        .map_err(|e| format!("generation failed: {e}"))?;
    let camera = oblique_initial_camera(&scene.workspace);
    match select_target(&scene, &camera, &config.sim.sensor) {
        Ok(id) => {
            scene.target_id = Some(id);
            Ok(scene)
        }
        Err(CoreError::NoVisibleObject) => Err("no object visible from initial view".into()),
        Err(e) => Err(format!("target selection failed: {e}")),
    }
}

/// Run every requested policy on every seed. Each trial starts from the same
/// fixed initial camera and its own fresh map.
pub fn run_bench(config: &ExperimentConfig) -> anyhow::Result<BenchOutput> {
    config.validate()?;
    let seeds: Vec<u64> = config.seeds.clone().collect();
    let per_seed: Vec<Result<Vec<TrialResult>, SkipRow>> = seeds
        .par_iter()
        .map(|&seed| {
            let scene = prepare_scene(seed, config).map_err(|reason| SkipRow { seed, reason })?;
            let camera = oblique_initial_camera(&scene.workspace);
            let mut results = Vec::with_capacity(config.policies.len());
            for &kind in &config.policies {
                let policy = PolicyConfig {
                    policy_kind: kind,
                    ..config.policy
                };
                let result = run_policy(&scene, &policy, &config.sim, camera)
                    .map_err(|e| SkipRow {
                        seed,
                        reason: format!("{kind}: {e}"),
                    })?;
                results.push(result);
            }
            Ok(results)
        })
        .collect();

    let mut trials: Vec<TrialResult> = Vec::new();
    let mut skipped: Vec<SkipRow> = Vec::new();
    for entry in per_seed {
        match entry {
            Ok(rs) => trials.extend(rs),
            Err(skip) => skipped.push(skip),
        }
    }
    trials.sort_by(|a, b| {
        (a.seed, a.policy_kind.name()).cmp(&(b.seed, b.policy_kind.name()))
    });
    skipped.sort_by_key(|s| s.seed);

    let summary = config
        .policies
        .iter()
        .map(|&kind| aggregate(kind, &trials))
        .collect();
    let trial_rows = trials
        .iter()
        .map(|t| TrialRow {
            seed: t.seed,
            policy: t.policy_kind.name().to_string(),
            status: status_name(t.status).to_string(),
            views: t.views,
            search_s: t.search_time,
            total_s: t.total_time,
        })
        .collect();

    Ok(BenchOutput {
        summary,
        trials: trial_rows,
        skipped,
    })
}

fn mean_std(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}

/// Collapse one policy's trials into a metrics row. SR, FR and AR partition
/// the trials, so they sum to one.
pub fn aggregate(kind: PolicyKind, trials: &[TrialResult]) -> MetricsRow {
    let mine: Vec<&TrialResult> = trials
        .iter()
        .filter(|t| t.policy_kind == kind)
        .collect();
    let n = mine.len();
    let count = |status: TrialStatus| mine.iter().filter(|t| t.status == status).count();
    let ratio = |c: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
    let (views_mean, views_std) = mean_std(mine.iter().map(|t| t.views as f64), n);
    let (search_mean, search_std) = mean_std(mine.iter().map(|t| t.search_time), n);
    let (total_mean, total_std) = mean_std(mine.iter().map(|t| t.total_time), n);
    MetricsRow {
        policy: kind.name().to_string(),
        sr: ratio(count(TrialStatus::Succeeded)),
        fr: ratio(count(TrialStatus::FailedExecution)),
        ar: ratio(count(TrialStatus::Aborted)),
        views_mean,
        views_std,
        search_s_mean: search_mean,
        search_s_std: search_std,
        total_s_mean: total_mean,
        total_s_std: total_std,
        n,
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Write `summary.csv`, `trials.csv` and `skipped.csv` into the output
/// directory.
pub fn write_bench_output(out_dir: &Path, output: &BenchOutput) -> anyhow::Result<()> {
    fs::create_dir_all(out_dir)?;
    write_csv(&out_dir.join("summary.csv"), &output.summary)?;
    write_csv(&out_dir.join("trials.csv"), &output.trials)?;
    write_csv(&out_dir.join("skipped.csv"), &output.skipped)?;
    Ok(())
}

/// One line of the window-sweep CSV.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SweepRow {
    pub t: u32,
    pub sr: f64,
    pub search_s_mean: f64,
}

/// Sweep the stability window size with the closed-loop policy.
pub fn sweep_window(config: &ExperimentConfig, t_values: &[u32]) -> anyhow::Result<Vec<SweepRow>> {
    anyhow::ensure!(!t_values.is_empty(), "no window sizes given");
    for &t in t_values {
        anyhow::ensure!(
            t >= 1 && t <= config.policy.max_ticks,
            "window {t} outside 1..=max_ticks"
        );
    }
    let mut rows = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let cfg = ExperimentConfig {
            policies: vec![PolicyKind::NbvGrasp],
            policy: PolicyConfig {
                window: t as usize,
                policy_kind: PolicyKind::NbvGrasp,
                ..config.policy
            },
            ..config.clone()
        };
        let output = run_bench(&cfg)?;
        let row = &output.summary[0];
        rows.push(SweepRow {
            t,
            sr: row.sr,
            search_s_mean: row.search_s_mean,
        });
    }
    Ok(rows)
}

/// One line of the timing-profile CSV. Milliseconds, wall clock.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ProfileRow {
    pub stage: String,
    pub mean_ms: f64,
    pub std_ms: f64,
}

/// Time the stages of one policy update over the seed set (closed-loop
/// policy only). Wall-clock and machine-dependent.
pub fn profile_tick(config: &ExperimentConfig) -> anyhow::Result<Vec<ProfileRow>> {
    let seeds: Vec<u64> = config.seeds.clone().collect();
    let timings: Vec<[f64; 4]> = seeds
        .par_iter()
        .flat_map_iter(|&seed| {
            let Ok(scene) = prepare_scene(seed, config) else {
                return Vec::new().into_iter();
            };
            let camera = oblique_initial_camera(&scene.workspace);
            let policy = PolicyConfig {
                policy_kind: PolicyKind::NbvGrasp,
                ..config.policy
            };
            match run_policy_traced(&scene, &policy, &config.sim, camera) {
                Ok(trace) => trace
                    .timings
                    .iter()
                    .map(|t| [t.integrate_s, t.grasp_s, t.ig_s, t.other_s])
                    .collect::<Vec<_>>()
                    .into_iter(),
                Err(_) => Vec::new().into_iter(),
            }
        })
        .collect();
    anyhow::ensure!(!timings.is_empty(), "no ticks recorded");
    let stages = ["integrate", "grasp", "ig", "other"];
    Ok(stages
        .iter()
        .enumerate()
        .map(|(i, stage)| {
            let n = timings.len();
            let (mean, std) = mean_std(timings.iter().map(|t| t[i] * 1e3), n);
            ProfileRow {
                stage: stage.to_string(),
                mean_ms: mean,
                std_ms: std,
            }
        })
        .collect())
}

/// Load a scenario file, run one policy on it, and write the per-tick log
/// (JSON lines) next to the returned result.
pub fn run_scenario(
    scenario_path: &Path,
    kind: PolicyKind,
    policy: &PolicyConfig,
    sim: &nbv_grasp_core::policy::SimParams,
    out_dir: &Path,
) -> anyhow::Result<TrialResult> {
    let scene = Scene::load(scenario_path)?;
    anyhow::ensure!(
        scene.target_id.is_some(),
        "scenario {} has no target",
        scenario_path.display()
    );
    let camera = oblique_initial_camera(&scene.workspace);
    let cfg = PolicyConfig {
        policy_kind: kind,
        ..*policy
    };
    let trace = run_policy_traced(&scene, &cfg, sim, camera)?;
    fs::create_dir_all(out_dir)?;
    let stem = scenario_path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "scenario".into());
    let log_path = out_dir.join(format!("{stem}_{}.jsonl", kind.name()));
    let mut lines = String::new();
    for tick in &trace.ticks {
        lines.push_str(&serde_json::to_string(tick)?);
        lines.push('\n');
    }
    fs::write(&log_path, lines)?;
    Ok(trace.result)
}
