//! Closed-loop exploration and grasping, plus the fixed-camera baselines.
//!
//! Every tick the controller fuses a fresh depth image, re-detects grasps,
//! re-scores the candidate views, and then decides: execute the best grasp,
//! abort, or keep moving toward the most informative view. Three stopping
//! criteria apply in priority order:
//!
//! 1. stability: the best grasp's quality trace stayed high over a full
//!    window of recent ticks,
//! 2. exhaustion: the best achievable information gain fell below a
//!    threshold (execute what we have, or abort with nothing),
//! 3. budget: the tick budget ran out.
//!
//! Time is simulated: the clock advances by exactly one tick period per
//! update, so trials are bit-reproducible regardless of host speed.

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::geom::{Aabb, Pose};
use crate::grasp::{
    best_grasp, filter_candidates, predict_grasp_field, GraspCandidate, GripperModel,
    NMS_RADIUS_VOXELS,
};
use crate::nbv::{generate_views, information_gain, ReachabilityModel, ViewCandidate};
use crate::scene::{execute_grasp, render_depth, GraspOutcome, Scene};
use crate::tsdf::TsdfGrid;

/// Which camera-placement strategy drives the trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    /// Full closed-loop next-best-view exploration.
    NbvGrasp,
    /// Detect from the single initial image and commit.
    InitialView,
    /// Drive to the zenith view, take one image there.
    TopView,
    /// Drive to the zenith view, integrating along the way.
    TopTrajectory,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::InitialView,
        PolicyKind::TopView,
        PolicyKind::TopTrajectory,
        PolicyKind::NbvGrasp,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::NbvGrasp => "nbv_grasp",
            PolicyKind::InitialView => "initial_view",
            PolicyKind::TopView => "top_view",
            PolicyKind::TopTrajectory => "top_trajectory",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().replace('-', "_").as_str() {
            "nbv_grasp" => Ok(PolicyKind::NbvGrasp),
            "initial_view" => Ok(PolicyKind::InitialView),
            "top_view" => Ok(PolicyKind::TopView),
            "top_trajectory" => Ok(PolicyKind::TopTrajectory),
            other => Err(Error::InvalidConfig(format!("unknown policy '{other}'"))),
        }
    }
}

/// Controller parameters. Defaults: 4 Hz, 80-tick budget, minimum gain 10,
/// 12-tick stability window at threshold 0.9, 5 cm/s camera speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyConfig {
    pub tick_rate: f64,
    pub max_ticks: u32,
    pub min_gain: u64,
    pub window: usize,
    pub epsilon_mu: f64,
    pub linear_velocity: f64,
    pub min_target_distance: f64,
    pub policy_kind: PolicyKind,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            tick_rate: 4.0,
            max_ticks: 80,
            min_gain: 10,
            window: 12,
            epsilon_mu: 0.9,
            linear_velocity: 0.05,
            min_target_distance: 0.2,
            policy_kind: PolicyKind::NbvGrasp,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tick_rate <= 0.0
            || self.max_ticks == 0
            || self.window == 0
            || self.linear_velocity <= 0.0
            || self.min_target_distance <= 0.0
        {
            return Err(Error::InvalidConfig(
                "policy parameters must be positive".into(),
            ));
        }
        if !(0.0 < self.epsilon_mu && self.epsilon_mu <= 1.0) {
            return Err(Error::InvalidConfig("epsilon_mu must be in (0, 1]".into()));
        }
        if self.window as u32 > self.max_ticks {
            return Err(Error::InvalidConfig(
                "stability window cannot exceed the tick budget".into(),
            ));
        }
        Ok(())
    }
}

/// Simulation-side parameters shared by all policies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub grid_resolution: usize,
    pub sensor: CameraIntrinsics,
    pub gripper: GripperModel,
    pub reach: ReachabilityModel,
    pub n_views: usize,
    pub noise_sigma: f64,
    /// Fixed simulated duration of executing a grasp, seconds.
    pub exec_seconds: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            grid_resolution: 40,
            sensor: CameraIntrinsics::default_sensor(),
            gripper: GripperModel::default(),
            reach: ReachabilityModel::generous(),
            n_views: 16,
            noise_sigma: 0.0,
            exec_seconds: 13.0,
        }
    }
}

/// What the policy chose to do this tick.
#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    MoveToward(ViewCandidate),
    ExecuteGrasp(GraspCandidate),
    Abort(AbortReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    BudgetExhausted,
    GainBelowMinNoGrasp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Succeeded,
    FailedExecution,
    Aborted,
}

/// Outcome record of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub status: TrialStatus,
    /// Policy updates consumed (= ticks).
    pub views: u32,
    /// Simulated seconds until the policy returned: views / tick_rate.
    pub search_time: f64,
    /// Search time plus the fixed execution constant when a grasp ran.
    pub total_time: f64,
    pub seed: u64,
    pub policy_kind: PolicyKind,
}

/// Mutable per-trial state threaded through ticks.
#[derive(Debug, Clone)]
pub struct PolicyState {
    pub tick: u32,
    pub camera: Pose,
    pub grid: TsdfGrid,
    pub quality_history: VecDeque<f64>,
    pub current_best: Option<GraspCandidate>,
    pub sim_clock: f64,
    last_best_voxel: Option<[usize; 3]>,
}

impl PolicyState {
    pub fn new(scene: &Scene, params: &SimParams, initial_camera: Pose) -> Self {
        PolicyState {
            tick: 0,
            camera: initial_camera,
            grid: TsdfGrid::for_workspace(&scene.workspace, params.grid_resolution),
            quality_history: VecDeque::new(),
            current_best: None,
            sim_clock: 0.0,
            last_best_voxel: None,
        }
    }
}

/// Compensated (Neumaier) summation: correctly rounded for the short quality
/// windows used here, so a window of identical samples averages to exactly
/// that sample and the strict threshold comparison behaves as on paper.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Stability test: true iff the history holds exactly `window` samples and
/// their mean strictly exceeds `epsilon_mu`.
pub fn stable_grasp(history: &VecDeque<f64>, window: usize, epsilon_mu: f64) -> bool {
    history.len() == window
        && compensated_sum(history.iter().copied()) / window as f64 > epsilon_mu
}

/// The benchmark's fixed initial camera: oblique at 45° elevation and fixed
/// azimuth (+x), one hemisphere radius out from the workspace center, aimed
/// at that center.
pub fn oblique_initial_camera(workspace: &Aabb) -> Pose {
    let center = workspace.center();
    let r = crate::nbv::DEFAULT_VIEW_RADIUS;
    let c45 = std::f64::consts::FRAC_PI_4.cos();
    let eye = center + nalgebra::Vector3::new(r * c45, 0.0, r * c45);
    Pose::look_at(eye, center)
}

/// Advance the camera one control period toward the target view: straight
/// line at fixed speed, no overshoot, projected back out radially if it would
/// come closer than `min_dist` to the bounding-box center, and re-aimed at
/// that center.
pub fn advance_camera(
    camera: &Pose,
    target: &ViewCandidate,
    dt: f64,
    velocity: f64,
    bbox: &Aabb,
    min_dist: f64,
) -> Pose {
    debug_assert!(dt > 0.0 && velocity > 0.0);
    let goal = target.pose.translation();
    let here = camera.translation();
    let to_goal = goal - here;
    let dist = to_goal.norm();
    let step = (velocity * dt).min(dist);
    let mut p = if dist > 1e-12 {
        here + to_goal * (step / dist)
    } else {
        here
    };
    let center = bbox.center();
    let radial = p - center;
    let r = radial.norm();
    if r < min_dist {
        p = if r > 1e-12 {
            center + radial * (min_dist / r)
        } else {
            center + nalgebra::Vector3::z() * min_dist
        };
    }
    Pose::look_at(p, center)
}

/// Per-tick log record: everything an external plotter needs.
#[derive(Debug, Clone, Serialize)]
pub struct TickRecord {
    pub tick: u32,
    pub camera: Pose,
    /// (candidate index, gain) for every scored view this tick.
    pub view_gains: Vec<(usize, u64)>,
    pub best: Option<BestGraspRecord>,
    pub decision: DecisionRecord,
}

#[derive(Debug, Clone, Serialize)]
pub struct BestGraspRecord {
    pub pose: Pose,
    pub quality: f64,
    pub width: f64,
    pub voxel: usize,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionRecord {
    MoveToward { view: usize },
    ExecuteGrasp { quality: f64 },
    Abort { reason: AbortReason },
}

/// Wall-clock stage timings for one tick, seconds. Machine-dependent; kept
/// out of the deterministic trial outputs.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct TickTiming {
    pub integrate_s: f64,
    pub grasp_s: f64,
    pub ig_s: f64,
    pub other_s: f64,
}

/// Full trace of a trial.
#[derive(Debug, Clone)]
pub struct PolicyTrace {
    pub result: TrialResult,
    pub ticks: Vec<TickRecord>,
    pub timings: Vec<TickTiming>,
}

/// Run one trial and return only the outcome.
pub fn run_policy(
    scene: &Scene,
    config: &PolicyConfig,
    params: &SimParams,
    initial_camera: Pose,
) -> Result<TrialResult> {
    run_policy_traced(scene, config, params, initial_camera).map(|t| t.result)
}

/// Run one trial, keeping the per-tick log and stage timings.
pub fn run_policy_traced(
    scene: &Scene,
    config: &PolicyConfig,
    params: &SimParams,
    initial_camera: Pose,
) -> Result<PolicyTrace> {
    config.validate()?;
    let runner = PolicyRunner::new(scene, config, params)?;
    runner.run(initial_camera)
}

struct PolicyRunner<'a> {
    scene: &'a Scene,
    config: &'a PolicyConfig,
    params: &'a SimParams,
    bbox: Aabb,
    /// Candidate views, generated once per trial; empty when nothing is
    /// reachable, in which case the exhaustion criterion ends the trial.
    views: Vec<ViewCandidate>,
}

impl<'a> PolicyRunner<'a> {
    fn new(scene: &'a Scene, config: &'a PolicyConfig, params: &'a SimParams) -> Result<Self> {
        let bbox = scene
            .target_bbox()
            .ok_or_else(|| Error::InvalidConfig("scene has no target".into()))?;
        let views = match generate_views(&bbox, &params.reach, &params.sensor, params.n_views) {
            Ok(v) => v,
            // Unreachable candidates are not a hard error: the trial aborts
            // through the gain criterion on its first tick.
            Err(Error::NoReachableViews { .. }) => Vec::new(),
            Err(e) => return Err(e),
        };
        Ok(PolicyRunner {
            scene,
            config,
            params,
            bbox,
            views,
        })
    }

    fn run(&self, initial_camera: Pose) -> Result<PolicyTrace> {
        let mut state = PolicyState::new(self.scene, self.params, initial_camera);
        let mut ticks = Vec::new();
        let mut timings = Vec::new();
        let dt = 1.0 / self.config.tick_rate;
        loop {
            let (decision, record, timing) = self.step(&mut state);
            ticks.push(record);
            timings.push(timing);
            match decision {
                Decision::MoveToward(view) => {
                    state.camera = advance_camera(
                        &state.camera,
                        &view,
                        dt,
                        self.config.linear_velocity,
                        &self.bbox,
                        self.config.min_target_distance,
                    );
                }
                Decision::ExecuteGrasp(grasp) => {
                    let outcome = execute_grasp(self.scene, &grasp, &self.params.gripper);
                    let status = match outcome {
                        GraspOutcome::Success => TrialStatus::Succeeded,
                        GraspOutcome::Failure(_) => TrialStatus::FailedExecution,
                    };
                    return Ok(self.finish(state, ticks, timings, status, true));
                }
                Decision::Abort(_) => {
                    return Ok(self.finish(state, ticks, timings, TrialStatus::Aborted, false));
                }
            }
            debug_assert!(state.tick < self.config.max_ticks, "budget must terminate");
        }
    }

    fn finish(
        &self,
        state: PolicyState,
        ticks: Vec<TickRecord>,
        timings: Vec<TickTiming>,
        status: TrialStatus,
        executed: bool,
    ) -> PolicyTrace {
        let views = state.tick;
        let search_time = views as f64 / self.config.tick_rate;
        let total_time = if executed {
            search_time + self.params.exec_seconds
        } else {
            search_time
        };
        PolicyTrace {
            result: TrialResult {
                status,
                views,
                search_time,
                total_time,
                seed: self.scene.seed,
                policy_kind: self.config.policy_kind,
            },
            ticks,
            timings,
        }
    }

    /// One policy update. Order: integrate, detect, update the stability
    /// history, score views, then decide.
    fn step(&self, state: &mut PolicyState) -> (Decision, TickRecord, TickTiming) {
        let t_start = Instant::now();
        state.tick += 1;
        state.sim_clock = state.tick as f64 / self.config.tick_rate;
        let kind = self.config.policy_kind;

        // Fixed-placement policies drive toward the zenith candidate and
        // only commit once they arrive.
        let drive_target = match kind {
            PolicyKind::TopView | PolicyKind::TopTrajectory => self.views.first().copied(),
            _ => None,
        };
        let arrived = drive_target.map_or(true, |v| {
            (v.pose.translation() - state.camera.translation()).norm() < 1e-9
        });

        let integrate_now = match kind {
            PolicyKind::NbvGrasp | PolicyKind::InitialView | PolicyKind::TopTrajectory => true,
            PolicyKind::TopView => arrived,
        };
        let mut timing = TickTiming::default();
        if integrate_now {
            let t0 = Instant::now();
            let image = render_depth(
                self.scene,
                &state.camera,
                &self.params.sensor,
                self.params.noise_sigma,
            );
            state.grid.integrate(&image, &state.camera);
            timing.integrate_s = t0.elapsed().as_secs_f64();
        }

        // Grasp detection runs only when a decision may be taken this tick;
        // the fixed baselines skip it while still in transit.
        let detect_now = match kind {
            PolicyKind::NbvGrasp | PolicyKind::InitialView => true,
            PolicyKind::TopView | PolicyKind::TopTrajectory => arrived,
        };
        if detect_now {
            let t0 = Instant::now();
            let field = predict_grasp_field(&state.grid, &self.params.gripper);
            let candidates =
                filter_candidates(&field, &self.bbox, &self.params.reach, &self.params.gripper);
            state.current_best = best_grasp(&candidates).copied();
            timing.grasp_s = t0.elapsed().as_secs_f64();
            self.update_history(state);
        }

        // Score the candidate views (the expensive part of the loop).
        let (view_gains, best_view) = if kind == PolicyKind::NbvGrasp {
            let t0 = Instant::now();
            let mut gains = Vec::with_capacity(self.views.len());
            let mut best: Option<(ViewCandidate, u64)> = None;
            for view in &self.views {
                let gain = information_gain(&state.grid, &self.bbox, view);
                gains.push((view.index, gain));
                let better = match &best {
                    None => true,
                    Some((bv, bg)) => gain > *bg || (gain == *bg && view.index < bv.index),
                };
                if better {
                    let mut winner = *view;
                    winner.gain = Some(gain);
                    best = Some((winner, gain));
                }
            }
            timing.ig_s = t0.elapsed().as_secs_f64();
            (gains, best)
        } else {
            (Vec::new(), None)
        };

        let decision = self.decide(state, kind, arrived, drive_target, &best_view);
        timing.other_s = (t_start.elapsed().as_secs_f64()
            - timing.integrate_s
            - timing.grasp_s
            - timing.ig_s)
            .max(0.0);

        let record = TickRecord {
            tick: state.tick,
            camera: state.camera,
            view_gains,
            best: state.current_best.as_ref().map(|b| BestGraspRecord {
                pose: b.pose,
                quality: b.quality,
                width: b.width,
                voxel: b.voxel,
            }),
            decision: match &decision {
                Decision::MoveToward(v) => DecisionRecord::MoveToward { view: v.index },
                Decision::ExecuteGrasp(g) => DecisionRecord::ExecuteGrasp { quality: g.quality },
                Decision::Abort(reason) => DecisionRecord::Abort { reason: *reason },
            },
        };
        (decision, record, timing)
    }

    /// Append the best grasp's quality to the stability window; a jump of the
    /// best voxel by more than the suppression radius resets the window so
    /// qualities of different grasps never average together.
    fn update_history(&self, state: &mut PolicyState) {
        match &state.current_best {
            None => {
                state.quality_history.clear();
                state.last_best_voxel = None;
            }
            Some(best) => {
                let n = state.grid.resolution();
                let lin = best.voxel;
                let voxel = [lin / (n * n), (lin / n) % n, lin % n];
                if let Some(prev) = state.last_best_voxel {
                    let d2: f64 = (0..3)
                        .map(|a| (voxel[a] as f64 - prev[a] as f64).powi(2))
                        .sum();
                    if d2.sqrt() > NMS_RADIUS_VOXELS {
                        state.quality_history.clear();
                    }
                }
                state.quality_history.push_back(best.quality);
                while state.quality_history.len() > self.config.window {
                    state.quality_history.pop_front();
                }
                state.last_best_voxel = Some(voxel);
            }
        }
    }

    fn decide(
        &self,
        state: &PolicyState,
        kind: PolicyKind,
        arrived: bool,
        drive_target: Option<ViewCandidate>,
        best_view: &Option<(ViewCandidate, u64)>,
    ) -> Decision {
        let execute_or_abort = |reason: AbortReason| match &state.current_best {
            Some(best) => Decision::ExecuteGrasp(best.clone()),
            None => Decision::Abort(reason),
        };
        match kind {
            PolicyKind::InitialView => execute_or_abort(AbortReason::BudgetExhausted),
            PolicyKind::TopView | PolicyKind::TopTrajectory => {
                if arrived || state.tick >= self.config.max_ticks {
                    // Arrived (or out of budget): commit to whatever the map
                    // shows now.
                    execute_or_abort(AbortReason::BudgetExhausted)
                } else {
                    Decision::MoveToward(drive_target.expect("in transit implies a target"))
                }
            }
            PolicyKind::NbvGrasp => {
                let stable = stable_grasp(
                    &state.quality_history,
                    self.config.window,
                    self.config.epsilon_mu,
                );
                if stable && state.current_best.is_some() {
                    return Decision::ExecuteGrasp(state.current_best.clone().unwrap());
                }
                let gain = best_view.as_ref().map_or(0, |(_, g)| *g);
                if gain < self.config.min_gain {
                    return execute_or_abort(AbortReason::GainBelowMinNoGrasp);
                }
                if state.tick >= self.config.max_ticks {
                    return execute_or_abort(AbortReason::BudgetExhausted);
                }
                match best_view {
                    Some((view, _)) => Decision::MoveToward(*view),
                    // No reachable views: nothing more to learn.
                    None => execute_or_abort(AbortReason::GainBelowMinNoGrasp),
                }
            }
        }
    }
}
