//! Benchmark harness for the next-best-view grasp planner: experiment
//! orchestration over seeds and policies, metric aggregation, the stability
//! window sweep, per-tick timing profiles, and the bundled case-study
//! scenarios.

pub mod config;
pub mod harness;
pub mod scenarios;

pub use config::{ConfigFile, ExperimentConfig};
pub use harness::{
    profile_tick, run_bench, run_scenario, sweep_window, BenchOutput, MetricsRow, ProfileRow,
    SkipRow, SweepRow, TrialRow,
};
