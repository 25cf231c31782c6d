//! Experiment configuration: CLI-level settings plus an optional TOML file
//! that overrides the built-in defaults.

use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::{Deserialize, Serialize};

use nbv_grasp_core::policy::{PolicyConfig, PolicyKind, SimParams};

/// Structure of `--config FILE` (TOML). Both sections are optional and
/// default field-by-field, e.g.:
///
/// ```toml
/// [policy]
/// window = 24
/// epsilon_mu = 0.95
///
/// [sim]
/// noise_sigma = 0.002
/// ```
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigFile {
    pub policy: PolicyConfig,
    pub sim: SimParams,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// A full experiment: which seeds, which policies, and where output goes.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seeds: Range<u64>,
    pub policies: Vec<PolicyKind>,
    pub n_objects: usize,
    pub policy: PolicyConfig,
    pub sim: SimParams,
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn new(seeds: Range<u64>, policies: Vec<PolicyKind>, out_dir: PathBuf) -> Self {
        ExperimentConfig {
            seeds,
            policies,
            n_objects: 5,
            policy: PolicyConfig::default(),
            sim: SimParams::default(),
            out_dir,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(!self.seeds.is_empty(), "seed range is empty");
        anyhow::ensure!(!self.policies.is_empty(), "no policies requested");
        anyhow::ensure!(self.n_objects >= 2, "packed scenes need >= 2 objects");
        self.policy.validate()?;
        Ok(())
    }
}

/// Parse `A..B` (half-open) seed ranges from the command line.
pub fn parse_seed_range(s: &str) -> anyhow::Result<Range<u64>> {
    let (a, b) = s
        .split_once("..")
        .with_context(|| format!("expected A..B, got '{s}'"))?;
    let start: u64 = a.trim().parse().context("bad range start")?;
    let end: u64 = b.trim().parse().context("bad range end")?;
    anyhow::ensure!(start < end, "empty seed range {start}..{end}");
    Ok(start..end)
}

/// Parse a comma-separated policy list.
pub fn parse_policies(s: &str) -> anyhow::Result<Vec<PolicyKind>> {
    let mut out = Vec::new();
    for part in s.split(',') {
        let kind: PolicyKind = part.trim().parse()?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    anyhow::ensure!(!out.is_empty(), "no policies in '{s}'");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_range_parses() {
        assert_eq!(parse_seed_range("0..50").unwrap(), 0..50);
        assert!(parse_seed_range("5..5").is_err());
        assert!(parse_seed_range("7").is_err());
    }

    #[test]
    fn policy_list_parses_and_dedups() {
        let list = parse_policies("nbv-grasp, top_view,nbv_grasp").unwrap();
        assert_eq!(list, vec![PolicyKind::NbvGrasp, PolicyKind::TopView]);
    }

    #[test]
    fn partial_toml_overrides_defaults() {
        let cfg: ConfigFile = toml::from_str(
            "[policy]\nwindow = 24\n\n[sim]\nnoise_sigma = 0.002\n",
        )
        .unwrap();
        assert_eq!(cfg.policy.window, 24);
        assert_eq!(cfg.policy.max_ticks, PolicyConfig::default().max_ticks);
        assert_eq!(cfg.sim.noise_sigma, 0.002);
        assert_eq!(cfg.sim.n_views, SimParams::default().n_views);
    }
}
