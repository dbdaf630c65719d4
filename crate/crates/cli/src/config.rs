//! Run configurations and their content hash.

use cbplab_core::busemann_petty::{BpRules, ConstructOptions};
use cbplab_core::embedding::ScanRules;
use cbplab_core::frames::GridSpec;
use cbplab_core::quadrature::{Rule, RuleKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum RouteChoice {
    Auto,
    Derivative,
    Fractional,
    Pairing,
}

/// Where a verification pair came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSource {
    /// `config_hash` of the construction report.
    pub config_hash: String,
    /// The stored verification, replayed for comparison.
    pub report: serde_json::Value,
}

/// Everything a command computes from. Serialized field order is fixed, so the JSON form
/// is canonical.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Job {
    Volume {
        body: String,
        rule: Rule,
    },
    Section {
        body: String,
        xi: Vec<f64>,
        /// Offset of the parallel section, used when `m = 0`.
        u: [f64; 2],
        /// Order of the iterated Laplacian at the origin.
        m: usize,
        step: Option<f64>,
        rule: Rule,
    },
    Ft {
        body: String,
        xi: Vec<f64>,
        p: f64,
        route: RouteChoice,
        sigma: f64,
        rule: Rule,
    },
    Scan {
        body: String,
        p: Vec<f64>,
        grid: GridSpec,
        rules: ScanRules,
    },
    BpVerify {
        k: String,
        l: String,
        grid: GridSpec,
        rules: BpRules,
        pair: Option<PairSource>,
    },
    BpConstruct {
        options: ConstructOptions,
    },
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::Volume { .. } => "volume",
            Job::Section { .. } => "section",
            Job::Ft { .. } => "ft",
            Job::Scan { .. } => "scan",
            Job::BpVerify { .. } => "bp-verify",
            Job::BpConstruct { .. } => "bp-construct",
        }
    }

    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("jobs serialize")
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub(crate) fn rules_mut(&mut self) -> Vec<&mut Rule> {
        match self {
            Job::Volume { rule, .. } | Job::Section { rule, .. } | Job::Ft { rule, .. } => vec![rule],
            Job::Scan { rules, .. } => vec![&mut rules.sweep, &mut rules.confirm],
            Job::BpVerify { rules, .. } => vec![&mut rules.sections, &mut rules.volume],
            Job::BpConstruct { options } => vec![
                &mut options.scan.sweep,
                &mut options.scan.confirm,
                &mut options.verify.sections,
                &mut options.verify.volume,
            ],
        }
    }

    /// Applies the global flags. Seeds and node counts only touch sampled rules.
    pub fn apply(&mut self, o: &Overrides) {
        for rule in self.rules_mut() {
            if rule.kind == RuleKind::ProductGauss {
                continue;
            }
            if let Some(seed) = o.seed {
                *rule = rule.with_seed(seed);
            }
            if let Some(nodes) = o.nodes {
                *rule = rule.with_size(nodes);
            }
        }
        if let Some(tol) = o.tol {
            match self {
                Job::Scan { rules, .. } => rules.rel_slack = tol,
                Job::BpVerify { rules, .. } => rules.tol = tol,
                Job::BpConstruct { options } => {
                    options.scan.rel_slack = tol;
                    options.verify.tol = tol;
                }
                _ => {}
            }
        }
    }
}

/// Global flags that rewrite a job before it is hashed.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub nodes: Option<u64>,
    pub tol: Option<f64>,
}

/// A job plus the plumbing that does not affect its results.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub job: Job,
    pub out: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn config_hash(&self) -> String {
        self.job.hash()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn volume_job(seed: u64) -> Job {
        Job::Volume {
            body: "ball:dim=6".into(),
            rule: Rule::qmc(4096, seed),
        }
    }

    #[test]
    fn canonical_round_trip() {
        let job = volume_job(3);
        let back: Job = serde_json::from_str(&job.canonical()).unwrap();
        assert_eq!(back, job);
        assert_eq!(back.hash(), job.hash());
    }

    #[test]
    fn seed_changes_hash() {
        assert_ne!(volume_job(1).hash(), volume_job(2).hash());
        let mut j = volume_job(1);
        j.apply(&Overrides {
            seed: Some(2),
            ..Default::default()
        });
        assert_eq!(j.hash(), volume_job(2).hash());
    }

    #[test]
    fn gauss_rules_ignore_sampling_flags() {
        let mut j = Job::Volume {
            body: "ball:dim=6".into(),
            rule: Rule::gauss(20),
        };
        let before = j.hash();
        j.apply(&Overrides {
            seed: Some(9),
            nodes: Some(1 << 20),
            tol: None,
        });
        assert_eq!(j.hash(), before);
    }
}
