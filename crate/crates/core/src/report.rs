//! Versioned JSON report schema. Reports are reproducible byte-for-byte from
//! the embedded seed, except for the `generated_at_ms` timestamp, which is
//! explicitly outside the determinism contract.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attacks::AttackMethod;
use crate::error::PipelineError;
use crate::scenario::{self, DefenseMetrics, FixVariantSummary, ScenarioConfig, TrialOutcome};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// A full simulation request: scenario, trial count, attack list, output path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub trials: u64,
    #[serde(default = "scenario::all_attacks")]
    pub attacks: Vec<AttackMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            trials: 8,
            attacks: scenario::all_attacks(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.trials == 0 {
            return Err(PipelineError::Invalid("trials must be >= 1".into()));
        }
        if self.attacks.is_empty() {
            return Err(PipelineError::Invalid("attack list is empty".into()));
        }
        self.scenario.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackRecord {
    pub attack: AttackMethod,
    pub coverage: f64,
    pub recovered_entries: usize,
    pub all_recovered_exact: bool,
    pub inexact_entries: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equality_constraints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio_constraints: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffs_exact: Option<bool>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub defense: DefenseMetrics,
    pub attacks: Vec<AttackRecord>,
    pub fix: FixVariantSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSummary {
    pub trials: u64,
    pub mean_coverage: f64,
    pub min_coverage: f64,
    pub all_exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSummary {
    pub max_poisoned_weight: Option<f64>,
    pub min_honest_weight: Option<f64>,
    pub min_aggregate_rho_with_base: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixSummary {
    pub secmed_mean_wrong_fraction: f64,
    pub secpear_mean_abs_delta_rho: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub attacks: BTreeMap<String, AttackSummary>,
    pub defense: DefenseSummary,
    pub fix: FixSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    /// Wall-clock stamp; excluded from the determinism contract.
    pub generated_at_ms: u64,
    pub master_seed: u64,
    pub config: RunConfig,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
}

impl Report {
    pub fn from_trials(
        config: &RunConfig,
        outcomes: &[TrialOutcome],
        tool_version: &str,
        generated_at_ms: u64,
    ) -> Self {
        let trials: Vec<TrialRecord> = outcomes
            .iter()
            .map(|t| TrialRecord {
                trial_index: t.trial_index,
                defense: t.defense.clone(),
                attacks: t
                    .attacks
                    .iter()
                    .map(|a| AttackRecord {
                        attack: a.method,
                        coverage: a.verdict.coverage,
                        recovered_entries: a.verdict.recovered_entries,
                        all_recovered_exact: a.verdict.all_recovered_exact,
                        inexact_entries: a.verdict.inexact_entries,
                        equality_constraints: a.equality_constraints,
                        ratio_constraints: a.ratio_constraints,
                        diffs_exact: a.diffs_exact,
                        diagnostics: a.report.diagnostics.clone(),
                    })
                    .collect(),
                fix: t.fix.clone(),
            })
            .collect();
        let summary = summarize(&trials);
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: tool_version.to_string(),
            generated_at_ms,
            master_seed: config.scenario.master_seed,
            config: config.clone(),
            trials,
            summary,
        }
    }

    /// Pretty JSON, newline-terminated, UTF-8.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let report: Report = serde_json::from_str(s).map_err(|e| e.to_string())?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(format!(
                "unsupported report schema version {} (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            ));
        }
        Ok(report)
    }

    /// Stable, grep-friendly key=value summary lines.
    pub fn summary_lines(&self) -> Vec<String> {
        let mut lines = Vec::new();
        for (name, s) in &self.summary.attacks {
            lines.push(format!(
                "attack={name} trials={} mean_coverage={:.6} min_coverage={:.6} all_exact={}",
                s.trials, s.mean_coverage, s.min_coverage, s.all_exact
            ));
        }
        let d = &self.summary.defense;
        lines.push(format!(
            "defense max_poisoned_weight={} min_honest_weight={} min_aggregate_rho={}",
            fmt_opt(d.max_poisoned_weight),
            fmt_opt(d.min_honest_weight),
            fmt_opt(d.min_aggregate_rho_with_base),
        ));
        let f = &self.summary.fix;
        lines.push(format!(
            "fix secmed_wrong_fraction={:.6} secpear_mean_abs_delta_rho={}",
            f.secmed_mean_wrong_fraction,
            fmt_opt(f.secpear_mean_abs_delta_rho),
        ));
        lines
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| format!("{v:.6}"))
}

fn summarize(trials: &[TrialRecord]) -> Summary {
    let mut per_attack: BTreeMap<String, Vec<&AttackRecord>> = BTreeMap::new();
    for trial in trials {
        for record in &trial.attacks {
            per_attack
                .entry(record.attack.to_string())
                .or_default()
                .push(record);
        }
    }
    let attacks = per_attack
        .into_iter()
        .map(|(name, records)| {
            let coverages: Vec<f64> = records.iter().map(|r| r.coverage).collect();
            let mean = coverages.iter().sum::<f64>() / coverages.len() as f64;
            let min = coverages.iter().cloned().fold(f64::INFINITY, f64::min);
            let all_exact = records.iter().all(|r| r.all_recovered_exact);
            (
                name,
                AttackSummary {
                    trials: records.len() as u64,
                    mean_coverage: mean,
                    min_coverage: min,
                    all_exact,
                },
            )
        })
        .collect();

    let max_poisoned_weight = trials
        .iter()
        .filter_map(|t| t.defense.max_poisoned_weight)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
    let min_honest_weight = trials
        .iter()
        .filter_map(|t| t.defense.min_honest_weight)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let min_aggregate_rho_with_base = trials
        .iter()
        .filter_map(|t| t.defense.aggregate_rho_with_base)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));

    let secmed_mean_wrong_fraction = if trials.is_empty() {
        0.0
    } else {
        trials.iter().map(|t| t.fix.secmed_wrong_fraction).sum::<f64>() / trials.len() as f64
    };
    let secpear_deltas: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.fix.secpear_mean_abs_delta_rho)
        .collect();
    let secpear_mean_abs_delta_rho = if secpear_deltas.is_empty() {
        None
    } else {
        Some(secpear_deltas.iter().sum::<f64>() / secpear_deltas.len() as f64)
    };

    Summary {
        attacks,
        defense: DefenseSummary {
            max_poisoned_weight,
            min_honest_weight,
            min_aggregate_rho_with_base,
        },
        fix: FixSummary {
            secmed_mean_wrong_fraction,
            secpear_mean_abs_delta_rho,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::run_trials;

    #[test]
    fn config_round_trip() {
        let config = RunConfig::default();
        let json = serde_json::to_string_pretty(&config).unwrap();
        let parsed: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, config);
    }

    #[test]
    fn unknown_config_fields_rejected_with_diagnostic() {
        let json = r#"{ "scenario": {}, "trials": 2, "bogus_field": 1 }"#;
        let err = serde_json::from_str::<RunConfig>(json).unwrap_err().to_string();
        assert!(err.contains("bogus_field"), "diagnostic was: {err}");
    }

    #[test]
    fn partial_scenario_uses_defaults() {
        let json = r#"{ "scenario": { "m": 5, "master_seed": 7 }, "trials": 1 }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.scenario.m, 5);
        assert_eq!(config.scenario.n, 32);
        assert_eq!(config.attacks, scenario::all_attacks());
    }

    #[test]
    fn zero_trials_rejected() {
        let config = RunConfig {
            trials: 0,
            ..RunConfig::default()
        };
        assert!(config.validate().is_err());
    }

    #[test]
    fn report_round_trip_and_determinism() {
        let config = RunConfig {
            trials: 2,
            ..RunConfig::default()
        };
        let outcomes = run_trials(&config.scenario, &config.attacks, config.trials).unwrap();
        let a = Report::from_trials(&config, &outcomes, "test", 0);
        let b = Report::from_trials(&config, &outcomes, "test", 0);
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.to_json().ends_with('\n'));
        let parsed = Report::from_json(&a.to_json()).unwrap();
        assert_eq!(parsed, a);
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let config = RunConfig {
            trials: 1,
            attacks: vec![AttackMethod::Combined],
            ..RunConfig::default()
        };
        let outcomes = run_trials(&config.scenario, &config.attacks, 1).unwrap();
        let mut report = Report::from_trials(&config, &outcomes, "test", 0);
        report.schema_version = 99;
        let err = Report::from_json(&report.to_json()).unwrap_err();
        assert!(err.contains("schema version"));
    }

    #[test]
    fn summary_lines_are_stable_key_value_pairs() {
        let config = RunConfig {
            trials: 1,
            ..RunConfig::default()
        };
        let outcomes = run_trials(&config.scenario, &config.attacks, 1).unwrap();
        let report = Report::from_trials(&config, &outcomes, "test", 0);
        let lines = report.summary_lines();
        assert!(lines.iter().any(|l| l.starts_with("attack=combined ")));
        assert!(lines.iter().any(|l| l.starts_with("defense ")));
        assert!(lines.iter().any(|l| l.starts_with("fix ")));
        for line in &lines {
            assert!(line.contains('='));
        }
    }
}
