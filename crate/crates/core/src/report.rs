//! Turning experiment results into files and summaries: seed-averaged
//! per-slot series (CSV or JSON, plus a manifest describing the run), and
//! a cross-policy comparison table.
//!
//! All numeric formatting goes through the shortest-roundtrip float
//! printer, so emitting the same result twice yields byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::OutputFormat;
use crate::error::{Error, Result};
use crate::harness::ExperimentResult;
use crate::sched::PolicyKind;

/// Seed-averaged metrics for one slot. `t` is 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: usize,
    pub regret_slot: f64,
    pub regret_cum: f64,
    pub omega: f64,
    pub mu: f64,
    pub usage: f64,
    pub aoi_mean: f64,
    pub aoi_peak: f64,
}

/// Averages one policy's metric traces across all seeds, slot by slot.
pub fn policy_series(result: &ExperimentResult, policy: PolicyKind) -> Result<Vec<SeriesRow>> {
    let traces: Vec<_> = result
        .seeds
        .iter()
        .map(|s| {
            s.policies
                .iter()
                .find(|p| p.policy == policy)
                .map(|p| &p.trace)
                .ok_or_else(|| Error::config("policies", format!("no run recorded for `{policy}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if traces.is_empty() {
        return Err(Error::config("seeds", "result contains no seed runs"));
    }
    let horizon = traces[0].len();
    if traces.iter().any(|tr| tr.len() != horizon) {
        return Err(Error::DimensionMismatch(format!(
            "seed traces for `{policy}` differ in length"
        )));
    }
    let n = traces.len() as f64;
    let mut rows = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut row = SeriesRow {
            t: t + 1,
            regret_slot: 0.0,
            regret_cum: 0.0,
            omega: 0.0,
            mu: 0.0,
            usage: 0.0,
            aoi_mean: 0.0,
            aoi_peak: 0.0,
        };
        for trace in &traces {
            let r = &trace.records()[t];
            row.regret_slot += r.regret as f64;
            row.regret_cum += r.regret_cum as f64;
            row.omega += r.omega as f64;
            row.mu += r.mu as f64;
            row.usage += r.usage;
            row.aoi_mean += r.aoi_mean;
            row.aoi_peak += r.aoi_peak as f64;
        }
        row.regret_slot /= n;
        row.regret_cum /= n;
        row.omega /= n;
        row.mu /= n;
        row.usage /= n;
        row.aoi_mean /= n;
        row.aoi_peak /= n;
        rows.push(row);
    }
    Ok(rows)
}

fn series_to_csv(rows: &[SeriesRow]) -> String {
    let mut out = String::from("t,regret_slot,regret_cum,omega,mu,usage,aoi_mean,aoi_peak\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.t, r.regret_slot, r.regret_cum, r.omega, r.mu, r.usage, r.aoi_mean, r.aoi_peak
        );
    }
    out
}

/// Written alongside the series files; records what produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: crate::config::ExperimentConfig,
    pub beta: f64,
    pub beta_warning: bool,
    pub files: Vec<String>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes one seed-averaged series file per policy into `dir` (created if
/// missing), named `<policy>.<ext>` in the configured format, plus a
/// `manifest.json` echoing the configuration, the resolved age weight, and
/// the emitted file names. Returns the paths written, manifest last.
pub fn emit_series(result: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let format = result.config.format;
    let mut written = Vec::new();
    let mut names = Vec::new();
    for &policy in &result.config.policies {
        let rows = policy_series(result, policy)?;
        let name = format!("{}.{}", policy.name(), format.extension());
        let path = dir.join(&name);
        let body = match format {
            OutputFormat::Csv => series_to_csv(&rows),
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(&rows)?;
                s.push('\n');
                s
            }
        };
        write_file(&path, &body)?;
        names.push(name);
        written.push(path);
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: result.config.clone(),
        beta: result.beta,
        beta_warning: result.beta_warning,
        files: names,
    };
    let manifest_path = dir.join("manifest.json");
    let mut body = serde_json::to_string_pretty(&manifest)?;
    body.push('\n');
    write_file(&manifest_path, &body)?;
    written.push(manifest_path);
    Ok(written)
}

/// End-of-run summary for one policy, averaged over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    /// Cumulative regret at the final slot.
    pub final_regret: f64,
    /// Usage at the final slot.
    pub final_usage: f64,
    /// Mean device age at the final slot.
    pub final_aoi: f64,
    /// Time-averaged slot regret.
    pub avg_regret: f64,
}

/// Side-by-side summary of every policy in a result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub policies: Vec<PolicySummary>,
    /// Final cumulative regret of round-robin over the predictive
    /// feedback policy, when both ran.
    pub tdma_over_fu: Option<f64>,
    /// Final cumulative regret of grant-free access over the predictive
    /// feedback policy, when both ran.
    pub gf_over_fu: Option<f64>,
    /// Set when fewer than two seeds back the averages.
    pub low_confidence: bool,
}

/// Builds the cross-policy comparison. Requires at least two policies in
/// the result; ratios are filled in only when the relevant pair ran.
pub fn compare_report(result: &ExperimentResult) -> Result<CompareReport> {
    if result.config.policies.len() < 2 {
        return Err(Error::config(
            "policies",
            "comparison needs at least two policies",
        ));
    }
    let mut policies = Vec::new();
    for &policy in &result.config.policies {
        let rows = policy_series(result, policy)?;
        let last = rows
            .last()
            .ok_or_else(|| Error::config("horizon", "empty metric series"))?;
        let avg_regret = rows.iter().map(|r| r.regret_slot).sum::<f64>() / rows.len() as f64;
        policies.push(PolicySummary {
            policy,
            final_regret: last.regret_cum,
            final_usage: last.usage,
            final_aoi: last.aoi_mean,
            avg_regret,
        });
    }
    let find = |kind: PolicyKind| policies.iter().find(|p| p.policy == kind);
    let ratio = |num: Option<&PolicySummary>, den: Option<&PolicySummary>| match (num, den) {
        (Some(n), Some(d)) if d.final_regret > 0.0 => Some(n.final_regret / d.final_regret),
        _ => None,
    };
    let fu = find(PolicyKind::FuFeedback);
    Ok(CompareReport {
        tdma_over_fu: ratio(find(PolicyKind::Tdma), fu),
        gf_over_fu: ratio(find(PolicyKind::Gf), fu),
        low_confidence: result.seeds.len() < 2,
        policies,
    })
}

impl CompareReport {
    /// Plain-text table, one row per policy.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>12} {:>10} {:>10}",
            "policy", "final_regret", "avg_regret", "usage", "aoi_mean"
        );
        for p in &self.policies {
            let _ = writeln!(
                out,
                "{:<16} {:>14.3} {:>12.4} {:>10.4} {:>10.3}",
                p.policy.name(),
                p.final_regret,
                p.avg_regret,
                p.final_usage,
                p.final_aoi
            );
        }
        if let Some(r) = self.tdma_over_fu {
            let _ = writeln!(out, "regret ratio tdma/fu-feedback: {r:.2}");
        }
        if let Some(r) = self.gf_over_fu {
            let _ = writeln!(out, "regret ratio gf/fu-feedback: {r:.2}");
        }
        if self.low_confidence {
            let _ = writeln!(out, "note: single seed; averages carry no error estimate");
        }
        out
    }

    /// CSV form of the same table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,final_regret,avg_regret,final_usage,final_aoi\n");
        for p in &self.policies {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.policy.name(),
                p.final_regret,
                p.avg_regret,
                p.final_usage,
                p.final_aoi
            );
        }
        out
    }
}
