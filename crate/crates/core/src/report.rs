//! Report tables written for a comparison run.
//!
//! Rows follow the order of the runs (adoption level, then seed), then mode,
//! interval and node, so two runs with the same inputs produce identical
//! files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::admm::AdmmConfig;
use crate::error::{RevsError, Result};
use crate::network::NodeId;
use crate::scenario::{ComparisonReport, Mode, ModeOutcome, Scenario, SeedRun, BAND_NAMES};
use crate::table::write_text;

pub const REPORT_FILES: [&str; 6] = [
    "voltages.csv",
    "edge_flows.csv",
    "bands.csv",
    "costs.csv",
    "trace.csv",
    "summary.json",
];

const MODES: [Mode; 2] = [Mode::Individual, Mode::Distributed];

fn outcomes(run: &SeedRun) -> impl Iterator<Item = (Mode, &ModeOutcome)> {
    MODES.into_iter().filter_map(move |m| run.outcome(m).map(|o| (m, o)))
}

fn hour(report: &ComparisonReport, t: usize) -> usize {
    (t + report.horizon_start_hour) % 24
}

pub fn voltages_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("adoption,seed,mode,interval,hour,node_id,v_squared,v_pu\n");
    for run in &report.runs {
        for (mode, o) in outcomes(run) {
            for (t, vt) in o.voltages.iter().enumerate() {
                for (i, v) in vt.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{}",
                        run.adoption,
                        run.seed,
                        mode,
                        t,
                        hour(report, t),
                        i + 1,
                        v,
                        v.max(0.0).sqrt()
                    );
                }
            }
        }
    }
    out
}

pub fn edge_flows_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("adoption,seed,mode,interval,hour,parent_id,child_id,flow_kw,loading_pct\n");
    for run in &report.runs {
        for (mode, o) in outcomes(run) {
            for (t, ft) in o.flows.iter().enumerate() {
                for f in ft {
                    let _ = writeln!(
                        out,
                        "{},{},{},{},{},{},{},{},{}",
                        run.adoption,
                        run.seed,
                        mode,
                        t,
                        hour(report, t),
                        f.parent,
                        f.child,
                        f.flow_kw,
                        f.loading_pct
                    );
                }
            }
        }
    }
    out
}

pub fn bands_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("adoption,mode,interval,hour,band,n_seeds,mean,min,max\n");
    for a in &report.aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            a.adoption, a.mode, a.interval, a.hour, BAND_NAMES[a.band], a.n_seeds, a.mean, a.min, a.max
        );
    }
    out
}

pub fn costs_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("adoption,seed,mode,node_id,adopter,energy_kwh,cost\n");
    for run in &report.runs {
        for (mode, o) in outcomes(run) {
            for ((node, p), cost) in report.residences.iter().zip(&o.p).zip(&o.costs) {
                let energy: f64 = p.iter().sum::<f64>() * crate::tariff::INTERVAL_HOURS;
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    run.adoption,
                    run.seed,
                    mode,
                    node,
                    run.adopters.binary_search(node).is_ok(),
                    energy,
                    cost
                );
            }
        }
    }
    out
}

pub fn trace_csv(report: &ComparisonReport) -> String {
    let mut out = String::from("adoption,seed,iter,primal_residual,dual_residual,total_cost\n");
    for run in &report.runs {
        let Some(trace) = run.outcome(Mode::Distributed).and_then(|o| o.trace.as_ref()) else {
            continue;
        };
        for r in &trace.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                run.adoption, run.seed, r.iter, r.primal_residual, r.dual_residual, r.total_cost
            );
        }
    }
    out
}

#[derive(Debug, Serialize)]
struct ModeSummary {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    message: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_voltage_pu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_loading_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    undervoltage_by_interval: Option<Vec<usize>>,
}

impl ModeSummary {
    fn new(run: &SeedRun, mode: Mode) -> Option<Self> {
        let empty = ModeSummary {
            status: "ok",
            message: None,
            converged: None,
            iterations: None,
            min_voltage_pu: None,
            max_loading_pct: None,
            total_cost: None,
            undervoltage_by_interval: None,
        };
        if let Some(e) = run.error(mode) {
            return Some(ModeSummary {
                status: if e.solver { "solver_error" } else { "error" },
                message: Some(e.message.clone()),
                ..empty
            });
        }
        let o = run.outcome(mode)?;
        Some(ModeSummary {
            converged: o.converged,
            iterations: o.iterations,
            min_voltage_pu: Some(o.min_voltage_pu()),
            max_loading_pct: Some(o.max_loading_pct()),
            total_cost: Some(o.costs.iter().sum()),
            undervoltage_by_interval: Some((0..o.bands.counts.len()).map(|t| o.bands.undervoltage(t)).collect()),
            ..empty
        })
    }
}

#[derive(Debug, Serialize)]
struct RunSummary {
    adoption: f64,
    seed: u64,
    adopters: Vec<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    individual: Option<ModeSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distributed: Option<ModeSummary>,
}

#[derive(Debug, Serialize)]
struct ScenarioSummary<'a> {
    nodes: usize,
    residences: usize,
    community_size: usize,
    horizon_start_hour: usize,
    adoption: &'a [f64],
    seeds: &'a [u64],
    mode: Mode,
    admm: &'a AdmmConfig,
    v_min_pu: f64,
    v_max_pu: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    scenario: ScenarioSummary<'a>,
    runs: Vec<RunSummary>,
}

pub fn summary_json(scenario: &Scenario, report: &ComparisonReport) -> Result<String> {
    let summary = Summary {
        scenario: ScenarioSummary {
            nodes: scenario.network.n(),
            residences: report.residences.len(),
            community_size: scenario.community.len(),
            horizon_start_hour: report.horizon_start_hour,
            adoption: &scenario.adoption,
            seeds: &scenario.seeds,
            mode: scenario.mode,
            admm: &scenario.admm,
            v_min_pu: scenario.admm.limits.alpha.sqrt(),
            v_max_pu: scenario.admm.limits.beta.sqrt(),
        },
        runs: report
            .runs
            .iter()
            .map(|r| RunSummary {
                adoption: r.adoption,
                seed: r.seed,
                adopters: r.adopters.clone(),
                individual: ModeSummary::new(r, Mode::Individual),
                distributed: ModeSummary::new(r, Mode::Distributed),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| RevsError::Config(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Writes every report table into `dir`.
pub fn write_report(dir: &Path, scenario: &Scenario, report: &ComparisonReport) -> Result<()> {
    write_text(&dir.join("voltages.csv"), &voltages_csv(report))?;
    write_text(&dir.join("edge_flows.csv"), &edge_flows_csv(report))?;
    write_text(&dir.join("bands.csv"), &bands_csv(report))?;
    write_text(&dir.join("costs.csv"), &costs_csv(report))?;
    write_text(&dir.join("trace.csv"), &trace_csv(report))?;
    write_text(&dir.join("summary.json"), &summary_json(scenario, report)?)
}

/// Plain-text table of mean residences below 0.95 p.u. per hour.
pub fn comparison_table(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let mut levels: Vec<f64> = report.aggregates.iter().map(|a| a.adoption).collect();
    levels.dedup();
    for level in levels {
        let _ = writeln!(out, "adoption {:.0}%", level * 100.0);
        let _ = writeln!(out, "{:>5} {:>12} {:>12}", "hour", "individual", "distributed");
        let horizon = report
            .aggregates
            .iter()
            .filter(|a| a.adoption == level)
            .map(|a| a.interval + 1)
            .max()
            .unwrap_or(0);
        for t in 0..horizon {
            let cell = |mode: Mode| {
                let means: Vec<f64> = report
                    .aggregates
                    .iter()
                    .filter(|a| a.adoption == level && a.mode == mode && a.interval == t && a.band < 2)
                    .map(|a| a.mean)
                    .collect();
                if means.is_empty() {
                    "-".to_string()
                } else {
                    format!("{:.1}", means.iter().sum::<f64>())
                }
            };
            let _ = writeln!(
                out,
                "{:>5} {:>12} {:>12}",
                format!("{:02}:00", hour(report, t)),
                cell(Mode::Individual),
                cell(Mode::Distributed)
            );
        }
        let _ = writeln!(out);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{generate_network, GeneratorParams};
    use crate::scenario::{run_comparison, RunError};
    use crate::tariff::{EvDefaults, Tariff};

    fn scenario() -> Scenario {
        let g = generate_network(&GeneratorParams {
            homes: 8,
            min_base_voltage_pu: Some(0.96),
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        Scenario {
            community: g.communities["com-1"].clone(),
            network: g.network,
            profiles: g.profiles,
            tariff: Tariff::experiment_default(),
            adoption: vec![0.5, 1.0],
            seeds: vec![7, 8],
            ev: EvDefaults::default(),
            mode: Mode::Both,
            horizon_start_hour: 16,
            admm: AdmmConfig::default(),
        }
    }

    fn lines(s: &str) -> usize {
        s.lines().count()
    }

    #[test]
    fn table_sizes() {
        let sc = scenario();
        let rep = run_comparison(&sc).unwrap();
        let n = sc.network.n();
        let runs = rep.runs.len();
        assert_eq!(lines(&voltages_csv(&rep)), 1 + runs * 2 * 24 * n);
        assert_eq!(lines(&edge_flows_csv(&rep)), 1 + runs * 2 * 24 * n);
        assert_eq!(lines(&bands_csv(&rep)), 1 + 2 * 2 * 24 * 3);
        assert_eq!(lines(&costs_csv(&rep)), 1 + runs * 2 * rep.residences.len());
        let records: usize = rep
            .runs
            .iter()
            .map(|r| r.outcome(Mode::Distributed).unwrap().trace.as_ref().unwrap().records.len())
            .sum();
        assert_eq!(lines(&trace_csv(&rep)), 1 + records);
        let json: serde_json::Value = serde_json::from_str(&summary_json(&sc, &rep).unwrap()).unwrap();
        assert_eq!(json["runs"].as_array().unwrap().len(), runs);
        assert_eq!(json["scenario"]["horizon_start_hour"], 16);
        assert_eq!(json["runs"][0]["individual"]["status"], "ok");
        assert!(comparison_table(&rep).contains("adoption 50%"));
    }

    #[test]
    fn reports_are_byte_identical() {
        let sc = scenario();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_report(a.path(), &sc, &run_comparison(&sc).unwrap()).unwrap();
        write_report(b.path(), &sc, &run_comparison(&sc).unwrap()).unwrap();
        for f in REPORT_FILES {
            let x = std::fs::read(a.path().join(f)).unwrap();
            let y = std::fs::read(b.path().join(f)).unwrap();
            assert!(!x.is_empty());
            assert_eq!(x, y, "{f} differs");
        }
    }

    #[test]
    fn errors_are_reported_per_mode() {
        let sc = scenario();
        let mut rep = run_comparison(&sc).unwrap();
        rep.runs[0].distributed = Some(Err(RunError {
            message: "operator failed".into(),
            solver: false,
        }));
        let json: serde_json::Value = serde_json::from_str(&summary_json(&sc, &rep).unwrap()).unwrap();
        assert_eq!(json["runs"][0]["distributed"]["status"], "error");
        assert_eq!(json["runs"][0]["distributed"]["message"], "operator failed");
        assert!(json["runs"][0]["distributed"].get("min_voltage_pu").is_none());
    }
}
