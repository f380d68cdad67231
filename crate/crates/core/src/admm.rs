//! Consensus ADMM between the network operator and the EV-owning residences.
//!
//! Every iteration the operator solves its voltage-constrained QP and every
//! adopter solves its scheduling problem, both against iteration-`l` data,
//! after which the shared multipliers are updated. The only data crossing
//! the boundary are the two sets of power trajectories.
//!
//! Residences without an EV keep their base load. They are not part of the
//! exchange; the operator sees their load as a fixed voltage drop.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, RevsError, Result};
use crate::network::{
    build_sensitivity, check_limits, voltage_trajectories, DistributionNetwork, NodeId, VoltageLimits,
};
use crate::operator::{
    solve_operator_step_with, ConstraintScope, IntervalMultipliers, OperatorProblem, OperatorSettings,
};
use crate::residence::{solve_admm_step, solve_individual, ResidenceAdmmState};
use crate::tariff::{BaseLoadProfile, ChargeSchedule, EvSpec, Tariff, INTERVAL_HOURS};

/// Outer-loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmmConfig {
    /// Penalty parameter on the per-unit power scale; see [`AdmmConfig::kappa_kw`].
    pub kappa: f64,
    pub max_iters: usize,
    /// Stop once `max |p~ - p|` is at most this, in kW...
    pub tol_primal: f64,
    /// ...and `max |p[l+1] - p[l]|` is at most this, in kW.
    pub tol_dual: f64,
    /// Run the operator and residence updates concurrently.
    pub parallel: bool,
    pub scope: ConstraintScope,
    #[serde(skip)]
    pub limits: VoltageLimits,
    pub operator: OperatorSettings,
    /// Keep every iterate in the trace.
    pub keep_iterates: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            max_iters: 500,
            tol_primal: 1e-3,
            tol_dual: 1e-3,
            parallel: true,
            scope: ConstraintScope::AllNodes,
            limits: VoltageLimits::default(),
            operator: OperatorSettings::default(),
            keep_iterates: false,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(RevsError::InvalidParameter(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.tol_primal > 0.0 && self.tol_dual > 0.0) {
            return Err(RevsError::InvalidParameter("ADMM tolerances must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(RevsError::InvalidParameter("max_iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Penalty in $/kW^2 per interval for a network with the given power base.
    ///
    /// `kappa/2 (p / base)^2` in per-unit equals `kappa / base^2 / 2 p^2` in kW.
    pub fn kappa_kw(&self, base_power_kw: f64) -> f64 {
        self.kappa / (base_power_kw * base_power_kw)
    }
}

/// What the operator sends one residence after its update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorMessage {
    pub p_tilde: Vec<f64>,
}

/// What one residence sends the operator after its update.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidenceMessage {
    pub node: NodeId,
    pub p: Vec<f64>,
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    /// Energy cost of the residence-side trajectories of all adopters, base load included.
    pub total_cost: f64,
    /// Value of each adopter's ADMM subproblem at its new trajectory.
    pub residence_objectives: Vec<f64>,
    /// Numbers carried operator to residences and back.
    pub operator_payload: usize,
    pub residence_payload: usize,
    pub operator_inner_iterations: usize,
    pub operator_kkt_residual: f64,
    /// Whether the residence-side trajectories keep every node within limits.
    pub voltage_feasible: bool,
}

/// Trajectories after one iteration, `[adopter][interval]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Iterate {
    pub p_tilde: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct AdmmTrace {
    pub adopters: Vec<NodeId>,
    pub records: Vec<IterationRecord>,
    /// Iterates `0..=iterations` when requested.
    pub iterates: Option<Vec<Iterate>>,
}

impl AdmmTrace {
    pub fn primal_residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.primal_residual).collect()
    }

    pub fn dual_residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dual_residual).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,primal_residual,dual_residual,total_cost\n");
        for r in &self.records {
            out.push_str(&format!("{},{},{},{}\n", r.iter, r.primal_residual, r.dual_residual, r.total_cost));
        }
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConsensusResult {
    /// Residences in network order.
    pub residences: Vec<NodeId>,
    /// Consumption `[residence][interval]` in kW.
    pub p_final: Vec<Vec<f64>>,
    /// Charging schedule of each adopter.
    pub schedules: BTreeMap<NodeId, ChargeSchedule>,
    pub converged: bool,
    pub iterations: usize,
    /// Iteration whose residence-side schedule is reported.
    pub selected_iteration: usize,
    /// Squared voltages `[t][node - 1]` under `p_final`.
    pub voltages: Vec<Vec<f64>>,
    pub voltage_feasible: bool,
    pub trace: AdmmTrace,
}

/// `gamma + kappa/2 (p~ - p)`, elementwise.
pub fn dual_update(gamma: &[Vec<f64>], p_tilde: &[Vec<f64>], p: &[Vec<f64>], kappa: f64) -> Result<Vec<Vec<f64>>> {
    check_len("operator trajectories", gamma.len(), p_tilde.len())?;
    check_len("residence trajectories", gamma.len(), p.len())?;
    gamma
        .iter()
        .zip(p_tilde)
        .zip(p)
        .map(|((g, a), b)| {
            check_len("operator trajectory", g.len(), a.len())?;
            check_len("residence trajectory", g.len(), b.len())?;
            Ok(g.iter().zip(a).zip(b).map(|((g, a), b)| g + 0.5 * kappa * (a - b)).collect())
        })
        .collect()
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn energy_cost(tariff: &Tariff, p: &[f64]) -> f64 {
    p.iter().enumerate().map(|(t, &x)| tariff.rate(t) * x * INTERVAL_HOURS).sum()
}

/// Inputs shared by the distributed and centralized solvers, checked once.
struct Instance<'a> {
    network: &'a DistributionNetwork,
    profiles: &'a [BaseLoadProfile],
    adopters: Vec<NodeId>,
    /// Position of each adopter in `profiles`.
    adopter_rows: Vec<usize>,
    specs: Vec<EvSpec>,
    horizon: usize,
}

impl<'a> Instance<'a> {
    fn new(
        network: &'a DistributionNetwork,
        profiles: &'a [BaseLoadProfile],
        specs: &BTreeMap<NodeId, EvSpec>,
        tariff: &Tariff,
    ) -> Result<Self> {
        let residences = network.residences();
        check_len("base-load profiles", residences.len(), profiles.len())?;
        for (node, profile) in residences.iter().zip(profiles) {
            if profile.node != *node {
                return Err(RevsError::Profile(format!(
                    "profiles must follow network residence order: expected node {node}, found {}",
                    profile.node
                )));
            }
        }
        let horizon = tariff.len();
        for profile in profiles {
            check_len("base-load profile", horizon, profile.len())?;
        }
        let mut adopters = Vec::with_capacity(specs.len());
        let mut adopter_rows = Vec::with_capacity(specs.len());
        let mut spec_list = Vec::with_capacity(specs.len());
        for (node, spec) in specs {
            let row = residences
                .binary_search(node)
                .map_err(|_| RevsError::InvalidParameter(format!("EV owner {node} is not a residence")))?;
            spec.validate_for(horizon)?;
            adopters.push(*node);
            adopter_rows.push(row);
            spec_list.push(*spec);
        }
        Ok(Self {
            network,
            profiles,
            adopters,
            adopter_rows,
            specs: spec_list,
            horizon,
        })
    }

    fn full_trajectories(&self, adopter_p: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut p: Vec<Vec<f64>> = self.profiles.iter().map(|x| x.load_kw.clone()).collect();
        for (&row, traj) in self.adopter_rows.iter().zip(adopter_p) {
            p[row] = traj.clone();
        }
        p
    }

    fn voltages(&self, adopter_p: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        voltage_trajectories(self.network, self.network.residences(), &self.full_trajectories(adopter_p))
    }

    /// Squared-voltage drop `[t][row]` from the residences that do not schedule.
    fn background_drop(&self, scope: ConstraintScope) -> Result<Vec<Vec<f64>>> {
        let mut is_adopter = vec![false; self.profiles.len()];
        for &row in &self.adopter_rows {
            is_adopter[row] = true;
        }
        let loads: Vec<Vec<f64>> = self
            .profiles
            .iter()
            .zip(&is_adopter)
            .map(|(x, &adopts)| if adopts { vec![0.0; self.horizon] } else { x.load_kw.clone() })
            .collect();
        let v = voltage_trajectories(self.network, self.network.residences(), &loads)?;
        let rows = scope.nodes(self.network);
        Ok(v.iter()
            .map(|vt| rows.iter().map(|n| 1.0 - vt[n.0 - 1]).collect())
            .collect())
    }
}

fn voltages_ok(v: &[Vec<f64>], limits: &VoltageLimits) -> bool {
    worst_violation(v, limits) == 0.0
}

/// Largest distance of any squared voltage outside the limits.
fn worst_violation(v: &[Vec<f64>], limits: &VoltageLimits) -> f64 {
    v.iter().map(|vt| check_limits(vt, limits).worst).fold(0.0, f64::max)
}

/// A fallback iterate: rank, iteration, consumption and schedules.
type Candidate = ((f64, f64), usize, Vec<Vec<f64>>, Vec<ChargeSchedule>);

/// Runs the distributed scheme from the individual optima.
///
/// `profiles` holds one base load per residence in network order; `specs`
/// lists the EV owners. On convergence the last residence-side schedule is
/// returned. Otherwise the voltage-feasible iterate with the smallest primal
/// residual is returned, or, when none is feasible, the iterate with the
/// smallest voltage violation.
pub fn run_admm(
    network: &DistributionNetwork,
    profiles: &[BaseLoadProfile],
    specs: &BTreeMap<NodeId, EvSpec>,
    tariff: &Tariff,
    config: &AdmmConfig,
) -> Result<ConsensusResult> {
    config.validate()?;
    let inst = Instance::new(network, profiles, specs, tariff)?;
    let h = inst.adopters.len();
    let kappa = config.kappa_kw(network.base_power_kw());

    let initial = inst
        .adopter_rows
        .iter()
        .zip(&inst.specs)
        .map(|(&row, spec)| solve_individual(&profiles[row], spec, tariff))
        .collect::<Result<Vec<_>>>()?;
    let mut schedules: Vec<ChargeSchedule> = initial.iter().map(|s| s.schedule.clone()).collect();
    let mut p: Vec<Vec<f64>> = initial.into_iter().map(|s| s.p).collect();
    let mut p_tilde = p.clone();
    let mut gamma = vec![vec![0.0; inst.horizon]; h];

    let mut trace = AdmmTrace {
        adopters: inst.adopters.clone(),
        records: Vec::new(),
        iterates: config.keep_iterates.then(|| {
            vec![Iterate {
                p_tilde: p_tilde.clone(),
                p: p.clone(),
                gamma: gamma.clone(),
            }]
        }),
    };

    let finish = |trace: AdmmTrace, p: &[Vec<f64>], schedules: &[ChargeSchedule], converged, iterations, selected| {
        let voltages = inst.voltages(p)?;
        Ok(ConsensusResult {
            residences: network.residences().to_vec(),
            p_final: inst.full_trajectories(p),
            schedules: inst.adopters.iter().copied().zip(schedules.iter().cloned()).collect(),
            converged,
            iterations,
            selected_iteration: selected,
            voltage_feasible: voltages_ok(&voltages, &config.limits),
            voltages,
            trace,
        })
    };

    if h == 0 {
        trace.records.push(IterationRecord {
            iter: 1,
            primal_residual: 0.0,
            dual_residual: 0.0,
            total_cost: 0.0,
            residence_objectives: Vec::new(),
            operator_payload: 0,
            residence_payload: 0,
            operator_inner_iterations: 0,
            operator_kkt_residual: 0.0,
            voltage_feasible: voltages_ok(&inst.voltages(&p)?, &config.limits),
        });
        return finish(trace, &p, &schedules, true, 1, 1);
    }

    let r = build_sensitivity(network);
    let rows = OperatorProblem::constraint_rows(&r, network, &inst.adopters, config.scope);
    let mut problem = OperatorProblem::new(
        rows,
        config.limits,
        kappa,
        vec![vec![0.0; inst.horizon]; h],
        network.base_power_kw(),
    )?
    .with_background(inst.background_drop(config.scope)?)?;
    let settings = OperatorSettings {
        parallel: config.parallel && config.operator.parallel,
        ..config.operator
    };
    let mut warm: Option<Vec<IntervalMultipliers>> = None;
    // ranked by (violation, primal residual)
    let mut best: Option<Candidate> = None;

    for iter in 1..=config.max_iters {
        problem.set_linear_terms(OperatorProblem::consensus_terms(&gamma, &p_tilde, &p, kappa))?;

        let operator_step = || solve_operator_step_with(&problem, &settings, warm.as_deref());
        let residence_step = |j: usize| {
            let state = ResidenceAdmmState::new(p[j].clone(), p_tilde[j].clone(), gamma[j].clone(), kappa)?;
            let sol = solve_admm_step(&profiles[inst.adopter_rows[j]], &inst.specs[j], tariff, &state)?;
            let msg = ResidenceMessage {
                node: inst.adopters[j],
                p: sol.p,
            };
            Ok((msg, sol.schedule, sol.objective))
        };
        let (op, res): (Result<_>, Vec<Result<_>>) = if config.parallel {
            use rayon::prelude::*;
            rayon::join(operator_step, || (0..h).into_par_iter().map(residence_step).collect())
        } else {
            (operator_step(), (0..h).map(residence_step).collect())
        };
        let op = op?;
        let to_residences: Vec<OperatorMessage> =
            op.p_tilde.iter().map(|x| OperatorMessage { p_tilde: x.clone() }).collect();

        let mut p_next = Vec::with_capacity(h);
        let mut schedules_next = Vec::with_capacity(h);
        let mut objectives = Vec::with_capacity(h);
        let mut residence_payload = 0;
        for item in res {
            let (msg, schedule, objective) = item?;
            residence_payload += msg.p.len();
            p_next.push(msg.p);
            schedules_next.push(schedule);
            objectives.push(objective);
        }
        let operator_payload = to_residences.iter().map(|m| m.p_tilde.len()).sum();
        let p_tilde_next: Vec<Vec<f64>> = to_residences.into_iter().map(|m| m.p_tilde).collect();

        let gamma_next = dual_update(&gamma, &p_tilde_next, &p_next, kappa)?;
        let primal = max_abs_diff(&p_tilde_next, &p_next);
        let dual = max_abs_diff(&p_next, &p);
        let violation = worst_violation(&inst.voltages(&p_next)?, &config.limits);
        let feasible = violation == 0.0;
        trace.records.push(IterationRecord {
            iter,
            primal_residual: primal,
            dual_residual: dual,
            total_cost: p_next.iter().map(|x| energy_cost(tariff, x)).sum(),
            residence_objectives: objectives,
            operator_payload,
            residence_payload,
            operator_inner_iterations: op.iterations,
            operator_kkt_residual: op.kkt_residual,
            voltage_feasible: feasible,
        });
        if let Some(its) = trace.iterates.as_mut() {
            its.push(Iterate {
                p_tilde: p_tilde_next.clone(),
                p: p_next.clone(),
                gamma: gamma_next.clone(),
            });
        }
        let rank = (violation, primal);
        if best.as_ref().is_none_or(|b| rank < b.0) {
            best = Some((rank, iter, p_next.clone(), schedules_next.clone()));
        }

        p = p_next;
        p_tilde = p_tilde_next;
        gamma = gamma_next;
        schedules = schedules_next;
        warm = Some(op.multipliers);

        if primal <= config.tol_primal && dual <= config.tol_dual {
            return finish(trace, &p, &schedules, true, iter, iter);
        }
    }

    let (_, at, bp, bs) = best.expect("at least one iteration ran");
    finish(trace, &bp, &bs, false, config.max_iters, at)
}

/// Options for the exhaustive joint search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub limits: VoltageLimits,
    pub scope: ConstraintScope,
    /// Refuse instances with more joint schedules than this.
    pub max_combinations: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            limits: VoltageLimits::default(),
            scope: ConstraintScope::AllNodes,
            max_combinations: 1e7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CentralizedSolution {
    pub schedules: BTreeMap<NodeId, ChargeSchedule>,
    /// Energy cost per adopter, base load included.
    pub costs: BTreeMap<NodeId, f64>,
    /// Sum of `costs`.
    pub objective: f64,
}

/// Feasible on/off patterns of one adopter, cheapest first.
fn enumerate_schedules(profile: &BaseLoadProfile, spec: &EvSpec, tariff: &Tariff) -> Vec<(f64, Vec<usize>)> {
    let window: Vec<usize> = spec.window.intervals().collect();
    let counts = spec.charge_count_range();
    let mut out = Vec::new();
    let mut pick = Vec::new();
    fn rec(window: &[usize], from: usize, need: usize, pick: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if need == 0 {
            out.push(pick.clone());
            return;
        }
        for k in from..=window.len() - need {
            pick.push(window[k]);
            rec(window, k + 1, need - 1, pick, out);
            pick.pop();
        }
    }
    let mut sets = Vec::new();
    for n in counts {
        rec(&window, 0, n, &mut pick, &mut sets);
    }
    let base = energy_cost(tariff, &profile.load_kw);
    for set in sets {
        let ev: f64 = set.iter().map(|&t| tariff.rate(t) * spec.charger_kw * INTERVAL_HOURS).sum();
        out.push((base + ev, set));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    out
}

fn binomial_sum(n: usize, ks: std::ops::RangeInclusive<usize>) -> f64 {
    ks.map(|k| {
        let mut c = 1.0;
        for i in 0..k {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        c
    })
    .sum()
}

struct Search<'a> {
    /// Schedules per adopter, cheapest first.
    options: Vec<Vec<(f64, Vec<usize>)>>,
    /// Squared-voltage drop per kW at each constrained node, per adopter.
    unit_drop: Vec<Vec<f64>>,
    charger_kw: Vec<f64>,
    /// Cheapest cost of adopters `k..`.
    tail_min: Vec<f64>,
    limits: &'a VoltageLimits,
    /// Current squared voltage `[t][row]`.
    v: Vec<Vec<f64>>,
    pick: Vec<usize>,
    best: Option<(f64, Vec<usize>)>,
}

impl Search<'_> {
    fn run(&mut self, k: usize, cost: f64) {
        if k == self.options.len() {
            if self.best.as_ref().is_none_or(|b| cost < b.0) {
                self.best = Some((cost, self.pick.clone()));
            }
            return;
        }
        for idx in 0..self.options[k].len() {
            let c = self.options[k][idx].0;
            if let Some(b) = &self.best {
                // later options only cost more
                if cost + c + self.tail_min[k + 1] >= b.0 {
                    break;
                }
            }
            let scale: Vec<f64> = self.unit_drop[k].iter().map(|d| d * self.charger_kw[k]).collect();
            let mut ok = true;
            for &t in &self.options[k][idx].1 {
                for (v, d) in self.v[t].iter_mut().zip(&scale) {
                    *v -= d;
                    ok &= *v >= self.limits.alpha;
                }
            }
            // loads only lower voltages, so a violation cannot be repaired deeper down
            if ok {
                self.pick.push(idx);
                self.run(k + 1, cost + c);
                self.pick.pop();
            }
            for &t in &self.options[k][idx].1 {
                for (v, d) in self.v[t].iter_mut().zip(&scale) {
                    *v += d;
                }
            }
        }
    }
}

/// Cheapest joint schedule that keeps every constrained node within limits,
/// found by exhaustive search with cost and voltage pruning.
pub fn centralized_oracle(
    network: &DistributionNetwork,
    profiles: &[BaseLoadProfile],
    specs: &BTreeMap<NodeId, EvSpec>,
    tariff: &Tariff,
    options: &OracleOptions,
) -> Result<CentralizedSolution> {
    let inst = Instance::new(network, profiles, specs, tariff)?;
    let combos: f64 = inst
        .specs
        .iter()
        .map(|s| binomial_sum(s.window.len(), s.charge_count_range()))
        .product();
    if combos > options.max_combinations {
        return Err(RevsError::TooLarge(format!(
            "{combos:.3e} joint schedules exceed the limit of {:.3e}",
            options.max_combinations
        )));
    }

    let scheds: Vec<_> = inst
        .adopter_rows
        .iter()
        .zip(&inst.specs)
        .map(|(&row, spec)| enumerate_schedules(&profiles[row], spec, tariff))
        .collect();
    let mut tail_min = vec![0.0; scheds.len() + 1];
    for k in (0..scheds.len()).rev() {
        tail_min[k] = tail_min[k + 1] + scheds[k].first().map_or(0.0, |s| s.0);
    }
    let rows = options.scope.nodes(network);
    let r = build_sensitivity(network);
    let base = network.base_power_kw();
    let unit_drop = inst
        .adopters
        .iter()
        .map(|a| rows.iter().map(|n| 2.0 * r.get(*n, *a) / base).collect())
        .collect();
    let background = inst.background_drop(options.scope)?;
    let v: Vec<Vec<f64>> = inst
        .adopter_rows
        .iter()
        .fold(background, |mut drop, &row| {
            for (t, d) in drop.iter_mut().enumerate() {
                for (dk, n) in d.iter_mut().zip(&rows) {
                    *dk += 2.0 * r.get(*n, profiles[row].node) * profiles[row].load_kw[t] / base;
                }
            }
            drop
        })
        .into_iter()
        .map(|d| d.into_iter().map(|x| 1.0 - x).collect())
        .collect();
    if !voltages_ok(&v, &options.limits) {
        return Err(RevsError::Infeasible("base load alone violates the voltage limits".into()));
    }

    let mut search = Search {
        options: scheds,
        unit_drop,
        charger_kw: inst.specs.iter().map(|s| s.charger_kw).collect(),
        tail_min,
        limits: &options.limits,
        v,
        pick: Vec::new(),
        best: None,
    };
    search.run(0, 0.0);
    let (objective, pick) = search
        .best
        .ok_or_else(|| RevsError::Infeasible("no joint schedule satisfies the voltage limits".into()))?;

    let mut schedules = BTreeMap::new();
    let mut costs = BTreeMap::new();
    for (k, &idx) in pick.iter().enumerate() {
        let (cost, on) = &search.options[k][idx];
        let mut z = vec![false; inst.horizon];
        for &t in on {
            z[t] = true;
        }
        schedules.insert(inst.adopters[k], crate::tariff::soc_trajectory(&inst.specs[k], &z)?);
        costs.insert(inst.adopters[k], *cost);
    }
    Ok(CentralizedSolution {
        schedules,
        costs,
        objective,
    })
}

/// Energy cost of each adopter in a distributed result, base load included.
pub fn adopter_costs(result: &ConsensusResult, tariff: &Tariff) -> BTreeMap<NodeId, f64> {
    result
        .residences
        .iter()
        .zip(&result.p_final)
        .filter(|(n, _)| result.schedules.contains_key(n))
        .map(|(n, p)| (*n, energy_cost(tariff, p)))
        .collect()
}
