//! Residence-side scheduling problems.
//!
//! Both the cost-only problem and the ADMM-regularized problem are separable
//! over intervals once the on/off vector is fixed, and with a single
//! contiguous window the SOC constraints reduce to bounds on the number of
//! charging intervals. Each problem is therefore solved exactly by ranking
//! the per-interval cost of switching the charger on and taking the best
//! prefix whose length is an admissible on-count.

use serde::Serialize;

use crate::error::{check_len, RevsError, Result};
use crate::tariff::{
    apply_schedule, soc_trajectory, BaseLoadProfile, ChargeSchedule, EvSpec, Tariff, INTERVAL_HOURS,
};

/// Largest window the brute-force oracle will enumerate.
pub const ORACLE_MAX_WINDOW: usize = 20;

/// Iteration-`l` data a residence needs for its ADMM update, all in kW.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidenceAdmmState {
    /// The residence's own previous trajectory `p_i[l]`.
    pub p_local: Vec<f64>,
    /// The operator's estimate `p~_i[l]`.
    pub p_operator: Vec<f64>,
    /// Consensus multipliers `gamma_i[l]`.
    pub gamma: Vec<f64>,
    pub kappa: f64,
}

impl ResidenceAdmmState {
    pub fn new(p_local: Vec<f64>, p_operator: Vec<f64>, gamma: Vec<f64>, kappa: f64) -> Result<Self> {
        check_len("operator trajectory", p_local.len(), p_operator.len())?;
        check_len("dual trajectory", p_local.len(), gamma.len())?;
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(RevsError::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        Ok(Self {
            p_local,
            p_operator,
            gamma,
            kappa,
        })
    }

    pub fn len(&self) -> usize {
        self.p_local.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p_local.is_empty()
    }
}

/// Objective of a residence subproblem, evaluated interval by interval.
#[derive(Debug, Clone, Copy)]
pub enum Objective<'a> {
    /// Energy cost `sum_t c_t p_t dt`.
    Cost,
    /// Energy cost plus the ADMM consensus regularizer.
    Admm(&'a ResidenceAdmmState),
}

impl Objective<'_> {
    /// Contribution of interval `t` when the residence draws `p` kW.
    pub fn interval(&self, tariff: &Tariff, t: usize, p: f64) -> f64 {
        let cost = tariff.rate(t) * p * INTERVAL_HOURS;
        match self {
            Objective::Cost => cost,
            Objective::Admm(s) => {
                let k = s.kappa;
                cost + 0.5 * k * p * p - p * (s.gamma[t] + 0.5 * k * s.p_operator[t] + 0.5 * k * s.p_local[t])
            }
        }
    }

    /// Change in interval `t` when a charger of `charger_kw` is added to `p0`.
    pub fn on_delta(&self, tariff: &Tariff, t: usize, p0: f64, charger_kw: f64) -> f64 {
        let cost = tariff.rate(t) * INTERVAL_HOURS;
        match self {
            Objective::Cost => charger_kw * cost,
            Objective::Admm(s) => {
                let k = s.kappa;
                let pull = s.gamma[t] + 0.5 * k * s.p_operator[t] + 0.5 * k * s.p_local[t];
                charger_kw * (cost + 0.5 * k * charger_kw + (k * p0 - pull))
            }
        }
    }

    pub fn total(&self, tariff: &Tariff, p: &[f64]) -> f64 {
        p.iter()
            .enumerate()
            .map(|(t, &pt)| self.interval(tariff, t, pt))
            .sum()
    }
}

/// Optimal schedule of one residence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidenceSolution {
    pub schedule: ChargeSchedule,
    /// Total consumption in kW.
    pub p: Vec<f64>,
    pub objective: f64,
}

fn check_inputs(profile: &BaseLoadProfile, tariff: &Tariff, state: Option<&ResidenceAdmmState>) -> Result<()> {
    check_len("tariff", profile.len(), tariff.len())?;
    if let Some(s) = state {
        check_len("ADMM state", profile.len(), s.len())?;
    }
    Ok(())
}

fn select_schedule(
    profile: &BaseLoadProfile,
    spec: &EvSpec,
    tariff: &Tariff,
    objective: Objective<'_>,
) -> Result<ResidenceSolution> {
    let horizon = profile.len();
    spec.validate_for(horizon)?;
    let counts = spec.charge_count_range();
    let (lo, hi) = (*counts.start(), *counts.end());

    let mut deltas: Vec<(f64, usize)> = spec
        .window
        .intervals()
        .map(|t| {
            let delta = objective.on_delta(tariff, t, profile.load_kw[t], spec.charger_kw);
            (delta, t)
        })
        .collect();
    deltas.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut acc: f64 = deltas[..lo].iter().map(|d| d.0).sum();
    let (mut best_n, mut best) = (lo, acc);
    for n in lo + 1..=hi {
        acc += deltas[n - 1].0;
        if acc < best {
            best = acc;
            best_n = n;
        }
    }

    let mut z = vec![false; horizon];
    for &(_, t) in &deltas[..best_n] {
        z[t] = true;
    }
    finish(profile, spec, tariff, objective, z)
}

fn finish(
    profile: &BaseLoadProfile,
    spec: &EvSpec,
    tariff: &Tariff,
    objective: Objective<'_>,
    z: Vec<bool>,
) -> Result<ResidenceSolution> {
    let schedule = soc_trajectory(spec, &z)?;
    let p = apply_schedule(profile, spec, &z)?;
    let objective = objective.total(tariff, &p);
    Ok(ResidenceSolution { schedule, p, objective })
}

/// Cheapest schedule under the tariff alone.
///
/// Each charging interval costs `c_t P dt > 0`, so the optimum charges the
/// minimum number of intervals at the lowest in-window rates, earliest first
/// on ties.
pub fn solve_individual(profile: &BaseLoadProfile, spec: &EvSpec, tariff: &Tariff) -> Result<ResidenceSolution> {
    check_inputs(profile, tariff, None)?;
    select_schedule(profile, spec, tariff, Objective::Cost)
}

/// Exact solution of the residence ADMM update.
pub fn solve_admm_step(
    profile: &BaseLoadProfile,
    spec: &EvSpec,
    tariff: &Tariff,
    state: &ResidenceAdmmState,
) -> Result<ResidenceSolution> {
    check_inputs(profile, tariff, Some(state))?;
    select_schedule(profile, spec, tariff, Objective::Admm(state))
}

/// A residence without an EV: consumption is its base load.
pub fn solve_without_ev(
    profile: &BaseLoadProfile,
    tariff: &Tariff,
    state: Option<&ResidenceAdmmState>,
) -> Result<ResidenceSolution> {
    check_inputs(profile, tariff, state)?;
    let p = profile.load_kw.clone();
    let objective = match state {
        Some(s) => Objective::Admm(s).total(tariff, &p),
        None => Objective::Cost.total(tariff, &p),
    };
    Ok(ResidenceSolution {
        schedule: ChargeSchedule {
            on: vec![false; p.len()],
            soc: Vec::new(),
        },
        p,
        objective,
    })
}

/// Exhaustive search over every on/off pattern inside the window.
///
/// Feasibility is decided by simulating the battery, not by on-count
/// bounds. Ties within 1e-12 relative prefer fewer charging intervals, then
/// the earlier set of intervals.
pub fn brute_force_oracle(
    profile: &BaseLoadProfile,
    spec: &EvSpec,
    tariff: &Tariff,
    state: Option<&ResidenceAdmmState>,
) -> Result<ResidenceSolution> {
    check_inputs(profile, tariff, state)?;
    let w = spec.window;
    if w.len() > ORACLE_MAX_WINDOW {
        return Err(RevsError::TooLarge(format!(
            "window of {} intervals exceeds the oracle limit of {ORACLE_MAX_WINDOW}",
            w.len()
        )));
    }
    let objective = match state {
        Some(s) => Objective::Admm(s),
        None => Objective::Cost,
    };
    let horizon = profile.len();
    let mut best: Option<(f64, Vec<usize>, Vec<bool>)> = None;
    for mask in 0u32..(1u32 << w.len()) {
        let mut z = vec![false; horizon];
        let mut on = Vec::new();
        for b in 0..w.len() {
            if mask & (1 << b) != 0 {
                let t = w.start + b;
                if t >= horizon {
                    break;
                }
                z[t] = true;
                on.push(t);
            }
        }
        if soc_trajectory(spec, &z).is_err() {
            continue;
        }
        let p = apply_schedule(profile, spec, &z)?;
        let value = objective.total(tariff, &p);
        let better = match &best {
            None => true,
            Some((b, b_on, _)) => {
                let tol = 1e-12 * b.abs().max(1.0);
                value < b - tol || ((value - b).abs() <= tol && (on.len(), &on) < (b_on.len(), b_on))
            }
        };
        if better {
            best = Some((value, on, z));
        }
    }
    match best {
        Some((_, _, z)) => finish(profile, spec, tariff, objective, z),
        None => Err(RevsError::InfeasibleSpec("no on/off pattern satisfies the SOC constraints".into())),
    }
}
