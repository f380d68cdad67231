//! The network operator's update: a strongly convex QP in the residence
//! trajectories with linearized voltage-band constraints.
//!
//! For each interval `t` the operator solves
//!
//! ```text
//! min  sum_i kappa/2 x_i^2 + q_i x_i
//! s.t. alpha <= 1 - A x <= beta,      A = (2 / base_power) R_rows
//! ```
//!
//! where `R_rows` holds the path resistances between the constrained nodes
//! and the residences. Intervals are independent. Each one is solved on the
//! dual: the multipliers of the two one-sided voltage constraints are kept
//! non-negative by projection, and the primal point is recovered in closed
//! form as `x = -(q + A^T (lambda - mu)) / kappa`. Steps use `1/L` with `L`
//! the Lipschitz constant of the dual gradient, plus Nesterov momentum with
//! gradient-based restart.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, RevsError, Result};
use crate::network::{DistributionNetwork, NodeId, SensitivityMatrix, VoltageLimits};

/// Which node voltages the operator constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintScope {
    /// Every non-substation node.
    #[default]
    AllNodes,
    /// Residence nodes only.
    ResidencesOnly,
}

impl ConstraintScope {
    /// Constrained nodes, in id order.
    pub fn nodes(self, network: &DistributionNetwork) -> Vec<NodeId> {
        match self {
            ConstraintScope::AllNodes => (1..=network.n()).map(NodeId).collect(),
            ConstraintScope::ResidencesOnly => network.residences().to_vec(),
        }
    }
}

/// Stopping rule and limits for the inner QP solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorSettings {
    pub max_inner_iters: usize,
    /// Largest tolerated voltage-band violation, in squared p.u.
    pub primal_tol: f64,
    /// Largest tolerated complementarity residual `min(multiplier, slack)`.
    pub dual_tol: f64,
    /// Solve intervals on the rayon pool.
    pub parallel: bool,
}

impl Default for OperatorSettings {
    fn default() -> Self {
        Self {
            max_inner_iters: 50_000,
            primal_tol: 1e-9,
            dual_tol: 1e-9,
            parallel: true,
        }
    }
}

/// One operator update.
#[derive(Debug, Clone)]
pub struct OperatorProblem {
    rows: DMatrix<f64>,
    limits: VoltageLimits,
    kappa: f64,
    /// Coefficients `q[i][t]` of the linear term, per residence and interval.
    linear_terms: Vec<Vec<f64>>,
    base_power_kw: f64,
    /// `A = (2 / base) rows`.
    a: DMatrix<f64>,
    /// Fixed squared-voltage drop `[t][row]` from loads outside the problem.
    background: Vec<Vec<f64>>,
}

impl OperatorProblem {
    /// `rows` is `m x H`: sensitivity of each constrained node to each residence.
    /// Powers are in the units of `base_power_kw` (pass 1.0 to work in p.u.).
    pub fn new(
        rows: DMatrix<f64>,
        limits: VoltageLimits,
        kappa: f64,
        linear_terms: Vec<Vec<f64>>,
        base_power_kw: f64,
    ) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(RevsError::InvalidParameter(format!("kappa must be positive, got {kappa}")));
        }
        if !(base_power_kw.is_finite() && base_power_kw > 0.0) {
            return Err(RevsError::InvalidParameter(format!(
                "base power must be positive, got {base_power_kw}"
            )));
        }
        check_len("operator linear terms", rows.ncols(), linear_terms.len())?;
        if let Some(first) = linear_terms.first() {
            for q in &linear_terms {
                check_len("operator linear terms per residence", first.len(), q.len())?;
            }
        }
        if rows.iter().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return Err(RevsError::InvalidParameter("sensitivities must be non-negative".into()));
        }
        let a = &rows * (2.0 / base_power_kw);
        Ok(Self {
            rows,
            limits,
            kappa,
            linear_terms,
            base_power_kw,
            a,
            background: Vec::new(),
        })
    }

    /// Adds a fixed drop `[t][row]` on top of `A x`, e.g. from loads the
    /// operator does not schedule.
    pub fn with_background(mut self, drop: Vec<Vec<f64>>) -> Result<Self> {
        check_len("background drop", self.intervals(), drop.len())?;
        for d in &drop {
            check_len("background drop per interval", self.constraints(), d.len())?;
        }
        self.background = drop;
        Ok(self)
    }

    /// Replaces the linear terms, keeping the constraint data.
    pub fn set_linear_terms(&mut self, linear_terms: Vec<Vec<f64>>) -> Result<()> {
        check_len("operator linear terms", self.residences(), linear_terms.len())?;
        for q in &linear_terms {
            check_len("operator linear terms per residence", self.intervals(), q.len())?;
        }
        self.linear_terms = linear_terms;
        Ok(())
    }

    /// Sensitivity rows for the given residences under `scope`.
    pub fn constraint_rows(
        r: &SensitivityMatrix,
        network: &DistributionNetwork,
        residences: &[NodeId],
        scope: ConstraintScope,
    ) -> DMatrix<f64> {
        r.submatrix(&scope.nodes(network), residences)
    }

    /// Linear terms `gamma - kappa/2 (p~[l] + p[l])`, all indexed `[residence][interval]`.
    pub fn consensus_terms(gamma: &[Vec<f64>], p_tilde: &[Vec<f64>], p: &[Vec<f64>], kappa: f64) -> Vec<Vec<f64>> {
        gamma
            .iter()
            .zip(p_tilde)
            .zip(p)
            .map(|((g, pt), pl)| {
                g.iter()
                    .zip(pt)
                    .zip(pl)
                    .map(|((g, a), b)| g - 0.5 * kappa * a - 0.5 * kappa * b)
                    .collect()
            })
            .collect()
    }

    pub fn residences(&self) -> usize {
        self.rows.ncols()
    }

    pub fn constraints(&self) -> usize {
        self.rows.nrows()
    }

    pub fn intervals(&self) -> usize {
        self.linear_terms.first().map_or(0, Vec::len)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn limits(&self) -> VoltageLimits {
        self.limits
    }

    pub fn linear_terms(&self) -> &[Vec<f64>] {
        &self.linear_terms
    }

    pub fn rows(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn base_power_kw(&self) -> f64 {
        self.base_power_kw
    }

    fn q_at(&self, t: usize) -> DVector<f64> {
        DVector::from_iterator(self.residences(), self.linear_terms.iter().map(|q| q[t]))
    }

    /// Squared voltages at the constrained nodes when nothing in the problem draws power.
    fn v_free(&self, t: usize) -> DVector<f64> {
        match self.background.get(t) {
            Some(d) => DVector::from_iterator(d.len(), d.iter().map(|d| 1.0 - d)),
            None => DVector::from_element(self.constraints(), 1.0),
        }
    }

    /// Squared voltages at the constrained nodes for residence powers `x` at interval `t`.
    pub fn voltages(&self, t: usize, x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        (self.v_free(t) - &self.a * xv).iter().copied().collect()
    }

    /// Objective value of a full `[residence][interval]` trajectory.
    pub fn objective(&self, p_tilde: &[Vec<f64>]) -> f64 {
        p_tilde
            .iter()
            .zip(&self.linear_terms)
            .map(|(x, q)| {
                x.iter()
                    .zip(q)
                    .map(|(x, q)| 0.5 * self.kappa * x * x + x * q)
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Multipliers of the lower (`v >= alpha`) and upper (`v <= beta`) voltage constraints at one interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalMultipliers {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OperatorSolution {
    /// Operator trajectories, `[residence][interval]`.
    pub p_tilde: Vec<Vec<f64>>,
    pub multipliers: Vec<IntervalMultipliers>,
    /// Inner iterations summed over intervals.
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Solves the operator update with default settings from a cold start.
pub fn solve_operator_step(problem: &OperatorProblem) -> Result<OperatorSolution> {
    solve_operator_step_with(problem, &OperatorSettings::default(), None)
}

/// Solves the operator update, optionally warm-starting from earlier multipliers.
pub fn solve_operator_step_with(
    problem: &OperatorProblem,
    settings: &OperatorSettings,
    warm: Option<&[IntervalMultipliers]>,
) -> Result<OperatorSolution> {
    let horizon = problem.intervals();
    let m = problem.constraints();
    if let Some(w) = warm {
        check_len("warm-start multipliers", horizon, w.len())?;
        for wt in w {
            check_len("warm-start multipliers per interval", m, wt.lower.len())?;
            check_len("warm-start multipliers per interval", m, wt.upper.len())?;
        }
    }
    let lipschitz = dual_lipschitz(&problem.a, problem.kappa);
    let solve = |t: usize| solve_interval(problem, t, lipschitz, settings, warm.map(|w| &w[t]));
    let per_t: Vec<Result<IntervalSolution>> = if settings.parallel {
        (0..horizon).into_par_iter().map(solve).collect()
    } else {
        (0..horizon).map(solve).collect()
    };

    let h = problem.residences();
    let mut p_tilde = vec![vec![0.0; horizon]; h];
    let mut multipliers = Vec::with_capacity(horizon);
    let mut iterations = 0;
    for (t, sol) in per_t.into_iter().enumerate() {
        let sol = sol?;
        for (i, x) in sol.x.iter().enumerate() {
            p_tilde[i][t] = *x;
        }
        iterations += sol.iterations;
        multipliers.push(sol.multipliers);
    }
    let mut out = OperatorSolution {
        p_tilde,
        multipliers,
        iterations,
        kkt_residual: 0.0,
    };
    out.kkt_residual = verify_kkt(problem, &out);
    Ok(out)
}

struct IntervalSolution {
    x: Vec<f64>,
    multipliers: IntervalMultipliers,
    iterations: usize,
}

/// Largest eigenvalue of `A^T A` by power iteration, times the factor 2
/// from stacking the lower and upper constraints, over `kappa`.
fn dual_lipschitz(a: &DMatrix<f64>, kappa: f64) -> f64 {
    let ata = a.transpose() * a;
    let n = ata.nrows();
    if n == 0 {
        return 1.0;
    }
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..500 {
        let w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 1.0;
        }
        let next = w / norm;
        let converged = (norm - lambda).abs() <= 1e-12 * norm;
        lambda = norm;
        v = next;
        if converged {
            break;
        }
    }
    // power iteration approaches from below
    (2.0 * lambda / kappa * 1.02).max(f64::MIN_POSITIVE)
}

struct DualPoint {
    x: DVector<f64>,
    /// `v - alpha` and `beta - v`.
    slack_lo: DVector<f64>,
    slack_hi: DVector<f64>,
}

struct IntervalData {
    q: DVector<f64>,
    v_free: DVector<f64>,
}

fn evaluate(problem: &OperatorProblem, data: &IntervalData, lower: &DVector<f64>, upper: &DVector<f64>) -> DualPoint {
    let w = lower - upper;
    let x = -(&data.q + problem.a.tr_mul(&w)) / problem.kappa;
    let v = &data.v_free - &problem.a * &x;
    let lim = problem.limits;
    DualPoint {
        slack_lo: v.map(|v| v - lim.alpha),
        slack_hi: v.map(|v| lim.beta - v),
        x,
    }
}

fn residuals(pt: &DualPoint, lower: &DVector<f64>, upper: &DVector<f64>) -> (f64, f64) {
    let mut primal = 0.0f64;
    let mut dual = 0.0f64;
    for i in 0..lower.len() {
        primal = primal.max(-pt.slack_lo[i]).max(-pt.slack_hi[i]);
        // complementarity is checked on the product too, since the
        // multipliers can be large in kW units
        dual = dual
            .max(lower[i].min(pt.slack_lo[i].max(0.0)))
            .max(upper[i].min(pt.slack_hi[i].max(0.0)))
            .max((lower[i] * pt.slack_lo[i]).abs())
            .max((upper[i] * pt.slack_hi[i]).abs());
    }
    (primal, dual)
}

fn solve_interval(
    problem: &OperatorProblem,
    t: usize,
    lipschitz: f64,
    settings: &OperatorSettings,
    warm: Option<&IntervalMultipliers>,
) -> Result<IntervalSolution> {
    let m = problem.constraints();
    let q = IntervalData {
        q: problem.q_at(t),
        v_free: problem.v_free(t),
    };
    let (mut lower, mut upper) = match warm {
        Some(w) => (
            DVector::from_iterator(m, w.lower.iter().map(|v| v.max(0.0))),
            DVector::from_iterator(m, w.upper.iter().map(|v| v.max(0.0))),
        ),
        None => (DVector::zeros(m), DVector::zeros(m)),
    };
    let done = |x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>, iterations| IntervalSolution {
        x: x.iter().copied().collect(),
        multipliers: IntervalMultipliers {
            lower: lower.iter().copied().collect(),
            upper: upper.iter().copied().collect(),
        },
        iterations,
    };

    let mut current = evaluate(problem, &q, &lower, &upper);
    let (mut primal, mut dual) = residuals(&current, &lower, &upper);
    if primal < settings.primal_tol && dual < settings.dual_tol {
        return Ok(done(&current.x, &lower, &upper, 0));
    }
    if warm.is_some() {
        // a stale warm start can be worse than the unconstrained point
        let zero = DVector::zeros(m);
        let cold = evaluate(problem, &q, &zero, &zero);
        let (p0, d0) = residuals(&cold, &zero, &zero);
        if p0 < settings.primal_tol && d0 < settings.dual_tol {
            return Ok(done(&cold.x, &zero, &zero, 0));
        }
    }

    let step = 1.0 / lipschitz;
    let (mut y_lo, mut y_hi) = (lower.clone(), upper.clone());
    let mut theta = 1.0f64;
    for k in 1..=settings.max_inner_iters {
        let at_y = evaluate(problem, &q, &y_lo, &y_hi);
        let next_lo = (&y_lo - &at_y.slack_lo * step).map(|v| v.max(0.0));
        let next_hi = (&y_hi - &at_y.slack_hi * step).map(|v| v.max(0.0));

        current = evaluate(problem, &q, &next_lo, &next_hi);
        (primal, dual) = residuals(&current, &next_lo, &next_hi);
        if primal < settings.primal_tol && dual < settings.dual_tol {
            return Ok(done(&current.x, &next_lo, &next_hi, k));
        }

        let restart = (&y_lo - &next_lo).dot(&(&next_lo - &lower)) + (&y_hi - &next_hi).dot(&(&next_hi - &upper)) > 0.0;
        if restart {
            theta = 1.0;
            y_lo = next_lo.clone();
            y_hi = next_hi.clone();
        } else {
            let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let beta = (theta - 1.0) / theta_next;
            y_lo = (&next_lo + (&next_lo - &lower) * beta).map(|v| v.max(0.0));
            y_hi = (&next_hi + (&next_hi - &upper) * beta).map(|v| v.max(0.0));
            theta = theta_next;
        }
        lower = next_lo;
        upper = next_hi;
    }
    Err(RevsError::OperatorNonConvergence {
        interval: t,
        iterations: settings.max_inner_iters,
        primal,
        dual,
    })
}

/// Largest KKT residual of a candidate solution: stationarity, primal
/// feasibility, dual feasibility and complementary slackness.
pub fn verify_kkt(problem: &OperatorProblem, solution: &OperatorSolution) -> f64 {
    let horizon = problem.intervals();
    let h = problem.residences();
    if solution.p_tilde.len() != h
        || solution.p_tilde.iter().any(|x| x.len() != horizon)
        || solution.multipliers.len() != horizon
    {
        return f64::INFINITY;
    }
    let m = problem.constraints();
    let lim = problem.limits;
    let mut worst = 0.0f64;
    for t in 0..horizon {
        let mult = &solution.multipliers[t];
        if mult.lower.len() != m || mult.upper.len() != m {
            return f64::INFINITY;
        }
        let x = DVector::from_iterator(h, solution.p_tilde.iter().map(|row| row[t]));
        let w = DVector::from_iterator(m, mult.lower.iter().zip(&mult.upper).map(|(a, b)| a - b));
        let grad = &x * problem.kappa + problem.q_at(t) + problem.a.tr_mul(&w);
        worst = worst.max(grad.amax());
        let v = problem.v_free(t) - &problem.a * &x;
        for i in 0..m {
            let s_lo = v[i] - lim.alpha;
            let s_hi = lim.beta - v[i];
            worst = worst
                .max(-s_lo)
                .max(-s_hi)
                .max(-mult.lower[i])
                .max(-mult.upper[i])
                .max((mult.lower[i] * s_lo).abs())
                .max((mult.upper[i] * s_hi).abs());
        }
    }
    worst
}
