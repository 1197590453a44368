//! The bracket `[m_L, m_U]` for the optimal expected indemnity and the
//! degenerate two-point case.

use serde::{Deserialize, Serialize};

use crate::arrow::{is_variance_slack, ArrowSolution};
use crate::error::{Error, Result};
use crate::loss_model::GridMeasure;
use crate::problem::ContractProblem;
use crate::root::bisect_predicate;
use crate::solver::{ContractSolution, Diagnostics, Regime};

/// Relative tolerance on `m_U - m_L` (in units of `E[X]`) below which the
/// bracket is treated as a single point.
pub const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndemnityBracket {
    /// Smallest deductible above `d*` whose stop-loss variance meets the bound.
    pub d_l: f64,
    pub m_l: f64,
    /// Smallest cap whose capped-loss variance reaches the bound.
    pub k_u: f64,
    pub m_u: f64,
    pub degenerate: bool,
}

pub fn compute_bracket(measure: &GridMeasure, arrow: &ArrowSolution, nu: f64) -> Result<IndemnityBracket> {
    if is_variance_slack(arrow, nu) {
        return Err(Error::Contract(format!(
            "variance bound {nu} is slack (var[(X-d*)+] = {}); the stop-loss at d* is optimal",
            arrow.var_at_d
        )));
    }
    let m = measure.support_max();
    // both variance maps are continuous and monotone; bisect to machine precision
    let xtol = 4.0 * f64::EPSILON * m;
    let (_, d_l) = bisect_predicate(|d| Ok(measure.stop_loss_var(d) > nu), arrow.d_star, m, xtol)?;
    let (_, k_u) = bisect_predicate(|k| Ok(measure.cap_var(k) < nu), 0.0, m, xtol)?;
    let m_l = measure.stop_loss_mean(d_l);
    let m_u = measure.cap_mean(k_u);
    let degenerate = (m_u - m_l).abs() <= DEGENERACY_TOL * measure.mean();
    Ok(IndemnityBracket { d_l, m_l, k_u, m_u, degenerate })
}

/// The optimal contract when the bracket collapses: the loss is two-point on
/// `{0, d_L + K_U}` and the insurer pays `K_U` on the loss event.
pub fn two_point_solution(bracket: &IndemnityBracket, problem: &ContractProblem) -> Result<ContractSolution> {
    if !bracket.degenerate {
        return Err(Error::Contract("bracket is not degenerate".into()));
    }
    let g = &problem.measure;
    let jump_at = bracket.d_l + bracket.k_u;
    let node_tol = 1e-9 * g.support_max().max(1.0);
    let support: Vec<f64> = g
        .nodes()
        .iter()
        .zip(g.weights())
        .filter(|(_, p)| **p > 0.0)
        .map(|(x, _)| *x)
        .collect();
    let two_point = support.len() == 2 && support[0].abs() <= node_tol && (support[1] - jump_at).abs() <= node_tol;
    if !two_point {
        return Err(Error::Inconsistent(format!(
            "degenerate bracket (m_L = m_U = {}) but the loss is not two-point on {{0, {jump_at}}}: support {support:?}",
            bracket.m_l
        )));
    }
    // report the atom itself rather than the bisected sum
    let jump_at = support[1];
    let pay = bracket.k_u;
    let indemnity: Vec<f64> = g.nodes().iter().map(|x| if *x <= node_tol { 0.0 } else { pay }).collect();
    Ok(ContractSolution::assemble(
        Regime::TwoPoint { jump_at, pay },
        problem.clone(),
        indemnity,
        Diagnostics::default(),
    ))
}
