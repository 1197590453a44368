//! The unconstrained benchmark: optimal deductible without a variance bound
//! and the test for whether the bound is slack.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::problem::ContractProblem;
use crate::root::bisect_predicate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrowSolution {
    pub d_star: f64,
    /// `φ(d*)`.
    pub phi_at_d: f64,
    /// `var[(X - d*)_+]`.
    pub var_at_d: f64,
    /// The quantile floor `VaR_{1/(1+ρ)}(X)`.
    pub var_floor: f64,
}

/// Ratio of expected marginal utility under the stop-loss contract with
/// deductible `d` to the marginal utility at the deductible.
pub fn phi(problem: &ContractProblem, d: f64) -> Result<f64> {
    let g = &problem.measure;
    let u = &problem.utility;
    let premium = (1.0 + problem.rho) * g.stop_loss_mean(d);
    let mut num = 0.0;
    for (x, p) in g.nodes().iter().zip(g.weights()) {
        num += p * u.mu(problem.w0 - x.min(d) - premium)?;
    }
    Ok(num / u.mu(problem.w0 - d - premium)?)
}

/// Optimal deductible `d*` of the classical problem.
///
/// `d* = sup { d in [VaR, M) : φ(d) >= 1/(1+ρ) } ∨ VaR`, located by bisection
/// since `φ` is non-increasing on `[VaR, M)`.
pub fn arrow_deductible(problem: &ContractProblem) -> Result<ArrowSolution> {
    let g = &problem.measure;
    let m = g.support_max();
    let rho = problem.rho;
    let floor = g.var_threshold(rho);
    let finish = |d: f64| -> Result<ArrowSolution> {
        let phi_at_d = if d < m { phi(problem, d)? } else { f64::NAN };
        Ok(ArrowSolution { d_star: d, phi_at_d, var_at_d: g.stop_loss_var(d), var_floor: floor })
    };

    // Fair price: full insurance. Deductibles below the lowest loss are
    // payoff-equivalent on a grid, so the left end is taken.
    if rho == 0.0 {
        return finish(0.0);
    }
    if floor >= m {
        return finish(m);
    }
    let target = 1.0 / (1.0 + rho);
    if phi(problem, floor)? < target {
        return finish(floor);
    }
    // φ is continuous at M from the left; if it still clears the target there,
    // the supremum is M itself.
    if phi(problem, m)? >= target {
        return finish(m);
    }
    let (last_true, _) = bisect_predicate(|d| Ok(phi(problem, d)? >= target), floor, m, 1e-9 * m)?;
    finish(last_true)
}

/// True when the variance bound does not bind at the unconstrained optimum.
pub fn is_variance_slack(arrow: &ArrowSolution, nu: f64) -> bool {
    nu >= arrow.var_at_d
}
