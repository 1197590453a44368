use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss_model::GridMeasure;
use crate::utility::UtilityModel;

/// Data of the contracting problem: loss law, preferences, initial wealth,
/// safety loading and the insurer's variance bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractProblem {
    pub measure: GridMeasure,
    pub utility: UtilityModel,
    pub w0: f64,
    pub rho: f64,
    pub nu: f64,
}

impl ContractProblem {
    pub fn new(measure: GridMeasure, utility: UtilityModel, w0: f64, rho: f64, nu: f64) -> Result<Self> {
        let p = Self { measure, utility, w0, rho, nu };
        let v = p.violations();
        if v.is_empty() {
            Ok(p)
        } else {
            Err(Error::Validation(v.join("; ")))
        }
    }

    /// Every violated problem invariant.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.utility.violations();
        if !self.w0.is_finite() {
            v.push(format!("w0 must be finite, got {}", self.w0));
        }
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            v.push(format!("rho must be a non-negative number, got {}", self.rho));
        }
        if !(self.nu.is_finite() && self.nu > 0.0) {
            v.push(format!("nu must be positive, got {}", self.nu));
        }
        // Wealth levels visited by the solvers lie in
        // [w0 - M - (1+rho) E[X], w0 + M] (up to the premium); both ends must be admissible.
        let m = self.measure.support_max();
        let lowest = self.w0 - m - (1.0 + self.rho) * self.measure.mean();
        let (lo, hi) = self.utility.domain();
        if v.is_empty() {
            if lowest <= lo {
                v.push(format!(
                    "w0 = {} too small for {} utility: need w0 > M + (1+rho) E[X] = {}",
                    self.w0,
                    self.utility.name(),
                    m + (1.0 + self.rho) * self.measure.mean() + lo.max(0.0)
                ));
            }
            if self.w0 >= hi {
                v.push(format!("w0 = {} exceeds the utility saturation point {hi}", self.w0));
            }
        }
        v
    }

    /// Final wealth `w0 - x + i - premium`.
    #[inline]
    pub fn wealth(&self, x: f64, indemnity: f64, premium: f64) -> f64 {
        self.w0 - x + indemnity - premium
    }

    /// Expected utility of an indemnity schedule tabulated on the grid.
    pub fn expected_utility(&self, indemnity: &[f64]) -> Result<f64> {
        let premium = (1.0 + self.rho) * self.measure.expect_values(indemnity);
        let mut acc = 0.0;
        for ((x, p), i) in self.measure.nodes().iter().zip(self.measure.weights()).zip(indemnity) {
            acc += p * self.utility.u(self.wealth(*x, *i, premium))?;
        }
        Ok(acc)
    }
}
