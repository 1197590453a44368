//! Comparative statics under fair pricing: richer insureds and looser
//! variance bounds.
//!
//! Each comparison solves two problems and records one [`Check`] per
//! theoretical claim. Reports are returned even when a check fails so that
//! counterexample candidates can be inspected.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{convex_order_leq, less_downside_risk, upcross_count, CrossingProfile, DiscreteDist};
use crate::problem::ContractProblem;
use crate::solver::{solve_with, ContractSolution, SolverConfig};

/// Dead-band for crossing counts, relative to the compared functions.
pub const CROSSING_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Comparison {
    Wealth { w1: f64, w2: f64 },
    Variance { nu1: f64, nu2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub comparison: Comparison,
    #[serde(skip)]
    pub contracts: Vec<ContractSolution>,
    /// Crossings of `e₂ - e₁`.
    pub exposure_crossings: CrossingProfile,
    /// Crossings of `I₁ - I₂`.
    pub indemnity_crossings: CrossingProfile,
    pub mean_coverage: (f64, f64),
    pub betas: (f64, f64),
    /// `(E[e], E[e²])` of each exposure.
    pub exposure_moments: [(f64, f64); 2],
    pub downside_verdict: Option<bool>,
    pub convex_order_verdict: Option<bool>,
    pub checks: Vec<Check>,
}

impl ComparisonReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn common_preconditions(base: &ContractProblem) -> Result<()> {
    if base.rho != 0.0 {
        return Err(Error::Precondition(format!("comparative statics need fair pricing (rho = 0), got rho = {}", base.rho)));
    }
    if !base.measure.is_continuous() {
        return Err(Error::Precondition("comparative statics need a loss CDF strictly increasing on (0, M)".into()));
    }
    Ok(())
}

fn solve_pair(p1: ContractProblem, p2: ContractProblem, config: &SolverConfig) -> Result<(ContractSolution, ContractSolution)> {
    let (a, b) = config.exec.join(|| solve_with(&p1, config), || solve_with(&p2, config));
    let (a, b) = (a?, b?);
    for s in [&a, &b] {
        if s.regime.beta().is_none() {
            return Err(Error::Inconsistent(format!("expected an interior contract, got {}", s.regime.label())));
        }
    }
    Ok((a, b))
}

struct Pair {
    nodes: Vec<f64>,
    i: [Vec<f64>; 2],
    e: [Vec<f64>; 2],
    means: (f64, f64),
    betas: (f64, f64),
    moments: [(f64, f64); 2],
    nu: [f64; 2],
}

impl Pair {
    fn new(a: &ContractSolution, b: &ContractSolution) -> Self {
        let g = &a.problem.measure;
        let exposure = |s: &ContractSolution| {
            let m = g.expect_values(s.indemnity());
            s.indemnity().iter().map(|i| i - m).collect::<Vec<f64>>()
        };
        let e = [exposure(a), exposure(b)];
        let moment = |e: &[f64]| (g.expect_values(e), e.iter().zip(g.weights()).map(|(v, p)| p * v * v).sum::<f64>());
        Self {
            nodes: g.nodes().to_vec(),
            i: [a.indemnity().to_vec(), b.indemnity().to_vec()],
            moments: [moment(&e[0]), moment(&e[1])],
            e,
            means: (a.expected_indemnity(), b.expected_indemnity()),
            betas: (a.regime.beta().unwrap_or(f64::NAN), b.regime.beta().unwrap_or(f64::NAN)),
            nu: [a.problem.nu, b.problem.nu],
        }
    }

    fn dist(&self, k: usize, sign: f64, weights: &[f64]) -> DiscreteDist {
        DiscreteDist::new(self.e[k].iter().map(|v| sign * v).collect(), weights.to_vec())
    }

    fn exposure_crossings(&self) -> CrossingProfile {
        let scale = self.e.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        upcross_count(&self.nodes, &self.e[1], &self.e[0], CROSSING_TOL * scale)
    }

    fn indemnity_crossings(&self) -> CrossingProfile {
        let scale = self.i.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        upcross_count(&self.nodes, &self.i[0], &self.i[1], CROSSING_TOL * scale)
    }

    fn pointwise_below(&self) -> bool {
        self.nodes.iter().zip(self.i[0].iter().zip(&self.i[1])).filter(|(x, _)| **x > 0.0).all(|(_, (a, b))| a < b)
    }

    fn ordering_check(&self) -> Check {
        let (m, b) = (self.means, self.betas);
        Check::new(
            "coverage-and-multiplier-order",
            m.0 < m.1 && b.1 < b.0,
            format!("E[I1] = {}, E[I2] = {}, beta1 = {}, beta2 = {}", m.0, m.1, b.0, b.1),
        )
    }

    fn moment_check(&self) -> Check {
        let ok = (0..2).all(|k| self.moments[k].0.abs() <= 1e-9 && (self.moments[k].1 - self.nu[k]).abs() <= 1e-8 * self.nu[k]);
        Check::new("exposure-moments", ok, format!("(mean, second moment) = {:?}, nu = {:?}", self.moments, self.nu))
    }
}

/// Richer versus poorer insured, same variance bound: `w1 <= w2`.
pub fn compare_wealth(base: &ContractProblem, w1: f64, w2: f64, config: &SolverConfig) -> Result<ComparisonReport> {
    common_preconditions(base)?;
    if !(w1 <= w2) {
        return Err(Error::Precondition(format!("need w1 <= w2, got ({w1}, {w2})")));
    }
    let g = &base.measure;
    if base.nu >= g.variance() {
        return Err(Error::Precondition(format!("variance bound {} does not bind: var[X] = {}", base.nu, g.variance())));
    }
    let lo = w1 - g.support_max() - g.mean();
    if !base.utility.is_strictly_dap(lo, w2) {
        return Err(Error::Precondition(format!(
            "{} utility is not strictly decreasing absolute prudence on [{lo}, {w2}]",
            base.utility.name()
        )));
    }
    let p1 = ContractProblem::new(g.clone(), base.utility, w1, 0.0, base.nu)?;
    let p2 = ContractProblem::new(g.clone(), base.utility, w2, 0.0, base.nu)?;
    let (a, b) = solve_pair(p1, p2, config)?;
    let pair = Pair::new(&a, &b);

    let exposure_crossings = pair.exposure_crossings();
    let indemnity_crossings = pair.indemnity_crossings();
    let below = pair.pointwise_below();
    let downside = less_downside_risk(&pair.dist(1, -1.0, g.weights()), &pair.dist(0, -1.0, g.weights()))?;
    let checks = vec![
        Check::new(
            "exposure-double-upcross",
            exposure_crossings.is_double_upcross(),
            format!("{} crossings at {:?}", exposure_crossings.count, exposure_crossings.locations),
        ),
        pair.ordering_check(),
        Check::new(
            "indemnity-order",
            below || indemnity_crossings.is_single_upcross(),
            if below {
                "I1 < I2 for all x > 0".into()
            } else {
                format!("I1 crosses I2 {} times at {:?}", indemnity_crossings.count, indemnity_crossings.locations)
            },
        ),
        Check::new("downside-risk", downside, "-e2 has less downside risk than -e1".into()),
        pair.moment_check(),
    ];
    Ok(ComparisonReport {
        comparison: Comparison::Wealth { w1, w2 },
        exposure_crossings,
        indemnity_crossings,
        mean_coverage: pair.means,
        betas: pair.betas,
        exposure_moments: pair.moments,
        downside_verdict: Some(downside),
        convex_order_verdict: None,
        checks,
        contracts: vec![a, b],
    })
}

/// Tighter versus looser variance bound, same wealth: `nu1 <= nu2`.
pub fn compare_variance(base: &ContractProblem, nu1: f64, nu2: f64, config: &SolverConfig) -> Result<ComparisonReport> {
    common_preconditions(base)?;
    let g = &base.measure;
    if !(nu1 > 0.0 && nu1 <= nu2) {
        return Err(Error::Precondition(format!("need 0 < nu1 <= nu2, got ({nu1}, {nu2})")));
    }
    if nu2 >= g.variance() {
        return Err(Error::Precondition(format!("variance bound {nu2} does not bind: var[X] = {}", g.variance())));
    }
    let p1 = ContractProblem::new(g.clone(), base.utility, base.w0, 0.0, nu1)?;
    let p2 = ContractProblem::new(g.clone(), base.utility, base.w0, 0.0, nu2)?;
    let (a, b) = solve_pair(p1, p2, config)?;
    let pair = Pair::new(&a, &b);

    let exposure_crossings = pair.exposure_crossings();
    let indemnity_crossings = pair.indemnity_crossings();
    let tol = 1e-9 * g.support_max();
    let convex = convex_order_leq(&pair.dist(0, 1.0, g.weights()), &pair.dist(1, 1.0, g.weights()), tol);
    let prudent = base.utility.is_prudent();
    let below = pair.pointwise_below();
    let checks = vec![
        Check::new(
            "exposure-single-upcross",
            exposure_crossings.is_single_upcross(),
            format!("{} crossings at {:?}", exposure_crossings.count, exposure_crossings.locations),
        ),
        pair.ordering_check(),
        Check::new(
            "indemnity-order",
            !prudent || below,
            if prudent {
                format!("I1 < I2 for all x > 0: {below}")
            } else {
                "not applicable: utility is not prudent".into()
            },
        ),
        Check::new("convex-order", convex, "e1 is smaller than e2 in convex order".into()),
        pair.moment_check(),
    ];
    Ok(ComparisonReport {
        comparison: Comparison::Variance { nu1, nu2 },
        exposure_crossings,
        indemnity_crossings,
        mean_coverage: pair.means,
        betas: pair.betas,
        exposure_moments: pair.moments,
        downside_verdict: None,
        convex_order_verdict: Some(convex),
        checks,
        contracts: vec![a, b],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_model::LossModel;
    use crate::utility::UtilityModel;

    fn base(u: UtilityModel, w0: f64, nu: f64) -> ContractProblem {
        ContractProblem::new(LossModel::uniform(1.0).discretize(401).unwrap(), u, w0, 0.0, nu).unwrap()
    }

    #[test]
    fn wealth_comparison_passes() {
        let r = compare_wealth(&base(UtilityModel::Log, 3.0, 0.04), 3.0, 4.0, &SolverConfig::default()).unwrap();
        assert!(r.all_passed(), "{:#?}", r.checks);
        assert_eq!(r.exposure_crossings.count, 2);
    }

    #[test]
    fn equal_wealth_gives_identical_contracts() {
        let r = compare_wealth(&base(UtilityModel::Log, 3.0, 0.04), 3.0, 3.0, &SolverConfig::default()).unwrap();
        assert_eq!(r.exposure_crossings.count, 0);
        assert_eq!(r.mean_coverage.0, r.mean_coverage.1);
        assert_eq!(r.contracts[0].indemnity(), r.contracts[1].indemnity());
    }

    #[test]
    fn cara_is_not_strictly_dap() {
        let r = compare_wealth(&base(UtilityModel::Cara { a: 1.0 }, 3.0, 0.04), 3.0, 4.0, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn variance_comparison_passes() {
        let r = compare_variance(&base(UtilityModel::Log, 3.0, 0.04), 0.02, 0.05, &SolverConfig::default()).unwrap();
        assert!(r.all_passed(), "{:#?}", r.checks);
        assert_eq!(r.exposure_crossings.count, 1);
    }

    #[test]
    fn non_binding_bound_is_rejected() {
        let r = compare_variance(&base(UtilityModel::Log, 3.0, 0.04), 0.02, 0.09, &SolverConfig::default());
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn equal_bounds_give_zero_crossings() {
        let r = compare_variance(&base(UtilityModel::Log, 3.0, 0.04), 0.03, 0.03, &SolverConfig::default()).unwrap();
        assert_eq!(r.exposure_crossings.count, 0);
        assert_eq!(r.indemnity_crossings.count, 0);
    }

    #[test]
    fn loaded_base_is_rejected() {
        let mut p = base(UtilityModel::Log, 3.0, 0.04);
        p.rho = 0.1;
        assert!(matches!(compare_variance(&p, 0.02, 0.03, &SolverConfig::default()), Err(Error::Precondition(_))));
    }
}
