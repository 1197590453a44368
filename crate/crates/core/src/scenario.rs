//! Scenario documents: the JSON form of a contracting problem.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::loss_model::{GridMeasure, LossModel, DEFAULT_GRID_N};
use crate::oracle::OracleConfig;
use crate::problem::ContractProblem;
use crate::solver::SolverConfig;
use crate::utility::UtilityModel;

fn default_grid_n() -> usize {
    DEFAULT_GRID_N
}

/// Optional overrides of the numerical tolerances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_outer_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_tol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    W0,
    Rho,
    Nu,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::W0 => "w0",
            SweepParameter::Rho => "rho",
            SweepParameter::Nu => "nu",
        }
    }
}

/// One parameter varied over a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

/// The pair of scenarios for a comparative-statics run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum Compare {
    Wealth { w1: f64, w2: f64 },
    Variance { nu1: f64, nu2: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub loss: LossModel,
    pub utility: UtilityModel,
    pub w0: f64,
    #[serde(default)]
    pub rho: f64,
    pub nu: f64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compare: Option<Compare>,
}

impl Scenario {
    pub fn new(loss: LossModel, utility: UtilityModel, w0: f64, rho: f64, nu: f64) -> Self {
        Self { loss, utility, w0, rho, nu, grid_n: DEFAULT_GRID_N, tolerances: None, sweep: None, compare: None }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed scenario: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Every violated invariant, so a config can be fixed in one pass.
    pub fn violations(&self) -> Vec<String> {
        let mut v = self.loss.violations();
        if self.grid_n < 2 {
            v.push(format!("grid_n must be at least 2, got {}", self.grid_n));
        }
        if let Some(t) = &self.tolerances {
            for (name, val) in [("inner_tol", t.inner_tol), ("outer_rtol", t.outer_rtol), ("oracle_tol", t.oracle_tol)] {
                if let Some(x) = val {
                    if !(x.is_finite() && x > 0.0) {
                        v.push(format!("tolerances.{name} must be positive, got {x}"));
                    }
                }
            }
            if t.max_outer_iter == Some(0) {
                v.push("tolerances.max_outer_iter must be positive".into());
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                v.push("sweep.values must not be empty".into());
            }
            if let Some(x) = s.values.iter().find(|x| !x.is_finite()) {
                v.push(format!("sweep value {x} is not finite"));
            }
        }
        match self.compare {
            Some(Compare::Wealth { w1, w2 }) if !(w1.is_finite() && w2.is_finite() && w1 <= w2) => {
                v.push(format!("compare needs finite w1 <= w2, got ({w1}, {w2})"))
            }
            Some(Compare::Variance { nu1, nu2 }) if !(nu1 > 0.0 && nu1 <= nu2 && nu2.is_finite()) => {
                v.push(format!("compare needs 0 < nu1 <= nu2, got ({nu1}, {nu2})"))
            }
            _ => {}
        }
        // the wealth guard needs the loss; a point mass at zero still checks the scalars
        let measure = if self.loss.violations().is_empty() && self.grid_n >= 2 {
            match self.loss.discretize(self.grid_n) {
                Ok(m) => m,
                Err(e) => {
                    v.push(e.to_string());
                    return v;
                }
            }
        } else {
            GridMeasure::new(vec![0.0], vec![1.0]).expect("point mass")
        };
        let p = ContractProblem { measure, utility: self.utility, w0: self.w0, rho: self.rho, nu: self.nu };
        v.extend(p.violations());
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v.join("; ")))
        }
    }

    pub fn problem(&self) -> Result<ContractProblem> {
        self.validate()?;
        ContractProblem::new(self.loss.discretize(self.grid_n)?, self.utility, self.w0, self.rho, self.nu)
    }

    pub fn solver_config(&self, exec: Exec) -> SolverConfig {
        let mut c = SolverConfig { exec, ..SolverConfig::default() };
        if let Some(t) = &self.tolerances {
            c.inner_tol = t.inner_tol.unwrap_or(c.inner_tol);
            c.outer_rtol = t.outer_rtol.unwrap_or(c.outer_rtol);
            c.max_outer_iter = t.max_outer_iter.unwrap_or(c.max_outer_iter);
        }
        c
    }

    pub fn oracle_config(&self) -> OracleConfig {
        let mut c = OracleConfig::default();
        if let Some(tol) = self.tolerances.and_then(|t| t.oracle_tol) {
            c.tol = tol;
        }
        c
    }

    /// The same scenario with one parameter replaced and no sweep attached.
    pub fn with_parameter(&self, parameter: SweepParameter, value: f64) -> Self {
        let mut s = self.clone();
        s.sweep = None;
        match parameter {
            SweepParameter::W0 => s.w0 = value,
            SweepParameter::Rho => s.rho = value,
            SweepParameter::Nu => s.nu = value,
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "loss": {"type": "continuous_truncated", "family": {"name": "uniform"}, "support_max": 1.0},
        "utility": {"type": "log"},
        "w0": 3.0, "rho": 0.0, "nu": 0.04
    }"#;

    #[test]
    fn parses_with_defaults() {
        let s = Scenario::from_json(BASE).unwrap();
        assert_eq!(s.grid_n, DEFAULT_GRID_N);
        assert_eq!(s.tolerances, None);
        assert!(s.problem().is_ok());
    }

    #[test]
    fn round_trips() {
        let mut s = Scenario::from_json(BASE).unwrap();
        s.tolerances = Some(Tolerances { outer_rtol: Some(1e-10), ..Default::default() });
        s.compare = Some(Compare::Variance { nu1: 0.02, nu2: 0.05 });
        assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn lists_every_violation() {
        let text = r#"{
            "loss": {"type": "discrete", "atoms": [[0.0, 0.5], [1.0, 0.4]]},
            "utility": {"type": "crra", "gamma": -1.0},
            "w0": 3.0, "rho": -0.1, "nu": 0.0, "grid_n": 1
        }"#;
        let v = Scenario::from_json(text).unwrap().violations();
        assert_eq!(v.len(), 5, "{v:?}");
        assert!(v.iter().any(|m| m.contains("rho")) && v.iter().any(|m| m.contains("nu must")));
        assert!(v.iter().any(|m| m.contains("sum to")));
        assert!(v.iter().any(|m| m.contains("gamma")));
        assert!(v.iter().any(|m| m.contains("grid_n")));
    }

    #[test]
    fn wealth_guard_is_reported() {
        let s = Scenario::new(LossModel::uniform(1.0), UtilityModel::Log, 1.2, 0.0, 0.04);
        let v = s.violations();
        assert_eq!(v.len(), 1);
        assert!(v[0].contains("too small"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = BASE.replace("\"nu\"", "\"nux\": 1, \"nu\"");
        assert!(matches!(Scenario::from_json(&text), Err(Error::Validation(_))));
    }

    #[test]
    fn tolerances_override_solver_defaults() {
        let mut s = Scenario::from_json(BASE).unwrap();
        s.tolerances = Some(Tolerances { inner_tol: Some(1e-10), max_outer_iter: Some(50), ..Default::default() });
        let c = s.solver_config(Exec::Sequential);
        assert_eq!((c.inner_tol, c.outer_rtol, c.max_outer_iter), (1e-10, 1e-9, 50));
    }

    #[test]
    fn with_parameter_replaces_one_field() {
        let s = Scenario::from_json(BASE).unwrap();
        let t = s.with_parameter(SweepParameter::Rho, 0.2);
        assert_eq!(t.rho, 0.2);
        assert_eq!(t.w0, s.w0);
    }
}
