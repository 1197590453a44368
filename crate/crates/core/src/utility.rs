//! Utility families with their first three derivatives and risk attitudes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An increasing, strictly concave von Neumann–Morgenstern utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UtilityModel {
    /// `-exp(-a x) / a`.
    Cara { a: f64 },
    /// `x^(1-γ) / (1-γ)`, wealth in `(0, ∞)`.
    Crra { gamma: f64 },
    /// `ln x`, wealth in `(0, ∞)`.
    Log,
    /// Absolute risk aversion `1 / (p x + q)`; `p = 0` is CARA with `a = 1/q`.
    Hara { p: f64, q: f64 },
    /// `-(sat - x)² / 2`, wealth below the saturation point.
    Quadratic { sat: f64 },
}

impl UtilityModel {
    pub fn name(&self) -> &'static str {
        match self {
            UtilityModel::Cara { .. } => "CARA",
            UtilityModel::Crra { .. } => "CRRA",
            UtilityModel::Log => "log",
            UtilityModel::Hara { .. } => "HARA",
            UtilityModel::Quadratic { .. } => "quadratic",
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match *self {
            UtilityModel::Cara { a } if !(a.is_finite() && a > 0.0) => {
                v.push(format!("CARA coefficient a must be positive, got {a}"))
            }
            UtilityModel::Crra { gamma } if !(gamma.is_finite() && gamma > 0.0 && gamma != 1.0) => {
                v.push(format!("CRRA gamma must be positive and different from 1, got {gamma}"))
            }
            UtilityModel::Hara { p, q } => {
                if !(p.is_finite() && p >= 0.0) {
                    v.push(format!("HARA p must be non-negative, got {p}"));
                }
                if !q.is_finite() || (p == 0.0 && q <= 0.0) {
                    v.push(format!("HARA q must be finite (and positive when p = 0), got {q}"));
                }
            }
            UtilityModel::Quadratic { sat } if !sat.is_finite() => {
                v.push(format!("quadratic saturation point must be finite, got {sat}"))
            }
            _ => {}
        }
        v
    }

    /// Open lower and upper ends of the wealth domain.
    pub fn domain(&self) -> (f64, f64) {
        match *self {
            UtilityModel::Cara { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            UtilityModel::Crra { .. } | UtilityModel::Log => (0.0, f64::INFINITY),
            UtilityModel::Hara { p, q } => {
                if p > 0.0 {
                    (-q / p, f64::INFINITY)
                } else {
                    (f64::NEG_INFINITY, f64::INFINITY)
                }
            }
            UtilityModel::Quadratic { sat } => (f64::NEG_INFINITY, sat),
        }
    }

    pub fn in_domain(&self, x: f64) -> bool {
        let (lo, hi) = self.domain();
        x > lo && x < hi
    }

    #[inline]
    fn check(&self, x: f64) -> Result<()> {
        if self.in_domain(x) {
            Ok(())
        } else {
            Err(Error::Domain { utility: self.name(), wealth: x })
        }
    }

    pub fn u(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match *self {
            UtilityModel::Cara { a } => -(-a * x).exp() / a,
            UtilityModel::Crra { gamma } => x.powf(1.0 - gamma) / (1.0 - gamma),
            UtilityModel::Log => x.ln(),
            UtilityModel::Hara { p, q } => {
                if p == 0.0 {
                    -q * (-x / q).exp()
                } else if p == 1.0 {
                    (x + q).ln()
                } else {
                    (p * x + q).powf((p - 1.0) / p) / (p - 1.0)
                }
            }
            UtilityModel::Quadratic { sat } => -0.5 * (sat - x) * (sat - x),
        })
    }

    /// `U'(x)`.
    pub fn mu(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match *self {
            UtilityModel::Cara { a } => (-a * x).exp(),
            UtilityModel::Crra { gamma } => x.powf(-gamma),
            UtilityModel::Log => 1.0 / x,
            UtilityModel::Hara { p, q } => {
                if p == 0.0 {
                    (-x / q).exp()
                } else {
                    (p * x + q).powf(-1.0 / p)
                }
            }
            UtilityModel::Quadratic { sat } => sat - x,
        })
    }

    /// `U''(x)`.
    pub fn ddu(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match *self {
            UtilityModel::Cara { a } => -a * (-a * x).exp(),
            UtilityModel::Crra { gamma } => -gamma * x.powf(-gamma - 1.0),
            UtilityModel::Log => -1.0 / (x * x),
            UtilityModel::Hara { p, q } => {
                if p == 0.0 {
                    -(-x / q).exp() / q
                } else {
                    -(p * x + q).powf(-1.0 / p - 1.0)
                }
            }
            UtilityModel::Quadratic { .. } => -1.0,
        })
    }

    /// `U'''(x)`.
    pub fn dddu(&self, x: f64) -> Result<f64> {
        self.check(x)?;
        Ok(match *self {
            UtilityModel::Cara { a } => a * a * (-a * x).exp(),
            UtilityModel::Crra { gamma } => gamma * (gamma + 1.0) * x.powf(-gamma - 2.0),
            UtilityModel::Log => 2.0 / (x * x * x),
            UtilityModel::Hara { p, q } => {
                if p == 0.0 {
                    (-x / q).exp() / (q * q)
                } else {
                    (1.0 + p) * (p * x + q).powf(-1.0 / p - 2.0)
                }
            }
            UtilityModel::Quadratic { .. } => 0.0,
        })
    }

    /// `U'` and `U''` together, for Newton steps.
    #[inline]
    pub fn mu_ddu(&self, x: f64) -> Result<(f64, f64)> {
        Ok((self.mu(x)?, self.ddu(x)?))
    }

    /// Inverse marginal utility `(U')^{-1}(y)`.
    pub fn inv_mu(&self, y: f64) -> Result<f64> {
        let range_err = || Error::Range { utility: self.name(), value: y };
        if !(y.is_finite() && y > 0.0) {
            return Err(range_err());
        }
        let x = match *self {
            UtilityModel::Cara { a } => -y.ln() / a,
            UtilityModel::Crra { gamma } => y.powf(-1.0 / gamma),
            UtilityModel::Log => 1.0 / y,
            UtilityModel::Hara { p, q } => {
                if p == 0.0 {
                    -q * y.ln()
                } else {
                    (y.powf(-p) - q) / p
                }
            }
            UtilityModel::Quadratic { sat } => sat - y,
        };
        if self.in_domain(x) {
            Ok(x)
        } else {
            Err(range_err())
        }
    }

    /// Absolute risk aversion `-U''/U'`.
    pub fn ara(&self, x: f64) -> Result<f64> {
        Ok(-self.ddu(x)? / self.mu(x)?)
    }

    /// Absolute prudence `-U'''/U''`.
    pub fn prudence(&self, x: f64) -> Result<f64> {
        Ok(-self.dddu(x)? / self.ddu(x)?)
    }

    /// `U''' > 0` everywhere on the domain.
    pub fn is_prudent(&self) -> bool {
        !matches!(self, UtilityModel::Quadratic { .. })
    }

    /// Whether prudence is strictly decreasing on `[lo, hi]`.
    ///
    /// Decided per family: CRRA, log and HARA with `p > 0` have prudence
    /// `c / (p x + q)`; CARA and quadratic utilities have constant prudence.
    pub fn is_strictly_dap(&self, lo: f64, hi: f64) -> bool {
        if !(lo < hi) {
            return false;
        }
        let (dlo, dhi) = self.domain();
        if lo <= dlo || hi >= dhi {
            return false;
        }
        match *self {
            UtilityModel::Crra { .. } | UtilityModel::Log => true,
            UtilityModel::Hara { p, .. } => p > 0.0,
            UtilityModel::Cara { .. } | UtilityModel::Quadratic { .. } => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_values() {
        assert_eq!(UtilityModel::Cara { a: 1.0 }.mu(0.0).unwrap(), 1.0);
        assert_eq!(UtilityModel::Log.mu(2.0).unwrap(), 0.5);
        assert_eq!(UtilityModel::Log.ddu(2.0).unwrap(), -0.25);
        assert_relative_eq!(UtilityModel::Crra { gamma: 2.0 }.dddu(1.0).unwrap(), 6.0);
    }

    #[test]
    fn crra_third_derivative_matches_finite_difference() {
        let u = UtilityModel::Crra { gamma: 2.0 };
        let h = 1e-4;
        let fd = (u.ddu(1.0 + h).unwrap() - u.ddu(1.0 - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(fd, 6.0, max_relative = 1e-6);
    }

    #[test]
    fn inverse_marginal_examples() {
        assert_eq!(UtilityModel::Cara { a: 1.0 }.inv_mu(1.0).unwrap(), 0.0);
        assert_eq!(UtilityModel::Log.inv_mu(0.5).unwrap(), 2.0);
        assert_relative_eq!(UtilityModel::Crra { gamma: 2.0 }.inv_mu(4.0).unwrap(), 0.5);
        assert!(matches!(UtilityModel::Log.inv_mu(-1.0), Err(Error::Range { .. })));
    }

    #[test]
    fn domain_errors_name_the_wealth() {
        match UtilityModel::Log.mu(-0.5) {
            Err(Error::Domain { wealth, .. }) => assert_eq!(wealth, -0.5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(UtilityModel::Quadratic { sat: 2.0 }.u(3.0).is_err());
        assert!(UtilityModel::Hara { p: 0.5, q: 1.0 }.mu(-3.0).is_err());
    }

    #[test]
    fn risk_attitudes() {
        let cara = UtilityModel::Cara { a: 2.0 };
        for x in [-1.0, 0.0, 3.0] {
            assert_relative_eq!(cara.ara(x).unwrap(), 2.0);
        }
        for x in [0.5, 1.0, 4.0] {
            assert_relative_eq!(UtilityModel::Log.prudence(x).unwrap(), 2.0 / x);
        }
        assert_eq!(UtilityModel::Quadratic { sat: 10.0 }.prudence(1.0).unwrap(), 0.0);
        let hara = UtilityModel::Hara { p: 0.5, q: 1.0 };
        assert_relative_eq!(hara.ara(2.0).unwrap(), 1.0 / 2.0, max_relative = 1e-12);
        assert_relative_eq!(hara.prudence(2.0).unwrap(), 1.5 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn dap_classification() {
        assert!(UtilityModel::Log.is_strictly_dap(0.1, 10.0));
        assert!(!UtilityModel::Cara { a: 1.0 }.is_strictly_dap(0.1, 10.0));
        assert!(!UtilityModel::Quadratic { sat: 20.0 }.is_strictly_dap(0.1, 10.0));
        let hara = UtilityModel::Hara { p: 0.5, q: 1.0 };
        assert!(hara.is_strictly_dap(0.0, 5.0));
        // numerical check of the sign of the prudence derivative
        let h = 1e-5;
        for x in [0.1, 1.0, 4.0] {
            let d = (hara.prudence(x + h).unwrap() - hara.prudence(x - h).unwrap()) / (2.0 * h);
            assert!(d < 0.0);
        }
        assert!(!UtilityModel::Hara { p: 0.0, q: 1.0 }.is_strictly_dap(0.0, 5.0));
        assert!(!UtilityModel::Log.is_strictly_dap(-1.0, 5.0));
    }

    #[test]
    fn hara_reduces_to_cara_and_log() {
        let h0 = UtilityModel::Hara { p: 0.0, q: 0.5 };
        let c = UtilityModel::Cara { a: 2.0 };
        assert_relative_eq!(h0.mu(0.7).unwrap(), c.mu(0.7).unwrap());
        let h1 = UtilityModel::Hara { p: 1.0, q: 0.0 };
        assert_relative_eq!(h1.mu(3.0).unwrap(), UtilityModel::Log.mu(3.0).unwrap());
        assert_relative_eq!(h1.u(3.0).unwrap(), UtilityModel::Log.u(3.0).unwrap());
    }
}
