//! Bounded loss distributions and their discretization to a grid measure.
//!
//! All integrals in the crate are weighted sums over a [`GridMeasure`]. Discrete
//! laws pass through unchanged; continuous laws are truncated to `[0, M]`,
//! renormalized and mapped to midpoint-rule cells.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Default number of midpoint cells for continuous laws.
pub const DEFAULT_GRID_N: usize = 401;

const SUM_TOL: f64 = 1e-12;

/// Parametric families available for continuous losses, before truncation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Family {
    /// Uniform on `[0, M]`.
    Uniform,
    Exponential { rate: f64 },
    Lognormal { mu: f64, sigma: f64 },
    /// Pareto of the second kind (Lomax); its density is positive on `(0, ∞)`.
    Pareto { scale: f64, shape: f64 },
}

impl Family {
    /// Untruncated CDF.
    fn cdf(&self, x: f64, support_max: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            Family::Uniform => (x / support_max).min(1.0),
            Family::Exponential { rate } => -(-rate * x).exp_m1(),
            Family::Lognormal { mu, sigma } => 0.5 * erfc(-(x.ln() - mu) / (sigma * std::f64::consts::SQRT_2)),
            Family::Pareto { scale, shape } => 1.0 - (1.0 + x / scale).powf(-shape),
        }
    }

    fn validate(&self, errors: &mut Vec<String>) {
        let positive = |v: f64, name: &str, errors: &mut Vec<String>| {
            if !(v.is_finite() && v > 0.0) {
                errors.push(format!("{name} must be a positive finite number, got {v}"));
            }
        };
        match *self {
            Family::Uniform => {}
            Family::Exponential { rate } => positive(rate, "exponential rate", errors),
            Family::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    errors.push(format!("lognormal mu must be finite, got {mu}"));
                }
                positive(sigma, "lognormal sigma", errors);
            }
            Family::Pareto { scale, shape } => {
                positive(scale, "pareto scale", errors);
                positive(shape, "pareto shape", errors);
            }
        }
    }
}

/// An insurable loss with bounded support `[0, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LossModel {
    /// Finitely many `(value, probability)` atoms.
    Discrete { atoms: Vec<(f64, f64)> },
    /// A continuous family truncated to `[0, support_max]`, optionally mixed
    /// with an atom at zero.
    ContinuousTruncated {
        family: Family,
        support_max: f64,
        #[serde(default)]
        atom_at_zero: f64,
    },
}

impl LossModel {
    pub fn uniform(support_max: f64) -> Self {
        LossModel::ContinuousTruncated { family: Family::Uniform, support_max, atom_at_zero: 0.0 }
    }

    pub fn bernoulli(p_zero: f64, loss: f64) -> Self {
        LossModel::Discrete { atoms: vec![(0.0, p_zero), (loss, 1.0 - p_zero)] }
    }

    /// Every violated invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        match self {
            LossModel::Discrete { atoms } => {
                if atoms.is_empty() {
                    errors.push("discrete loss needs at least one atom".into());
                }
                let mut total = 0.0;
                for &(v, p) in atoms {
                    if !(v.is_finite() && v >= 0.0) {
                        errors.push(format!("atom value {v} must be finite and non-negative"));
                    }
                    if !(p > 0.0 && p <= 1.0) {
                        errors.push(format!("atom probability {p} must lie in (0, 1]"));
                    }
                    total += p;
                }
                if !atoms.is_empty() && (total - 1.0).abs() > SUM_TOL {
                    errors.push(format!("atom probabilities sum to {total}, not 1"));
                }
            }
            LossModel::ContinuousTruncated { family, support_max, atom_at_zero } => {
                family.validate(&mut errors);
                if !(support_max.is_finite() && *support_max > 0.0) {
                    errors.push(format!("support_max must be positive and finite, got {support_max}"));
                }
                if !(*atom_at_zero >= 0.0 && *atom_at_zero < 1.0) {
                    errors.push(format!("atom_at_zero must lie in [0, 1), got {atom_at_zero}"));
                }
            }
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v.join("; ")))
        }
    }

    /// Essential supremum of the loss.
    pub fn support_max(&self) -> f64 {
        match self {
            LossModel::Discrete { atoms } => atoms.iter().map(|a| a.0).fold(0.0, f64::max),
            LossModel::ContinuousTruncated { support_max, .. } => *support_max,
        }
    }

    /// Maps the law onto a grid measure. `n` is the number of midpoint cells for
    /// continuous laws and is ignored for discrete ones.
    pub fn discretize(&self, n: usize) -> Result<GridMeasure> {
        self.validate()?;
        match self {
            LossModel::Discrete { atoms } => {
                let mut sorted = atoms.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut nodes: Vec<f64> = Vec::with_capacity(sorted.len());
                let mut weights: Vec<f64> = Vec::with_capacity(sorted.len());
                for (v, p) in sorted {
                    if nodes.last() == Some(&v) {
                        *weights.last_mut().unwrap() += p;
                    } else {
                        nodes.push(v);
                        weights.push(p);
                    }
                }
                let m = self.support_max();
                GridMeasure::build(nodes, weights, m, false)
            }
            LossModel::ContinuousTruncated { family, support_max, atom_at_zero } => {
                if n < 2 {
                    return Err(Error::Validation(format!("grid needs n >= 2 cells, got {n}")));
                }
                let m = *support_max;
                let h = m / n as f64;
                let total = family.cdf(m, m);
                if !(total > 0.0) {
                    return Err(Error::Validation("continuous family has no mass on [0, M]".into()));
                }
                let mut nodes = Vec::with_capacity(n + 1);
                let mut weights = Vec::with_capacity(n + 1);
                if *atom_at_zero > 0.0 {
                    nodes.push(0.0);
                    weights.push(*atom_at_zero);
                }
                let cont = 1.0 - atom_at_zero;
                let mut prev = 0.0;
                for i in 1..=n {
                    let hi = if i == n { m } else { i as f64 * h };
                    let f = family.cdf(hi, m);
                    nodes.push((i as f64 - 0.5) * h);
                    weights.push(cont * (f - prev) / total);
                    prev = f;
                }
                GridMeasure::build(nodes, weights, m, true)
            }
        }
    }
}

/// A discrete probability measure on ascending loss levels in `[0, M]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    support_max: f64,
    continuous: bool,
}

impl GridMeasure {
    /// Builds a measure from atoms. Nodes must be strictly ascending and
    /// non-negative, weights non-negative and summing to one.
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let m = nodes.last().copied().unwrap_or(0.0);
        Self::build(nodes, weights, m, false)
    }

    fn build(nodes: Vec<f64>, mut weights: Vec<f64>, support_max: f64, continuous: bool) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::Validation(format!(
                "grid needs matching non-empty nodes and weights ({} vs {})",
                nodes.len(),
                weights.len()
            )));
        }
        if nodes[0] < 0.0 || nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("grid nodes must be non-negative and strictly ascending".into()));
        }
        if nodes.iter().any(|x| *x > support_max) {
            return Err(Error::Validation("grid nodes exceed the support bound".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Validation("grid weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("grid weights sum to {total}, not 1")));
        }
        // remove rounding drift so the sum is one to machine precision
        for w in weights.iter_mut() {
            *w /= total;
        }
        Ok(Self { nodes, weights, support_max, continuous })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Essential supremum `M` of the underlying loss.
    pub fn support_max(&self) -> f64 {
        self.support_max
    }

    /// True when the measure discretizes a law whose CDF is strictly increasing
    /// on `(0, M)`.
    pub fn is_continuous(&self) -> bool {
        self.continuous
    }

    /// Number of atoms carrying positive mass.
    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// Largest gap between consecutive nodes, counting the gap from 0 to the first node.
    pub fn max_spacing(&self) -> f64 {
        let mut prev = 0.0;
        let mut h: f64 = 0.0;
        for &x in &self.nodes {
            h = h.max(x - prev);
            prev = x;
        }
        h
    }

    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, p)| p * f(*x)).sum()
    }

    /// Expectation of values already tabulated on the nodes.
    pub fn expect_values(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, p)| p * v).sum()
    }

    /// Variance of values tabulated on the nodes (two-pass).
    pub fn variance_values(&self, values: &[f64]) -> f64 {
        let mean = self.expect_values(values);
        values.iter().zip(&self.weights).map(|(v, p)| p * (v - mean) * (v - mean)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.expect(|x| (x - mean) * (x - mean))
    }

    pub fn second_moment(&self) -> f64 {
        self.expect(|x| x * x)
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        if x >= self.support_max {
            return 1.0;
        }
        let k = self.nodes.partition_point(|n| *n <= x);
        let s: f64 = self.weights[..k].iter().sum();
        s.min(1.0)
    }

    /// `inf { x in [0, M] : F(x) >= rho / (1 + rho) }`, or `M` if empty.
    pub fn var_threshold(&self, rho: f64) -> f64 {
        let level = rho / (1.0 + rho);
        if level <= 0.0 {
            return 0.0;
        }
        let mut cum = 0.0;
        for (x, p) in self.nodes.iter().zip(&self.weights) {
            cum += p;
            if cum >= level - SUM_TOL {
                return *x;
            }
        }
        self.support_max
    }

    /// `E[(X - d)_+]`.
    pub fn stop_loss_mean(&self, d: f64) -> f64 {
        self.expect(|x| (x - d).max(0.0))
    }

    /// `E[X ∧ k]`.
    pub fn cap_mean(&self, k: f64) -> f64 {
        self.expect(|x| x.min(k))
    }

    /// `var[(X - d)_+]`.
    pub fn stop_loss_var(&self, d: f64) -> f64 {
        let mean = self.stop_loss_mean(d);
        self.expect(|x| {
            let v = (x - d).max(0.0) - mean;
            v * v
        })
    }

    /// `var[X ∧ k]`.
    pub fn cap_var(&self, k: f64) -> f64 {
        let mean = self.cap_mean(k);
        self.expect(|x| {
            let v = x.min(k) - mean;
            v * v
        })
    }

    /// `E[g(X) | X > t]` for `g` tabulated on the nodes.
    pub fn tail_expectation(&self, values: &[f64], t: f64) -> Result<f64> {
        let k = self.nodes.partition_point(|n| *n <= t);
        let mass: f64 = self.weights[k..].iter().sum();
        if !(mass > 0.0) {
            return Err(Error::ZeroTailMass { threshold: t });
        }
        let num: f64 = values[k..].iter().zip(&self.weights[k..]).map(|(v, p)| p * v).sum();
        Ok(num / mass)
    }

    /// `P{X > t}`.
    pub fn tail_mass(&self, t: f64) -> f64 {
        let k = self.nodes.partition_point(|n| *n <= t);
        self.weights[k..].iter().sum()
    }
}
