//! Interior optimal contract under a binding variance bound.
//!
//! Above a deductible `d̃` (zero when the price is fair) the indemnity `y = I(x)`
//! solves `U'(c - x + y) - λ - 2βy = 0` with `c = w0 - (1+ρ)m` and
//! `λ = U'(c - d̃)`. The unknowns are fixed by binding both moments,
//! `E[I(X)] = m` and `var[I(X)] = ν`:
//!
//! * fair price: inner solve for `β` on the variance, outer solve for `m` on the mean;
//! * loaded price: `β` is pinned by `(m, d̃)` through
//!   `2βmρ = U'(c - d̃) - (1+ρ) E[U'(c - X ∧ d̃)]`, the inner solve is for `d̃`
//!   on the variance and the outer one for `m` on the mean.
//!
//! Each residual map is monotone in its own unknown; this is checked on the
//! evaluations actually made and a 64×64 scan with local Newton refinement
//! takes over when it fails.

use serde::{Deserialize, Serialize};

use crate::arrow::{arrow_deductible, is_variance_slack, ArrowSolution};
use crate::bounds::{compute_bracket, two_point_solution, IndemnityBracket};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::problem::ContractProblem;
use crate::root::{brent_with, newton_decreasing};
use crate::utility::UtilityModel;

/// Binding-moment tolerance, relative to `E[X]` and `ν`.
pub const MOMENT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Absolute tolerance of the pointwise indemnity root.
    pub inner_tol: f64,
    /// Relative tolerance of the moment equations.
    pub outer_rtol: f64,
    pub max_outer_iter: usize,
    pub exec: Exec,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { inner_tol: 1e-12, outer_rtol: 1e-9, max_outer_iter: 200, exec: Exec::Parallel }
    }
}

/// Which closed form of the optimal contract was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Regime {
    /// Variance bound is slack: stop-loss at the unconstrained deductible.
    SlackStopLoss { d_star: f64 },
    /// Two-point loss: pay `pay` when the loss `jump_at` occurs.
    TwoPoint { jump_at: f64, pay: f64 },
    /// Fair price: coinsurance from the first unit of loss.
    InteriorFair { m_star: f64, beta_star: f64 },
    /// Loaded price: coinsurance above a positive deductible.
    InteriorLoaded { m_star: f64, beta_star: f64, d_tilde: f64, lambda_star: f64 },
}

impl Regime {
    pub fn label(&self) -> &'static str {
        match self {
            Regime::SlackStopLoss { .. } => "slack-stop-loss",
            Regime::TwoPoint { .. } => "two-point",
            Regime::InteriorFair { .. } => "interior-fair",
            Regime::InteriorLoaded { .. } => "interior-loaded",
        }
    }

    pub fn is_interior(&self) -> bool {
        matches!(self, Regime::InteriorFair { .. } | Regime::InteriorLoaded { .. })
    }

    pub fn beta(&self) -> Option<f64> {
        match *self {
            Regime::InteriorFair { beta_star, .. } | Regime::InteriorLoaded { beta_star, .. } => Some(beta_star),
            _ => None,
        }
    }

    /// Deductible of the schedule: `d*`, `d̃`, or zero.
    pub fn deductible(&self) -> f64 {
        match *self {
            Regime::SlackStopLoss { d_star } => d_star,
            Regime::InteriorLoaded { d_tilde, .. } => d_tilde,
            Regime::TwoPoint { .. } | Regime::InteriorFair { .. } => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `E[I*] - m*`.
    pub mean_residual: f64,
    /// `var[I*] - ν`.
    pub var_residual: f64,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// The monotone nested solve was abandoned for the grid scan.
    pub fallback_used: bool,
}

/// Which form of the pointwise equation to solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Branch {
    Fair,
    Loaded { d_tilde: f64 },
}

/// Pointwise indemnity `sup { y in [0, x - d] : U'(c - x + y) - λ - 2βy >= 0 }`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Kernel<'a> {
    pub utility: &'a UtilityModel,
    pub c: f64,
    pub lambda: f64,
    pub beta: f64,
    pub deductible: f64,
    pub xtol: f64,
}

impl<'a> Kernel<'a> {
    pub fn new(utility: &'a UtilityModel, w0: f64, rho: f64, m: f64, beta: f64, branch: Branch, xtol: f64) -> Result<Self> {
        let c = w0 - (1.0 + rho) * m;
        let deductible = match branch {
            Branch::Fair => 0.0,
            Branch::Loaded { d_tilde } => d_tilde,
        };
        let lambda = utility.mu(c - deductible)?;
        Ok(Self { utility, c, lambda, beta, deductible, xtol })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        if x <= self.deductible {
            return Ok(0.0);
        }
        let hi = x - self.deductible;
        let (u, lam, two_beta, c) = (self.utility, self.lambda, 2.0 * self.beta, self.c);
        let g = |y: f64| -> Result<(f64, f64)> {
            let (mu, ddu) = u.mu_ddu(c - x + y)?;
            Ok((mu - lam - two_beta * y, ddu - two_beta))
        };
        if g(0.0)?.0 <= 0.0 {
            return Ok(0.0);
        }
        if g(hi)?.0 >= 0.0 {
            return Ok(hi);
        }
        let root = newton_decreasing(g, 0.0, hi, self.xtol * x.max(1.0))
            .map_err(|e| Error::Bracket(format!("pointwise indemnity at x = {x}, c = {c}, λ = {lam}, β = {}: {e}", self.beta)))?;
        Ok(root.x.clamp(0.0, hi))
    }

    /// `f' = -U''(W) / (2β - U''(W))` at retained wealth `W = c - x + I(x)`.
    pub fn slope(&self, x: f64, indemnity: f64) -> Result<f64> {
        if x <= self.deductible {
            return Ok(0.0);
        }
        let ddu = self.utility.ddu(self.c - x + indemnity)?;
        Ok(-ddu / (2.0 * self.beta - ddu))
    }
}

/// Solves the pointwise equation for a single loss level.
pub fn indemnity_pointwise(
    x: f64,
    m: f64,
    beta: f64,
    utility: &UtilityModel,
    w0: f64,
    rho: f64,
    branch: Branch,
) -> Result<f64> {
    Kernel::new(utility, w0, rho, m, beta, branch, 1e-15)?.eval(x)
}

/// The unknown paired with `m` in the moment equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Param {
    /// Fair price: the variance multiplier `β`.
    Beta(f64),
    /// Loaded price: the deductible `d̃` (`β` follows from `m` and `d̃`).
    DTilde(f64),
}

/// Loaded-price multiplier `β(m, d̃)` implied by stationarity.
pub fn loaded_beta(problem: &ContractProblem, m: f64, d_tilde: f64) -> Result<f64> {
    let rho = problem.rho;
    let c = problem.w0 - (1.0 + rho) * m;
    let u = &problem.utility;
    let g = &problem.measure;
    let mut e = 0.0;
    for (x, p) in g.nodes().iter().zip(g.weights()) {
        e += p * u.mu(c - x.min(d_tilde))?;
    }
    Ok((u.mu(c - d_tilde)? - (1.0 + rho) * e) / (2.0 * m * rho))
}

#[derive(Debug, Clone)]
struct Eval {
    indemnity: Vec<f64>,
    mean: f64,
    var: f64,
    beta: f64,
}

struct Engine<'a> {
    problem: &'a ContractProblem,
    config: SolverConfig,
}

impl<'a> Engine<'a> {
    fn tabulate(&self, kernel: &Kernel<'_>) -> Result<Vec<f64>> {
        self.config
            .exec
            .map(self.problem.measure.nodes(), |x| kernel.eval(*x))
            .into_iter()
            .collect()
    }

    fn eval(&self, m: f64, param: Param) -> Result<Eval> {
        let p = self.problem;
        let (beta, branch) = match param {
            Param::Beta(b) => (b, Branch::Fair),
            Param::DTilde(d) => (loaded_beta(p, m, d)?.max(0.0), Branch::Loaded { d_tilde: d }),
        };
        let kernel = Kernel::new(&p.utility, p.w0, p.rho, m, beta, branch, self.config.inner_tol * 1e-3)?;
        let indemnity = self.tabulate(&kernel)?;
        let mean = p.measure.expect_values(&indemnity);
        let var = p.measure.variance_values(&indemnity);
        Ok(Eval { indemnity, mean, var, beta })
    }

    fn param_from(&self, m: f64, t: f64) -> Param {
        let _ = m;
        if self.problem.rho == 0.0 {
            Param::Beta(t.exp())
        } else {
            Param::DTilde(t)
        }
    }

    /// Range of the inner unknown: `ln β` for the fair price, `d̃` otherwise.
    fn inner_range(&self, m: f64) -> Result<(f64, f64)> {
        let p = self.problem;
        if p.rho == 0.0 {
            let scale = -p.utility.ddu(p.w0 - m)?;
            let t0 = scale.ln();
            let mut lo = t0 - 2.0;
            let mut hi = t0 + 2.0;
            for _ in 0..40 {
                if self.eval(m, Param::Beta(lo.exp()))?.var > p.nu {
                    break;
                }
                lo -= 3.0;
            }
            for _ in 0..40 {
                if self.eval(m, Param::Beta(hi.exp()))?.var < p.nu {
                    break;
                }
                hi += 3.0;
            }
            Ok((lo, hi))
        } else {
            Ok((p.measure.var_threshold(p.rho), p.measure.support_max()))
        }
    }

    /// Inner unknown zeroing the variance residual at fixed `m`.
    /// Returns the unknown (`ln β` or `d̃`), its evaluation, iterations, and
    /// whether the recorded residuals were monotone.
    fn inner(&self, m: f64) -> Result<(f64, Eval, usize, bool)> {
        let nu = self.problem.nu;
        let (lo, hi) = self.inner_range(m)?;
        let mut seen: Vec<(f64, f64)> = Vec::new();
        let mut last: Option<(f64, Eval)> = None;
        let mut f = |t: f64| -> Result<f64> {
            let e = self.eval(m, self.param_from(m, t))?;
            let r = e.var - nu;
            seen.push((t, r));
            last = Some((t, e));
            Ok(r)
        };
        let flo = f(lo)?;
        let fhi = f(hi)?;
        let xtol = if self.problem.rho == 0.0 { 1e-13 } else { 1e-13 * self.problem.measure.support_max() };
        let (t, iters) = if flo <= 0.0 {
            // no root above the floor: the smallest admissible value is the best fit
            (lo, 0)
        } else {
            let root = brent_with(&mut f, lo, flo, hi, fhi, xtol, 1e-3 * self.config.outer_rtol * nu, self.config.max_outer_iter)?;
            (root.x, root.iterations)
        };
        let e = match last {
            Some((lt, e)) if lt == t => e,
            _ => self.eval(m, self.param_from(m, t))?,
        };
        seen.sort_by(|a, b| a.0.total_cmp(&b.0));
        let slack = 1e-10 * nu;
        let monotone = seen.windows(2).all(|w| w[1].1 <= w[0].1 + slack);
        Ok((t, e, iters + 2, monotone))
    }

    fn solve_nested(&self, bracket: &IndemnityBracket) -> Result<(f64, f64, Eval, Diagnostics)> {
        let p = self.problem;
        let ex = p.measure.mean();
        let mut diag = Diagnostics::default();
        let monotone = std::cell::Cell::new(true);
        let mut best: Option<(f64, f64, Eval)> = None;
        let mut h = |m: f64| -> Result<f64> {
            let (t, e, it, mono) = self.inner(m)?;
            diag.inner_iterations += it;
            diag.outer_iterations += 1;
            monotone.set(monotone.get() && mono);
            let r = e.mean - m;
            best = Some((m, t, e));
            Ok(r)
        };
        let (a, b) = (bracket.m_l, bracket.m_u);
        let fa = h(a)?;
        let fb = h(b)?;
        if !(fa > 0.0 && fb < 0.0) || !monotone.get() {
            return Err(Error::NonConvergence {
                message: format!("mean residual not bracketed on [m_L, m_U]: ({fa:e}, {fb:e}), monotone = {}", monotone.get()),
                mean_residual: fa.abs().min(fb.abs()),
                var_residual: f64::NAN,
            });
        }
        let root = brent_with(&mut h, a, fa, b, fb, 1e-14 * p.measure.support_max(), 1e-3 * self.config.outer_rtol * ex, self.config.max_outer_iter)?;
        let (m, t, e) = match best.take() {
            Some((bm, bt, be)) if bm == root.x => (bm, bt, be),
            _ => {
                let (t, e, _, _) = self.inner(root.x)?;
                (root.x, t, e)
            }
        };
        if !monotone.get() {
            return Err(Error::NonConvergence {
                message: "variance residual not monotone in the inner unknown".into(),
                mean_residual: e.mean - m,
                var_residual: e.var - p.nu,
            });
        }
        diag.mean_residual = e.mean - m;
        diag.var_residual = e.var - p.nu;
        Ok((m, t, e, diag))
    }

    /// Coarse scan of the residual norm followed by finite-difference Newton.
    fn solve_fallback(&self, bracket: &IndemnityBracket) -> Result<(f64, f64, Eval, Diagnostics)> {
        const N: usize = 64;
        let p = self.problem;
        let ex = p.measure.mean();
        let nu = p.nu;
        let (m_lo, m_hi) = (bracket.m_l, bracket.m_u);
        let m_mid = 0.5 * (m_lo + m_hi);
        let (t_lo, t_hi) = if p.rho == 0.0 {
            let t0 = (-p.utility.ddu(p.w0 - m_mid)?).ln();
            (t0 - 12.0, t0 + 12.0)
        } else {
            (p.measure.var_threshold(p.rho), p.measure.support_max())
        };
        let norm = |m: f64, e: &Eval| ((e.mean - m) / ex).hypot((e.var - nu) / nu);
        let mut diag = Diagnostics { fallback_used: true, ..Default::default() };
        let mut best = (f64::INFINITY, m_mid, 0.5 * (t_lo + t_hi));
        for i in 0..N {
            let m = m_lo + (m_hi - m_lo) * (i as f64 + 0.5) / N as f64;
            for j in 0..N {
                let t = t_lo + (t_hi - t_lo) * (j as f64 + 0.5) / N as f64;
                let e = self.eval(m, self.param_from(m, t))?;
                diag.inner_iterations += 1;
                let r = norm(m, &e);
                if r < best.0 {
                    best = (r, m, t);
                }
            }
        }
        let (_, mut m, mut t) = best;
        let mut e = self.eval(m, self.param_from(m, t))?;
        let (hm, ht) = (1e-7 * (m_hi - m_lo), 1e-7 * (t_hi - t_lo));
        for _ in 0..100 {
            diag.outer_iterations += 1;
            let r0 = [(e.mean - m) / ex, (e.var - nu) / nu];
            if r0[0].abs() <= 1e-3 * self.config.outer_rtol && r0[1].abs() <= 1e-3 * self.config.outer_rtol {
                break;
            }
            let em = self.eval(m + hm, self.param_from(m + hm, t))?;
            let et = self.eval(m, self.param_from(m, t + ht))?;
            let j = [
                [((em.mean - m - hm) / ex - r0[0]) / hm, ((et.mean - m) / ex - r0[0]) / ht],
                [((em.var - nu) / nu - r0[1]) / hm, ((et.var - nu) / nu - r0[1]) / ht],
            ];
            let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
            if det == 0.0 || !det.is_finite() {
                break;
            }
            let dm = -(j[1][1] * r0[0] - j[0][1] * r0[1]) / det;
            let dt = -(-j[1][0] * r0[0] + j[0][0] * r0[1]) / det;
            let n0 = r0[0].hypot(r0[1]);
            let mut step = 1.0;
            let mut improved = false;
            while step > 1e-6 {
                let (mn, tn) = ((m + step * dm).clamp(m_lo, m_hi), (t + step * dt).clamp(t_lo, t_hi));
                let en = self.eval(mn, self.param_from(mn, tn))?;
                if norm(mn, &en) < n0 {
                    m = mn;
                    t = tn;
                    e = en;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        diag.mean_residual = e.mean - m;
        diag.var_residual = e.var - nu;
        Ok((m, t, e, diag))
    }
}

/// Computes `(E[I] - m, var[I] - ν)` for the schedule indexed by `(m, param)`.
pub fn residuals(problem: &ContractProblem, m: f64, param: Param, config: &SolverConfig) -> Result<(f64, f64)> {
    match (param, problem.rho == 0.0) {
        (Param::Beta(_), false) | (Param::DTilde(_), true) => {
            return Err(Error::Contract("Beta applies to fair pricing, DTilde to loaded pricing".into()))
        }
        _ => {}
    }
    let engine = Engine { problem, config: *config };
    let e = engine.eval(m, param)?;
    Ok((e.mean - m, e.var - problem.nu))
}

/// Solves the contracting problem with default settings.
pub fn solve(problem: &ContractProblem) -> Result<ContractSolution> {
    solve_with(problem, &SolverConfig::default())
}

pub fn solve_with(problem: &ContractProblem, config: &SolverConfig) -> Result<ContractSolution> {
    let arrow = arrow_deductible(problem)?;
    let g = &problem.measure;
    if is_variance_slack(&arrow, problem.nu) {
        let d = arrow.d_star;
        let indemnity: Vec<f64> = g.nodes().iter().map(|x| (x - d).max(0.0)).collect();
        return Ok(ContractSolution::assemble(Regime::SlackStopLoss { d_star: d }, problem.clone(), indemnity, Diagnostics::default())
            .with_context(arrow, None));
    }
    let bracket = compute_bracket(g, &arrow, problem.nu)?;
    if bracket.degenerate {
        return Ok(two_point_solution(&bracket, problem)?.with_context(arrow, Some(bracket)));
    }
    if !g.is_continuous() {
        return Err(Error::Unsupported(
            "the interior contract needs a loss law with strictly increasing CDF on (0, M); \
             use the brute-force oracle for losses with interior atoms"
                .into(),
        ));
    }

    let engine = Engine { problem, config: *config };
    let (m, t, e, diag) = match engine.solve_nested(&bracket) {
        Ok(r) => r,
        Err(Error::NonConvergence { .. }) => engine.solve_fallback(&bracket)?,
        Err(other) => return Err(other),
    };

    let ex = g.mean();
    if diag.mean_residual.abs() > MOMENT_TOL * ex || diag.var_residual.abs() > MOMENT_TOL * problem.nu {
        return Err(Error::NonConvergence {
            message: "moment equations not met".into(),
            mean_residual: diag.mean_residual,
            var_residual: diag.var_residual,
        });
    }
    if !(e.beta > 0.0) {
        return Err(Error::NonConvergence {
            message: format!("multiplier β = {} is not positive", e.beta),
            mean_residual: diag.mean_residual,
            var_residual: diag.var_residual,
        });
    }
    let regime = if problem.rho == 0.0 {
        Regime::InteriorFair { m_star: m, beta_star: e.beta }
    } else {
        let floor = g.var_threshold(problem.rho);
        if !(t > floor && t < g.support_max()) {
            return Err(Error::NonConvergence {
                message: format!("deductible {t} outside ({floor}, {})", g.support_max()),
                mean_residual: diag.mean_residual,
                var_residual: diag.var_residual,
            });
        }
        let lambda_star = problem.utility.mu(problem.w0 - t - (1.0 + problem.rho) * m)?;
        Regime::InteriorLoaded { m_star: m, beta_star: e.beta, d_tilde: t, lambda_star }
    };
    let sol = ContractSolution::assemble(regime, problem.clone(), e.indemnity, diag).with_context(arrow, Some(bracket));
    sol.check_incentive_compatible()?;
    Ok(sol)
}

/// A solved contract with its schedule tabulated on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractSolution {
    pub regime: Regime,
    pub problem: ContractProblem,
    indemnity: Vec<f64>,
    /// `(1+ρ) m*` for interior regimes, `(1+ρ) E[I*]` otherwise.
    pub premium: f64,
    pub diagnostics: Diagnostics,
    pub arrow: Option<ArrowSolution>,
    pub bracket: Option<IndemnityBracket>,
}

/// Result of checking the sign pattern of `Φ` on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max |Φ|` where the schedule coinsures.
    pub max_abs_phi_coinsurance: f64,
    /// `max Φ` where the schedule is flat at zero (negative when certified).
    pub max_phi_deductible: f64,
    /// `E[U'(W)]`, the scale of `Φ`.
    pub scale: f64,
    pub deductible_nodes: usize,
    pub coinsurance_nodes: usize,
    pub passed: bool,
}

/// Relative tolerance on `|Φ|` over the coinsurance region.
pub const KKT_TOL: f64 = 1e-6;

impl ContractSolution {
    pub(crate) fn assemble(regime: Regime, problem: ContractProblem, indemnity: Vec<f64>, diagnostics: Diagnostics) -> Self {
        let premium = match regime {
            Regime::InteriorFair { m_star, .. } | Regime::InteriorLoaded { m_star, .. } => (1.0 + problem.rho) * m_star,
            _ => (1.0 + problem.rho) * problem.measure.expect_values(&indemnity),
        };
        Self { regime, problem, indemnity, premium, diagnostics, arrow: None, bracket: None }
    }

    pub(crate) fn with_context(mut self, arrow: ArrowSolution, bracket: Option<IndemnityBracket>) -> Self {
        self.arrow = Some(arrow);
        self.bracket = bracket;
        self
    }

    pub fn nodes(&self) -> &[f64] {
        self.problem.measure.nodes()
    }

    /// Indemnity at the grid nodes.
    pub fn indemnity(&self) -> &[f64] {
        &self.indemnity
    }

    pub fn expected_indemnity(&self) -> f64 {
        self.problem.measure.expect_values(&self.indemnity)
    }

    pub fn indemnity_variance(&self) -> f64 {
        self.problem.measure.variance_values(&self.indemnity)
    }

    pub fn retention(&self) -> Vec<f64> {
        self.nodes().iter().zip(&self.indemnity).map(|(x, i)| x - i).collect()
    }

    /// Insurer's risk exposure `I(x) - π` on the grid.
    pub fn exposure(&self) -> Vec<f64> {
        self.indemnity.iter().map(|i| i - self.premium).collect()
    }

    pub fn expected_utility(&self) -> Result<f64> {
        self.problem.expected_utility(&self.indemnity)
    }

    fn kernel(&self) -> Result<Option<Kernel<'_>>> {
        let p = &self.problem;
        Ok(match self.regime {
            Regime::InteriorFair { m_star, beta_star } => {
                Some(Kernel::new(&p.utility, p.w0, p.rho, m_star, beta_star, Branch::Fair, 1e-15)?)
            }
            Regime::InteriorLoaded { m_star, beta_star, d_tilde, .. } => Some(Kernel::new(
                &p.utility,
                p.w0,
                p.rho,
                m_star,
                beta_star,
                Branch::Loaded { d_tilde },
                1e-15,
            )?),
            _ => None,
        })
    }

    /// Indemnity at an arbitrary loss level in `[0, M]`.
    pub fn indemnity_at(&self, x: f64) -> Result<f64> {
        if let Some(k) = self.kernel()? {
            return k.eval(x);
        }
        Ok(match self.regime {
            Regime::SlackStopLoss { d_star } => (x - d_star).max(0.0),
            _ => interpolate_monotone(self.nodes(), &self.indemnity, x),
        })
    }

    /// Marginal indemnity `I'(x)`, in `[0, 1]`.
    pub fn marginal(&self, x: f64) -> Result<f64> {
        if let Some(k) = self.kernel()? {
            let i = k.eval(x)?;
            return k.slope(x, i);
        }
        Ok(match self.regime {
            Regime::SlackStopLoss { d_star } => {
                if x >= d_star && (x > d_star || d_star == 0.0) {
                    1.0
                } else {
                    0.0
                }
            }
            _ => {
                let nodes = self.nodes();
                let k = nodes.partition_point(|n| *n < x).min(nodes.len() - 1);
                let (x0, i0) = if k == 0 { (0.0, 0.0) } else { (nodes[k - 1], self.indemnity[k - 1]) };
                let dx = nodes[k] - x0;
                if dx > 0.0 {
                    ((self.indemnity[k] - i0) / dx).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            }
        })
    }

    /// Marginal indemnity at every grid node.
    pub fn marginals(&self) -> Result<Vec<f64>> {
        if let Some(k) = self.kernel()? {
            return self.nodes().iter().zip(&self.indemnity).map(|(x, i)| k.slope(*x, *i)).collect();
        }
        self.nodes().iter().map(|x| self.marginal(*x)).collect()
    }

    /// The multiplier used in `Φ`: `β*` for interior regimes, zero at the
    /// slack stop-loss (the variance constraint carries no weight there).
    pub fn kkt_beta(&self) -> Option<f64> {
        match self.regime {
            Regime::SlackStopLoss { .. } => Some(0.0),
            r => r.beta(),
        }
    }

    /// `Φ(x) = E[U'(W) - 2βI | X > x] - ((1+ρ) E[U'(W)] - 2β E[I])` with a given `β`.
    pub fn kkt_phi_with_beta(&self, x: f64, beta: f64) -> Result<f64> {
        let values = self.kkt_integrand(beta)?;
        let g = &self.problem.measure;
        let (eu, ei) = (g.expect_values(&values.1), self.expected_indemnity());
        let tail = g.tail_expectation(&values.0, x)?;
        Ok(tail - ((1.0 + self.problem.rho) * eu - 2.0 * beta * ei))
    }

    /// `Φ` at the solved multiplier.
    pub fn kkt_phi(&self, x: f64) -> Result<f64> {
        let beta = self
            .kkt_beta()
            .ok_or_else(|| Error::Unsupported(format!("no multiplier in the {} regime", self.regime.label())))?;
        self.kkt_phi_with_beta(x, beta)
    }

    /// `(U'(W_i) - 2β I_i, U'(W_i))` on the grid, with premium `(1+ρ) E[I]`.
    fn kkt_integrand(&self, beta: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = &self.problem;
        let premium = (1.0 + p.rho) * self.expected_indemnity();
        let mut psi = Vec::with_capacity(self.indemnity.len());
        let mut mu = Vec::with_capacity(self.indemnity.len());
        for (x, i) in self.nodes().iter().zip(&self.indemnity) {
            let m = p.utility.mu(p.wealth(*x, *i, premium))?;
            psi.push(m - 2.0 * beta * i);
            mu.push(m);
        }
        Ok((psi, mu))
    }

    /// `Φ` at every node that has mass above it (the last node gets `None`).
    pub fn kkt_profile(&self) -> Result<Vec<Option<f64>>> {
        let beta = match self.kkt_beta() {
            Some(b) => b,
            None => return Ok(vec![None; self.indemnity.len()]),
        };
        let (psi, mu) = self.kkt_integrand(beta)?;
        let g = &self.problem.measure;
        let level = (1.0 + self.problem.rho) * g.expect_values(&mu) - 2.0 * beta * self.expected_indemnity();
        // suffix sums give every tail expectation in one pass
        let n = psi.len();
        let w = g.weights();
        let mut out = vec![None; n];
        let (mut num, mut mass) = (0.0, 0.0);
        for i in (0..n).rev() {
            if mass > 0.0 {
                out[i] = Some(num / mass - level);
            }
            num += w[i] * psi[i];
            mass += w[i];
        }
        Ok(out)
    }

    /// Checks the bang-bang sign pattern: `|Φ|` small where the schedule
    /// coinsures, `Φ < 0` where it is flat at zero.
    pub fn certify_kkt(&self) -> Result<KktReport> {
        let profile = self.kkt_profile()?;
        let (_, mu) = self.kkt_integrand(self.kkt_beta().unwrap_or(0.0))?;
        let scale = self.problem.measure.expect_values(&mu);
        let nodes = self.nodes();
        let d = self.regime.deductible();
        let mut rep = KktReport {
            max_abs_phi_coinsurance: 0.0,
            max_phi_deductible: f64::NEG_INFINITY,
            scale,
            deductible_nodes: 0,
            coinsurance_nodes: 0,
            passed: false,
        };
        for i in 0..nodes.len().saturating_sub(1) {
            let Some(phi) = profile[i] else { continue };
            // Φ(x_i) governs the slope on (x_i, x_{i+1}]
            if nodes[i + 1] < d {
                rep.deductible_nodes += 1;
                rep.max_phi_deductible = rep.max_phi_deductible.max(phi);
            } else if nodes[i] >= d {
                rep.coinsurance_nodes += 1;
                rep.max_abs_phi_coinsurance = rep.max_abs_phi_coinsurance.max(phi.abs());
            }
        }
        rep.passed = rep.max_abs_phi_coinsurance <= KKT_TOL * scale
            && (rep.deductible_nodes == 0 || rep.max_phi_deductible < 0.0);
        Ok(rep)
    }

    /// Whether `I(x)/x` is non-decreasing over the positive grid nodes.
    pub fn vajda_ratio(&self) -> bool {
        let ratios: Vec<f64> = self
            .nodes()
            .iter()
            .zip(&self.indemnity)
            .filter(|(x, _)| **x > 0.0)
            .map(|(x, i)| i / x)
            .collect();
        ratios.windows(2).all(|w| w[1] - w[0] >= -1e-9)
    }

    /// Incentive compatibility on the grid: `I(0) = 0`, `0 <= I <= x` and
    /// increments in `[0, Δx]`.
    pub fn check_incentive_compatible(&self) -> Result<()> {
        let tol = 1e-12 * self.problem.measure.support_max().max(1.0);
        let (mut px, mut pi) = (0.0, 0.0);
        for (x, i) in self.nodes().iter().zip(&self.indemnity) {
            if *i < -tol || *i > x + tol {
                return Err(Error::Inconsistent(format!("indemnity {i} outside [0, {x}]")));
            }
            let (dx, di) = (x - px, i - pi);
            if di < -tol || di > dx + tol {
                return Err(Error::Inconsistent(format!("increment {di} on [{px}, {x}] outside [0, {dx}]")));
            }
            px = *x;
            pi = *i;
        }
        Ok(())
    }
}

/// Piecewise-linear interpolation through `(0, 0)` and the tabulated points,
/// flat beyond the last node.
pub fn interpolate_monotone(nodes: &[f64], values: &[f64], x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = nodes.partition_point(|n| *n < x);
    if k == nodes.len() {
        return *values.last().unwrap_or(&0.0);
    }
    let (x0, v0) = if k == 0 { (0.0, 0.0) } else { (nodes[k - 1], values[k - 1]) };
    let (x1, v1) = (nodes[k], values[k]);
    if x1 <= x0 {
        return v1;
    }
    v0 + (v1 - v0) * (x - x0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss_model::LossModel;

    fn uniform(utility: UtilityModel, w0: f64, rho: f64, nu: f64) -> ContractProblem {
        ContractProblem::new(LossModel::uniform(1.0).discretize(401).unwrap(), utility, w0, rho, nu).unwrap()
    }

    #[test]
    fn pointwise_trivial_cases() {
        let u = UtilityModel::Log;
        assert_eq!(indemnity_pointwise(0.0, 0.3, 0.5, &u, 3.0, 0.0, Branch::Fair).unwrap(), 0.0);
        let d = 0.4;
        assert_eq!(indemnity_pointwise(d, 0.1, 0.5, &u, 3.0, 0.2, Branch::Loaded { d_tilde: d }).unwrap(), 0.0);
        assert_eq!(indemnity_pointwise(0.2, 0.1, 0.5, &u, 3.0, 0.2, Branch::Loaded { d_tilde: d }).unwrap(), 0.0);
    }

    #[test]
    fn zero_beta_is_full_cover_above_deductible() {
        let u = UtilityModel::Crra { gamma: 2.0 };
        let y = indemnity_pointwise(0.8, 0.1, 0.0, &u, 3.0, 0.2, Branch::Loaded { d_tilde: 0.3 }).unwrap();
        assert!((y - 0.5).abs() < 1e-14);
    }

    #[test]
    fn slope_tends_to_zero_for_large_beta() {
        let u = UtilityModel::Log;
        let k = Kernel::new(&u, 3.0, 0.0, 0.3, 1e9, Branch::Fair, 1e-15).unwrap();
        let i = k.eval(0.7).unwrap();
        assert!(k.slope(0.7, i).unwrap() < 1e-8);
    }

    #[test]
    fn fair_interior_example() {
        let p = uniform(UtilityModel::Log, 3.0, 0.0, 0.04);
        let s = solve(&p).unwrap();
        let Regime::InteriorFair { m_star, beta_star } = s.regime else { panic!("{:?}", s.regime) };
        assert!(beta_star > 0.0);
        assert!((s.expected_indemnity() - m_star).abs() <= 1e-8 * p.measure.mean());
        assert!((s.indemnity_variance() - 0.04).abs() <= 1e-8 * 0.04);
        for (x, i) in s.nodes().iter().zip(s.indemnity()) {
            assert!(*i > 0.0 && i < x);
        }
        assert!(s.certify_kkt().unwrap().passed);
    }

    #[test]
    fn slack_when_bound_exceeds_variance() {
        let p = uniform(UtilityModel::Log, 3.0, 0.0, 0.2);
        let s = solve(&p).unwrap();
        assert_eq!(s.regime, Regime::SlackStopLoss { d_star: 0.0 });
        assert_eq!(s.indemnity(), s.nodes());
    }

    #[test]
    fn loaded_interior_example() {
        let p = uniform(UtilityModel::Cara { a: 1.0 }, 2.0, 0.2, 0.005);
        let s = solve(&p).unwrap();
        let Regime::InteriorLoaded { d_tilde, beta_star, m_star, lambda_star } = s.regime else {
            panic!("{:?}", s.regime)
        };
        assert!(d_tilde > 1.0 / 6.0 && d_tilde < 1.0);
        assert!(beta_star > 0.0);
        assert!((lambda_star - (-(2.0 - d_tilde - 1.2 * m_star)).exp()).abs() < 1e-14);
        let ms = s.marginals().unwrap();
        assert!(ms.iter().zip(s.nodes()).filter(|(_, x)| **x > d_tilde).all(|(m, _)| *m > 0.0 && *m < 1.0));
        let kkt = s.certify_kkt().unwrap();
        assert!(kkt.passed, "{kkt:?}");
        assert!(kkt.deductible_nodes > 0);
    }

    #[test]
    fn residuals_reject_wrong_parameterization() {
        let p = uniform(UtilityModel::Log, 3.0, 0.0, 0.04);
        assert!(residuals(&p, 0.3, Param::DTilde(0.2), &SolverConfig::default()).is_err());
    }

    #[test]
    fn interior_needs_continuous_law() {
        let g = LossModel::Discrete { atoms: vec![(0.0, 0.3), (1.0, 0.3), (2.0, 0.4)] }.discretize(2).unwrap();
        let p = ContractProblem::new(g, UtilityModel::Log, 5.0, 0.0, 0.2).unwrap();
        assert!(matches!(solve(&p), Err(Error::Unsupported(_))));
    }

    #[test]
    fn interpolation_is_monotone_and_anchored() {
        let nodes = [0.5, 1.0];
        let vals = [0.2, 0.6];
        assert_eq!(interpolate_monotone(&nodes, &vals, 0.0), 0.0);
        assert!((interpolate_monotone(&nodes, &vals, 0.25) - 0.1).abs() < 1e-15);
        assert!((interpolate_monotone(&nodes, &vals, 0.75) - 0.4).abs() < 1e-15);
        assert_eq!(interpolate_monotone(&nodes, &vals, 2.0), 0.6);
    }
}
