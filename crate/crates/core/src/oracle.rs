//! Brute-force certification and stochastic-order validators.
//!
//! [`brute_solve`] treats the discretized problem as a finite concave program
//! over incentive-compatible schedules. The decision variables are the slopes
//! `s_k ∈ [0, 1]` on each grid cell, so `I_i = Σ_{k<=i} s_k Δx_k` and the box
//! encodes incentive compatibility exactly. The variance bound is handled by
//! an augmented Lagrangian and each subproblem by projected Newton on the box:
//! the slope Hessian of a cumulative sum has condition number of order n²,
//! which plain projected gradient cannot get through at 1e-8.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::arrow::{arrow_deductible, is_variance_slack};
use crate::bounds::compute_bracket;
use crate::error::{Error, Result};
use crate::problem::ContractProblem;

/// Largest grid the oracle accepts.
pub const MAX_ORACLE_NODES: usize = 1001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    /// Projected-gradient residual at which a subproblem is solved.
    pub tol: f64,
    /// Variance excess `var - ν` accepted at termination.
    pub feas_tol: f64,
    /// Total budget of Newton steps.
    pub max_iter: usize,
    pub max_outer: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { tol: 1e-8, feas_tol: 1e-10, max_iter: 2_000, max_outer: 80 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Indemnity at the grid nodes.
    pub schedule: Vec<f64>,
    /// Expected utility of the schedule.
    pub objective: f64,
    pub active_variance: bool,
    pub iterations: usize,
    /// Projected-gradient residual of the Lagrangian at termination.
    pub kkt_residual: f64,
    /// Multiplier of the normalized constraint `(var - ν)/ν <= 0`.
    pub multiplier: f64,
    pub converged: bool,
}

struct Program<'a> {
    p: &'a ContractProblem,
    dx: Vec<f64>,
    scale: f64,
}

struct Point {
    value: f64,
    grad: Vec<f64>,
    g: f64,
}

impl<'a> Program<'a> {
    fn new(p: &'a ContractProblem) -> Result<Self> {
        let nodes = p.measure.nodes();
        let mut prev = 0.0;
        let dx = nodes
            .iter()
            .map(|x| {
                let d = x - prev;
                prev = *x;
                d
            })
            .collect();
        let scale = p.utility.mu(p.w0 - p.measure.mean())?;
        Ok(Self { p, dx, scale })
    }

    fn levels(&self, s: &[f64]) -> Vec<f64> {
        let mut acc = 0.0;
        s.iter()
            .zip(&self.dx)
            .map(|(sk, d)| {
                acc += sk * d;
                acc
            })
            .collect()
    }

    /// Value and slope-gradient of `-J/scale + (max(0, λ + c g)² - λ²) / 2c`.
    fn eval(&self, s: &[f64], lambda: f64, c: f64) -> Result<Point> {
        let p = self.p;
        let (nodes, w) = (p.measure.nodes(), p.measure.weights());
        let lv = self.levels(s);
        let e: f64 = w.iter().zip(&lv).map(|(p, i)| p * i).sum();
        let var: f64 = w.iter().zip(&lv).map(|(p, i)| p * (i - e) * (i - e)).sum();
        let premium = (1.0 + p.rho) * e;
        let mut j = 0.0;
        let mut mu = Vec::with_capacity(lv.len());
        for ((x, pi), i) in nodes.iter().zip(w).zip(&lv) {
            let wealth = p.wealth(*x, *i, premium);
            j += pi * p.utility.u(wealth)?;
            mu.push(p.utility.mu(wealth)?);
        }
        let emu: f64 = w.iter().zip(&mu).map(|(p, m)| p * m).sum();
        let g = (var - p.nu) / p.nu;
        let t = (lambda + c * g).max(0.0);
        let value = -j / self.scale + (t * t - lambda * lambda) / (2.0 * c);
        let mut grad = vec![0.0; s.len()];
        let mut suffix = 0.0;
        for k in (0..s.len()).rev() {
            let di = -w[k] * (mu[k] - (1.0 + p.rho) * emu) / self.scale + t * 2.0 * w[k] * (lv[k] - e) / p.nu;
            suffix += di;
            grad[k] = self.dx[k] * suffix;
        }
        Ok(Point { value, grad, g })
    }

    /// Hessian of the augmented objective in the slope variables.
    ///
    /// In level variables it is `Aᵀ diag(p |U''|) A` (with `A = Id - (1+ρ) 1 pᵀ`)
    /// plus the penalty terms; the slope Hessian is `Bᵀ H B` where
    /// `B_{ik} = Δx_k` for `k <= i`, applied with suffix sums.
    fn hessian(&self, s: &[f64], lambda: f64, c: f64) -> Result<DMatrix<f64>> {
        let p = self.p;
        let (nodes, w) = (p.measure.nodes(), p.measure.weights());
        let n = s.len();
        let lv = self.levels(s);
        let e: f64 = w.iter().zip(&lv).map(|(p, i)| p * i).sum();
        let var: f64 = w.iter().zip(&lv).map(|(p, i)| p * (i - e) * (i - e)).sum();
        let premium = (1.0 + p.rho) * e;
        let mut h = Vec::with_capacity(n);
        for ((x, pi), i) in nodes.iter().zip(w).zip(&lv) {
            h.push(-pi * p.utility.ddu(p.wealth(*x, *i, premium))? / self.scale);
        }
        let hsum: f64 = h.iter().sum();
        let k = 1.0 + p.rho;
        let g = (var - p.nu) / p.nu;
        let pre = lambda + c * g;
        let t = pre.max(0.0);
        let dg: Vec<f64> = w.iter().zip(&lv).map(|(pi, i)| 2.0 * pi * (i - e) / p.nu).collect();
        let mut m = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut v = -k * (h[i] * w[j] + w[i] * h[j]) + k * k * hsum * w[i] * w[j];
                if t > 0.0 {
                    v -= t * 2.0 * w[i] * w[j] / p.nu;
                }
                if pre > 0.0 {
                    v += c * dg[i] * dg[j];
                }
                if i == j {
                    v += h[i];
                    if t > 0.0 {
                        v += t * 2.0 * w[i] / p.nu;
                    }
                }
                m[(i, j)] = v;
            }
        }
        // H B: suffix sums along rows, then Bᵀ (H B): suffix sums along columns
        for i in 0..n {
            let mut acc = 0.0;
            for l in (0..n).rev() {
                acc += m[(i, l)];
                m[(i, l)] = acc * self.dx[l];
            }
        }
        for l in 0..n {
            let mut acc = 0.0;
            for i in (0..n).rev() {
                acc += m[(i, l)];
                m[(i, l)] = acc * self.dx[i];
            }
        }
        Ok(m)
    }
}

fn residual(s: &[f64], grad: &[f64]) -> f64 {
    s.iter().zip(grad).map(|(sk, gk)| (sk - (sk - gk).clamp(0.0, 1.0)).abs()).fold(0.0, f64::max)
}

/// Projected Newton on the unit box: Newton steps on the free slopes,
/// scaled gradient steps on the ones held at a bound, Armijo search along
/// the projection arc. Returns the steps taken and the final residual.
fn minimize(prog: &Program<'_>, s: &mut Vec<f64>, lambda: f64, c: f64, tol: f64, budget: usize) -> Result<(usize, f64)> {
    const SIGMA: f64 = 1e-4;
    let n = s.len();
    let mut steps = 0;
    let mut cur = prog.eval(s, lambda, c)?;
    loop {
        let r = residual(s, &cur.grad);
        if r < tol || steps >= budget {
            return Ok((steps, r));
        }
        steps += 1;
        let eps = r.min(1e-3);
        let grad = &cur.grad;
        let free: Vec<usize> = (0..n)
            .filter(|&k| {
                prog.dx[k] > 0.0 && !((s[k] <= eps && grad[k] > 0.0) || (s[k] >= 1.0 - eps && grad[k] < 0.0))
            })
            .collect();
        let h = prog.hessian(s, lambda, c)?;
        let mut d = vec![0.0; n];
        for k in 0..n {
            d[k] = -grad[k] / h[(k, k)].max(1e-300);
        }
        if !free.is_empty() {
            let nf = free.len();
            let hff = DMatrix::from_fn(nf, nf, |a, b| h[(free[a], free[b])]);
            let gf = DVector::from_fn(nf, |a, _| -grad[free[a]]);
            let top = (0..nf).map(|a| hff[(a, a)]).fold(0.0, f64::max);
            let mut reg = 0.0;
            let sol = loop {
                let mut m = hff.clone();
                for a in 0..nf {
                    m[(a, a)] += reg;
                }
                if let Some(ch) = m.cholesky() {
                    break ch.solve(&gf);
                }
                reg = if reg == 0.0 { 1e-12 * top.max(1e-300) } else { reg * 10.0 };
            };
            for (a, &k) in free.iter().enumerate() {
                d[k] = sol[a];
            }
        }
        let in_free = {
            let mut v = vec![false; n];
            for &k in &free {
                v[k] = true;
            }
            v
        };
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = s.iter().zip(&d).map(|(sk, dk)| (sk + alpha * dk).clamp(0.0, 1.0)).collect();
            let mut decrease = 0.0;
            for k in 0..n {
                decrease += if in_free[k] { -alpha * grad[k] * d[k] } else { grad[k] * (s[k] - cand[k]) };
            }
            let pt = prog.eval(&cand, lambda, c)?;
            if pt.value <= cur.value - SIGMA * decrease {
                accepted = Some((cand, pt));
                break;
            }
            alpha *= 0.5;
        }
        let (cand, pt) = match accepted {
            Some(a) => a,
            None => {
                // roundoff floor: keep the full step only if it still reduces the residual
                let cand: Vec<f64> = s.iter().zip(&d).map(|(sk, dk)| (sk + dk).clamp(0.0, 1.0)).collect();
                let pt = prog.eval(&cand, lambda, c)?;
                if residual(&cand, &pt.grad) < 0.9 * r {
                    (cand, pt)
                } else {
                    return Ok((steps, r));
                }
            }
        };
        *s = cand;
        cur = pt;
    }
}

/// Solves the discretized problem directly.
pub fn brute_solve(problem: &ContractProblem) -> Result<OracleResult> {
    brute_solve_with(problem, &OracleConfig::default())
}

pub fn brute_solve_with(problem: &ContractProblem, config: &OracleConfig) -> Result<OracleResult> {
    let g = &problem.measure;
    if g.len() > MAX_ORACLE_NODES {
        return Err(Error::Precondition(format!("oracle grid has {} nodes, at most {MAX_ORACLE_NODES} allowed", g.len())));
    }
    let prog = Program::new(problem)?;
    let arrow = arrow_deductible(problem)?;
    let start = if is_variance_slack(&arrow, problem.nu) {
        arrow.d_star
    } else {
        compute_bracket(g, &arrow, problem.nu)?.d_l
    };
    // slopes of (x - start)_+ on each cell
    let mut prev = 0.0;
    let mut s: Vec<f64> = g
        .nodes()
        .iter()
        .zip(&prog.dx)
        .map(|(x, dx)| {
            let lo = (prev - start).max(0.0);
            prev = *x;
            if *dx > 0.0 {
                (((x - start).max(0.0) - lo) / dx).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    let mut lambda = 0.0;
    let mut c = 10.0;
    let mut iterations = 0;
    let mut last_viol = f64::INFINITY;
    let mut converged = false;
    let mut kkt = f64::INFINITY;
    for _ in 0..config.max_outer {
        let budget = config.max_iter.saturating_sub(iterations);
        let (steps, _) = minimize(&prog, &mut s, lambda, c, 0.1 * config.tol, budget)?;
        iterations += steps;
        let pt = prog.eval(&s, lambda, c)?;
        let new_lambda = (lambda + c * pt.g).max(0.0);
        let viol = pt.g.max(-new_lambda / c).abs().min(pt.g.max(0.0).max((new_lambda * pt.g).abs()));
        lambda = new_lambda;
        kkt = residual(&s, &prog.eval(&s, lambda, c)?.grad);
        let excess = pt.g * problem.nu;
        if excess <= config.feas_tol && (lambda * excess).abs() <= config.feas_tol && kkt < config.tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iter {
            break;
        }
        if viol > 0.25 * last_viol {
            c *= 2.0;
        }
        last_viol = viol;
    }
    let schedule = prog.levels(&s);
    let var = g.variance_values(&schedule);
    Ok(OracleResult {
        objective: problem.expected_utility(&schedule)?,
        active_variance: var >= problem.nu * (1.0 - 1e-6),
        schedule,
        iterations,
        kkt_residual: kkt,
        multiplier: lambda,
        converged,
    })
}

/// Sign changes of `f - g` on a common grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingProfile {
    pub count: usize,
    pub locations: Vec<f64>,
    /// Sign of `f - g` right after the first crossing, zero without crossings.
    pub direction_first: i8,
}

impl CrossingProfile {
    /// `f` up-crosses `g` once: `f <= g` and then `f >= g`.
    pub fn is_single_upcross(&self) -> bool {
        self.count == 1 && self.direction_first > 0
    }

    /// `f` up-crosses `g` twice: `f <= g`, `f >= g`, `f <= g`.
    pub fn is_double_upcross(&self) -> bool {
        self.count == 2 && self.direction_first > 0
    }
}

/// Counts sign changes of `f - g`, treating `|f - g| <= tol` as contact.
///
/// Runs of contact are dropped; a crossing across such a run is placed at its
/// midpoint, a direct one by linear interpolation.
pub fn upcross_count(x: &[f64], f: &[f64], g: &[f64], tol: f64) -> CrossingProfile {
    let signed: Vec<(usize, i8, f64)> = f
        .iter()
        .zip(g)
        .enumerate()
        .filter_map(|(i, (a, b))| {
            let d = a - b;
            if d > tol {
                Some((i, 1, d))
            } else if d < -tol {
                Some((i, -1, d))
            } else {
                None
            }
        })
        .collect();
    let mut locations = Vec::new();
    let mut direction_first = 0;
    for w in signed.windows(2) {
        let ((i, si, di), (j, sj, dj)) = (w[0], w[1]);
        if si == sj {
            continue;
        }
        let loc = if j == i + 1 {
            x[i] + (x[j] - x[i]) * di / (di - dj)
        } else {
            0.5 * (x[i + 1] + x[j - 1])
        };
        if locations.is_empty() {
            direction_first = sj;
        }
        locations.push(loc);
    }
    CrossingProfile { count: locations.len(), locations, direction_first }
}

/// A finitely supported random variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDist {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteDist {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Self {
        Self { values, weights }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, p)| p * v).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().zip(&self.weights).map(|(v, p)| p * (v - m) * (v - m)).sum()
    }

    pub fn stop_loss(&self, d: f64) -> f64 {
        self.values.iter().zip(&self.weights).map(|(v, p)| p * (v - d).max(0.0)).sum()
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, x: f64) -> f64 {
        self.values.iter().zip(&self.weights).filter(|(v, _)| **v <= x).map(|(_, p)| p).sum()
    }

    fn support(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.values.iter().zip(&self.weights).filter(|(_, p)| **p > 0.0).map(|(v, _)| *v).collect();
        s.sort_by(f64::total_cmp);
        s.dedup();
        s
    }
}

fn union_support(a: &DiscreteDist, b: &DiscreteDist) -> Vec<f64> {
    let mut s = a.support();
    s.extend(b.support());
    s.sort_by(f64::total_cmp);
    s.dedup();
    s
}

/// `Z <=_cx Y`: equal means and `E[(Z-d)_+] <= E[(Y-d)_+]` for every `d`.
///
/// Both stop-loss transforms are piecewise linear with kinks on the supports,
/// so checking the union of support points is exact.
pub fn convex_order_leq(z: &DiscreteDist, y: &DiscreteDist, tol: f64) -> bool {
    if (z.mean() - y.mean()).abs() > tol {
        return false;
    }
    union_support(z, y).into_iter().all(|d| z.stop_loss(d) <= y.stop_loss(d) + tol)
}

/// `Z <=_sl Y`: `E[(Z-d)_+] <= E[(Y-d)_+]` for every `d`, means unrestricted.
pub fn stop_loss_order_leq(z: &DiscreteDist, y: &DiscreteDist, tol: f64) -> bool {
    let pts = union_support(z, y);
    // below the joint support both transforms are affine with slope -1
    z.mean() <= y.mean() + tol && pts.into_iter().all(|d| z.stop_loss(d) <= y.stop_loss(d) + tol)
}

/// Whether `Z1` has less downside risk than `Z2`: with equal mean and
/// variance, `H(x) = ∫∫ (F_{Z2} - F_{Z1}) >= 0` for all `x`.
///
/// `F_{Z2} - F_{Z1}` is a step function, so `H` is piecewise quadratic; it is
/// evaluated exactly at the breakpoints and at its interior critical points.
pub fn less_downside_risk(z1: &DiscreteDist, z2: &DiscreteDist) -> Result<bool> {
    let scale = z1.variance().max(z2.variance()).max(1e-300);
    if (z1.mean() - z2.mean()).abs() > 1e-6 || (z1.variance() - z2.variance()).abs() > 1e-6 {
        return Err(Error::Precondition(format!(
            "downside risk comparison needs equal mean and variance: ({}, {}) vs ({}, {})",
            z1.mean(),
            z1.variance(),
            z2.mean(),
            z2.variance()
        )));
    }
    let tol = -1e-9 * scale.max(1.0);
    let pts = union_support(z1, z2);
    let (mut g, mut h) = (0.0, 0.0);
    for w in pts.windows(2) {
        let diff = z2.cdf(w[0]) - z1.cdf(w[0]);
        let len = w[1] - w[0];
        if diff != 0.0 {
            let t = -g / diff;
            if t > 0.0 && t < len && h + g * t + 0.5 * diff * t * t < tol {
                return Ok(false);
            }
        }
        h += g * len + 0.5 * diff * len * len;
        g += diff * len;
        if h < tol {
            return Ok(false);
        }
    }
    Ok(true)
}
