//! Bounded nonlinear least squares for black-box residual functions.
//!
//! Levenberg-Marquardt with Marquardt diagonal scaling, forward-difference
//! Jacobians, projection onto the box and a reflected fallback step when a
//! projected step is rejected. Variables pinned at a bound with the gradient
//! pointing outward are frozen for that iteration, which gives the active-set
//! behaviour of a trust-region-reflective method.
//!
//! The cost is `0.5 * |r(x)|^2`. Only accepted iterates change `x`, so the
//! accepted cost sequence is non-increasing and the final cost never exceeds
//! the cost at `x0`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forward-difference step relative to `max(|x|, FD_MIN_SCALE)`.
pub const FD_RELATIVE_STEP: f64 = 1e-4;
pub const FD_MIN_SCALE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Stop when `|dx| <= step * (step + |x|)`.
    pub step: f64,
    /// Stop when the projected gradient's max-norm falls below this.
    pub gradient: f64,
    /// Stop when an accepted step reduces the cost by less than `cost * cost_rel`.
    pub cost: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            step: 1e-8,
            gradient: 1e-14,
            cost: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationProblem {
    pub x0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub max_evals: usize,
    pub tolerances: Tolerances,
    /// Record every accepted iterate in the outcome.
    pub trace: bool,
}

impl OptimizationProblem {
    pub const DEFAULT_MAX_EVALS: usize = 400;

    pub fn new(x0: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        OptimizationProblem {
            x0,
            lower,
            upper,
            max_evals: Self::DEFAULT_MAX_EVALS,
            tolerances: Tolerances::default(),
            trace: false,
        }
    }

    pub fn unbounded(x0: Vec<f64>) -> Self {
        let n = x0.len();
        Self::new(x0, vec![f64::NEG_INFINITY; n], vec![f64::INFINITY; n])
    }

    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.max_evals = n;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.trace = true;
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.x0.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Config("bounds and x0 differ in length".into()));
        }
        for i in 0..n {
            let (l, u, x) = (self.lower[i], self.upper[i], self.x0[i]);
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::Config(format!("bad bounds [{l}, {u}] on variable {i}")));
            }
            if !x.is_finite() || x < l || x > u {
                return Err(Error::Config(format!("x0[{i}] = {x} outside [{l}, {u}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    StepTol,
    GradTol,
    CostTol,
    MaxEvals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub evals: usize,
    pub cost: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationOutcome {
    pub x_final: Vec<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub n_evals: usize,
    pub termination: Termination,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEntry>,
}

pub fn cost_of(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn all_finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

struct Counter<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&[f64]) -> Vec<f64>> Counter<F> {
    fn call(&mut self, x: &[f64]) -> Vec<f64> {
        self.evals += 1;
        (self.f)(x)
    }
}

/// Forward-difference Jacobian, stored column-major as one `Vec` per
/// variable. Steps never leave `[lower, upper]`; a variable whose interval
/// is a single point gets a zero column.
pub fn fd_jacobian<F>(
    f: &mut F,
    x: &[f64],
    r0: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Vec<Vec<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let h0 = FD_RELATIVE_STEP * x[j].abs().max(FD_MIN_SCALE);
        let h = if x[j] + h0 <= upper[j] {
            h0
        } else if x[j] - h0 >= lower[j] {
            -h0
        } else {
            // Interval narrower than the step: use the larger side.
            let up = upper[j] - x[j];
            let down = x[j] - lower[j];
            if up >= down {
                up
            } else {
                -down
            }
        };
        if h == 0.0 {
            cols.push(vec![0.0; r0.len()]);
            continue;
        }
        xp[j] = x[j] + h;
        let rp = f(&xp);
        xp[j] = x[j];
        let actual_h = (x[j] + h) - x[j];
        let col = if rp.len() == r0.len() && all_finite(&rp) {
            rp.iter().zip(r0).map(|(a, b)| (a - b) / actual_h).collect()
        } else {
            vec![0.0; r0.len()]
        };
        cols.push(col);
    }
    cols
}

fn clip(v: f64, l: f64, u: f64) -> f64 {
    v.max(l).min(u)
}

fn reflect_into(v: f64, l: f64, u: f64) -> f64 {
    let r = if v < l {
        l + (l - v)
    } else if v > u {
        u - (v - u)
    } else {
        v
    };
    clip(r, l, u)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Minimizes `0.5 |residual_fn(x)|^2` subject to `lower <= x <= upper`.
///
/// `residual_fn` is only ever called at feasible points. A non-finite
/// residual at `x0` is an error; during the search it rejects the step.
pub fn minimize<F>(problem: &OptimizationProblem, residual_fn: F) -> Result<OptimizationOutcome>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    problem.validate()?;
    let tol = problem.tolerances;
    let (lower, upper) = (&problem.lower, &problem.upper);
    let n = problem.x0.len();
    let mut f = Counter {
        f: residual_fn,
        evals: 0,
    };
    let mut x = problem.x0.clone();
    let mut r = f.call(&x);
    if !all_finite(&r) {
        return Err(Error::Optimizer {
            stage: 0,
            message: "residual is not finite at the starting point".into(),
        });
    }
    let m = r.len();
    let mut cost = cost_of(&r);
    let initial_cost = cost;
    let mut trace = Vec::new();
    if problem.trace {
        trace.push(TraceEntry {
            evals: f.evals,
            cost,
            x: x.clone(),
        });
    }
    let finish = |x: Vec<f64>, cost: f64, evals: usize, t: Termination, trace: Vec<TraceEntry>| {
        Ok(OptimizationOutcome {
            x_final: x,
            initial_cost,
            final_cost: cost,
            n_evals: evals,
            termination: t,
            converged: t != Termination::MaxEvals,
            trace,
        })
    };
    if n == 0 || cost == 0.0 {
        let t = if n == 0 {
            Termination::GradTol
        } else {
            Termination::CostTol
        };
        return finish(x, cost, f.evals, t, trace);
    }

    let mut mu: Option<f64> = None;
    let mut nu = 2.0;
    loop {
        if f.evals + n > problem.max_evals {
            return finish(x, cost, f.evals, Termination::MaxEvals, trace);
        }
        let jac = {
            let mut call = |p: &[f64]| f.call(p);
            fd_jacobian(&mut call, &x, &r, lower, upper)
        };
        let jtj = DMatrix::from_fn(n, n, |a, b| {
            jac[a].iter().zip(&jac[b]).map(|(p, q)| p * q).sum::<f64>()
        });
        let grad: Vec<f64> = (0..n)
            .map(|a| jac[a].iter().zip(&r).map(|(p, q)| p * q).sum::<f64>())
            .collect();
        let free: Vec<usize> = (0..n)
            .filter(|&j| {
                let pinned_low = x[j] <= lower[j] && grad[j] > 0.0;
                let pinned_high = x[j] >= upper[j] && grad[j] < 0.0;
                !(pinned_low || pinned_high)
            })
            .collect();
        let pg = free.iter().map(|&j| grad[j].abs()).fold(0.0, f64::max);
        if pg <= tol.gradient {
            return finish(x, cost, f.evals, Termination::GradTol, trace);
        }
        let diag_max = free.iter().map(|&j| jtj[(j, j)]).fold(0.0, f64::max);
        let damping_floor = 1e-12 * diag_max.max(f64::MIN_POSITIVE);
        let mu_now = mu.get_or_insert(1e-3);

        // Inner loop: shrink the trust region until a step is accepted.
        loop {
            let k = free.len();
            let a = DMatrix::from_fn(k, k, |p, q| {
                let v = jtj[(free[p], free[q])];
                if p == q {
                    v + *mu_now * v.max(damping_floor)
                } else {
                    v
                }
            });
            let b = DVector::from_fn(k, |p, _| -grad[free[p]]);
            let delta = match a.cholesky() {
                Some(ch) => ch.solve(&b),
                None => {
                    *mu_now *= nu;
                    nu *= 2.0;
                    if *mu_now > 1e20 {
                        return finish(x, cost, f.evals, Termination::StepTol, trace);
                    }
                    continue;
                }
            };
            let mut full = vec![0.0; n];
            for (p, &j) in free.iter().enumerate() {
                full[j] = delta[p];
            }
            let projected: Vec<f64> = (0..n)
                .map(|j| clip(x[j] + full[j], lower[j], upper[j]))
                .collect();
            let clipped = (0..n).any(|j| projected[j] != x[j] + full[j]);
            let mut candidates = vec![projected];
            if clipped {
                candidates.push(
                    (0..n)
                        .map(|j| reflect_into(x[j] + full[j], lower[j], upper[j]))
                        .collect(),
                );
            }

            let mut accepted = false;
            for (ci, xt) in candidates.iter().enumerate() {
                let step: Vec<f64> = xt.iter().zip(&x).map(|(a, b)| a - b).collect();
                if ci == 0 && norm(&step) <= tol.step * (tol.step + norm(&x)) {
                    return finish(x, cost, f.evals, Termination::StepTol, trace);
                }
                if ci > 0 && candidates[0] == *xt {
                    continue;
                }
                if f.evals >= problem.max_evals {
                    return finish(x, cost, f.evals, Termination::MaxEvals, trace);
                }
                let rt = f.call(xt);
                if rt.len() != m || !all_finite(&rt) {
                    continue;
                }
                let cost_t = cost_of(&rt);
                let s = DVector::from_column_slice(&step);
                let quad = (s.transpose() * &jtj * &s)[(0, 0)];
                let lin: f64 = step.iter().zip(&grad).map(|(a, b)| a * b).sum();
                let predicted = -(lin + 0.5 * quad);
                if cost_t < cost && predicted > 0.0 {
                    let rho = (cost - cost_t) / predicted;
                    let reduction = cost - cost_t;
                    let small = reduction <= tol.cost * cost && rho > 0.25;
                    x = xt.clone();
                    r = rt;
                    cost = cost_t;
                    if problem.trace {
                        trace.push(TraceEntry {
                            evals: f.evals,
                            cost,
                            x: x.clone(),
                        });
                    }
                    *mu_now *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                    nu = 2.0;
                    if cost == 0.0 || small {
                        return finish(x, cost, f.evals, Termination::CostTol, trace);
                    }
                    accepted = true;
                    break;
                }
            }
            if accepted {
                break;
            }
            *mu_now *= nu;
            nu *= 2.0;
            if *mu_now > 1e20 {
                return finish(x, cost, f.evals, Termination::StepTol, trace);
            }
        }
    }
}

/// Cost at each grid point, in grid order. A point whose residual is not
/// finite (or fails) is reported as an error for that point only.
pub fn sweep_eval<F>(mut residual_fn: F, grid: &[Vec<f64>]) -> Vec<Result<f64>>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    grid.iter()
        .enumerate()
        .map(|(i, x)| {
            let r = residual_fn(x);
            if all_finite(&r) {
                Ok(cost_of(&r))
            } else {
                Err(Error::Domain(format!("residual not finite at grid point {i}")))
            }
        })
        .collect()
}
