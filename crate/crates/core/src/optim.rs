//! Box-constrained quasi-Newton minimization: L-BFGS directions with
//! projection onto the box and an Armijo backtracking line search.
//!
//! Objective evaluations may fail (e.g. a covariance matrix losing
//! positive definiteness inside the box); failed trial points are treated
//! as `+∞` by the line search, so the iterate simply backs off.

use nalgebra::DVector;
use std::collections::VecDeque;

use crate::{GpError, Result};

/// Box constraints, one closed interval per coordinate.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl Bounds {
    pub fn new(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(GpError::InvalidInput("bounds length mismatch".into()));
        }
        if lower.iter().zip(upper.iter()).any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
        {
            return Err(GpError::InvalidInput("bounds must be finite with lower <= upper".into()));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |i, _| x[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// Optimizer settings.
#[derive(Debug, Clone)]
pub struct OptimOptions {
    pub max_iters: usize,
    /// Convergence threshold on the infinity norm of the projected gradient.
    pub grad_tol: f64,
    /// L-BFGS memory.
    pub memory: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions { max_iters: 300, grad_tol: 1e-6, memory: 10 }
    }
}

/// Differentiable objective.  The line search only needs values, so
/// implementors can keep gradient work out of backtracking probes; plain
/// `FnMut` closures returning `(value, gradient)` also work via the
/// blanket impl (computing the gradient at every probe).
pub trait Objective {
    fn value(&mut self, x: &DVector<f64>) -> Result<f64>;
    fn value_grad(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)>;
}

impl<F> Objective for F
where
    F: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    fn value(&mut self, x: &DVector<f64>) -> Result<f64> {
        self(x).map(|(f, _)| f)
    }
    fn value_grad(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        self(x)
    }
}

/// Objective assembled from separate value and value+gradient closures.
pub struct SplitObjective<V, G> {
    pub value: V,
    pub value_grad: G,
}

impl<V, G> Objective for SplitObjective<V, G>
where
    V: FnMut(&DVector<f64>) -> Result<f64>,
    G: FnMut(&DVector<f64>) -> Result<(f64, DVector<f64>)>,
{
    fn value(&mut self, x: &DVector<f64>) -> Result<f64> {
        (self.value)(x)
    }
    fn value_grad(&mut self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        (self.value_grad)(x)
    }
}

/// Outcome of a minimization run.
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: DVector<f64>,
    pub f: f64,
    /// Infinity norm of the projected gradient at `x`.
    pub projected_grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
}

/// Infinity norm of the projected gradient `x - P(x - g)`.
fn projected_grad_norm(x: &DVector<f64>, g: &DVector<f64>, bounds: &Bounds) -> f64 {
    let step = bounds.project(&(x - g));
    (x - step).amax()
}

/// Minimize `f` over the box, starting from `x0` (projected into the box).
///
/// `f` returns the value and the gradient.  Deterministic: no randomness,
/// no time-based stopping.
pub fn minimize<F>(
    mut f: F,
    x0: &DVector<f64>,
    bounds: &Bounds,
    opts: &OptimOptions,
) -> Result<OptimResult>
where
    F: Objective,
{
    if x0.len() != bounds.lower.len() {
        return Err(GpError::InvalidInput("start point does not match bounds".into()));
    }
    let mut x = bounds.project(x0);
    let (mut fx, mut gx) = f.value_grad(&x)?;
    if !fx.is_finite() {
        return Err(GpError::Degenerate("objective not finite at the start point".into()));
    }

    let mut pairs: VecDeque<(DVector<f64>, DVector<f64>, f64)> = VecDeque::new(); // (s, y, 1/yᵀs)
    let mut iters = 0;
    let mut converged = projected_grad_norm(&x, &gx, bounds) <= opts.grad_tol;

    while !converged && iters < opts.max_iters {
        iters += 1;

        // two-loop recursion on the current memory
        let mut d = -&gx;
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, inv_ys) in pairs.iter().rev() {
            let a = inv_ys * s.dot(&d);
            d -= y * a;
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = s.dot(y) / y.dot(y);
            d *= gamma;
        }
        for ((s, y, inv_ys), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = inv_ys * y.dot(&d);
            d += s * (a - b);
        }

        // backtracking Armijo search along the projected arc
        let c1 = 1e-4;
        let mut accepted = None;
        for attempt in 0..2 {
            let dir = if attempt == 0 { d.clone() } else { -&gx };
            let mut t = 1.0;
            for _ in 0..40 {
                let xt = bounds.project(&(&x + &dir * t));
                let dx = &xt - &x;
                if dx.amax() == 0.0 {
                    break;
                }
                // value-only probe; the gradient is computed once, at the
                // accepted point
                if let Ok(ft) = f.value(&xt) {
                    if ft.is_finite() && ft <= fx + c1 * gx.dot(&dx) {
                        if let Ok((ft2, gt)) = f.value_grad(&xt) {
                            accepted = Some((xt, ft2, gt));
                        }
                        break;
                    }
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
            // L-BFGS direction failed: drop the memory and retry steepest
            pairs.clear();
        }
        let Some((xn, fn_, gn)) = accepted else {
            break; // no admissible decrease in any direction
        };

        let s = &xn - &x;
        let y = &gn - &gx;
        let ys = y.dot(&s);
        if ys > 1e-12 * s.norm() * y.norm() {
            if pairs.len() == opts.memory {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / ys));
        }
        x = xn;
        fx = fn_;
        gx = gn;
        converged = projected_grad_norm(&x, &gx, bounds) <= opts.grad_tol;
    }

    Ok(OptimResult {
        projected_grad_norm: projected_grad_norm(&x, &gx, bounds),
        x,
        f: fx,
        iters,
        converged,
    })
}
