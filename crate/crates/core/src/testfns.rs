//! Deterministic benchmark test functions from the computer-experiments
//! literature, plus the rotated Rosenbrock collection.
//!
//! All problems expose their natural input box; designs and fits work on
//! the unit hypercube, so evaluation maps unit coordinates back to the box.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{GpError, Result};

/// The function behind a [`Problem`].
#[derive(Debug, Clone)]
enum Evaluator {
    GoldsteinPrice,
    GoldsteinPrice1d,
    Mystery,
    Borehole,
    Rosenbrock,
    /// `x ↦ Rosenbrock(Q (x - c))`.
    RotatedRosenbrock { q: DMatrix<f64>, c: DVector<f64> },
}

/// A deterministic test function on a box.
#[derive(Debug, Clone)]
pub struct Problem {
    pub name: String,
    pub dim: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    evaluator: Evaluator,
}

/// 2-D Goldstein-Price function (global minimum 3 at (0, -1)).
pub fn goldstein_price(x: f64, y: f64) -> f64 {
    let a = 1.0
        + (x + y + 1.0).powi(2)
            * (19.0 - 14.0 * x + 3.0 * x * x - 14.0 * y + 6.0 * x * y + 3.0 * y * y);
    let b = 30.0
        + (2.0 * x - 3.0 * y).powi(2)
            * (18.0 - 32.0 * x + 12.0 * x * x + 48.0 * y - 36.0 * x * y + 27.0 * y * y);
    a * b
}

/// Goldstein-Price restricted to the segment from (-2, 2) to (2/3, -2).
pub fn goldstein_price_1d(t: f64) -> f64 {
    let x = t * (2.0 / 3.0) + (1.0 - t) * (-2.0);
    let y = t * (-2.0) + (1.0 - t) * 2.0;
    goldstein_price(x, y)
}

/// Mystery function on [0, 5]².
pub fn mystery(x1: f64, x2: f64) -> f64 {
    2.0 + 0.01 * (x2 - x1 * x1).powi(2)
        + (1.0 - x1).powi(2)
        + 2.0 * (2.0 - x2).powi(2)
        + 7.0 * (0.5 * x1).sin() * (0.7 * x1 * x2).sin()
}

/// Borehole function (water flow through a borehole, 8 inputs).
pub fn borehole(x: &[f64]) -> f64 {
    let (rw, r, tu, hu, tl, hl, l, kw) = (x[0], x[1], x[2], x[3], x[4], x[5], x[6], x[7]);
    let lnr = (r / rw).ln();
    let num = 2.0 * std::f64::consts::PI * tu * (hu - hl);
    let den = lnr * (1.0 + 2.0 * l * tu / (lnr * rw * rw * kw) + tu / tl);
    num / den
}

/// d-dimensional Rosenbrock function.
pub fn rosenbrock(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..x.len() - 1 {
        s += 100.0 * (x[i + 1] - x[i] * x[i]).powi(2) + (1.0 - x[i]).powi(2);
    }
    s
}

impl Problem {
    /// Builtin problems by name: `goldstein-price`, `goldstein-price-1d`,
    /// `mystery`, `borehole`, `rosenbrock-<d>`.
    pub fn builtin(name: &str) -> Result<Problem> {
        let name_lc = name.trim().to_ascii_lowercase();
        let p = match name_lc.as_str() {
            "goldstein-price" => Problem {
                name: name_lc,
                dim: 2,
                lower: vec![-2.0, -2.0],
                upper: vec![2.0, 2.0],
                evaluator: Evaluator::GoldsteinPrice,
            },
            "goldstein-price-1d" => Problem {
                name: name_lc,
                dim: 1,
                lower: vec![0.0],
                upper: vec![1.0],
                evaluator: Evaluator::GoldsteinPrice1d,
            },
            "mystery" => Problem {
                name: name_lc,
                dim: 2,
                lower: vec![0.0, 0.0],
                upper: vec![5.0, 5.0],
                evaluator: Evaluator::Mystery,
            },
            "borehole" => Problem {
                name: name_lc,
                dim: 8,
                lower: vec![0.05, 100.0, 63070.0, 990.0, 63.1, 700.0, 1120.0, 9855.0],
                upper: vec![0.15, 50000.0, 115600.0, 1110.0, 116.0, 820.0, 1680.0, 12045.0],
                evaluator: Evaluator::Borehole,
            },
            other => {
                if let Some(ds) = other.strip_prefix("rosenbrock-") {
                    let d: usize = ds
                        .parse()
                        .map_err(|_| GpError::InvalidInput(format!("bad problem '{name}'")))?;
                    if d < 2 {
                        return Err(GpError::InvalidInput("rosenbrock needs d >= 2".into()));
                    }
                    Problem {
                        name: other.to_string(),
                        dim: d,
                        lower: vec![-5.0; d],
                        upper: vec![5.0; d],
                        evaluator: Evaluator::Rosenbrock,
                    }
                } else {
                    return Err(GpError::InvalidInput(format!("unknown problem '{name}'")));
                }
            }
        };
        Ok(p)
    }

    /// Evaluate at a point in the problem's natural box.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(GpError::InvalidInput(format!(
                "{} expects {} coordinates, got {}",
                self.name,
                self.dim,
                x.len()
            )));
        }
        let tol = 1e-12;
        for j in 0..self.dim {
            let span = self.upper[j] - self.lower[j];
            if x[j] < self.lower[j] - tol * span || x[j] > self.upper[j] + tol * span {
                return Err(GpError::InvalidInput(format!(
                    "coordinate {j} = {} outside [{}, {}] for {}",
                    x[j], self.lower[j], self.upper[j], self.name
                )));
            }
        }
        Ok(match &self.evaluator {
            Evaluator::GoldsteinPrice => goldstein_price(x[0], x[1]),
            Evaluator::GoldsteinPrice1d => goldstein_price_1d(x[0]),
            Evaluator::Mystery => mystery(x[0], x[1]),
            Evaluator::Borehole => borehole(x),
            Evaluator::Rosenbrock => rosenbrock(x),
            Evaluator::RotatedRosenbrock { q, c } => {
                let v = DVector::from_row_slice(x) - c;
                let y = q * v;
                rosenbrock(y.as_slice())
            }
        })
    }

    /// Evaluate at a point in unit-hypercube coordinates.
    pub fn eval_unit(&self, u: &[f64]) -> Result<f64> {
        let x: Vec<f64> = (0..self.dim)
            .map(|j| self.lower[j] + u[j].clamp(0.0, 1.0) * (self.upper[j] - self.lower[j]))
            .collect();
        self.eval(&x)
    }
}

/// Seeded random orthogonal matrix (product of d Householder reflections,
/// sign-fixed to determinant +1 for even counts of reflections used).
fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut q = DMatrix::identity(d, d);
    for _ in 0..d {
        let mut v = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let nrm = v.norm();
        if nrm < 1e-12 {
            continue;
        }
        v /= nrm;
        // H = I - 2 v vᵀ
        let h = DMatrix::identity(d, d) - &v * v.transpose() * 2.0;
        q = h * q;
    }
    q
}

/// Collection of rotated-and-shifted Rosenbrock problems
/// `x ↦ Rosenbrock(Q_k (x - c_k))`, optimum kept inside the box.
pub fn rotated_rosenbrock_family(d: usize, count: usize, seed: u64) -> Result<Vec<Problem>> {
    if d < 2 || count == 0 {
        return Err(GpError::InvalidInput("need d >= 2 and count >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let q = random_orthogonal(d, &mut rng);
        // optimum sits at x* = Qᵀ 1 + c; with c ∈ [-1,1]^d this stays well
        // inside [-5,5]^d since ‖Qᵀ1‖ = √d
        let c = DVector::from_fn(d, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        out.push(Problem {
            name: format!("rotated-rosenbrock-{d}-{k}"),
            dim: d,
            lower: vec![-5.0; d],
            upper: vec![5.0; d],
            evaluator: Evaluator::RotatedRosenbrock { q, c },
        });
    }
    Ok(out)
}
