//! Design generation: seeded maximin-refined Latin hypercube training
//! designs and a Sobol' low-discrepancy test set, all on the unit
//! hypercube, with observations centered and normalized on the test set.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gp::Dataset;
use crate::testfns::Problem;
use crate::{GpError, Result};

/// One replicate of the benchmark data: a training design plus the shared
/// test set, with observations normalized to test-set mean 0 / variance 1.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    /// Training data in unit-hypercube coordinates, normalized outputs.
    pub train: Dataset,
    /// Test inputs in unit-hypercube coordinates.
    pub x_test: DMatrix<f64>,
    /// Normalized test outputs.
    pub z_test: DVector<f64>,
    /// Affine normalization applied: `z = (f - mean) / scale`.
    pub mean: f64,
    pub scale: f64,
}

/// Latin hypercube sample on `[0,1]^d` with a maximin refinement pass:
/// seeded random swaps within columns, accepted when they increase the
/// minimum inter-point distance.  Swaps preserve the LHS marginals.
pub fn maximin_lhs(n: usize, d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 || d == 0 {
        return Err(GpError::InvalidInput("need n >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, d);
    for j in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for i in 0..n {
            x[(i, j)] = (perm[i] as f64 + rng.gen::<f64>()) / n as f64;
        }
    }
    if n == 1 {
        return Ok(x);
    }
    let min_dist = |x: &DMatrix<f64>| -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..n {
            for k in (i + 1)..n {
                let mut s = 0.0;
                for j in 0..d {
                    let e = x[(i, j)] - x[(k, j)];
                    s += e * e;
                }
                best = best.min(s);
            }
        }
        best
    };
    let mut current = min_dist(&x);
    let sweeps = 200 * n.max(10);
    for _ in 0..sweeps {
        let j = rng.gen_range(0..d);
        if d > 1 && rng.gen_bool(0.5) {
            // cell swap between two points along one axis
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b {
                continue;
            }
            x.swap((a, j), (b, j));
            let trial = min_dist(&x);
            if trial > current {
                current = trial;
            } else {
                x.swap((a, j), (b, j)); // revert
            }
        } else {
            // re-draw one point's position within its LHS cell; in 1-D this is
            // the only move that can change the distances at all
            let i = rng.gen_range(0..n);
            let old = x[(i, j)];
            let cell = (old * n as f64).floor().min(n as f64 - 1.0);
            x[(i, j)] = (cell + rng.gen::<f64>()) / n as f64;
            let trial = min_dist(&x);
            if trial > current {
                current = trial;
            } else {
                x[(i, j)] = old;
            }
        }
    }
    Ok(x)
}

// Joe-Kuo direction-number parameters (degree, coefficient, initial m's)
// for Sobol' dimensions 2..=8; dimension 1 is the van der Corput sequence.
const SOBOL_PARAMS: [(u32, u32, &[u32]); 7] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
];

const SOBOL_BITS: usize = 32;

/// First `n` points of the Sobol' sequence on `[0,1)^d` for `d ≤ 8`,
/// skipping the initial all-zeros point.
pub fn sobol(n: usize, d: usize) -> Result<DMatrix<f64>> {
    if d == 0 || d > 8 {
        return Err(GpError::InvalidInput(format!("sobol supports 1 <= d <= 8, got {d}")));
    }
    // direction numbers, scaled into the top bits of a u32
    let mut v = vec![[0u32; SOBOL_BITS]; d];
    for k in 0..SOBOL_BITS {
        v[0][k] = 1 << (31 - k);
    }
    for j in 1..d {
        let (s, a, m) = SOBOL_PARAMS[j - 1];
        let s = s as usize;
        for k in 0..SOBOL_BITS.min(s) {
            v[j][k] = m[k] << (31 - k);
        }
        for k in s..SOBOL_BITS {
            let mut val = v[j][k - s] ^ (v[j][k - s] >> s);
            for i in 1..s {
                if (a >> (s - 1 - i)) & 1 == 1 {
                    val ^= v[j][k - i];
                }
            }
            v[j][k] = val;
        }
    }
    // gray-code generation, starting after the origin
    let mut x = DMatrix::zeros(n, d);
    let mut state = vec![0u32; d];
    for i in 0..n {
        let idx = i as u32; // point i+1 uses the lowest zero bit of i
        let c = idx.trailing_ones() as usize;
        for j in 0..d {
            state[j] ^= v[j][c];
            x[(i, j)] = state[j] as f64 / 2f64.powi(32);
        }
    }
    Ok(x)
}

/// Evaluate a problem on unit-coordinate rows.
fn eval_rows(p: &Problem, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut z = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        let u: Vec<f64> = x.row(i).iter().copied().collect();
        z[i] = p.eval_unit(&u)?;
    }
    Ok(z)
}

/// `m` seeded training designs plus one shared Sobol' test set for a
/// problem; observations are centered and scaled to unit variance on the
/// test set (population variance, `1/N`).
pub fn make_designs(
    p: &Problem,
    n: usize,
    n_test: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<DesignBundle>> {
    if n < p.dim + 2 {
        return Err(GpError::InvalidInput(format!(
            "need n >= d+2 = {} training points, got {n}",
            p.dim + 2
        )));
    }
    if n_test < n || m == 0 {
        return Err(GpError::InvalidInput("need n_test >= n and m >= 1".into()));
    }
    let x_test = sobol(n_test, p.dim)?;
    let f_test = eval_rows(p, &x_test)?;
    let mean = f_test.sum() / n_test as f64;
    let var = f_test.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_test as f64;
    if var <= 0.0 {
        return Err(GpError::Degenerate(format!("{} is constant on the test set", p.name)));
    }
    let scale = var.sqrt();
    let z_test = f_test.map(|v| (v - mean) / scale);

    let mut out = Vec::with_capacity(m);
    for r in 0..m {
        let rep_seed = seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(r as u64)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
        let x = maximin_lhs(n, p.dim, rep_seed)?;
        let f = eval_rows(p, &x)?;
        let z = f.map(|v| (v - mean) / scale);
        out.push(DesignBundle {
            train: Dataset::new(x, z)?,
            x_test: x_test.clone(),
            z_test: z_test.clone(),
            mean,
            scale,
        });
    }
    Ok(out)
}
