#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `QᵀQ + 0.1 I` with uniform entries in `Q`.
pub fn random_spd(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    let q = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let a = q.transpose() * q + DMatrix::<f64>::identity(n, n) * 0.1;
    (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect()
}

/// Minimizer of `½xᵀAx − rhsᵀx` over `[−1, 1]^n` by trying every assignment of
/// {lower, free, upper} and keeping the one that satisfies the KKT conditions.
pub fn box_qp_oracle(a: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let state: Vec<i32> = (0..n).map(|j| (code / 3usize.pow(j as u32) % 3) as i32 - 1).collect();
        let free: Vec<usize> = (0..n).filter(|&j| state[j] == 0).collect();
        let mut x: Vec<f64> = state.iter().map(|&s| s as f64).collect();
        if !free.is_empty() {
            let m = DMatrix::<f64>::from_fn(free.len(), free.len(), |r, c| a[free[r]][free[c]]);
            let b = DVector::<f64>::from_fn(free.len(), |r, _| {
                let j = free[r];
                rhs[j] - (0..n).filter(|k| state[*k] != 0).map(|k| a[j][k] * x[k]).sum::<f64>()
            });
            let Some(sol) = m.cholesky().map(|c| c.solve(&b)) else { continue };
            for (r, &j) in free.iter().enumerate() {
                x[j] = sol[r];
            }
        }
        let ok = (0..n).all(|j| {
            let mu = rhs[j] - (0..n).map(|k| a[j][k] * x[k]).sum::<f64>();
            match state[j] {
                0 => x[j].abs() <= 1.0,
                1 => mu >= 0.0,
                _ => mu <= 0.0,
            }
        });
        if ok {
            return x;
        }
    }
    panic!("no KKT point found");
}
