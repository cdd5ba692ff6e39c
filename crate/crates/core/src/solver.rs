//! Solvers for the box-constrained problems of one time step.
//!
//! * [`solve_obstacle`]: the symmetric obstacle problem `(Ax − f)·(χ − x) ≥ 0`
//!   for all `χ ∈ [−1, 1]^n` by projected Gauss–Seidel.
//! * [`solve_coupled_ch`]: the mixed system of the Cahn–Hilliard schemes, a
//!   mass equation for `(U, W)` coupled to the variational inequality for `U`,
//!   by a primal–dual active-set iteration whose linear subproblems are solved
//!   with a sparse LU factorization.
//!
//! Multipliers follow the convention `μ = f − lhs(x)`: `μ ≥ 0` where a
//! component sits at `+1`, `μ ≤ 0` at `−1`, and `μ = 0` in between.

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;
use thiserror::Error;

use crate::fem::{NodalField, SparseSpdMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("diagonal entry {index} is not positive ({value})")]
    NonPositiveDiagonal { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("Neumann problem is not solvable: |(U, 1)| = {mass} is not below |Ω| = {volume}")]
    Unsolvable { mass: f64, volume: f64 },
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
}

fn check_dim(expected: usize, got: usize) -> Result<(), SolverError> {
    if expected == got {
        Ok(())
    } else {
        Err(SolverError::DimensionMismatch { expected, got })
    }
}

#[inline]
fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Output of [`solve_obstacle`].
#[derive(Debug, Clone, PartialEq)]
pub struct ViSolution {
    /// Solution in `[−1, 1]^n`.
    pub solution: NodalField,
    /// `rhs − A x`, the complementarity witness.
    pub multiplier: NodalField,
    pub iterations: usize,
    /// Max over components of `|x_j − clamp(x_j + μ_j / A_jj)|`.
    pub residual: f64,
    pub converged: bool,
}

fn natural_residual(x: &[f64], mu: &[f64], diag: &[f64]) -> f64 {
    x.iter()
        .zip(mu)
        .zip(diag)
        .map(|((&xj, &mj), &dj)| (xj - clamp_unit(xj + mj / dj)).abs())
        .fold(0.0, f64::max)
}

/// Projected Gauss–Seidel for `(Ax − rhs)·(χ − x) ≥ 0 ∀χ ∈ [−1, 1]^n`.
///
/// `A` must be symmetric positive definite. Sweeps run in index order, so the
/// result is bit-reproducible. Non-convergence within `max_iter` sweeps is
/// reported through [`ViSolution::converged`], not as an error.
pub fn solve_obstacle(
    a: &SparseSpdMatrix,
    rhs: &[f64],
    x0: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<ViSolution, SolverError> {
    let n = a.dim();
    check_dim(n, rhs.len())?;
    check_dim(n, x0.len())?;
    if !(tol > 0.0) {
        return Err(SolverError::InvalidTolerance(tol));
    }
    let diag = a.diagonal();
    if let Some((index, &value)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(SolverError::NonPositiveDiagonal { index, value });
    }

    let mut x: Vec<f64> = x0.iter().map(|&v| clamp_unit(v)).collect();
    let mut mu = vec![0.0; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut max_step: f64 = 0.0;
        for j in 0..n {
            let mut s = rhs[j];
            for (k, v) in a.row(j) {
                if k != j {
                    s -= v * x[k];
                }
            }
            let next = clamp_unit(s / diag[j]);
            max_step = max_step.max((next - x[j]).abs());
            x[j] = next;
        }
        if max_step <= tol {
            a.mul_vec_into(&x, &mut mu);
            mu.iter_mut().zip(rhs).for_each(|(m, &r)| *m = r - *m);
            residual = natural_residual(&x, &mu, &diag);
            if residual <= tol {
                break;
            }
        }
    }
    a.mul_vec_into(&x, &mut mu);
    mu.iter_mut().zip(rhs).for_each(|(m, &r)| *m = r - *m);
    residual = residual.min(natural_residual(&x, &mu, &diag));
    Ok(ViSolution {
        converged: residual <= tol,
        solution: x,
        multiplier: mu,
        iterations,
        residual,
    })
}

/// Parameters of one Cahn–Hilliard step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChParams {
    pub theta: f64,
    pub tau: f64,
    pub eps: f64,
    pub alpha: f64,
    pub c_psi: f64,
    /// Uses `ε^{-1} U^n` instead of `ε^{-1} U^{n-1}` on the right of the
    /// inequality. Only conditionally solvable; used for stability sweeps.
    pub implicit_potential: bool,
}

impl ChParams {
    /// `½ c_Ψ α^{-1}`, the factor multiplying `W` in the inequality.
    pub fn w_factor(&self) -> f64 {
        0.5 * self.c_psi / self.alpha
    }
}

/// Boundary treatment of the chemical potential.
#[derive(Debug, Clone, Copy)]
pub enum ChBoundary<'a> {
    /// No-flux: the mass equation is tested with all of `S^h`.
    Neumann,
    /// `W = w_bdry` on flagged vertices; the mass equation is tested with `S^h_0`.
    Dirichlet { w_bdry: f64, boundary: &'a [bool] },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    pub max_active_set_updates: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_sweeps: 10_000,
            max_active_set_updates: 100,
        }
    }
}

/// Output of [`solve_coupled_ch`].
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledSolution {
    pub u: NodalField,
    pub w: NodalField,
    pub multiplier: NodalField,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Bound {
    Lower,
    Free,
    Upper,
}

/// Slack (in units of `U`) before a free component is pushed onto a bound or an
/// active one released; keeps rounding noise from toggling the active set.
const ACTIVE_SET_SLACK: f64 = 1e-12;

/// Non-improving PDAS updates tolerated before switching to the primal method.
const STALL_LIMIT: usize = 3;

fn bound_of(u: f64) -> Bound {
    if u >= 1.0 {
        Bound::Upper
    } else if u <= -1.0 {
        Bound::Lower
    } else {
        Bound::Free
    }
}

fn bound_value(b: Bound) -> f64 {
    match b {
        Bound::Upper => 1.0,
        Bound::Lower => -1.0,
        Bound::Free => 0.0,
    }
}

/// The data of one coupled step; [`CoupledSystem::solve`] solves the linear
/// system obtained by fixing the active components at their bounds.
struct CoupledSystem<'a> {
    mass: &'a [f64],
    k_b: &'a SparseSpdMatrix,
    k_aniso: &'a SparseSpdMatrix,
    u_old: &'a [f64],
    params: &'a ChParams,
    bc: ChBoundary<'a>,
    vi_diag: Vec<f64>,
}

impl CoupledSystem<'_> {
    fn is_fixed_w(&self, j: usize) -> bool {
        match self.bc {
            ChBoundary::Dirichlet { boundary, .. } => boundary[j],
            ChBoundary::Neumann => false,
        }
    }

    fn solve(&self, bounds: &[Bound], u: &mut [f64], w: &mut [f64]) -> Result<(), SolverError> {
        let n = self.mass.len();
        let (mass, eps) = (self.mass, self.params.eps);
        let time_factor = self.params.theta / self.params.tau;
        // with no free component the Neumann system only fixes W up to a
        // constant; pin its mean
        let pin_mean = matches!(self.bc, ChBoundary::Neumann) && bounds.iter().all(|&b| b != Bound::Free);
        let dim = 2 * n + usize::from(pin_mean);
        let mut triplets: Vec<Triplet<usize, usize, f64>> =
            Vec::with_capacity(2 * (self.k_b.nnz() + self.k_aniso.nnz()) + 4 * n);
        let mut rhs = vec![0.0; dim];
        for j in 0..n {
            let (ru, rw) = (2 * j, 2 * j + 1);
            if bounds[j] == Bound::Free {
                for (k, v) in self.k_aniso.row(j) {
                    triplets.push(Triplet::new(ru, 2 * k, eps * v));
                }
                triplets.push(Triplet::new(ru, rw, -self.params.w_factor() * mass[j]));
                if self.params.implicit_potential {
                    triplets.push(Triplet::new(ru, ru, -mass[j] / eps));
                } else {
                    rhs[ru] = mass[j] * self.u_old[j] / eps;
                }
            } else {
                triplets.push(Triplet::new(ru, ru, 1.0));
                rhs[ru] = bound_value(bounds[j]);
            }
            if let (true, ChBoundary::Dirichlet { w_bdry, .. }) = (self.is_fixed_w(j), self.bc) {
                triplets.push(Triplet::new(rw, rw, 1.0));
                rhs[rw] = w_bdry;
            } else {
                triplets.push(Triplet::new(rw, ru, time_factor * mass[j]));
                for (k, v) in self.k_b.row(j) {
                    triplets.push(Triplet::new(rw, 2 * k + 1, v));
                }
                rhs[rw] = time_factor * mass[j] * self.u_old[j];
                if pin_mean {
                    triplets.push(Triplet::new(rw, 2 * n, mass[j]));
                    triplets.push(Triplet::new(2 * n, rw, mass[j]));
                }
            }
        }
        let x = solve_sparse(dim, &triplets, &rhs)?;
        for j in 0..n {
            u[j] = x[2 * j];
            w[j] = x[2 * j + 1];
        }
        Ok(())
    }

    /// Snaps `u` onto the active bounds and returns the multiplier and the
    /// KKT residual.
    fn finish(&self, bounds: &[Bound], u: &mut [f64], w: &[f64]) -> (Vec<f64>, f64) {
        for (uj, &b) in u.iter_mut().zip(bounds) {
            *uj = match b {
                Bound::Free => clamp_unit(*uj),
                b => bound_value(b),
            };
        }
        let mut mu = vec![0.0; u.len()];
        vi_multiplier(self.k_aniso, self.mass, self.u_old, u, w, self.params, &mut mu);
        let time_factor = self.params.theta / self.params.tau;
        let residual = coupled_residual(self.mass, self.k_b, self.u_old, u, w, &mu, &self.vi_diag, time_factor, &|j| {
            self.is_fixed_w(j)
        });
        (mu, residual)
    }

    /// `μ_j / D_j` with `D_j` the scale of inequality row `j`.
    fn scaled_multipliers(&self, u: &[f64], w: &[f64], mu: &mut [f64]) {
        vi_multiplier(self.k_aniso, self.mass, self.u_old, u, w, self.params, mu);
        mu.iter_mut().zip(&self.vi_diag).for_each(|(m, d)| *m /= d);
    }

    /// Primal–dual active set. Returns `true` once the active set is stable;
    /// `false` if it stalls or runs out of updates.
    fn pdas(
        &self,
        bounds: &mut [Bound],
        u: &mut [f64],
        w: &mut [f64],
        max_updates: usize,
        iterations: &mut usize,
    ) -> Result<bool, SolverError> {
        let n = bounds.len();
        let mut lambda = vec![0.0; n];
        let mut best = usize::MAX;
        let mut stalled = 0;
        while *iterations < max_updates {
            *iterations += 1;
            self.solve(bounds, u, w)?;
            self.scaled_multipliers(u, w, &mut lambda);
            let mut violations = 0;
            for j in 0..n {
                let next = if lambda[j] + (u[j] - 1.0) > ACTIVE_SET_SLACK {
                    Bound::Upper
                } else if lambda[j] + (u[j] + 1.0) < -ACTIVE_SET_SLACK {
                    Bound::Lower
                } else {
                    Bound::Free
                };
                if next != bounds[j] {
                    violations += 1;
                    bounds[j] = next;
                }
            }
            if violations == 0 {
                return Ok(true);
            }
            if violations < best {
                best = violations;
                stalled = 0;
            } else {
                stalled += 1;
                if stalled >= STALL_LIMIT {
                    break;
                }
            }
        }
        Ok(false)
    }

    /// Projection of `guess` onto `K^h`, and for Neumann onto the set of
    /// fields with the mass of `u_old`: `clamp(guess + c)` with the shift `c`
    /// found by bisection.
    fn feasible_start(&self, guess: &[f64]) -> Vec<f64> {
        let clamped = |c: f64| guess.iter().map(move |g| (g + c).clamp(-1.0, 1.0));
        if !matches!(self.bc, ChBoundary::Neumann) {
            return clamped(0.0).collect();
        }
        let target: f64 = self.mass.iter().zip(self.u_old).map(|(m, u)| m * u).sum();
        let excess = |c: f64| -> f64 { self.mass.iter().zip(clamped(c)).map(|(m, u)| m * u).sum::<f64>() - target };
        let (lo_g, hi_g) = guess.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &g| (a.min(g), b.max(g)));
        let (mut lo, mut hi) = (-1.0 - hi_g, 1.0 - lo_g);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if excess(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let c = if excess(lo).abs() <= excess(hi).abs() { lo } else { hi };
        clamped(c).collect()
    }

    /// Primal active-set method on the problem with `W` eliminated, a strictly
    /// convex QP over `K^h` (plus the mass constraint for Neumann). Starts from
    /// the last iterate made feasible by [`Self::feasible_start`] and moves towards the minimizer over the current
    /// free set as far as the box allows, adding the blocking bound. At a
    /// minimizer of the current face it releases every bound with a wrong-signed
    /// multiplier; if that gives a zero step, only the most violated one is
    /// released, as in the classical method, so the objective still decreases.
    /// Slower than [`Self::pdas`] but cannot cycle on the cases where the mass
    /// constraint makes full PDAS updates infeasible.
    fn primal(
        &self,
        bounds: &mut [Bound],
        u: &mut [f64],
        w: &mut [f64],
        max_updates: usize,
        iterations: &mut usize,
    ) -> Result<bool, SolverError> {
        let n = bounds.len();
        let mut current = self.feasible_start(u);
        for (b, &c) in bounds.iter_mut().zip(&current) {
            *b = bound_of(c);
        }
        let mut lambda = vec![0.0; n];
        let mut released: Vec<(usize, Bound)> = Vec::new();
        // set after a joint release gave a zero step, cleared by the next
        // positive step
        let mut single = false;
        while *iterations < max_updates {
            *iterations += 1;
            self.solve(bounds, u, w)?;
            let mut step = 1.0;
            let mut blocking = None;
            for j in 0..n {
                if bounds[j] != Bound::Free {
                    continue;
                }
                let d = u[j] - current[j];
                let room = if d > 0.0 {
                    (1.0 - current[j]) / d
                } else if d < 0.0 {
                    (-1.0 - current[j]) / d
                } else {
                    f64::INFINITY
                };
                if room < step {
                    step = room.max(0.0);
                    blocking = Some(j);
                }
            }
            if let Some(j) = blocking {
                if step == 0.0 && released.len() > 1 {
                    for &(k, b) in &released[1..] {
                        bounds[k] = b;
                    }
                    released.truncate(1);
                    single = true;
                    continue;
                }
                if step > 0.0 {
                    single = false;
                }
                released.clear();
                for k in 0..n {
                    if bounds[k] == Bound::Free {
                        current[k] += step * (u[k] - current[k]);
                    }
                }
                bounds[j] = if u[j] > current[j] { Bound::Upper } else { Bound::Lower };
                current[j] = bound_value(bounds[j]);
                continue;
            }
            if current != *u {
                single = false;
            }
            current.copy_from_slice(u);
            self.scaled_multipliers(u, w, &mut lambda);
            let mut wrong: Vec<(usize, f64)> = (0..n)
                .filter_map(|j| match bounds[j] {
                    Bound::Upper if lambda[j] < -ACTIVE_SET_SLACK => Some((j, -lambda[j])),
                    Bound::Lower if lambda[j] > ACTIVE_SET_SLACK => Some((j, lambda[j])),
                    _ => None,
                })
                .collect();
            if wrong.is_empty() {
                return Ok(true);
            }
            // most violated first
            wrong.sort_by(|a, b| b.1.total_cmp(&a.1));
            if single {
                wrong.truncate(1);
            }
            released.clear();
            for (j, _) in wrong {
                released.push((j, bounds[j]));
                bounds[j] = Bound::Free;
            }
        }
        Ok(false)
    }
}

/// Solves one step of the Cahn–Hilliard schemes: find `U ∈ K^h`, `W` with
///
/// ```text
/// θ M (U − u_old)/τ + K_b W = 0                     (rows of S^h or S^h_0)
/// ε (K_B U)·(χ − U) ≥ Σ_j M_j [½c_Ψα^{-1} W_j + ε^{-1} u_old,j](χ_j − U_j)   ∀χ ∈ K^h
/// ```
///
/// `mass` is the lumped mass, `k_b` the mobility stiffness and `k_aniso` the
/// stiffness built from `B(∇u_old)`. A primal–dual active-set iteration,
/// initialised from the components of `u_old` sitting on `±1`, handles the
/// usual case. If it stalls, a primal active-set method restarted from
/// `u_old` takes over; `iterations` counts the linear solves of both. With
/// `implicit_potential` the problem may be nonconvex and there is no fallback.
pub fn solve_coupled_ch(
    mass: &[f64],
    k_b: &SparseSpdMatrix,
    k_aniso: &SparseSpdMatrix,
    u_old: &[f64],
    params: &ChParams,
    bc: ChBoundary<'_>,
    options: &SolverOptions,
) -> Result<CoupledSolution, SolverError> {
    let n = mass.len();
    check_dim(n, k_b.dim())?;
    check_dim(n, k_aniso.dim())?;
    check_dim(n, u_old.len())?;
    if !(options.tol > 0.0) {
        return Err(SolverError::InvalidTolerance(options.tol));
    }
    if let ChBoundary::Dirichlet { boundary, .. } = bc {
        check_dim(n, boundary.len())?;
    }
    if let ChBoundary::Neumann = bc {
        let volume: f64 = mass.iter().sum();
        let m: f64 = mass.iter().zip(u_old).map(|(a, b)| a * b).sum();
        if !(m.abs() < volume) {
            return Err(SolverError::Unsolvable { mass: m, volume });
        }
    }

    let eps = params.eps;
    let vi_diag: Vec<f64> = (0..n)
        .map(|j| {
            let mut d = eps * k_aniso.get(j, j);
            if params.implicit_potential {
                d -= mass[j] / eps;
            }
            d.abs().max(mass[j])
        })
        .collect();
    let system = CoupledSystem {
        mass,
        k_b,
        k_aniso,
        u_old,
        params,
        bc,
        vi_diag,
    };

    let mut bounds: Vec<Bound> = u_old.iter().map(|&u| bound_of(u)).collect();
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut iterations = 0;
    system.pdas(&mut bounds, &mut u, &mut w, options.max_active_set_updates, &mut iterations)?;
    let (mut mu, mut residual) = system.finish(&bounds, &mut u, &w);
    // Only the KKT residual decides. A stable active set with no free component
    // can still violate the mass equation (the pinned mean absorbs it), and at
    // degenerate solutions (multipliers ≈ 0) PDAS flips bounds on rounding
    // noise without settling although its iterate is accurate.
    // The primal method is a descent method and needs the convex problem.
    if residual > options.tol && !params.implicit_potential {
        let budget = iterations + options.max_active_set_updates.max(4 * n);
        system.primal(&mut bounds, &mut u, &mut w, budget, &mut iterations)?;
        (mu, residual) = system.finish(&bounds, &mut u, &w);
    }
    Ok(CoupledSolution {
        converged: residual <= options.tol,
        u,
        w,
        multiplier: mu,
        iterations,
        residual,
    })
}

/// `μ = ε^{-1} M u_old + ½c_Ψα^{-1} M W − ε K_B U` (with `u_old → U` for the
/// implicit variant).
fn vi_multiplier(
    k_aniso: &SparseSpdMatrix,
    mass: &[f64],
    u_old: &[f64],
    u: &[f64],
    w: &[f64],
    params: &ChParams,
    mu: &mut [f64],
) {
    k_aniso.mul_vec_into(u, mu);
    let source = if params.implicit_potential { u } else { u_old };
    for j in 0..mu.len() {
        mu[j] = mass[j] * (source[j] / params.eps + params.w_factor() * w[j]) - params.eps * mu[j];
    }
}

#[allow(clippy::too_many_arguments)]
fn coupled_residual(
    mass: &[f64],
    k_b: &SparseSpdMatrix,
    u_old: &[f64],
    u: &[f64],
    w: &[f64],
    mu: &[f64],
    vi_diag: &[f64],
    time_factor: f64,
    is_fixed_w: &impl Fn(usize) -> bool,
) -> f64 {
    let vi = natural_residual(u, mu, vi_diag);
    let kw = k_b.mul_vec(w);
    let mass_rows = (0..u.len())
        .filter(|&j| !is_fixed_w(j))
        .map(|j| {
            let scale = time_factor * mass[j];
            (scale * (u[j] - u_old[j]) + kw[j]).abs() / scale
        })
        .fold(0.0, f64::max);
    vi.max(mass_rows)
}

fn solve_sparse(dim: usize, triplets: &[Triplet<usize, usize, f64>], rhs: &[f64]) -> Result<Vec<f64>, SolverError> {
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, triplets)
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let lu = mat
        .sp_lu()
        .map_err(|e| SolverError::Factorization(format!("{e:?}")))?;
    let b = Col::from_fn(dim, |i| rhs[i]);
    let x = lu.solve(&b);
    let out: Vec<f64> = (0..dim).map(|i| x[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::Factorization("singular linear subproblem".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_obstacle_cases() {
        let a = SparseSpdMatrix::from_dense(&[vec![2.0]]);
        let sol = solve_obstacle(&a, &[5.0], &[0.0], 1e-12, 100).unwrap();
        assert_eq!(sol.solution, vec![1.0]);
        assert!(sol.multiplier[0] > 0.0);
        assert!(sol.converged);

        let sol = solve_obstacle(&a, &[1.0], &[0.0], 1e-12, 100).unwrap();
        assert_eq!(sol.solution, vec![0.5]);
        assert_eq!(sol.multiplier, vec![0.0]);
    }

    #[test]
    fn obstacle_rejects_bad_input() {
        let a = SparseSpdMatrix::from_dense(&[vec![0.0]]);
        assert_eq!(
            solve_obstacle(&a, &[1.0], &[0.0], 1e-9, 10).unwrap_err(),
            SolverError::NonPositiveDiagonal { index: 0, value: 0.0 }
        );
        let a = SparseSpdMatrix::from_dense(&[vec![1.0]]);
        assert!(solve_obstacle(&a, &[1.0, 2.0], &[0.0], 1e-9, 10).is_err());
        assert!(solve_obstacle(&a, &[1.0], &[0.0], 0.0, 10).is_err());
    }

    #[test]
    fn obstacle_reports_non_convergence() {
        let a = SparseSpdMatrix::from_dense(&[vec![1.0, 0.99], vec![0.99, 1.0]]);
        let sol = solve_obstacle(&a, &[0.5, -0.5], &[0.0, 0.0], 1e-14, 1).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.solution.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn coupled_zero_data_is_fixed_point() {
        let mass = vec![0.25; 4];
        let lap = SparseSpdMatrix::from_dense(&[
            vec![1.0, -1.0, 0.0, 0.0],
            vec![-1.0, 2.0, -1.0, 0.0],
            vec![0.0, -1.0, 2.0, -1.0],
            vec![0.0, 0.0, -1.0, 1.0],
        ]);
        let params = ChParams {
            theta: 1.0,
            tau: 1e-3,
            eps: 0.1,
            alpha: 1.0,
            c_psi: std::f64::consts::FRAC_PI_2,
            implicit_potential: false,
        };
        let sol = solve_coupled_ch(&mass, &lap, &lap, &[0.0; 4], &params, ChBoundary::Neumann, &SolverOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.u.iter().chain(&sol.w).all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn coupled_rejects_unsolvable_neumann_data() {
        let mass = vec![0.5; 2];
        let lap = SparseSpdMatrix::from_dense(&[vec![1.0, -1.0], vec![-1.0, 1.0]]);
        let params = ChParams {
            theta: 1.0,
            tau: 1.0,
            eps: 1.0,
            alpha: 1.0,
            c_psi: 1.0,
            implicit_potential: false,
        };
        let err = solve_coupled_ch(&mass, &lap, &lap, &[1.0, 1.0], &params, ChBoundary::Neumann, &SolverOptions::default())
            .unwrap_err();
        assert!(matches!(err, SolverError::Unsolvable { .. }));
    }
}
