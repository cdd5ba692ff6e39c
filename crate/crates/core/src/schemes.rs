//! Time stepping for the Allen–Cahn scheme and the two Cahn–Hilliard schemes,
//! plus construction of initial data.

use std::f64::consts::FRAC_PI_2;

use thiserror::Error;

use crate::anisotropy::{AnisotropyDensity, Vector};
use crate::diagnostics::{
    dirichlet_energy_functional, discrete_energy, stability_residual, DiagnosticsError, EnergyReport,
};
use crate::fem::{
    assemble_anisotropic_stiffness, assemble_mobility_stiffness, Discretization, FemError, NodalField,
    SparseSpdMatrix, MOBILITY_FLOOR,
};
use crate::mesh::SimplicialMesh;
use crate::solver::{solve_coupled_ch, solve_obstacle, ChBoundary, ChParams, SolverError, SolverOptions};

/// `c_Ψ = ∫_{-1}^{1} (2Ψ(s))^{1/2} ds` for the obstacle potential.
pub const C_PSI: f64 = FRAC_PI_2;

/// Default interface parameter, `ε^{-1} = 16π`.
pub const DEFAULT_EPS_INV: f64 = 16.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    AllenCahn,
    CahnHilliardNeumann,
    CahnHilliardDirichlet,
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::AllenCahn => "allen_cahn",
            SchemeKind::CahnHilliardNeumann => "cahn_hilliard_neumann",
            SchemeKind::CahnHilliardDirichlet => "cahn_hilliard_dirichlet",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "allen_cahn" => Some(SchemeKind::AllenCahn),
            "cahn_hilliard_neumann" => Some(SchemeKind::CahnHilliardNeumann),
            "cahn_hilliard_dirichlet" => Some(SchemeKind::CahnHilliardDirichlet),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mobility {
    Constant(f64),
    /// `b(u) = 1 − u²`.
    Degenerate,
}

impl Mobility {
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            Mobility::Constant(b0) => b0,
            Mobility::Degenerate => (1.0 - u * u).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    /// `ε^{-1}`; stored inverted so the default `16π` is exact.
    pub eps_inv: f64,
    pub theta: f64,
    pub alpha: f64,
    pub mobility: Mobility,
    /// Dirichlet value of the chemical potential; ignored by the other schemes.
    pub w_bdry: f64,
    pub tau: f64,
    pub t_end: f64,
    /// Write a snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    /// Treat the concave part of the potential implicitly. Not unconditionally
    /// stable; only meant for stability sweeps.
    pub implicit_potential: bool,
    pub solver: SolverOptions,
}

impl SchemeConfig {
    pub fn new(scheme: SchemeKind, tau: f64, t_end: f64) -> Self {
        Self {
            scheme,
            eps_inv: DEFAULT_EPS_INV,
            theta: 1.0,
            alpha: 1.0,
            mobility: Mobility::Constant(1.0),
            w_bdry: 0.0,
            tau,
            t_end,
            snapshot_every: 0,
            implicit_potential: false,
            solver: SolverOptions::default(),
        }
    }

    pub fn eps(&self) -> f64 {
        1.0 / self.eps_inv
    }

    pub fn validate(&self) -> Result<(), SchemeError> {
        let positive = [
            ("eps_inv", self.eps_inv),
            ("tau", self.tau),
            ("t_end", self.t_end),
            ("theta", self.theta),
            ("alpha", self.alpha),
            ("tol", self.solver.tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SchemeError::InvalidConfig(format!("{name} must be positive and finite, got {v}")));
            }
        }
        match self.mobility {
            Mobility::Constant(b0) if !(b0 > 0.0 && b0.is_finite()) => {
                return Err(SchemeError::InvalidConfig(format!("constant mobility must be positive, got {b0}")));
            }
            Mobility::Degenerate if self.scheme == SchemeKind::CahnHilliardDirichlet => {
                return Err(SchemeError::InvalidConfig(
                    "the Dirichlet scheme needs a constant mobility".into(),
                ));
            }
            _ => {}
        }
        if !self.w_bdry.is_finite() {
            return Err(SchemeError::InvalidConfig("w_bdry must be finite".into()));
        }
        Ok(())
    }

    /// `2 c_Ψ ε³ θ (α b₀)^{-1}`, the step size below which treating the concave
    /// part of the potential implicitly keeps the step problem uniquely
    /// solvable. Degenerate mobility uses its maximum `b₀ = 1`.
    pub fn implicit_step_bound(&self) -> f64 {
        let b0 = match self.mobility {
            Mobility::Constant(b0) => b0,
            Mobility::Degenerate => 1.0,
        };
        2.0 * C_PSI * self.eps().powi(3) * self.theta / (self.alpha * b0)
    }

    /// Number of uniform steps needed to reach `t_end`.
    pub fn num_steps(&self) -> usize {
        let n = self.t_end / self.tau;
        // tolerate representation error in t_end / tau
        (n - 1e-9 * n.max(1.0)).ceil().max(0.0) as usize
    }

    fn ch_params(&self) -> ChParams {
        ChParams {
            theta: self.theta,
            tau: self.tau,
            eps: self.eps(),
            alpha: self.alpha,
            c_psi: C_PSI,
            implicit_potential: self.implicit_potential,
        }
    }
}

/// Region whose inside is the phase `U = 1`.
#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Circle in 2d, sphere in 3d.
    Ball { center: Vec<f64>, radius: f64 },
    /// Union of balls.
    Balls(Vec<(Vec<f64>, f64)>),
    Cuboid { center: Vec<f64>, half_extents: Vec<f64> },
    /// Constant initial value.
    Uniform(f64),
}

impl Geometry {
    fn check_dim(&self, d: usize) -> Result<(), SchemeError> {
        let ok = match self {
            Geometry::Ball { center, radius } => center.len() == d && *radius > 0.0,
            Geometry::Balls(balls) => !balls.is_empty() && balls.iter().all(|(c, r)| c.len() == d && *r > 0.0),
            Geometry::Cuboid { center, half_extents } => {
                center.len() == d && half_extents.len() == d && half_extents.iter().all(|&h| h > 0.0)
            }
            Geometry::Uniform(v) => {
                if !(v.abs() <= 1.0) {
                    return Err(SchemeError::Geometry(format!("uniform value {v} lies outside [-1, 1]")));
                }
                true
            }
        };
        if ok {
            Ok(())
        } else {
            Err(SchemeError::Geometry(format!("geometry {self:?} does not fit dimension {d}")))
        }
    }

    /// Signed distance to the boundary, positive inside.
    pub fn signed_distance(&self, x: &[f64]) -> f64 {
        let ball = |c: &[f64], r: f64| {
            let d2: f64 = x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum();
            r - d2.sqrt()
        };
        match self {
            Geometry::Ball { center, radius } => ball(center, *radius),
            Geometry::Balls(balls) => balls.iter().map(|(c, r)| ball(c, *r)).fold(f64::NEG_INFINITY, f64::max),
            Geometry::Cuboid { center, half_extents } => {
                let q: Vec<f64> = x
                    .iter()
                    .zip(center)
                    .zip(half_extents)
                    .map(|((a, c), h)| (a - c).abs() - h)
                    .collect();
                let outside = q.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt();
                let inside = q.iter().copied().fold(f64::NEG_INFINITY, f64::max).min(0.0);
                -(outside + inside)
            }
            Geometry::Uniform(v) => {
                if *v > 0.0 {
                    f64::INFINITY
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }
}

/// `U⁰(p_j) = sin(dist(p_j)/ε)` inside the band `|dist| < επ/2` and `±1`
/// outside it.
pub fn initial_profile<const D: usize>(
    mesh: &SimplicialMesh<D>,
    eps: f64,
    geometry: &Geometry,
) -> Result<NodalField, SchemeError> {
    geometry.check_dim(D)?;
    if let Geometry::Uniform(v) = geometry {
        return Ok(vec![*v; mesh.num_vertices()]);
    }
    Ok(mesh
        .vertices()
        .iter()
        .map(|p| {
            let s = geometry.signed_distance(p.as_slice()) / eps;
            if s >= FRAC_PI_2 {
                1.0
            } else if s <= -FRAC_PI_2 {
                -1.0
            } else {
                s.sin()
            }
        })
        .collect())
}

/// Solver and monitor data of one step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub solver_iterations: usize,
    pub solver_residual: f64,
    pub converged: bool,
    pub mobility_regularized: bool,
    /// Energy the scheme guarantees to release in this step.
    pub dissipation: f64,
    /// `(U^n, 1)^h − (U^{n-1}, 1)^h`.
    pub mass_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeState {
    pub t: f64,
    pub step: usize,
    pub u: NodalField,
    pub w: NodalField,
    pub energy: EnergyReport,
    pub stats: StepStats,
}

/// Error type returned by run observers.
pub type ObserverError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("run aborted: {0}")]
    Observer(ObserverError),
    #[error("solver did not converge in step {} (residual {:.3e})", .state.step, .state.stats.solver_residual)]
    NotConverged { state: Box<SchemeState> },
}

fn energy_report<const D: usize>(
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
    u: &[f64],
) -> Result<EnergyReport, SchemeError> {
    let mut report = discrete_energy(disc, aniso, config.eps(), u)?;
    if config.scheme == SchemeKind::CahnHilliardDirichlet {
        report.f_gamma_h = Some(dirichlet_energy_functional(&report, config.alpha, C_PSI, config.w_bdry));
    }
    Ok(report)
}

/// State at `t = 0` for the given initial data.
pub fn initial_state<const D: usize>(
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
    u0: NodalField,
) -> Result<SchemeState, SchemeError> {
    config.validate()?;
    let energy = energy_report(config, disc, aniso, &u0)?;
    let w = match config.scheme {
        SchemeKind::CahnHilliardDirichlet => vec![config.w_bdry; u0.len()],
        _ => vec![0.0; u0.len()],
    };
    Ok(SchemeState {
        t: 0.0,
        step: 0,
        u: u0,
        w,
        energy,
        stats: StepStats {
            converged: true,
            ..StepStats::default()
        },
    })
}

fn finish_step<const D: usize>(
    state: &SchemeState,
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
    u: NodalField,
    w: NodalField,
    mut stats: StepStats,
) -> Result<SchemeState, SchemeError> {
    let mut energy = energy_report(config, disc, aniso, &u)?;
    energy.stability_residual = stability_residual(&state.energy, &energy, stats.dissipation);
    stats.mass_change = energy.mass - state.energy.mass;
    Ok(SchemeState {
        t: (state.step + 1) as f64 * config.tau,
        step: state.step + 1,
        u,
        w,
        energy,
        stats,
    })
}

/// One Allen–Cahn step. Eliminating `W` nodewise through
/// `½c_Ψα^{-1} W = −ε (U − U^{n-1})/τ` leaves the obstacle problem with matrix
/// `ε K_B + (ε/τ) M` and right side `M [(ε/τ) + ε^{-1}] U^{n-1}`, so `U` does
/// not depend on `α`.
pub fn allen_cahn_step<const D: usize>(
    state: &SchemeState,
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
) -> Result<SchemeState, SchemeError> {
    let eps = config.eps();
    let rate = eps / config.tau;
    let u_old = &state.u;
    let k_aniso = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, aniso, u_old)?;
    let mut a = k_aniso.scaled(eps);
    let (diag_shift, source) = if config.implicit_potential {
        (rate - config.eps_inv, rate)
    } else {
        (rate, rate + config.eps_inv)
    };
    let shift: Vec<f64> = disc.mass.iter().map(|m| m * diag_shift).collect();
    a.add_diagonal(&shift);
    let rhs: Vec<f64> = disc.mass.iter().zip(u_old).map(|(m, u)| m * source * u).collect();
    let sol = solve_obstacle(&a, &rhs, u_old, config.solver.tol, config.solver.max_sweeps)?;

    let w_scale = -2.0 * config.alpha / C_PSI * rate;
    let w: NodalField = sol.solution.iter().zip(u_old).map(|(u, uo)| w_scale * (u - uo)).collect();
    let dissipation = rate
        * disc
            .mass
            .iter()
            .zip(sol.solution.iter().zip(u_old))
            .map(|(m, (u, uo))| m * (u - uo) * (u - uo))
            .sum::<f64>();
    let stats = StepStats {
        solver_iterations: sol.iterations,
        solver_residual: sol.residual,
        converged: sol.converged,
        mobility_regularized: false,
        dissipation,
        mass_change: 0.0,
    };
    finish_step(state, config, disc, aniso, sol.solution, w, stats)
}

fn coupled_step<const D: usize>(
    state: &SchemeState,
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
    k_b: &SparseSpdMatrix,
    mobility_regularized: bool,
    bc: ChBoundary<'_>,
) -> Result<SchemeState, SchemeError> {
    let k_aniso = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, aniso, &state.u)?;
    let sol = solve_coupled_ch(&disc.mass, k_b, &k_aniso, &state.u, &config.ch_params(), bc, &config.solver)?;
    let factor = match bc {
        ChBoundary::Neumann => config.tau * C_PSI / (2.0 * config.theta * config.alpha),
        ChBoundary::Dirichlet { .. } => config.tau / config.theta,
    };
    let stats = StepStats {
        solver_iterations: sol.iterations,
        solver_residual: sol.residual,
        converged: sol.converged,
        mobility_regularized,
        dissipation: factor * k_b.quad_form(&sol.w),
        mass_change: 0.0,
    };
    finish_step(state, config, disc, aniso, sol.u, sol.w, stats)
}

/// One step of the Cahn–Hilliard scheme with no-flux boundary conditions.
/// The mobility is interpolated from `U^{n-1}` and floored at
/// [`MOBILITY_FLOOR`] on each element.
pub fn cahn_hilliard_step<const D: usize>(
    state: &SchemeState,
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
) -> Result<SchemeState, SchemeError> {
    let mobility = config.mobility;
    let k_b = assemble_mobility_stiffness(&disc.mesh, &disc.pattern, &state.u, |u| mobility.eval(u), MOBILITY_FLOOR)?;
    coupled_step(state, config, disc, aniso, &k_b.matrix, k_b.regularized, ChBoundary::Neumann)
}

/// One step of the Cahn–Hilliard scheme with `W = w_∂Ω` on the boundary and
/// constant mobility. The monitored functional is `F_γ^h`.
pub fn cahn_hilliard_dirichlet_step<const D: usize>(
    state: &SchemeState,
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
) -> Result<SchemeState, SchemeError> {
    let Mobility::Constant(b0) = config.mobility else {
        return Err(SchemeError::InvalidConfig("the Dirichlet scheme needs a constant mobility".into()));
    };
    let k_b = assemble_mobility_stiffness(&disc.mesh, &disc.pattern, &state.u, |_| b0, 0.0)?;
    let bc = ChBoundary::Dirichlet {
        w_bdry: config.w_bdry,
        boundary: disc.mesh.boundary_mask(),
    };
    coupled_step(state, config, disc, aniso, &k_b.matrix, false, bc)
}

/// Advances `state` by one step of the configured scheme.
pub fn step<const D: usize>(
    state: &SchemeState,
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
) -> Result<SchemeState, SchemeError> {
    match config.scheme {
        SchemeKind::AllenCahn => allen_cahn_step(state, config, disc, aniso),
        SchemeKind::CahnHilliardNeumann => cahn_hilliard_step(state, config, disc, aniso),
        SchemeKind::CahnHilliardDirichlet => cahn_hilliard_dirichlet_step(state, config, disc, aniso),
    }
}

/// Summary of a completed run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub final_state: SchemeState,
    /// Steps whose stability residual exceeded `10·tol`.
    pub stability_violations: usize,
    /// Steps where the monitored energy increased by more than `10·tol`.
    pub monotonicity_violations: usize,
    pub max_stability_residual: f64,
    pub max_mass_change: f64,
    pub cumulative_mass_change: f64,
    /// Monitored energy after every step, starting with the initial state.
    pub energy_trace: Vec<f64>,
}

/// Runs from `t = 0` to `t_end` with uniform steps. `observer` sees the initial
/// state and every subsequent one; its errors abort the run. A step whose
/// solver did not converge aborts with [`SchemeError::NotConverged`].
pub fn run_simulation<const D: usize>(
    config: &SchemeConfig,
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
    u0: NodalField,
    mut observer: impl FnMut(&SchemeState) -> Result<(), ObserverError>,
) -> Result<RunSummary, SchemeError> {
    let mut state = initial_state(config, disc, aniso, u0)?;
    observer(&state).map_err(SchemeError::Observer)?;
    let initial_mass = state.energy.mass;
    let flag = 10.0 * config.solver.tol;
    let mut summary = RunSummary {
        steps: 0,
        final_state: state.clone(),
        stability_violations: 0,
        monotonicity_violations: 0,
        max_stability_residual: f64::NEG_INFINITY,
        max_mass_change: 0.0,
        cumulative_mass_change: 0.0,
        energy_trace: vec![state.energy.monitored()],
    };
    for _ in 0..config.num_steps() {
        let next = step(&state, config, disc, aniso)?;
        if !next.stats.converged {
            return Err(SchemeError::NotConverged { state: Box::new(next) });
        }
        if next.energy.stability_residual > flag {
            summary.stability_violations += 1;
        }
        if next.energy.monitored() > state.energy.monitored() + flag {
            summary.monotonicity_violations += 1;
        }
        summary.max_stability_residual = summary.max_stability_residual.max(next.energy.stability_residual);
        summary.max_mass_change = summary.max_mass_change.max(next.stats.mass_change.abs());
        summary.energy_trace.push(next.energy.monitored());
        state = next;
        observer(&state).map_err(SchemeError::Observer)?;
    }
    summary.steps = state.step;
    summary.cumulative_mass_change = state.energy.mass - initial_mass;
    summary.final_state = state;
    Ok(summary)
}

/// Center of a geometry, used for radius and shape measurements.
pub fn geometry_center<const D: usize>(geometry: &Geometry) -> Vector<D> {
    match geometry {
        Geometry::Ball { center, .. } | Geometry::Cuboid { center, .. } if center.len() == D => {
            Vector::<D>::from_fn(|i, _| center[i])
        }
        _ => Vector::<D>::zeros(),
    }
}
