//! Both constrained solvers against dense brute-force enumeration of active sets.

mod common;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phasefield::anisotropy::AnisotropyDensity;
use phasefield::fem::{assemble_anisotropic_stiffness, assemble_mobility_stiffness, Discretization, SparseSpdMatrix};
use phasefield::mesh::SimplicialMesh;
use phasefield::solver::{solve_coupled_ch, solve_obstacle, ChBoundary, ChParams, SolverOptions};

use common::{box_qp_oracle, random_spd};

#[test]
fn obstacle_matches_enumeration_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut active_seen = 0;
    for _ in 0..60 {
        let n = rng.random_range(1..=8);
        let a = random_spd(&mut rng, n);
        let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-6.0..6.0)).collect();
        let expected = box_qp_oracle(&a, &rhs);
        active_seen += expected.iter().filter(|v| v.abs() == 1.0).count();
        let sol = solve_obstacle(&SparseSpdMatrix::from_dense(&a), &rhs, &vec![0.0; n], 1e-14, 1_000_000).unwrap();
        assert!(sol.converged);
        for (x, e) in sol.solution.iter().zip(&expected) {
            assert!((x - e).abs() < 1e-8, "{x} vs {e}");
        }
    }
    assert!(active_seen > 20, "test data should exercise the bounds");
}

/// Brute-force solution of the mixed complementarity system of one Cahn–Hilliard
/// step: every assignment of {lower, free, upper} to the vertices is tried and
/// the unique one satisfying the sign conditions is returned.
fn coupled_oracle(
    mass: &[f64],
    k_b: &[Vec<f64>],
    k_aniso: &[Vec<f64>],
    u_old: &[f64],
    p: &ChParams,
) -> (Vec<f64>, Vec<f64>) {
    let n = mass.len();
    let cw = 0.5 * p.c_psi / p.alpha;
    let rate = p.theta / p.tau;
    let mut found: Option<(Vec<f64>, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        let state: Vec<i32> = (0..n).map(|j| (code / 3usize.pow(j as u32) % 3) as i32 - 1).collect();
        let mut m = DMatrix::<f64>::zeros(2 * n, 2 * n);
        let mut b = DVector::<f64>::zeros(2 * n);
        for j in 0..n {
            if state[j] == 0 {
                for k in 0..n {
                    m[(j, k)] = p.eps * k_aniso[j][k];
                }
                m[(j, n + j)] -= cw * mass[j];
                b[j] = mass[j] * u_old[j] / p.eps;
            } else {
                m[(j, j)] = 1.0;
                b[j] = state[j] as f64;
            }
            m[(n + j, j)] = rate * mass[j];
            for k in 0..n {
                m[(n + j, n + k)] = k_b[j][k];
            }
            b[n + j] = rate * mass[j] * u_old[j];
        }
        let Some(x) = m.clone().lu().solve(&b) else { continue };
        // singular systems can come back with a garbage "solution"
        if (&m * &x - &b).norm() > 1e-9 * (1.0 + b.norm()) {
            continue;
        }
        let ok = (0..n).all(|j| {
            let mu = mass[j] * (u_old[j] / p.eps + cw * x[n + j])
                - p.eps * (0..n).map(|k| k_aniso[j][k] * x[k]).sum::<f64>();
            match state[j] {
                0 => x[j].abs() <= 1.0 + 1e-12,
                1 => mu >= -1e-12,
                _ => mu <= 1e-12,
            }
        });
        if ok {
            let next: (Vec<f64>, Vec<f64>) = ((0..n).map(|j| x[j]).collect(), (0..n).map(|j| x[n + j]).collect());
            // a free component sitting exactly on a bound is found twice
            if let Some((u, _)) = &found {
                let gap = u.iter().zip(&next.0).map(|(a, b): (&f64, &f64)| (a - b).abs()).fold(0.0, f64::max);
                assert!(gap < 1e-9, "oracle found two different solutions");
                continue;
            }
            found = Some(next);
        }
    }
    found.expect("oracle found no solution")
}

#[test]
fn coupled_solver_matches_enumeration_oracle() {
    let disc = Discretization::new(SimplicialMesh::<2>::uniform(0.5, 2).unwrap());
    let n = disc.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let aniso = AnisotropyDensity::<2>::regularized_l1(0.3).unwrap();
    let mut constrained = 0;
    for trial in 0..12 {
        let u_old: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4) {
                0 => 1.0,
                1 => -1.0,
                _ => rng.random_range(-1.0..1.0),
            })
            .collect();
        let k_aniso = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, &aniso, &u_old).unwrap();
        let k_b = assemble_mobility_stiffness(&disc.mesh, &disc.pattern, &u_old, |_| 2.0, 0.0).unwrap().matrix;
        let params = ChParams {
            theta: 1.0,
            tau: [1e-3, 1e-2, 1e-1][trial % 3],
            eps: rng.random_range(0.05..0.5),
            alpha: 1.0,
            c_psi: std::f64::consts::FRAC_PI_2,
            implicit_potential: false,
        };
        let mass_old: f64 = disc.lumped_integral(&u_old);
        if mass_old.abs() >= disc.mass.iter().sum::<f64>() {
            continue;
        }
        let (eu, ew) = coupled_oracle(&disc.mass, &k_b.to_dense(), &k_aniso.to_dense(), &u_old, &params);
        constrained += eu.iter().filter(|v| v.abs() == 1.0).count();
        let sol = solve_coupled_ch(
            &disc.mass,
            &k_b,
            &k_aniso,
            &u_old,
            &params,
            ChBoundary::Neumann,
            &SolverOptions::default(),
        )
        .unwrap();
        assert!(sol.converged, "trial {trial}: residual {}", sol.residual);
        for j in 0..n {
            assert!((sol.u[j] - eu[j]).abs() < 1e-8, "trial {trial} U[{j}]: {} vs {}", sol.u[j], eu[j]);
            assert!((sol.w[j] - ew[j]).abs() < 1e-8 * (1.0 + ew[j].abs()), "trial {trial} W[{j}]");
        }
    }
    assert!(constrained > 0, "test data should exercise the bounds");
}

#[test]
fn dirichlet_pure_phase_threshold() {
    let disc = Discretization::new(SimplicialMesh::<2>::uniform(0.5, 8).unwrap());
    let n = disc.num_vertices();
    let ones = vec![1.0; n];
    let aniso = AnisotropyDensity::<2>::regularized_l1(0.01).unwrap();
    let k_aniso = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, &aniso, &ones).unwrap();
    let k_b = assemble_mobility_stiffness(&disc.mesh, &disc.pattern, &ones, |_| 2.0, 0.0).unwrap().matrix;
    let params = ChParams {
        theta: 1.0,
        tau: 1e-5,
        eps: 1.0 / (16.0 * std::f64::consts::PI),
        alpha: 1.0,
        c_psi: std::f64::consts::FRAC_PI_2,
        implicit_potential: false,
    };
    let bc = |w| ChBoundary::Dirichlet {
        w_bdry: w,
        boundary: disc.mesh.boundary_mask(),
    };
    let sol = solve_coupled_ch(&disc.mass, &k_b, &k_aniso, &ones, &params, bc(-64.0), &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    // exactly at the threshold the multipliers vanish up to rounding
    assert!(sol.u.iter().all(|&u| (u - 1.0).abs() < 1e-12));
    assert!(sol.w.iter().all(|&w| (w + 64.0).abs() < 1e-9));

    let sol = solve_coupled_ch(&disc.mass, &k_b, &k_aniso, &ones, &params, bc(-65.0), &SolverOptions::default()).unwrap();
    assert!(sol.converged);
    assert!(sol.u.iter().any(|&u| u < 1.0));
}

#[test]
fn coupled_solver_is_deterministic() {
    let disc = Discretization::new(SimplicialMesh::<2>::uniform(0.5, 6).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u_old: Vec<f64> = (0..disc.num_vertices()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let aniso = AnisotropyDensity::<2>::regularized_l1(0.1).unwrap();
    let k_aniso = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, &aniso, &u_old).unwrap();
    let k_b = assemble_mobility_stiffness(&disc.mesh, &disc.pattern, &u_old, |u| 1.0 - u * u, 1e-12).unwrap().matrix;
    let params = ChParams {
        theta: 0.05,
        tau: 1e-4,
        eps: 0.05,
        alpha: 1.3,
        c_psi: std::f64::consts::FRAC_PI_2,
        implicit_potential: false,
    };
    let run = || {
        solve_coupled_ch(&disc.mass, &k_b, &k_aniso, &u_old, &params, ChBoundary::Neumann, &SolverOptions::default())
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    let before = disc.lumped_integral(&u_old);
    assert!((disc.lumped_integral(&a.u) - before).abs() < 1e-9);
}
