//! Property-based invariants across modules.

use nalgebra::{DMatrix, SMatrix};
use proptest::prelude::*;

use phasefield::anisotropy::{AnisotropyDensity, Matrix, Vector};
use phasefield::diagnostics::discrete_energy;
use phasefield::fem::{
    assemble_anisotropic_stiffness, assemble_laplacian, assemble_mobility_stiffness, Discretization, SparseSpdMatrix,
    MOBILITY_FLOOR,
};
use phasefield::mesh::SimplicialMesh;
use phasefield::schemes::{initial_profile, Geometry};
use phasefield::solver::{solve_coupled_ch, solve_obstacle, ChBoundary, ChParams, SolverOptions};

fn spd<const D: usize>(entries: &[f64]) -> Matrix<D> {
    let q = SMatrix::<f64, D, D>::from_fn(|i, j| entries[i * D + j]);
    q.transpose() * q + Matrix::<D>::identity() * 0.05
}

fn density2() -> impl Strategy<Value = AnisotropyDensity<2>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 4), 1..4)
        .prop_map(|ms| AnisotropyDensity::new(ms.iter().map(|m| spd::<2>(m)).collect()).unwrap())
}

fn density3() -> impl Strategy<Value = AnisotropyDensity<3>> {
    prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 9), 1..4)
        .prop_map(|ms| AnisotropyDensity::new(ms.iter().map(|m| spd::<3>(m)).collect()).unwrap())
}

fn vec2() -> impl Strategy<Value = Vector<2>> {
    prop::array::uniform2(-5.0..5.0f64).prop_map(Vector::<2>::from)
}

fn vec3() -> impl Strategy<Value = Vector<3>> {
    prop::array::uniform3(-5.0..5.0f64).prop_map(Vector::<3>::from)
}

fn tol<const D: usize>(p: &Vector<D>, q: &Vector<D>) -> f64 {
    1e-10 * (1.0 + p.norm_squared() + q.norm_squared())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gamma_is_absolutely_one_homogeneous(g in density2(), p in vec2(), lambda in -10.0..10.0f64) {
        prop_assume!(p.norm() > 1e-6 && lambda.abs() > 1e-6);
        let lhs = g.gamma(&(p * lambda));
        prop_assert!((lhs - lambda.abs() * g.gamma(&p)).abs() <= 1e-12 * lambda.abs().max(1.0) * g.gamma(&p));
    }

    #[test]
    fn stability_inequalities_hold_2d(g in density2(), p in vec2(), q in vec2(), zero_q in any::<bool>()) {
        let q = if zero_q { Vector::<2>::zeros() } else { q };
        let r = g.inequality_residuals(&p, &q);
        prop_assert!(r.max() <= tol(&p, &q), "{r:?}");
    }

    #[test]
    fn stability_inequalities_hold_3d(g in density3(), p in vec3(), q in vec3(), s in -3.0..3.0f64) {
        // collinear pairs are the equality cases of the dual estimate
        for q in [q, p * s] {
            let r = g.inequality_residuals(&p, &q);
            prop_assert!(r.max() <= tol(&p, &q), "{r:?}");
        }
    }

    #[test]
    fn b_matrix_is_spd_and_reproduces_a_grad(g in density3(), q in vec3()) {
        let b = g.b_matrix(&q);
        prop_assert_eq!(b, b.transpose());
        prop_assert!(DMatrix::from_fn(3, 3, |i, j| b[(i, j)]).cholesky().is_some());
        if q.norm() > 1e-8 {
            let a = g.a_grad(&q).unwrap();
            prop_assert!((b * q - a).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn euler_identity(g in density2(), p in vec2()) {
        prop_assume!(p.norm() > 1e-6);
        let grad = g.gamma_grad(&p).unwrap();
        prop_assert!((grad.dot(&p) - g.gamma(&p)).abs() <= 1e-12 * g.gamma(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn obstacle_solution_satisfies_kkt(
        n in 1usize..12,
        seed_entries in prop::collection::vec(-1.0..1.0f64, 144),
        rhs in prop::collection::vec(-8.0..8.0f64, 12),
    ) {
        let q = DMatrix::from_fn(n, n, |i, j| seed_entries[i * 12 + j]);
        let a = q.transpose() * q + DMatrix::identity(n, n) * 0.1;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
        let sol = solve_obstacle(&SparseSpdMatrix::from_dense(&rows), &rhs[..n], &vec![0.0; n], 1e-12, 1_000_000).unwrap();
        prop_assert!(sol.converged);
        for j in 0..n {
            let (x, mu) = (sol.solution[j], sol.multiplier[j]);
            prop_assert!(x.abs() <= 1.0);
            if x.abs() < 1.0 - 1e-9 {
                prop_assert!(mu.abs() <= 1e-8 * a[(j, j)]);
            } else {
                prop_assert!(mu * x.signum() >= -1e-8 * a[(j, j)]);
            }
        }
    }

    #[test]
    fn coupled_step_is_admissible_and_conserves_mass(
        values in prop::collection::vec(-1.2..1.2f64, 25),
        tau in 1e-5..1e-2f64,
        eps_inv in 2.0..60.0f64,
        degenerate in any::<bool>(),
        dirichlet_w in prop::option::of(-80.0..0.0f64),
    ) {
        let disc = Discretization::new(SimplicialMesh::<2>::uniform(0.5, 4).unwrap());
        let u_old: Vec<f64> = values.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let mass_old = disc.lumped_integral(&u_old);
        prop_assume!(mass_old.abs() < 0.99);
        let aniso = AnisotropyDensity::<2>::regularized_l1(0.1).unwrap();
        let k_aniso = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, &aniso, &u_old).unwrap();
        let k_b = if degenerate {
            assemble_mobility_stiffness(&disc.mesh, &disc.pattern, &u_old, |u| 1.0 - u * u, MOBILITY_FLOOR).unwrap().matrix
        } else {
            assemble_laplacian(&disc.mesh, &disc.pattern).scaled(2.0)
        };
        let params = ChParams {
            theta: 1.0,
            tau,
            eps: 1.0 / eps_inv,
            alpha: 1.0,
            c_psi: std::f64::consts::FRAC_PI_2,
            implicit_potential: false,
        };
        let opts = SolverOptions::default();
        let bc = match dirichlet_w {
            Some(w_bdry) => ChBoundary::Dirichlet { w_bdry, boundary: disc.mesh.boundary_mask() },
            None => ChBoundary::Neumann,
        };
        let sol = solve_coupled_ch(&disc.mass, &k_b, &k_aniso, &u_old, &params, bc, &opts).unwrap();
        prop_assert!(sol.converged, "residual {}", sol.residual);
        prop_assert!(sol.u.iter().all(|u| u.abs() <= 1.0));
        if dirichlet_w.is_none() {
            prop_assert!((disc.lumped_integral(&sol.u) - mass_old).abs() <= opts.tol);
        }
    }

    #[test]
    fn initial_profile_is_admissible(
        cx in -0.5..0.5f64,
        cy in -0.5..0.5f64,
        r in 0.01..0.6f64,
        eps_inv in 5.0..100.0f64,
    ) {
        let mesh = SimplicialMesh::<2>::uniform(0.5, 16).unwrap();
        let u = initial_profile(&mesh, 1.0 / eps_inv, &Geometry::Ball { center: vec![cx, cy], radius: r }).unwrap();
        prop_assert!(u.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn energy_is_nonnegative_and_vanishes_on_pure_phases(
        values in prop::collection::vec(-1.0..1.0f64, 25),
        sign in prop::bool::ANY,
    ) {
        let disc = Discretization::new(SimplicialMesh::<2>::uniform(0.5, 4).unwrap());
        let aniso = AnisotropyDensity::<2>::regularized_l1(0.3).unwrap();
        let e = discrete_energy(&disc, &aniso, 0.1, &values).unwrap();
        prop_assert!(e.gradient_energy >= 0.0 && e.potential_energy >= 0.0);
        prop_assert!((e.e_gamma_h - e.gradient_energy - e.potential_energy).abs() <= 1e-14 * e.e_gamma_h);
        let pure = vec![if sign { 1.0 } else { -1.0 }; 25];
        prop_assert_eq!(discrete_energy(&disc, &aniso, 0.1, &pure).unwrap().e_gamma_h, 0.0);
    }

    #[test]
    fn stiffness_reproduces_gradient_energy(a0 in -3.0..3.0f64, a1 in -3.0..3.0f64, a2 in -3.0..3.0f64, c in -1.0..1.0f64) {
        let mesh = SimplicialMesh::<3>::uniform(0.5, 3).unwrap();
        let disc = Discretization::new(mesh);
        let u: Vec<f64> = disc.mesh.vertices().iter().map(|p| a0 * p[0] + a1 * p[1] + a2 * p[2] + c).collect();
        let iso = AnisotropyDensity::<3>::isotropic();
        let k = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, &iso, &u).unwrap();
        let exact = a0 * a0 + a1 * a1 + a2 * a2;
        prop_assert!((k.quad_form(&u) - exact).abs() <= 1e-12 * (1.0 + exact));

        // u·K_B(u)u = |γ(∇u)|₀² for a nonlinear field and a genuinely anisotropic density
        let ani = AnisotropyDensity::<3>::regularized_l1(0.2).unwrap();
        let v: Vec<f64> = u.iter().zip(disc.mesh.vertices()).map(|(x, p)| x + (7.0 * p[0] * p[1]).sin()).collect();
        let kb = assemble_anisotropic_stiffness(&disc.mesh, &disc.pattern, &ani, &v).unwrap();
        let direct: f64 = (0..disc.mesh.num_elements())
            .map(|e| {
                let g = disc.mesh.element_gradient(e, &v).unwrap();
                disc.mesh.element_volume(e) * ani.gamma(&g).powi(2)
            })
            .sum();
        prop_assert!((kb.quad_form(&v) - direct).abs() <= 1e-12 * (1.0 + direct));
    }
}
