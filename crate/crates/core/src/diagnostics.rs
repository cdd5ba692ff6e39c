//! Discrete energies, stability residuals and zero level set geometry.

use std::collections::HashMap;

use thiserror::Error;

use crate::anisotropy::{unit_directions, AnisotropyDensity, Vector};
use crate::fem::Discretization;
use crate::mesh::SimplicialMesh;

/// Values of `U` may exceed `[−1, 1]` by this much before the energy is rejected.
pub const ADMISSIBILITY_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("nodal value {value} at vertex {vertex} lies outside [-1, 1]")]
    Inadmissible { vertex: usize, value: f64 },
    #[error("field has {got} values, mesh has {expected} vertices")]
    LengthMismatch { expected: usize, got: usize },
    #[error("need at least {min} interface points, got {got}")]
    TooFewPoints { min: usize, got: usize },
    #[error("interface points are degenerate (all at the center)")]
    Degenerate,
}

/// Energy quantities of one discrete state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyReport {
    pub e_gamma_h: f64,
    /// Only set for runs with a Dirichlet condition on the chemical potential.
    pub f_gamma_h: Option<f64>,
    /// `(U, 1)^h`.
    pub mass: f64,
    /// `½ ε |γ(∇U)|₀²`.
    pub gradient_energy: f64,
    /// `ε^{-1} (Ψ(U), 1)^h` with `Ψ(u) = ½(1 − u²)`.
    pub potential_energy: f64,
    /// Filled in by the time stepper; zero for a state without predecessor.
    pub stability_residual: f64,
}

impl EnergyReport {
    /// The functional that is nonincreasing for the scheme the report came from.
    pub fn monitored(&self) -> f64 {
        self.f_gamma_h.unwrap_or(self.e_gamma_h)
    }
}

/// `E_γ^h(U) = ½ ε Σ_σ |σ| γ(∇U|_σ)² + ε^{-1} Σ_j M_j ½ (1 − U_j²)`.
pub fn discrete_energy<const D: usize>(
    disc: &Discretization<D>,
    aniso: &AnisotropyDensity<D>,
    eps: f64,
    u: &[f64],
) -> Result<EnergyReport, DiagnosticsError> {
    let mesh = &disc.mesh;
    if u.len() != mesh.num_vertices() {
        return Err(DiagnosticsError::LengthMismatch {
            expected: mesh.num_vertices(),
            got: u.len(),
        });
    }
    if let Some((vertex, &value)) = u
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.abs() <= 1.0 + ADMISSIBILITY_SLACK))
    {
        return Err(DiagnosticsError::Inadmissible { vertex, value });
    }
    let grad_sum: f64 = (0..mesh.num_elements())
        .map(|e| {
            let g = aniso.gamma(&mesh.gradient_unchecked(e, u));
            mesh.element_volume(e) * g * g
        })
        .sum();
    let gradient_energy = 0.5 * eps * grad_sum;
    let potential_energy = disc
        .mass
        .iter()
        .zip(u)
        .map(|(m, &x)| m * 0.5 * (1.0 - x * x).max(0.0))
        .sum::<f64>()
        / eps;
    Ok(EnergyReport {
        e_gamma_h: gradient_energy + potential_energy,
        f_gamma_h: None,
        mass: disc.lumped_integral(u),
        gradient_energy,
        potential_energy,
        stability_residual: 0.0,
    })
}

/// `F_γ^h(U) = 2α c_Ψ^{-1} E_γ^h(U) − w_∂Ω (U, 1)^h`.
pub fn dirichlet_energy_functional(report: &EnergyReport, alpha: f64, c_psi: f64, w_bdry: f64) -> f64 {
    2.0 * alpha / c_psi * report.e_gamma_h - w_bdry * report.mass
}

/// `lhs − rhs` of the discrete stability inequality between two consecutive
/// states: `monitored(curr) + dissipation − monitored(prev)`.
///
/// `dissipation` is the nonnegative term the scheme guarantees to release in
/// one step, e.g. `τ (2θα)^{-1} c_Ψ (K_b W)·W` for the Neumann Cahn–Hilliard
/// scheme.
pub fn stability_residual(prev: &EnergyReport, curr: &EnergyReport, dissipation: f64) -> f64 {
    curr.monitored() + dissipation - prev.monitored()
}

/// Zero level set of a P1 function, one point per crossed mesh edge.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet<const D: usize> {
    pub points: Vec<Vector<D>>,
    /// Pairs of point indices forming the polyline (2d only).
    pub segments: Vec<[usize; 2]>,
    component: Vec<usize>,
    num_components: usize,
}

impl<const D: usize> LevelSet<D> {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of connected pieces; crossing points are connected when they lie
    /// in a common element.
    pub fn num_components(&self) -> usize {
        self.num_components
    }

    /// Component label of each point, in `0..num_components()`.
    pub fn component_labels(&self) -> &[usize] {
        &self.component
    }

    pub fn mean_radius(&self, center: &Vector<D>) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let sum: f64 = self.points.iter().map(|p| (p - center).norm()).sum();
        Some(sum / self.points.len() as f64)
    }

    /// Minimum and maximum distance of the crossing points from `center`.
    pub fn radius_range(&self, center: &Vector<D>) -> Option<(f64, f64)> {
        self.points.iter().map(|p| (p - center).norm()).fold(None, |acc, r| match acc {
            None => Some((r, r)),
            Some((lo, hi)) => Some((lo.min(r), hi.max(r))),
        })
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Marching simplices: an edge is crossed when its end values have different
/// signs, where `U > 0` counts as positive and `U ≤ 0` as nonpositive.
pub fn zero_level_set<const D: usize>(
    mesh: &SimplicialMesh<D>,
    u: &[f64],
) -> Result<LevelSet<D>, DiagnosticsError> {
    if u.len() != mesh.num_vertices() {
        return Err(DiagnosticsError::LengthMismatch {
            expected: mesh.num_vertices(),
            got: u.len(),
        });
    }
    let mut index: HashMap<(usize, usize), usize> = HashMap::new();
    let mut points = Vec::new();
    let mut segments = Vec::new();
    let mut links: Vec<[usize; 2]> = Vec::new();
    let mut local = Vec::with_capacity(4);
    for el in mesh.elements() {
        local.clear();
        for a in 0..el.len() {
            for b in a + 1..el.len() {
                let (i, j) = (el[a].min(el[b]), el[a].max(el[b]));
                if (u[i] > 0.0) == (u[j] > 0.0) {
                    continue;
                }
                let id = *index.entry((i, j)).or_insert_with(|| {
                    let t = u[i] / (u[i] - u[j]);
                    let (pi, pj) = (mesh.vertex(i), mesh.vertex(j));
                    points.push(pi + (pj - pi) * t);
                    points.len() - 1
                });
                local.push(id);
            }
        }
        if D == 2 && local.len() == 2 {
            segments.push([local[0], local[1]]);
        }
        for w in local.windows(2) {
            links.push([w[0], w[1]]);
        }
    }
    let mut uf = UnionFind((0..points.len()).collect());
    for [a, b] in links {
        uf.union(a, b);
    }
    let mut label_of_root = HashMap::new();
    let component: Vec<usize> = (0..points.len())
        .map(|i| {
            let root = uf.find(i);
            let next = label_of_root.len();
            *label_of_root.entry(root).or_insert(next)
        })
        .collect();
    Ok(LevelSet {
        points,
        segments,
        component,
        num_components: label_of_root.len(),
    })
}

/// Number of directions used to resolve the Wulff shape.
const WULFF_DIRECTIONS_2D: usize = 2048;
const WULFF_DIRECTIONS_3D: usize = 4000;

/// Radial function of the Wulff shape, `ρ(u) = min_{n·u > 0} γ(n) / (n·u)`, so
/// that `ρ(u) u` lies on its boundary.
fn wulff_radius<const D: usize>(normals: &[(Vector<D>, f64)], u: &Vector<D>) -> f64 {
    normals
        .iter()
        .filter_map(|(n, g)| {
            let c = n.dot(u);
            (c > 0.0).then(|| g / c)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Hausdorff distance between `points` and the boundary of the Wulff
/// shape of `aniso` centered at `center` and scaled by the least-squares fit of
/// the radial distances.
///
/// In 2d the Wulff boundary is a closed polygon through dense radial samples
/// and the points are joined by angle into a second polygon; in 3d both sets
/// are compared as point clouds.
pub fn wulff_shape_distance<const D: usize>(
    points: &[Vector<D>],
    aniso: &AnisotropyDensity<D>,
    center: &Vector<D>,
) -> Result<f64, DiagnosticsError> {
    const MIN_POINTS: usize = 8;
    if points.len() < MIN_POINTS {
        return Err(DiagnosticsError::TooFewPoints {
            min: MIN_POINTS,
            got: points.len(),
        });
    }
    let rel: Vec<Vector<D>> = points.iter().map(|p| p - center).collect();
    let extent = rel.iter().map(|r| r.norm()).fold(0.0, f64::max);
    if !(extent > 0.0) || rel.iter().any(|r| !r.norm().is_finite()) {
        return Err(DiagnosticsError::Degenerate);
    }

    let n_dirs = if D == 2 { WULFF_DIRECTIONS_2D } else { WULFF_DIRECTIONS_3D };
    let normals: Vec<(Vector<D>, f64)> = unit_directions::<D>(n_dirs)
        .into_iter()
        .map(|n| (n, aniso.gamma(&n)))
        .collect();

    let (mut num, mut den) = (0.0, 0.0);
    for r in &rel {
        let len = r.norm();
        if len > 0.0 {
            let rho = wulff_radius(&normals, &(r / len));
            num += len * rho;
            den += rho * rho;
        }
    }
    if !(den > 0.0) {
        return Err(DiagnosticsError::Degenerate);
    }
    let scale = num / den;

    let boundary: Vec<Vector<D>> = normals
        .iter()
        .map(|(u, _)| u * (scale * wulff_radius(&normals, u)))
        .collect();

    if D == 2 {
        // interface points ordered by angle form a closed polygon for
        // star-shaped interfaces
        let mut ordered = rel.clone();
        ordered.sort_by(|a, b| a[1].atan2(a[0]).total_cmp(&b[1].atan2(b[0])));
        let forward = rel.iter().map(|p| polygon_distance(p, &boundary)).fold(0.0, f64::max);
        let backward = boundary.iter().map(|b| polygon_distance(b, &ordered)).fold(0.0, f64::max);
        Ok(forward.max(backward))
    } else {
        let forward = rel.iter().map(|p| nearest(p, &boundary)).fold(0.0, f64::max);
        let backward = boundary.iter().map(|b| nearest(b, &rel)).fold(0.0, f64::max);
        Ok(forward.max(backward))
    }
}

fn nearest<const D: usize>(p: &Vector<D>, set: &[Vector<D>]) -> f64 {
    set.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)
}

fn polygon_distance<const D: usize>(p: &Vector<D>, polygon: &[Vector<D>]) -> f64 {
    (0..polygon.len())
        .map(|k| point_segment_distance(p, &polygon[k], &polygon[(k + 1) % polygon.len()]))
        .fold(f64::INFINITY, f64::min)
}

fn point_segment_distance<const D: usize>(p: &Vector<D>, a: &Vector<D>, b: &Vector<D>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}
