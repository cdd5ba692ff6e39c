//! P1 finite element operators: lumped mass, anisotropic stiffness built from
//! `B(∇U^{n-1})`, and mobility-weighted stiffness built from `π^h[b(U^{n-1})]`.

use thiserror::Error;

use crate::anisotropy::{AnisotropyDensity, Vector};
use crate::mesh::SimplicialMesh;

/// Per-vertex values of a P1 function.
pub type NodalField = Vec<f64>;

/// Lower bound applied to element mobilities by the Cahn–Hilliard schemes so
/// that `W` stays determined where `b(U^{n-1})` vanishes.
pub const MOBILITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("mobility is negative ({value}) at vertex {vertex}")]
    NegativeMobility { vertex: usize, value: f64 },
}

fn check_len(expected: usize, got: usize) -> Result<(), FemError> {
    if expected == got {
        Ok(())
    } else {
        Err(FemError::LengthMismatch { expected, got })
    }
}

/// Symmetric sparse matrix in compressed row storage. Both triangles are
/// stored; columns within a row are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpdMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSpdMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    /// The caller is responsible for supplying a symmetric set of entries.
    pub fn from_triplets(n: usize, triplets: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "triplet ({i}, {j}) out of range for n = {n}");
            rows[i].push((j, v));
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if col_idx.len() > *row_ptr.last().unwrap() && *col_idx.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Dense row-major input; exact zeros off the diagonal are dropped.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let triplets = rows.iter().enumerate().flat_map(|(i, row)| {
            assert_eq!(row.len(), n, "dense matrix must be square");
            row.iter()
                .enumerate()
                .filter(move |&(j, &v)| v != 0.0 || i == j)
                .map(move |(j, &v)| (i, j, v))
        });
        Self::from_triplets(n, triplets)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// `s·A`, same pattern.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `A + diag(d)`; every row must already store its diagonal entry.
    pub fn add_diagonal(&mut self, d: &[f64]) {
        assert_eq!(d.len(), self.n);
        for (i, &di) in d.iter().enumerate() {
            let range = self.row_ptr[i]..self.row_ptr[i + 1];
            let k = self.col_idx[range.clone()]
                .binary_search(&i)
                .expect("diagonal entry missing from sparsity pattern");
            self.values[range.start + k] += di;
        }
    }

    /// `max_ij |A_ij − A_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }
}

/// Vertex-adjacency pattern of a mesh plus, for every element, the storage
/// slots of its `(D+1)²` local stiffness entries.
#[derive(Debug, Clone)]
pub struct StiffnessPattern {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    slots: Vec<usize>,
    local: usize,
}

impl StiffnessPattern {
    pub fn new<const D: usize>(mesh: &SimplicialMesh<D>) -> Self {
        let n = mesh.num_vertices();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in mesh.elements() {
            for &a in el {
                neighbours[a].extend_from_slice(el);
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in &mut neighbours {
            row.sort_unstable();
            row.dedup();
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        let local = D + 1;
        let mut slots = Vec::with_capacity(mesh.num_elements() * local * local);
        for el in mesh.elements() {
            for &a in el {
                let row = &col_idx[row_ptr[a]..row_ptr[a + 1]];
                for &b in el {
                    slots.push(row_ptr[a] + row.binary_search(&b).unwrap());
                }
            }
        }
        Self {
            n,
            row_ptr,
            col_idx,
            slots,
            local,
        }
    }

    pub fn zeros(&self) -> SparseSpdMatrix {
        SparseSpdMatrix {
            n: self.n,
            row_ptr: self.row_ptr.clone(),
            col_idx: self.col_idx.clone(),
            values: vec![0.0; self.col_idx.len()],
        }
    }

    /// Adds the symmetric local matrix `entry(a, b)` (evaluated for `a ≤ b`) of
    /// element `e`.
    #[inline]
    fn scatter(&self, m: &mut SparseSpdMatrix, e: usize, entry: impl Fn(usize, usize) -> f64) {
        let s = &self.slots[e * self.local * self.local..(e + 1) * self.local * self.local];
        for a in 0..self.local {
            for b in a..self.local {
                let v = entry(a, b);
                m.values[s[a * self.local + b]] += v;
                if a != b {
                    m.values[s[b * self.local + a]] += v;
                }
            }
        }
    }
}

/// `M_j = ∫ χ_j = Σ_{σ ∋ j} |σ| / (D + 1)`, so that `(η₁, η₂)^h = Σ_j M_j η₁(p_j) η₂(p_j)`.
pub fn lumped_mass<const D: usize>(mesh: &SimplicialMesh<D>) -> NodalField {
    let mut m = vec![0.0; mesh.num_vertices()];
    for (el, &vol) in mesh.elements().zip(mesh.volumes()) {
        let share = vol / (D + 1) as f64;
        for &v in el {
            m[v] += share;
        }
    }
    m
}

/// `K_ij = Σ_σ |σ| ∇χ_j · B(∇u_prev|_σ) ∇χ_i`.
pub fn assemble_anisotropic_stiffness<const D: usize>(
    mesh: &SimplicialMesh<D>,
    pattern: &StiffnessPattern,
    aniso: &AnisotropyDensity<D>,
    u_prev: &[f64],
) -> Result<SparseSpdMatrix, FemError> {
    check_len(mesh.num_vertices(), u_prev.len())?;
    let mut k = pattern.zeros();
    for e in 0..mesh.num_elements() {
        let b = aniso.b_matrix(&mesh.gradient_unchecked(e, u_prev));
        let vol = mesh.element_volume(e);
        let grads = mesh.basis_gradients(e);
        let bg: Vec<Vector<D>> = grads.iter().map(|g| b * g).collect();
        pattern.scatter(&mut k, e, |a, c| vol * grads[c].dot(&bg[a]));
    }
    Ok(k)
}

/// Mobility-weighted stiffness together with a flag telling whether the floor
/// was active on any element.
#[derive(Debug, Clone)]
pub struct MobilityStiffness {
    pub matrix: SparseSpdMatrix,
    pub regularized: bool,
}

/// `K_b,ij = Σ_σ b̄_σ |σ| ∇χ_j·∇χ_i` with `b̄_σ = max(floor, mean_k b(u_prev(p_k)))`,
/// the exact element average of `π^h[b(u_prev)]`.
pub fn assemble_mobility_stiffness<const D: usize>(
    mesh: &SimplicialMesh<D>,
    pattern: &StiffnessPattern,
    u_prev: &[f64],
    mobility: impl Fn(f64) -> f64,
    floor: f64,
) -> Result<MobilityStiffness, FemError> {
    check_len(mesh.num_vertices(), u_prev.len())?;
    let nodal: Vec<f64> = u_prev.iter().map(|&u| mobility(u)).collect();
    if let Some((vertex, &value)) = nodal.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
        return Err(FemError::NegativeMobility { vertex, value });
    }
    let mut k = pattern.zeros();
    let mut regularized = false;
    for e in 0..mesh.num_elements() {
        let el = mesh.element(e);
        let mean = el.iter().map(|&v| nodal[v]).sum::<f64>() / el.len() as f64;
        let coeff = if mean < floor {
            regularized = true;
            floor
        } else {
            mean
        };
        let scale = coeff * mesh.element_volume(e);
        let grads = mesh.basis_gradients(e);
        pattern.scatter(&mut k, e, |a, c| scale * grads[a].dot(&grads[c]));
    }
    Ok(MobilityStiffness {
        matrix: k,
        regularized,
    })
}

/// Standard P1 stiffness matrix `(∇χ_j, ∇χ_i)`.
pub fn assemble_laplacian<const D: usize>(
    mesh: &SimplicialMesh<D>,
    pattern: &StiffnessPattern,
) -> SparseSpdMatrix {
    let mut k = pattern.zeros();
    for e in 0..mesh.num_elements() {
        let vol = mesh.element_volume(e);
        let grads = mesh.basis_gradients(e);
        pattern.scatter(&mut k, e, |a, c| vol * grads[a].dot(&grads[c]));
    }
    k
}

/// A mesh together with the data every scheme reuses: the stiffness pattern and
/// the lumped mass.
#[derive(Debug, Clone)]
pub struct Discretization<const D: usize> {
    pub mesh: SimplicialMesh<D>,
    pub pattern: StiffnessPattern,
    pub mass: NodalField,
}

impl<const D: usize> Discretization<D> {
    pub fn new(mesh: SimplicialMesh<D>) -> Self {
        let pattern = StiffnessPattern::new(&mesh);
        let mass = lumped_mass(&mesh);
        Self {
            mesh,
            pattern,
            mass,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.mesh.num_vertices()
    }

    /// `(η₁, η₂)^h`.
    pub fn lumped_inner(&self, a: &[f64], b: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(a.iter().zip(b))
            .map(|(m, (x, y))| m * x * y)
            .sum()
    }

    /// `(η, 1)^h`.
    pub fn lumped_integral(&self, a: &[f64]) -> f64 {
        self.mass.iter().zip(a).map(|(m, x)| m * x).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn disc2(n: usize) -> Discretization<2> {
        Discretization::new(SimplicialMesh::<2>::uniform(0.5, n).unwrap())
    }

    #[test]
    fn lumped_mass_interior_vertex_is_h_squared() {
        let d = disc2(8);
        let h = d.mesh.mesh_size();
        // interior vertex (4, 4) of the 9×9 grid
        let j = 4 * 9 + 4;
        assert!((d.mass[j] - h * h).abs() < 1e-16);
        let total: f64 = d.mass.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let ones = vec![1.0; d.num_vertices()];
        assert!((d.lumped_inner(&ones, &ones) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn isotropic_stiffness_is_laplacian() {
        let d = disc2(6);
        let u: Vec<f64> = d.mesh.vertices().iter().map(|x| (3.0 * x[0]).sin() * x[1]).collect();
        let iso = AnisotropyDensity::<2>::isotropic();
        let k = assemble_anisotropic_stiffness(&d.mesh, &d.pattern, &iso, &u).unwrap();
        let lap = assemble_laplacian(&d.mesh, &d.pattern);
        assert_eq!(k, lap);
        assert_eq!(k.max_asymmetry(), 0.0);
    }

    #[test]
    fn constant_previous_state_uses_origin_branch() {
        let d = disc2(4);
        let ani = AnisotropyDensity::<2>::regularized_l1(0.3).unwrap();
        let u = vec![0.7; d.num_vertices()];
        let k = assemble_anisotropic_stiffness(&d.mesh, &d.pattern, &ani, &u).unwrap();
        let b0 = ani.b_matrix(&Vector::<2>::zeros());
        // B(0) = L ΣG = 2 (1 + δ²) I here
        assert!((b0 - nalgebra::Matrix2::identity() * 2.0 * 1.09).norm() < 1e-14);
        let lap = assemble_laplacian(&d.mesh, &d.pattern);
        let scaled = lap.scaled(2.0 * 1.09);
        for i in 0..d.num_vertices() {
            for (j, v) in k.row(i) {
                assert!((v - scaled.get(i, j)).abs() < 1e-12);
            }
        }
        let kc = k.mul_vec(&vec![1.0; d.num_vertices()]);
        assert!(kc.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn affine_energy_identity() {
        let d = disc2(5);
        let a = Vector::<2>::new(0.4, -1.3);
        let u: Vec<f64> = d.mesh.vertices().iter().map(|x| a.dot(x) - 0.2).collect();
        let lap = assemble_laplacian(&d.mesh, &d.pattern);
        assert!((lap.quad_form(&u) - a.norm_squared()).abs() < 1e-12 * a.norm_squared());
    }

    #[test]
    fn energy_form_consistency() {
        let d = disc2(6);
        let ani = AnisotropyDensity::<2>::regularized_l1(0.1)
            .unwrap()
            .rotate(&crate::anisotropy::rotation_2d(0.3))
            .unwrap();
        let u: Vec<f64> = d.mesh.vertices().iter().map(|x| (4.0 * x[0] + x[1] * x[1]).tanh()).collect();
        let k = assemble_anisotropic_stiffness(&d.mesh, &d.pattern, &ani, &u).unwrap();
        let direct: f64 = (0..d.mesh.num_elements())
            .map(|e| {
                let g = d.mesh.element_gradient(e, &u).unwrap();
                2.0 * d.mesh.element_volume(e) * ani.a_value(&g)
            })
            .sum();
        let form = k.quad_form(&u);
        assert!((form - direct).abs() <= 1e-12 * direct);
    }

    #[test]
    fn mobility_stiffness_rules() {
        let d = disc2(4);
        let lap = assemble_laplacian(&d.mesh, &d.pattern);
        let u: Vec<f64> = d.mesh.vertices().iter().map(|x| x[0]).collect();
        let kb = assemble_mobility_stiffness(&d.mesh, &d.pattern, &u, |_| 2.5, 0.0).unwrap();
        assert!(!kb.regularized);
        let diff = (0..d.num_vertices())
            .flat_map(|i| kb.matrix.row(i).map(move |(j, v)| (i, j, v)).collect::<Vec<_>>())
            .map(|(i, j, v)| (v - 2.5 * lap.get(i, j)).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-14);

        let ones = vec![1.0; d.num_vertices()];
        let degenerate = |u: f64| 1.0 - u * u;
        let kb = assemble_mobility_stiffness(&d.mesh, &d.pattern, &ones, degenerate, 0.0).unwrap();
        assert_eq!(kb.matrix.max_abs(), 0.0);
        let kb = assemble_mobility_stiffness(&d.mesh, &d.pattern, &ones, degenerate, MOBILITY_FLOOR).unwrap();
        assert!(kb.regularized);
        assert!(kb.matrix.max_abs() > 0.0);

        let err = assemble_mobility_stiffness(&d.mesh, &d.pattern, &ones, |_| -1.0, 0.0).unwrap_err();
        assert_eq!(err, FemError::NegativeMobility { vertex: 0, value: -1.0 });
    }

    #[test]
    fn vertex_mean_element_factor() {
        // both triangles of the single cell share the diagonal through vertex 0,
        // so vertex values {0, 1, 1} give the factor mean(1, 0, 0) = 1/3 everywhere
        let d = disc2(1);
        assert!(d.mesh.elements().all(|el| el.contains(&0)));
        let mut u = vec![1.0; 4];
        u[0] = 0.0;
        let kb = assemble_mobility_stiffness(&d.mesh, &d.pattern, &u, |u| 1.0 - u * u, 0.0).unwrap();
        let lap = assemble_laplacian(&d.mesh, &d.pattern);
        for i in 0..4 {
            for j in 0..4 {
                assert!((kb.matrix.get(i, j) - lap.get(i, j) / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = SparseSpdMatrix::from_triplets(2, [(0, 0, 1.0), (0, 0, 2.0), (1, 1, 4.0), (0, 1, 0.5), (1, 0, 0.5)]);
        assert_eq!(m.to_dense(), vec![vec![3.0, 0.5], vec![0.5, 4.0]]);
        assert_eq!(m.nnz(), 4);
        let mut d = SparseSpdMatrix::from_dense(&[vec![2.0, 0.0], vec![0.0, 0.0]]);
        d.add_diagonal(&[1.0, 1.0]);
        assert_eq!(d.diagonal(), vec![3.0, 1.0]);
    }
}
