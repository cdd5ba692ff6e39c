//! Uniform Kuhn (Freudenthal) triangulations of `(-H, H)^d`.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::anisotropy::Vector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("number of subdivisions must be at least 1")]
    NoSubdivisions,
    #[error("half width must be positive and finite, got {0}")]
    InvalidHalfWidth(f64),
    #[error("element index {index} out of range ({count} elements)")]
    ElementOutOfRange { index: usize, count: usize },
    #[error("expected {expected} nodal values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("only d = 2 and d = 3 are supported")]
    UnsupportedDimension,
}

/// Conforming simplicial mesh of `(-H, H)^D` with `N` cells per axis, each cell
/// split into `D!` simplices sharing the cell's main diagonal.
///
/// Element connectivity and the constant P1 basis gradients are stored flat with
/// stride `D + 1`.
#[derive(Debug, Clone)]
pub struct SimplicialMesh<const D: usize> {
    half_width: f64,
    subdivisions: usize,
    vertices: Vec<Vector<D>>,
    elements: Vec<usize>,
    boundary: Vec<bool>,
    volumes: Vec<f64>,
    gradients: Vec<Vector<D>>,
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

impl<const D: usize> SimplicialMesh<D> {
    pub fn uniform(half_width: f64, subdivisions: usize) -> Result<Self, MeshError> {
        if D != 2 && D != 3 {
            return Err(MeshError::UnsupportedDimension);
        }
        if subdivisions == 0 {
            return Err(MeshError::NoSubdivisions);
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(MeshError::InvalidHalfWidth(half_width));
        }
        let n = subdivisions;
        let stride = n + 1;
        let h = 2.0 * half_width / n as f64;
        let num_vertices = stride.pow(D as u32);

        let mut vertices = Vec::with_capacity(num_vertices);
        let mut boundary = Vec::with_capacity(num_vertices);
        for idx in 0..num_vertices {
            let mut x = Vector::<D>::zeros();
            let mut on_boundary = false;
            let mut rem = idx;
            for k in 0..D {
                let i = rem % stride;
                rem /= stride;
                // exact ±H on the boundary planes
                x[k] = if i == n {
                    half_width
                } else {
                    -half_width + i as f64 * h
                };
                on_boundary |= i == 0 || i == n;
            }
            vertices.push(x);
            boundary.push(on_boundary);
        }

        let perms = permutations(D);
        let num_cells = n.pow(D as u32);
        let mut elements = Vec::with_capacity(num_cells * perms.len() * (D + 1));
        for cell in 0..num_cells {
            let mut corner = [0usize; 3];
            let mut rem = cell;
            for c in corner.iter_mut().take(D) {
                *c = rem % n;
                rem /= n;
            }
            let index_of = |c: &[usize; 3]| {
                (0..D).rev().fold(0usize, |acc, k| acc * stride + c[k])
            };
            for perm in &perms {
                let mut c = corner;
                elements.push(index_of(&c));
                for &axis in perm {
                    c[axis] += 1;
                    elements.push(index_of(&c));
                }
            }
        }

        let num_elements = elements.len() / (D + 1);
        let mut volumes = Vec::with_capacity(num_elements);
        let mut gradients = Vec::with_capacity(elements.len());
        let factorial: f64 = (1..=D).product::<usize>() as f64;
        for e in 0..num_elements {
            let nodes = &mut elements[e * (D + 1)..(e + 1) * (D + 1)];
            let mut jac = jacobian::<D>(&vertices, nodes);
            if jac.determinant() < 0.0 {
                nodes.swap(D - 1, D);
                jac = jacobian::<D>(&vertices, nodes);
            }
            let det = jac.determinant();
            volumes.push(det / factorial);
            let inv = jac
                .try_inverse()
                .expect("Kuhn simplices are never degenerate");
            // rows of J^{-1} are the gradients of the barycentric coordinates 1..D
            let mut sum = Vector::<D>::zeros();
            let mut local = [Vector::<D>::zeros(); 4];
            for k in 0..D {
                let g = Vector::<D>::from_fn(|c, _| inv[(k, c)]);
                local[k + 1] = g;
                sum += g;
            }
            local[0] = -sum;
            gradients.extend_from_slice(&local[..=D]);
        }

        Ok(Self {
            half_width,
            subdivisions,
            vertices,
            elements,
            boundary,
            volumes,
            gradients,
        })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn subdivisions(&self) -> usize {
        self.subdivisions
    }

    /// Grid spacing `2H/N`.
    pub fn mesh_size(&self) -> f64 {
        2.0 * self.half_width / self.subdivisions as f64
    }

    /// `|Ω| = (2H)^D`.
    pub fn domain_volume(&self) -> f64 {
        (2.0 * self.half_width).powi(D as i32)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_elements(&self) -> usize {
        self.volumes.len()
    }

    pub fn vertices(&self) -> &[Vector<D>] {
        &self.vertices
    }

    pub fn vertex(&self, i: usize) -> &Vector<D> {
        &self.vertices[i]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn element(&self, e: usize) -> &[usize] {
        &self.elements[e * (D + 1)..(e + 1) * (D + 1)]
    }

    pub fn elements(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.elements.chunks_exact(D + 1)
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// `∇χ_i|_σ` for the `D + 1` local vertices of element `e`.
    pub fn basis_gradients(&self, e: usize) -> &[Vector<D>] {
        &self.gradients[e * (D + 1)..(e + 1) * (D + 1)]
    }

    /// Constant gradient of the P1 interpolant of `values` on element `e`.
    pub fn element_gradient(&self, e: usize, values: &[f64]) -> Result<Vector<D>, MeshError> {
        if e >= self.num_elements() {
            return Err(MeshError::ElementOutOfRange {
                index: e,
                count: self.num_elements(),
            });
        }
        if values.len() != self.num_vertices() {
            return Err(MeshError::LengthMismatch {
                expected: self.num_vertices(),
                got: values.len(),
            });
        }
        Ok(self.gradient_unchecked(e, values))
    }

    #[inline]
    pub(crate) fn gradient_unchecked(&self, e: usize, values: &[f64]) -> Vector<D> {
        self.element(e)
            .iter()
            .zip(self.basis_gradients(e))
            .fold(Vector::<D>::zeros(), |acc, (&v, g)| acc + g * values[v])
    }
}

fn jacobian<const D: usize>(vertices: &[Vector<D>], nodes: &[usize]) -> DMatrix<f64> {
    let x0 = vertices[nodes[0]];
    DMatrix::from_fn(D, D, |r, c| vertices[nodes[c + 1]][r] - x0[r])
}
