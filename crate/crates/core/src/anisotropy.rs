//! Anisotropy densities of the form `γ(p) = Σ_ℓ sqrt(p·G_ℓ p)` with symmetric
//! positive definite `G_ℓ`, together with the derived quantities used by the
//! time-stepping schemes: `A(p) = ½γ(p)²`, its gradient, and the symmetric
//! positive definite linearization `B(q)` that satisfies `B(p)p = A'(p)`.

use nalgebra::{Cholesky, Rotation2, Rotation3, SMatrix, SVector, Unit, Vector3};
use thiserror::Error;

pub type Vector<const D: usize> = SVector<f64, D>;
pub type Matrix<const D: usize> = SMatrix<f64, D, D>;

/// Tolerance on `RᵀR − I` accepted by [`AnisotropyDensity::rotate`].
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnisotropyError {
    #[error("an anisotropy needs at least one matrix")]
    Empty,
    #[error("matrix {index} is not symmetric")]
    NotSymmetric { index: usize },
    #[error("matrix {index} is not positive definite")]
    NotPositiveDefinite { index: usize },
    #[error("regularization parameter must be positive, got {0}")]
    InvalidDelta(f64),
    #[error("rotation matrix is not orthogonal (max deviation {0:e})")]
    NotOrthogonal(f64),
    #[error("gradient of the anisotropy is undefined at the origin")]
    ZeroVector,
    #[error("non-finite entry in anisotropy matrix {index}")]
    NonFinite { index: usize },
    #[error("matrix {index} has {got} entries, expected {expected}")]
    WrongSize { index: usize, expected: usize, got: usize },
}

/// `γ(p) = Σ_ℓ [p·G_ℓ p]^{1/2}` on `R^D`.
///
/// Immutable once built; every `G_ℓ` passed a Cholesky factorization at
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct AnisotropyDensity<const D: usize> {
    matrices: Vec<Matrix<D>>,
}

impl<const D: usize> AnisotropyDensity<D> {
    pub fn new(matrices: Vec<Matrix<D>>) -> Result<Self, AnisotropyError> {
        if matrices.is_empty() {
            return Err(AnisotropyError::Empty);
        }
        for (index, g) in matrices.iter().enumerate() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(AnisotropyError::NonFinite { index });
            }
            if *g != g.transpose() {
                return Err(AnisotropyError::NotSymmetric { index });
            }
            if Cholesky::new(*g).is_none() {
                return Err(AnisotropyError::NotPositiveDefinite { index });
            }
        }
        Ok(Self { matrices })
    }

    /// `γ(p) = |p|`.
    pub fn isotropic() -> Self {
        Self {
            matrices: vec![Matrix::<D>::identity()],
        }
    }

    /// Regularized l1 norm: `G_j = δ² I + (1 − δ²) e_j e_jᵀ`, one matrix per axis.
    pub fn regularized_l1(delta: f64) -> Result<Self, AnisotropyError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(AnisotropyError::InvalidDelta(delta));
        }
        let d2 = delta * delta;
        let matrices = (0..D)
            .map(|j| {
                let mut g = Matrix::<D>::identity() * d2;
                g[(j, j)] += 1.0 - d2;
                g
            })
            .collect();
        Self::new(matrices)
    }

    /// Returns the density with matrices `R G_ℓ Rᵀ`, i.e. `γ_new(p) = γ(Rᵀp)`.
    pub fn rotate(&self, r: &Matrix<D>) -> Result<Self, AnisotropyError> {
        let deviation = (r.transpose() * r - Matrix::<D>::identity()).amax();
        if !(deviation <= ORTHOGONALITY_TOL) {
            return Err(AnisotropyError::NotOrthogonal(deviation));
        }
        let matrices = self
            .matrices
            .iter()
            .map(|g| {
                let m = r * g * r.transpose();
                // rounding in the triple product breaks exact symmetry
                (m + m.transpose()) * 0.5
            })
            .collect();
        Self::new(matrices)
    }

    pub fn matrices(&self) -> &[Matrix<D>] {
        &self.matrices
    }

    /// Number of matrices `L`.
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// `γ_ℓ(p) = [p·G_ℓ p]^{1/2}`.
    #[inline]
    pub fn component(&self, l: usize, p: &Vector<D>) -> f64 {
        p.dot(&(self.matrices[l] * p)).max(0.0).sqrt()
    }

    #[inline]
    pub fn gamma(&self, p: &Vector<D>) -> f64 {
        (0..self.len()).map(|l| self.component(l, p)).sum()
    }

    /// `γ'(p) = Σ_ℓ γ_ℓ(p)^{-1} G_ℓ p`; undefined at `p = 0`.
    pub fn gamma_grad(&self, p: &Vector<D>) -> Result<Vector<D>, AnisotropyError> {
        if p.iter().all(|&v| v == 0.0) {
            return Err(AnisotropyError::ZeroVector);
        }
        Ok(self.gamma_grad_unchecked(p))
    }

    fn gamma_grad_unchecked(&self, p: &Vector<D>) -> Vector<D> {
        self.matrices
            .iter()
            .fold(Vector::<D>::zeros(), |acc, g| {
                let gp = g * p;
                acc + gp / p.dot(&gp).sqrt()
            })
    }

    /// `A(p) = ½ γ(p)²`.
    #[inline]
    pub fn a_value(&self, p: &Vector<D>) -> f64 {
        let g = self.gamma(p);
        0.5 * g * g
    }

    /// `A'(p) = γ(p) γ'(p)`.
    pub fn a_grad(&self, p: &Vector<D>) -> Result<Vector<D>, AnisotropyError> {
        let grad = self.gamma_grad(p)?;
        Ok(grad * self.gamma(p))
    }

    /// The linearization `B(q)`:
    /// `γ(q) Σ_ℓ γ_ℓ(q)^{-1} G_ℓ` for `q ≠ 0` and `L Σ_ℓ G_ℓ` for `q = 0`.
    pub fn b_matrix(&self, q: &Vector<D>) -> Matrix<D> {
        let norm = q.norm();
        let components: Vec<f64> = (0..self.len()).map(|l| self.component(l, q)).collect();
        // γ_ℓ(q) ≥ sqrt(λ_min(G_ℓ))|q| for SPD G_ℓ, so this only triggers at q = 0
        let at_origin = norm == 0.0 || components.iter().any(|&c| c < 1e-300 * norm);
        if at_origin {
            let sum = self
                .matrices
                .iter()
                .fold(Matrix::<D>::zeros(), |acc, g| acc + g);
            return sum * self.len() as f64;
        }
        let gamma: f64 = components.iter().sum();
        self.matrices
            .iter()
            .zip(&components)
            .fold(Matrix::<D>::zeros(), |acc, (g, &c)| acc + g * (gamma / c))
    }

    /// Points `γ'(n̂)` for `n_dirs` unit directions `n̂`. For the smooth, strictly
    /// convex densities handled here these lie on the boundary of the Wulff shape.
    ///
    /// In 2d the directions are equally spaced angles starting at `(1, 0)`; in 3d a
    /// Fibonacci lattice on the sphere.
    pub fn wulff_boundary_sample(&self, n_dirs: usize) -> Vec<(Vector<D>, Vector<D>)> {
        unit_directions::<D>(n_dirs)
            .into_iter()
            .map(|n| (n, self.gamma_grad_unchecked(&n)))
            .collect()
    }
}

/// Quasi-uniform unit directions: equally spaced angles in 2d, a Fibonacci
/// lattice in 3d.
pub fn unit_directions<const D: usize>(n: usize) -> Vec<Vector<D>> {
    match D {
        2 => (0..n)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Vector::<D>::from_iterator([t.cos(), t.sin()])
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * k as f64;
                    Vector::<D>::from_iterator([r * phi.cos(), r * phi.sin(), z])
                })
                .collect()
        }
        _ => panic!("unit directions are only defined for d = 2, 3"),
    }
}

/// Counter-clockwise rotation of the plane by `angle` radians.
pub fn rotation_2d(angle: f64) -> Matrix<2> {
    Rotation2::new(angle).into_inner()
}

/// Rotation of space by `angle` radians about `axis` (any nonzero vector).
pub fn rotation_3d(axis: [f64; 3], angle: f64) -> Option<Matrix<3>> {
    let axis = Unit::try_new(Vector3::from(axis), 1e-300)?;
    Some(Rotation3::from_axis_angle(&axis, angle).into_inner())
}

/// Residuals of the inequalities that make the semi-implicit schemes stable,
/// evaluated at one pair `(p, q)`. Each entry is `lhs − rhs` arranged so that a
/// nonpositive value means the inequality holds.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InequalityResiduals {
    /// `γ'(p)·q − γ(q)`
    pub dual_estimate: f64,
    /// `γ(p)[γ(p) − γ(q)] − A'(p)·(p − q)`
    pub monotonicity: f64,
    /// `A(p) − ½ γ(q) Σ_ℓ γ_ℓ(p)²/γ_ℓ(q)`
    pub cauchy_schwarz: f64,
    /// `γ(p)[γ(p) − γ(q)] − [B(q)p]·(p − q)`
    pub linearized_monotonicity: f64,
    /// `A(p) − A(q) − [B(q)p]·(p − q)`
    pub stability: f64,
}

impl InequalityResiduals {
    pub fn max(&self) -> f64 {
        [
            self.dual_estimate,
            self.monotonicity,
            self.cauchy_schwarz,
            self.linearized_monotonicity,
            self.stability,
        ]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
    }
}

impl<const D: usize> AnisotropyDensity<D> {
    /// Evaluates every stability inequality at `(p, q)`. Terms that need `p ≠ 0`
    /// or `q ≠ 0` are reported as `-inf` when undefined.
    pub fn inequality_residuals(&self, p: &Vector<D>, q: &Vector<D>) -> InequalityResiduals {
        let gp = self.gamma(p);
        let gq = self.gamma(q);
        let p_nonzero = p.iter().any(|&v| v != 0.0);
        let q_nonzero = q.iter().any(|&v| v != 0.0);
        let mut out = InequalityResiduals {
            dual_estimate: f64::NEG_INFINITY,
            monotonicity: f64::NEG_INFINITY,
            cauchy_schwarz: f64::NEG_INFINITY,
            ..Default::default()
        };
        if p_nonzero {
            let dgamma = self.gamma_grad_unchecked(p);
            out.dual_estimate = dgamma.dot(q) - gq;
            out.monotonicity = gp * (gp - gq) - (dgamma * gp).dot(&(p - q));
        }
        if q_nonzero {
            let weighted: f64 = (0..self.len())
                .map(|l| {
                    let cp = self.component(l, p);
                    cp * cp / self.component(l, q)
                })
                .sum();
            out.cauchy_schwarz = self.a_value(p) - 0.5 * gq * weighted;
        }
        let bp = self.b_matrix(q) * p;
        let lhs = bp.dot(&(p - q));
        out.linearized_monotonicity = gp * (gp - gq) - lhs;
        out.stability = self.a_value(p) - self.a_value(q) - lhs;
        out
    }
}
