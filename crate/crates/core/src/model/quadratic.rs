use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetry and eigenvalue tolerance for local Hessians.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Local quadratic data `f(z) = ½ zᵀHz + hᵀz` over `{z : Cz ≤ c}`.
///
/// Spectral data and the solver's factorizations are computed once at
/// construction; instances are immutable afterwards.
#[derive(Debug, Clone)]
pub struct QuadraticLocal {
    h_mat: DMatrix<f64>,
    h_vec: DVector<f64>,
    c_mat: DMatrix<f64>,
    c_vec: DVector<f64>,
    lambda_min: f64,
    lambda_max: f64,
    cache: Option<SolverCache>,
}

/// Factorizations reused by every local solve.
#[derive(Debug, Clone)]
pub(crate) struct SolverCache {
    pub h_inv: DMatrix<f64>,
    /// `H⁻¹Cᵀ`
    pub h_inv_ct: DMatrix<f64>,
    /// `C H⁻¹ Cᵀ`, the Hessian of the constraint-multiplier dual.
    pub dual_hessian: DMatrix<f64>,
    pub dual_lipschitz: f64,
    /// Per-coordinate bounds when `H` is diagonal and every row of `C` has one nonzero.
    pub boxes: Option<Vec<(f64, f64)>>,
}

impl QuadraticLocal {
    /// Validated constructor: rejects asymmetric or non-positive-definite `H`
    /// and inconsistent dimensions.
    pub fn new(
        h_mat: DMatrix<f64>,
        h_vec: DVector<f64>,
        c_mat: DMatrix<f64>,
        c_vec: DVector<f64>,
    ) -> Result<Self> {
        let q = Self::new_unchecked(h_mat, h_vec, c_mat, c_vec);
        let issues = q.validate();
        if issues.is_empty() {
            Ok(q)
        } else {
            Err(Error::Validation(issues.join("; ")))
        }
    }

    /// Unconstrained local problem.
    pub fn unconstrained(h_mat: DMatrix<f64>, h_vec: DVector<f64>) -> Result<Self> {
        let n = h_vec.len();
        Self::new(h_mat, h_vec, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    /// Keeps the data even when invariants fail, so `validate` can report them.
    pub fn new_unchecked(
        h_mat: DMatrix<f64>,
        h_vec: DVector<f64>,
        c_mat: DMatrix<f64>,
        c_vec: DVector<f64>,
    ) -> Self {
        let (lambda_min, lambda_max) = if h_mat.is_square() && h_mat.nrows() > 0 {
            let sym = (&h_mat + h_mat.transpose()) * 0.5;
            let eig = SymmetricEigen::new(sym).eigenvalues;
            (eig.min(), eig.max())
        } else {
            (f64::NAN, f64::NAN)
        };
        let mut q = QuadraticLocal {
            h_mat,
            h_vec,
            c_mat,
            c_vec,
            lambda_min,
            lambda_max,
            cache: None,
        };
        if q.structural_issues().is_empty() && q.lambda_min > SYMMETRY_TOL {
            q.cache = q.build_cache();
        }
        q
    }

    fn structural_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        let n = self.h_vec.len();
        if !self.h_mat.is_square() || self.h_mat.nrows() != n {
            issues.push(format!(
                "H is {}x{} but h has length {n}",
                self.h_mat.nrows(),
                self.h_mat.ncols()
            ));
        }
        if self.c_mat.ncols() != n && self.c_mat.nrows() > 0 {
            issues.push(format!(
                "C has {} columns, expected {n}",
                self.c_mat.ncols()
            ));
        }
        if self.c_mat.nrows() != self.c_vec.len() {
            issues.push(format!(
                "C has {} rows but c has length {}",
                self.c_mat.nrows(),
                self.c_vec.len()
            ));
        }
        let finite = self
            .h_mat
            .iter()
            .chain(self.h_vec.iter())
            .chain(self.c_mat.iter())
            .chain(self.c_vec.iter())
            .all(|x| x.is_finite());
        if !finite {
            issues.push("non-finite entries".to_string());
        }
        issues
    }

    /// Lists every violated invariant.
    pub fn validate(&self) -> Vec<String> {
        let mut issues = self.structural_issues();
        if !issues.is_empty() {
            return issues;
        }
        let n = self.dim();
        for r in 0..n {
            for c in (r + 1)..n {
                if (self.h_mat[(r, c)] - self.h_mat[(c, r)]).abs() > SYMMETRY_TOL {
                    issues.push(format!("H not symmetric at ({r},{c})"));
                    return issues;
                }
            }
        }
        if n > 0 && self.lambda_min <= SYMMETRY_TOL {
            issues.push(format!("λ_min ≤ 0 (λ_min = {:.3e})", self.lambda_min));
        }
        issues
    }

    fn build_cache(&self) -> Option<SolverCache> {
        let n = self.dim();
        let h_inv = if n == 0 {
            DMatrix::zeros(0, 0)
        } else {
            self.h_mat.clone().cholesky()?.inverse()
        };
        let m = self.rows();
        let c_mat = if m == 0 {
            DMatrix::zeros(0, n)
        } else {
            self.c_mat.clone()
        };
        let h_inv_ct = &h_inv * c_mat.transpose();
        let dual_hessian = &c_mat * &h_inv_ct;
        let dual_lipschitz = if m == 0 {
            0.0
        } else {
            let sym = (&dual_hessian + dual_hessian.transpose()) * 0.5;
            SymmetricEigen::new(sym).eigenvalues.max().max(0.0)
        };
        Some(SolverCache {
            h_inv,
            h_inv_ct,
            dual_hessian,
            dual_lipschitz,
            boxes: self.box_bounds(),
        })
    }

    fn box_bounds(&self) -> Option<Vec<(f64, f64)>> {
        let n = self.dim();
        for r in 0..n {
            for c in 0..n {
                if r != c && self.h_mat[(r, c)] != 0.0 {
                    return None;
                }
            }
        }
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); n];
        for r in 0..self.rows() {
            let mut nz = (0..n).filter(|&c| self.c_mat[(r, c)] != 0.0);
            let col = nz.next()?;
            if nz.next().is_some() {
                return None;
            }
            let a = self.c_mat[(r, col)];
            let limit = self.c_vec[r] / a;
            if a > 0.0 {
                bounds[col].1 = bounds[col].1.min(limit);
            } else {
                bounds[col].0 = bounds[col].0.max(limit);
            }
        }
        Some(bounds)
    }

    pub(crate) fn cache(&self) -> Result<&SolverCache> {
        self.cache
            .as_ref()
            .ok_or_else(|| Error::Validation(self.validate().join("; ")))
    }

    pub fn dim(&self) -> usize {
        self.h_vec.len()
    }

    /// Number of inequality rows.
    pub fn rows(&self) -> usize {
        self.c_vec.len()
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.h_mat
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.h_vec
    }

    pub fn constraint_matrix(&self) -> &DMatrix<f64> {
        &self.c_mat
    }

    pub fn constraint_rhs(&self) -> &DVector<f64> {
        &self.c_vec
    }

    /// Strong-convexity modulus `ρ_f`.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    /// Lipschitz constant of the gradient.
    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `½ zᵀHz + hᵀz`
    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h_mat * z)) + self.h_vec.dot(z)
    }

    /// Largest constraint violation `max_j (Cz − c)_j`, clipped at zero.
    pub fn violation(&self, z: &DVector<f64>) -> f64 {
        if self.rows() == 0 {
            return 0.0;
        }
        (&self.c_mat * z - &self.c_vec).max().max(0.0)
    }

    /// Copy with a different linear term; the cached factorizations are kept.
    pub fn with_linear(&self, h_vec: DVector<f64>) -> Self {
        assert_eq!(h_vec.len(), self.dim(), "linear term dimension");
        let mut q = self.clone();
        q.h_vec = h_vec;
        q
    }

    /// Copy with new data, revalidated.
    pub fn with_data(
        &self,
        h_mat: DMatrix<f64>,
        h_vec: DVector<f64>,
        c_mat: DMatrix<f64>,
        c_vec: DVector<f64>,
    ) -> Result<Self> {
        Self::new(h_mat, h_vec, c_mat, c_vec)
    }

    pub fn to_data(&self) -> QuadraticData {
        let n = self.dim();
        QuadraticData {
            dim: n,
            hessian: row_major(&self.h_mat),
            linear: self.h_vec.iter().copied().collect(),
            constraints: row_major(&self.c_mat),
            rhs: self.c_vec.iter().copied().collect(),
        }
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    (0..m.nrows())
        .flat_map(|r| (0..m.ncols()).map(move |c| m[(r, c)]))
        .collect()
}

/// Serialized form of `QuadraticLocal`: dense row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticData {
    pub dim: usize,
    #[serde(rename = "H")]
    pub hessian: Vec<f64>,
    #[serde(rename = "h")]
    pub linear: Vec<f64>,
    #[serde(rename = "C", default)]
    pub constraints: Vec<f64>,
    #[serde(rename = "c", default)]
    pub rhs: Vec<f64>,
}

impl QuadraticData {
    /// Rebuilds the local problem without validating invariants.
    pub fn to_local_unchecked(&self) -> Result<QuadraticLocal> {
        let n = self.dim;
        if self.hessian.len() != n * n {
            return Err(Error::Dimension(format!(
                "H has {} entries, expected {}",
                self.hessian.len(),
                n * n
            )));
        }
        let rows = self.rhs.len();
        if self.constraints.len() != rows * n {
            return Err(Error::Dimension(format!(
                "C has {} entries, expected {}",
                self.constraints.len(),
                rows * n
            )));
        }
        Ok(QuadraticLocal::new_unchecked(
            DMatrix::from_row_slice(n, n, &self.hessian),
            DVector::from_column_slice(&self.linear),
            DMatrix::from_row_slice(rows, n, &self.constraints),
            DVector::from_column_slice(&self.rhs),
        ))
    }
}
