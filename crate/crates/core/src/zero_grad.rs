//! The convolution boundary-value problem `Q * h = c` on Omega, `h = g` on
//! Gamma_delta, whose solutions are exactly the functions with vanishing
//! nonlocal gradient, and the discrete space `N` they span.

use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::{DomainGrid, Field, Support};
use crate::error::{Error, Result};
use crate::kernels::KernelTable;
use crate::linalg::{
    gmres, orthonormalize, smallest_singular_value, DenseMatrix, Lu, SingularBounds,
};
use crate::operators::convolve_q_values;
use crate::scalar::{lit, to_f64, tolerance, Scalar};
use crate::spectral::{check_spacing, SymmetricToeplitz, TorusTransform};

/// Largest `n_cells` solved by dense LU; bigger grids use GMRES.
pub const DENSE_LIMIT: usize = 4000;
/// Required max-norm residual of `Q * h - c` on Omega.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Relative residual targeted by GMRES.
pub const GMRES_TOL: f64 = 1e-12;
/// Smallest admissible singular value for independence checks.
pub const RANK_TOL: f64 = 1e-10;

/// Data `(c, g)` of the boundary-value problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<T> {
    c: T,
    g: Field<T>,
}

impl<T: Scalar> BoundaryData<T> {
    pub fn new(c: T, g: Field<T>) -> Result<Self> {
        g.expect_support(Support::GammaDelta)?;
        if !c.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self { c, g })
    }

    pub fn from_fn(grid: &Arc<DomainGrid<T>>, c: T, g: impl Fn(T) -> T) -> Result<Self> {
        Self::new(c, Field::from_fn(grid.clone(), Support::GammaDelta, g)?)
    }

    pub fn constant(grid: &Arc<DomainGrid<T>>, c: T, g: T) -> Result<Self> {
        Self::from_fn(grid, c, |_| g)
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn g(&self) -> &Field<T> {
        &self.g
    }
}

/// A solution together with its collocation residual.
#[derive(Debug, Clone, PartialEq)]
pub struct CSolution<T> {
    pub field: Field<T>,
    /// `max |Q * h - c|` over the Omega nodes.
    pub residual: T,
}

#[derive(Debug, Clone)]
enum Backend<T> {
    Dense(Lu<T>),
    Krylov(SymmetricToeplitz<T>),
}

/// Collocation system for one kernel table and grid, factored once and reused
/// for any number of boundary data.
#[derive(Debug, Clone)]
pub struct CollocationSolver<T> {
    table: KernelTable<T>,
    grid: Arc<DomainGrid<T>>,
    backend: Backend<T>,
}

impl<T: Scalar> CollocationSolver<T> {
    pub fn new(table: &KernelTable<T>, grid: &Arc<DomainGrid<T>>) -> Result<Self> {
        Self::with_krylov(table, grid, grid.n_cells() > DENSE_LIMIT)
    }

    /// Chooses the backend explicitly; `krylov` selects GMRES with the FFT
    /// Toeplitz product.
    pub fn with_krylov(
        table: &KernelTable<T>,
        grid: &Arc<DomainGrid<T>>,
        krylov: bool,
    ) -> Result<Self> {
        check_spacing(table, grid)?;
        let n = grid.n_omega();
        let h = table.grid_h();
        let column: Vec<T> = (0..=table.radius())
            .map(|k| h * table.q(k as isize))
            .collect();
        let backend = if krylov {
            Backend::Krylov(SymmetricToeplitz::new(&column, n))
        } else {
            let m = DenseMatrix::from_fn(n, n, |i, j| {
                column.get(i.abs_diff(j)).copied().unwrap_or(T::zero())
            });
            Backend::Dense(Lu::factor(m)?)
        };
        Ok(Self {
            table: table.clone(),
            grid: grid.clone(),
            backend,
        })
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        &self.grid
    }

    pub fn table(&self) -> &KernelTable<T> {
        &self.table
    }

    /// Pivot-ratio condition estimate of the dense factorization.
    pub fn condition_estimate(&self) -> Option<T> {
        match &self.backend {
            Backend::Dense(lu) => Some(lu.condition_estimate()),
            Backend::Krylov(_) => None,
        }
    }

    pub fn solve(&self, data: &BoundaryData<T>) -> Result<CSolution<T>> {
        if !Arc::ptr_eq(data.g.grid(), &self.grid) && **data.g.grid() != *self.grid {
            return Err(Error::Geometry(
                "boundary data lives on another grid".into(),
            ));
        }
        let grid = &self.grid;
        let g_ext = data.g.extend_by_zero();
        let rhs: Vec<T> = convolve_q_values(&self.table, grid, &g_ext)
            .into_iter()
            .map(|v| data.c - v)
            .collect();
        let omega = match &self.backend {
            Backend::Dense(lu) => lu.solve(&rhs),
            Backend::Krylov(op) => {
                let n = op.dim();
                gmres(
                    |x| op.apply(x),
                    &rhs,
                    vec![T::zero(); n],
                    GMRES_TOL,
                    60,
                    20 * n.max(100),
                )?
                .0
            }
        };
        let mut values = g_ext;
        for (i, v) in grid.omega().zip(omega) {
            values[i] = v;
        }
        let field = Field::new(grid.clone(), Support::OmegaDelta, values)?;
        let residual = collocation_residual(&self.table, &field, data.c)?;
        let tol: T = tolerance(RESIDUAL_TOL);
        if !(residual <= tol * data.c.abs().max(T::one())) {
            return Err(Error::Residual {
                residual: to_f64(residual),
                tolerance: RESIDUAL_TOL,
            });
        }
        Ok(CSolution { field, residual })
    }
}

/// `max |Q * h - c|` over the Omega nodes.
pub fn collocation_residual<T: Scalar>(table: &KernelTable<T>, h: &Field<T>, c: T) -> Result<T> {
    h.expect_support(Support::OmegaDelta)?;
    check_spacing(table, h.grid())?;
    Ok(convolve_q_values(table, h.grid(), h.values())
        .into_iter()
        .fold(T::zero(), |m, v| m.max((v - c).abs())))
}

/// Solves the boundary-value problem for one data pair.
pub fn solve_c<T: Scalar>(
    table: &KernelTable<T>,
    grid: &Arc<DomainGrid<T>>,
    data: &BoundaryData<T>,
) -> Result<CSolution<T>> {
    CollocationSolver::new(table, grid)?.solve(data)
}

/// `(integral over Omega of Q * h, h on Gamma_delta)`.
pub fn phi_map<T: Scalar>(table: &KernelTable<T>, h: &Field<T>) -> Result<(T, Field<T>)> {
    h.expect_support(Support::OmegaDelta)?;
    check_spacing(table, h.grid())?;
    let v = convolve_q_values(table, h.grid(), h.values());
    let integral = h.grid().h() * v.into_iter().sum::<T>();
    Ok((integral, h.restrict(Support::GammaDelta)?))
}

/// `(integral over Omega of h, h on Gamma_delta)`.
pub fn psi_map<T: Scalar>(h: &Field<T>) -> Result<(T, Field<T>)> {
    Ok((
        h.restrict(Support::Omega)?.integrate(),
        h.restrict(Support::GammaDelta)?,
    ))
}

/// Discrete basis of `N`: the solutions for `(1, 0)` and for the nodal
/// indicators of Gamma_delta, plus an orthonormalization of their span.
#[derive(Debug, Clone)]
pub struct NBasis<T> {
    grid: Arc<DomainGrid<T>>,
    s: T,
    columns: Vec<Field<T>>,
    orthonormal: Vec<Vec<T>>,
    gram_factor: DenseMatrix<T>,
    singular: SingularBounds<T>,
    max_residual: T,
}

/// Solves for every canonical data pair and orthonormalizes the result.
pub fn build_n_basis<T: Scalar>(
    table: &KernelTable<T>,
    grid: &Arc<DomainGrid<T>>,
) -> Result<NBasis<T>> {
    let solver = CollocationSolver::new(table, grid)?;
    NBasis::from_solver(&solver, table.s())
}

impl<T: Scalar> NBasis<T> {
    pub fn from_solver(solver: &CollocationSolver<T>, s: T) -> Result<Self> {
        let grid = solver.grid().clone();
        let n_gamma = grid.n_gamma();
        let solutions: Vec<CSolution<T>> = (0..=n_gamma)
            .into_par_iter()
            .map(|k| {
                let data = if k == 0 {
                    BoundaryData::constant(&grid, T::one(), T::zero())?
                } else {
                    let mut g = vec![T::zero(); n_gamma];
                    g[k - 1] = T::one();
                    BoundaryData::new(T::zero(), Field::new(grid.clone(), Support::GammaDelta, g)?)?
                };
                solver.solve(&data)
            })
            .collect::<Result<_>>()?;
        let max_residual = solutions.iter().fold(T::zero(), |m, s| m.max(s.residual));
        let columns: Vec<Field<T>> = solutions.into_iter().map(|s| s.field).collect();
        let mut orthonormal: Vec<Vec<T>> = columns.iter().map(|c| c.values().to_vec()).collect();
        let gram_factor = orthonormalize(&mut orthonormal)?;
        let singular = smallest_singular_value(&gram_factor);
        let sqrt_h = grid.h().sqrt();
        if !(singular.lower * sqrt_h > lit(RANK_TOL)) {
            return Err(Error::RankDeficient(to_f64(singular.lower * sqrt_h)));
        }
        Ok(Self {
            grid,
            s,
            columns,
            orthonormal,
            gram_factor,
            singular,
            max_residual,
        })
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        &self.grid
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Raw solutions: column 0 solves `(1, 0)`, column `k` the indicator of
    /// the `k`-th Gamma_delta node.
    pub fn columns(&self) -> &[Field<T>] {
        &self.columns
    }

    /// Euclidean-orthonormal basis of the column span (also orthogonal in the
    /// `h`-weighted product).
    pub fn orthonormal(&self) -> &[Vec<T>] {
        &self.orthonormal
    }

    /// Upper-triangular `R` with `columns = orthonormal * R`.
    pub fn gram_factor(&self) -> &DenseMatrix<T> {
        &self.gram_factor
    }

    /// Bounds on the smallest singular value of the `sqrt(h)`-weighted column matrix.
    pub fn smallest_singular_value(&self) -> SingularBounds<T> {
        let w = self.grid.h().sqrt();
        SingularBounds {
            lower: self.singular.lower * w,
            estimate: self.singular.estimate * w,
        }
    }

    pub fn max_residual(&self) -> T {
        self.max_residual
    }

    /// Coefficients of the orthogonal projection in the orthonormal basis.
    pub fn coefficients(&self, u: &[T]) -> Vec<T> {
        self.orthonormal
            .par_iter()
            .map(|q| crate::linalg::dot(q, u))
            .collect()
    }

    /// Orthogonal projection of raw samples onto the span.
    pub fn project_values(&self, u: &[T]) -> Vec<T> {
        let coeffs = self.coefficients(u);
        let mut out = vec![T::zero(); u.len()];
        for (c, q) in coeffs.iter().zip(&self.orthonormal) {
            crate::linalg::axpy(*c, q, &mut out);
        }
        out
    }

    /// `u` minus its projection onto the span.
    pub fn complement_values(&self, u: &[T]) -> Vec<T> {
        let p = self.project_values(u);
        u.iter().zip(&p).map(|(&a, &b)| a - b).collect()
    }

    /// Bounds on the smallest singular value of the Psi-images of the columns.
    pub fn psi_image_singular_value(&self) -> Result<SingularBounds<T>> {
        let mut images: Vec<Vec<T>> = self
            .columns
            .iter()
            .map(|c| {
                let (mean, trace) = psi_map(c)?;
                let mut v = vec![mean];
                v.extend_from_slice(trace.values());
                Ok(v)
            })
            .collect::<Result<_>>()?;
        let r = orthonormalize(&mut images)?;
        Ok(smallest_singular_value(&r))
    }
}

/// `P v` restricted to Omega_delta, for `v` constant on the closure of Omega.
pub fn smooth_n_member<T: Scalar>(
    torus: &TorusTransform<T>,
    v: &[T],
    grid: &Arc<DomainGrid<T>>,
) -> Result<Field<T>> {
    let (lo, hi) = torus
        .positions()
        .iter()
        .zip(v)
        .filter(|(x, _)| **x >= grid.a() && **x <= grid.b())
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), (_, &y)| {
            (lo.min(y), hi.max(y))
        });
    let spread = hi - lo;
    if !(spread <= lit(1e-12)) {
        return Err(Error::NotConstant(to_f64(spread)));
    }
    let w = torus.apply_p(v)?;
    Field::new(
        grid.clone(),
        Support::OmegaDelta,
        torus.restrict_to_grid(&w, grid)?,
    )
}

/// Omega-integral `m` of the solution for `(1, 0)`; errors when `|m| <= 1e-8`.
pub fn uniqueness_check<T: Scalar>(table: &KernelTable<T>, grid: &Arc<DomainGrid<T>>) -> Result<T> {
    let h1 = solve_c(
        table,
        grid,
        &BoundaryData::constant(grid, T::one(), T::zero())?,
    )?;
    let m = psi_map(&h1.field)?.0;
    if !(m.abs() > lit(1e-8)) {
        return Err(Error::Uniqueness(to_f64(m)));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::nonlocal_gradient;

    fn setup(n: usize) -> (Arc<DomainGrid<f64>>, KernelTable<f64>) {
        let grid = Arc::new(DomainGrid::new(-3.0, 3.0, 1.0, n).unwrap());
        let table = KernelTable::for_grid(&grid, 0.5, 0.5).unwrap();
        (grid, table)
    }

    #[test]
    fn trivial_data() {
        let (grid, table) = setup(400);
        let ones = solve_c(
            &table,
            &grid,
            &BoundaryData::constant(&grid, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(ones.field.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
        let zero = solve_c(
            &table,
            &grid,
            &BoundaryData::constant(&grid, 0.0, 0.0).unwrap(),
        )
        .unwrap();
        assert_eq!(zero.field.max_abs(), 0.0);
        let (m, trace) = psi_map(&zero.field).unwrap();
        assert_eq!(m, 0.0);
        assert_eq!(trace.max_abs(), 0.0);
    }

    #[test]
    fn krylov_backend_matches_dense() {
        let (grid, table) = setup(400);
        let data = BoundaryData::from_fn(&grid, 0.3, |x| x.sin()).unwrap();
        let dense = CollocationSolver::with_krylov(&table, &grid, false)
            .unwrap()
            .solve(&data)
            .unwrap();
        let kry = CollocationSolver::with_krylov(&table, &grid, true)
            .unwrap()
            .solve(&data)
            .unwrap();
        let gap = dense.field.axpby(1.0, &kry.field, -1.0).max_abs();
        assert!(gap < 1e-8, "gap {gap}");
    }

    #[test]
    fn solutions_have_zero_gradient_and_phi_image() {
        let (grid, table) = setup(400);
        let data = BoundaryData::from_fn(&grid, 0.7, |x| x).unwrap();
        let sol = solve_c(&table, &grid, &data).unwrap();
        assert!(sol.residual <= 1e-10);
        assert!(nonlocal_gradient(&table, &sol.field).unwrap().max_abs() < 1e-8);
        let (int, trace) = phi_map(&table, &sol.field).unwrap();
        assert!((int - 0.7 * 6.0).abs() < 1e-8);
        assert_eq!(trace.values(), data.g().values());
    }

    #[test]
    fn basis_dimension_and_projection() {
        let (grid, table) = setup(200);
        let basis = build_n_basis(&table, &grid).unwrap();
        assert_eq!(basis.dim(), 1 + grid.n_gamma());
        assert!(basis.smallest_singular_value().lower > 1e-10);
        assert!(basis.psi_image_singular_value().unwrap().lower > 1e-10);
        let col = basis.columns()[3].values();
        let p = basis.project_values(col);
        for (a, b) in p.iter().zip(col) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn uniqueness_mean_is_nonzero_and_linear() {
        let (grid, table) = setup(400);
        let m = uniqueness_check(&table, &grid).unwrap();
        let two = solve_c(
            &table,
            &grid,
            &BoundaryData::constant(&grid, 2.0, 0.0).unwrap(),
        )
        .unwrap();
        assert!((psi_map(&two.field).unwrap().0 - 2.0 * m).abs() < 1e-10);
    }

    #[test]
    fn smooth_member_rejects_non_constant_input() {
        let (grid, table) = setup(400);
        let torus = TorusTransform::for_grid(&table, &grid).unwrap();
        let v = torus.sample(|x| x);
        assert!(matches!(
            smooth_n_member(&torus, &v, &grid),
            Err(Error::NotConstant(_))
        ));
        let k = torus.sample(|_| 3.0);
        let f = smooth_n_member(&torus, &k, &grid).unwrap();
        assert!(f.values().iter().all(|v| (v - 3.0).abs() < 1e-10));
    }
}
