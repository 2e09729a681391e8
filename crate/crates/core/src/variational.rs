//! Projection onto `N`, Poincaré constants, the quadratic nonlocal Neumann
//! problem over the orthogonal complement of `N`, its classical limit and the
//! localization sweep as `s` tends to 1.
//!
//! The Dirichlet energy is `1/2 ||D u||^2` with the gradient taken on the
//! Omega edges, so the stiffness matrix is `h G^T G` with `G` the
//! [`EdgeStencil`].

use std::sync::Arc;

use rayon::prelude::*;

use crate::domain::{DomainGrid, Field, Support};
use crate::error::{Error, Result};
use crate::kernels::KernelTable;
use crate::linalg::{
    axpy, conjugate_gradient, dot, max_abs, norm2, solve_tridiagonal, Cholesky, DenseMatrix,
};
use crate::operators::EdgeStencil;
use crate::scalar::{from_usize, lit, to_f64, Scalar};
use crate::spectral::check_spacing;
use crate::zero_grad::{build_n_basis, NBasis};

/// Relative change at which inverse iteration stops.
pub const EIGEN_TOL: f64 = 1e-8;
/// Iteration budget of the inverse iteration.
pub const EIGEN_MAX_ITER: usize = 20_000;
/// Relative residual at which conjugate gradients stop.
pub const CG_TOL: f64 = 1e-10;

/// Orthogonal projection of `u` onto the span of the basis.
pub fn project_n<T: Scalar>(basis: &NBasis<T>, u: &Field<T>) -> Result<Field<T>> {
    u.expect_support(Support::OmegaDelta)?;
    if u.len() != basis.grid().n_cells() {
        return Err(Error::Geometry(
            "field and basis live on different grids".into(),
        ));
    }
    Field::new(
        u.grid().clone(),
        Support::OmegaDelta,
        basis.project_values(u.values()),
    )
}

/// Constraint set of a Poincaré constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoincareMode {
    /// Zero on Gamma_delta and zero mean over Omega.
    ZeroTraceZeroMean,
    /// The orthogonal complement of `N`.
    Perp,
}

impl PoincareMode {
    pub fn name(self) -> &'static str {
        match self {
            PoincareMode::ZeroTraceZeroMean => "zero-trace-zero-mean",
            PoincareMode::Perp => "perp",
        }
    }
}

/// Result of the inverse iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincareEstimate<T> {
    /// `1 / sqrt(lambda_min)`.
    pub constant: T,
    /// Smallest value of `||D u||^2 / ||u||^2` on the constraint set.
    pub lambda_min: T,
    pub iterations: usize,
    /// Relative change of the eigenvalue estimate in the last step.
    pub last_change: T,
}

/// Best constant in `||u||_{L2(Omega_delta)} <= C ||D u||_{L2(Omega)}` on the
/// discrete constraint set.
pub fn poincare_constant<T: Scalar>(
    basis: &NBasis<T>,
    table: &KernelTable<T>,
    grid: &Arc<DomainGrid<T>>,
    mode: PoincareMode,
) -> Result<PoincareEstimate<T>> {
    check_spacing(table, grid)?;
    let full = EdgeStencil::new(table, grid)?.normal_matrix();
    let (a, constraints) = match mode {
        PoincareMode::ZeroTraceZeroMean => {
            let om = grid.omega();
            let n = om.len();
            let a = DenseMatrix::from_fn(n, n, |i, j| full[(om.start + i, om.start + j)]);
            let c = T::one() / from_usize::<T>(n).sqrt();
            (a, vec![vec![c; n]])
        }
        PoincareMode::Perp => (full, basis.orthonormal().to_vec()),
    };
    smallest_constrained_eigenvalue(&a, &constraints).map(|(lambda, iterations, change)| {
        PoincareEstimate {
            constant: lambda.sqrt().recip(),
            lambda_min: lambda,
            iterations,
            last_change: change,
        }
    })
}

/// Smallest eigenvalue of the symmetric `a` on the orthogonal complement of
/// the orthonormal `constraints`, by inverse iteration on
/// `P a P + sigma (I - P)`.
pub fn smallest_constrained_eigenvalue<T: Scalar>(
    a: &DenseMatrix<T>,
    constraints: &[Vec<T>],
) -> Result<(T, usize, T)> {
    let n = a.rows();
    let k = constraints.len();
    let sigma = a.trace() / from_usize(n);
    let q = DenseMatrix::from_columns(constraints);
    let project = |x: &mut Vec<T>| {
        for c in constraints {
            let t = dot(c, x);
            axpy(-t, c, x);
        }
    };

    let b = if k == 0 {
        a.clone()
    } else {
        // P A P + sigma Q Q^T = A - Q W^T - (W - Q M - sigma Q) Q^T, W = A Q, M = Q^T W
        let w = a.matmul(&q);
        let m = q.transpose().matmul(&w);
        let qm = q.matmul(&m);
        let v = DenseMatrix::from_fn(n, k, |i, j| w[(i, j)] - qm[(i, j)] - sigma * q[(i, j)]);
        let left = q.matmul(&w.transpose());
        let right = v.matmul(&q.transpose());
        DenseMatrix::from_fn(n, n, |i, j| a[(i, j)] - left[(i, j)] - right[(i, j)])
    };
    // symmetrize away rounding before factoring
    let b = DenseMatrix::from_fn(n, n, |i, j| (b[(i, j)] + b[(j, i)]) / lit(2.0));
    let chol = Cholesky::factor(&b)?;

    let mut x: Vec<T> = (0..n)
        .map(|i| T::one() + lit::<T>(0.5) * (lit::<T>(0.37) * from_usize(i)).sin())
        .collect();
    project(&mut x);
    let mut mu = T::zero();
    let mut change = T::infinity();
    for it in 1..=EIGEN_MAX_ITER {
        let nx = norm2(&x);
        x.iter_mut().for_each(|v| *v = *v / nx);
        let mut y = chol.solve(&x);
        project(&mut y);
        let next = dot(&x, &y);
        change = (next - mu).abs() / next.abs();
        mu = next;
        x = y;
        if change <= lit(EIGEN_TOL) {
            let nx = norm2(&x);
            x.iter_mut().for_each(|v| *v = *v / nx);
            let ax = a.matvec(&x);
            let lambda = dot(&x, &ax);
            if !(lambda > T::zero()) {
                return Err(Error::Singular {
                    condition: f64::INFINITY,
                });
            }
            return Ok((lambda, it, change));
        }
    }
    Err(Error::NotConverged {
        method: "inverse iteration",
        iterations: EIGEN_MAX_ITER,
        residual: to_f64(change),
    })
}

/// Quadratic nonlocal Neumann problem: minimize `1/2 ||D u||^2 - <F, u>` over
/// the orthogonal complement of `N`.
#[derive(Debug, Clone)]
pub struct NeumannProblem<T> {
    table: KernelTable<T>,
    forcing: Field<T>,
}

impl<T: Scalar> NeumannProblem<T> {
    pub fn new(table: &KernelTable<T>, forcing: Field<T>) -> Result<Self> {
        forcing.expect_support(Support::OmegaDelta)?;
        check_spacing(table, forcing.grid())?;
        Ok(Self {
            table: table.clone(),
            forcing,
        })
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        self.forcing.grid()
    }

    pub fn s(&self) -> T {
        self.table.s()
    }

    pub fn table(&self) -> &KernelTable<T> {
        &self.table
    }

    pub fn forcing(&self) -> &Field<T> {
        &self.forcing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeumannSolution<T> {
    pub minimizer: Field<T>,
    pub energy: T,
    /// Max-norm weak Euler-Lagrange defect over the complement test space.
    pub el_residual: T,
    /// Max-norm weak Euler-Lagrange defect over all nodal test fields.
    pub el_residual_full: T,
    /// `h`-weighted norm of the projection of the minimizer onto `N`.
    pub projection_norm: T,
    pub iterations: usize,
    /// Energy of every conjugate-gradient iterate.
    pub energy_history: Vec<T>,
}

/// Minimizes from the zero vector.
pub fn minimize_neumann<T: Scalar>(
    problem: &NeumannProblem<T>,
    basis: &NBasis<T>,
) -> Result<NeumannSolution<T>> {
    let n = problem.grid().n_cells();
    minimize_neumann_from(problem, basis, &vec![T::zero(); n])
}

/// Minimizes from a given starting vector (projected onto the complement first).
pub fn minimize_neumann_from<T: Scalar>(
    problem: &NeumannProblem<T>,
    basis: &NBasis<T>,
    start: &[T],
) -> Result<NeumannSolution<T>> {
    let grid = problem.grid().clone();
    if basis.grid().n_cells() != grid.n_cells() || start.len() != grid.n_cells() {
        return Err(Error::Geometry(
            "problem, basis and start vector disagree in size".into(),
        ));
    }
    let h = grid.h();
    let stencil = EdgeStencil::new(&problem.table, &grid)?;
    let stiffness = |u: &[T]| -> Vec<T> {
        stencil
            .apply_transpose(&stencil.apply(u))
            .into_iter()
            .map(|v| h * v)
            .collect()
    };
    let load: Vec<T> = problem.forcing.values().iter().map(|&f| h * f).collect();
    let rhs = basis.complement_values(&load);
    let x0 = basis.complement_values(start);
    let dim = grid.n_cells();

    let mut energy_history = Vec::new();
    let (x, report) = conjugate_gradient(
        |y| basis.complement_values(&stiffness(y)),
        &rhs,
        x0,
        CG_TOL,
        10 * dim,
        |x, r| {
            let e = -dot(
                x,
                &rhs.iter()
                    .zip(r)
                    .map(|(&b, &ri)| b + ri)
                    .collect::<Vec<_>>(),
            ) / lit(2.0);
            energy_history.push(e);
        },
    )?;

    let u = basis.complement_values(&x);
    let au = stiffness(&u);
    let residual: Vec<T> = au.iter().zip(&load).map(|(&a, &b)| a - b).collect();
    let el_residual_full = max_abs(&residual);
    let el_residual = max_abs(&basis.complement_values(&residual));
    let energy = dot(&u, &au) / lit(2.0) - dot(&load, &u);
    let projection_norm = norm2(&basis.project_values(&u)) * h.sqrt();
    Ok(NeumannSolution {
        minimizer: Field::new(grid, Support::OmegaDelta, u)?,
        energy,
        el_residual,
        el_residual_full,
        projection_norm,
        iterations: report.iterations,
        energy_history,
    })
}

/// Solution of `-u'' = F` on Omega with `u' = 0` at both ends and zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalNeumann<T> {
    pub solution: Field<T>,
    /// Omega-mean of the input forcing, removed before solving.
    pub forcing_mean: T,
    /// `1/2 int |u'|^2 - int F u`.
    pub energy: T,
}

/// Cell-centred second-order finite differences with reflecting ends.
pub fn classical_neumann<T: Scalar>(
    grid: &Arc<DomainGrid<T>>,
    forcing: &Field<T>,
) -> Result<ClassicalNeumann<T>> {
    forcing.expect_support(Support::Omega)?;
    let n = forcing.len();
    let h = grid.h();
    let forcing_mean = forcing.mean();
    let f: Vec<T> = forcing.values().iter().map(|&v| v - forcing_mean).collect();
    // row j: (-u[j-1] + 2 u[j] - u[j+1]) / h^2 = f[j], ghost values mirror the
    // end cells; u[0] is pinned to zero and row 0 dropped (it is implied by
    // the zero-mean forcing).
    let m = n - 1;
    let inv_h2 = (h * h).recip();
    let mut lower = vec![-inv_h2; m];
    let mut diag = vec![lit::<T>(2.0) * inv_h2; m];
    let upper = vec![-inv_h2; m];
    diag[m - 1] = inv_h2;
    lower[0] = T::zero();
    let rhs: Vec<T> = f[1..].to_vec();
    let tail = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut u = Vec::with_capacity(n);
    u.push(T::zero());
    u.extend(tail);
    let mean = u.iter().copied().sum::<T>() / from_usize(n);
    u.iter_mut().for_each(|v| *v = *v - mean);
    let grad: T = u
        .windows(2)
        .map(|w| (w[1] - w[0]) * (w[1] - w[0]))
        .sum::<T>()
        / h;
    let work = h * u.iter().zip(&f).map(|(&a, &b)| a * b).sum::<T>();
    Ok(ClassicalNeumann {
        solution: Field::new(grid.clone(), Support::Omega, u)?,
        forcing_mean,
        energy: grad / lit(2.0) - work,
    })
}

/// Geometry, kernel and resolution of a localization sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig<T> {
    pub a: T,
    pub b: T,
    pub delta: T,
    pub mu: T,
    pub n_cells: usize,
    pub s_list: Vec<T>,
}

/// One line of the sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow<T> {
    pub s: T,
    /// `L2(Omega)` distance of the mean-normalized minimizer to the reference.
    pub l2_error: T,
    /// `|E_s - E_classical|`.
    pub energy_gap: T,
    pub el_residual: T,
    pub iterations: usize,
}

/// Reference solution of the classical limit for the sweep.
pub enum Reference<'a, T> {
    /// The finite-difference solution from [`classical_neumann`].
    FiniteDifference,
    /// A closed-form solution, evaluated at the Omega nodes.
    Exact(&'a (dyn Fn(T) -> T + Sync)),
}

/// For each `s`, solves the nonlocal Neumann problem with forcing
/// `F 1_Omega` and compares with the classical solution.
pub fn localization_sweep<T: Scalar>(
    config: &SweepConfig<T>,
    forcing: &(dyn Fn(T) -> T + Sync),
    reference: Reference<'_, T>,
) -> Result<Vec<SweepRow<T>>> {
    for &s in &config.s_list {
        if !(s > T::zero() && s < T::one()) {
            return Err(Error::Parameter {
                name: "s",
                value: to_f64(s),
                range: "(0, 1)".into(),
            });
        }
    }
    let grid = Arc::new(DomainGrid::new(
        config.a,
        config.b,
        config.delta,
        config.n_cells,
    )?);
    let f_omega = Field::from_fn(grid.clone(), Support::Omega, forcing)?;
    let classical = classical_neumann(&grid, &f_omega)?;
    let (reference, ref_energy) = match reference {
        Reference::FiniteDifference => (classical.solution.values().to_vec(), classical.energy),
        Reference::Exact(u) => {
            let vals: Vec<T> = grid.positions(Support::Omega).into_iter().map(u).collect();
            let mean = vals.iter().copied().sum::<T>() / from_usize(vals.len());
            let vals: Vec<T> = vals.into_iter().map(|v| v - mean).collect();
            // at the minimizer the energy equals -1/2 int F u
            let centred: Vec<T> = f_omega
                .values()
                .iter()
                .map(|&f| f - classical.forcing_mean)
                .collect();
            let e = -grid.h() * dot(&vals, &centred) / lit(2.0);
            (vals, e)
        }
    };
    let f_full = Field::new(grid.clone(), Support::OmegaDelta, f_omega.extend_by_zero())?;

    config
        .s_list
        .par_iter()
        .map(|&s| {
            let table = KernelTable::for_grid(&grid, config.mu, s)?;
            let basis = build_n_basis(&table, &grid)?;
            let problem = NeumannProblem::new(&table, f_full.clone())?;
            let sol = minimize_neumann(&problem, &basis)?;
            let u = sol.minimizer.restrict(Support::Omega)?;
            let mean = u.mean();
            let err: T = u
                .values()
                .iter()
                .zip(&reference)
                .map(|(&a, &b)| (a - mean - b) * (a - mean - b))
                .sum();
            Ok(SweepRow {
                s,
                l2_error: (grid.h() * err).sqrt(),
                energy_gap: (sol.energy - ref_energy).abs(),
                el_residual: sol.el_residual,
                iterations: sol.iterations,
            })
        })
        .collect()
}
