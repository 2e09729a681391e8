//! Discrete convolution with `Q`, nonlocal gradient and divergence, the
//! nonlocal boundary operator and the extension modulo `N`.
//!
//! The gradient is computed as the derivative of the convolution: `V = Q * u`
//! is collocated at the Omega nodes, its forward differences give the
//! gradient on the edges between consecutive Omega nodes, and node values are
//! reconstructed from the edges with a fourth-order midpoint rule (one-sided
//! near the ends). Affine functions are therefore differentiated exactly and
//! the kernel of the gradient is exactly the set of `u` with `Q * u` constant
//! on Omega.

use rayon::prelude::*;

use crate::domain::{DomainGrid, Field, Support};
use crate::error::{Error, Result};
use crate::kernels::{CutoffProfile, KernelTable};
use crate::linalg::DenseMatrix;
use crate::scalar::{from_usize, lit, Scalar};
use crate::spectral::{check_spacing, TorusTransform};

/// Weights of the one-sided reconstruction at the first node from the edges at
/// offsets 1/2, 3/2, 5/2.
const END_WEIGHTS: [f64; 3] = [1.875, -1.25, 0.375];
/// Weights at the second node from the edges at offsets -1/2, 1/2, 3/2, 5/2.
const NEAR_END_WEIGHTS: [f64; 4] = [0.3125, 0.9375, -0.3125, 0.0625];

/// Banded Toeplitz map from samples on Omega_delta to the gradient on the
/// Omega edges: `g[e] = sum_t w[t] u[e + t]`, `t = 0..=2K+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStencil<T> {
    weights: Vec<T>,
    n_nodes: usize,
    n_edges: usize,
}

impl<T: Scalar> EdgeStencil<T> {
    pub fn new(table: &KernelTable<T>, grid: &DomainGrid<T>) -> Result<Self> {
        check_spacing(table, grid)?;
        let k = table.radius() as isize;
        let weights = (0..=2 * k + 1)
            .map(|t| table.q(k + 1 - t) - table.q(k - t))
            .collect();
        Ok(Self {
            weights,
            n_nodes: grid.n_cells(),
            n_edges: grid.n_omega() - 1,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Edge gradient of samples on Omega_delta.
    pub fn apply(&self, u: &[T]) -> Vec<T> {
        debug_assert_eq!(u.len(), self.n_nodes);
        let w = &self.weights;
        (0..self.n_edges)
            .map(|e| w.iter().zip(&u[e..e + w.len()]).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// Euclidean transpose of [`Self::apply`].
    pub fn apply_transpose(&self, g: &[T]) -> Vec<T> {
        debug_assert_eq!(g.len(), self.n_edges);
        let mut out = vec![T::zero(); self.n_nodes];
        for (e, &ge) in g.iter().enumerate() {
            for (o, &w) in out[e..e + self.weights.len()].iter_mut().zip(&self.weights) {
                *o = *o + w * ge;
            }
        }
        out
    }

    /// `G^T G` assembled densely (banded, half-width `2K + 1`).
    pub fn normal_matrix(&self) -> DenseMatrix<T> {
        let n = self.n_nodes;
        let width = self.weights.len();
        let mut rows: Vec<Vec<T>> = vec![Vec::new(); n];
        rows.par_iter_mut().enumerate().for_each(|(l, row)| {
            *row = vec![T::zero(); n];
            let e_lo = (l + 1).saturating_sub(width);
            let e_hi = l.min(self.n_edges - 1);
            for e in e_lo..=e_hi {
                let wl = self.weights[l - e];
                for (t, &wm) in self.weights.iter().enumerate() {
                    row[e + t] = row[e + t] + wl * wm;
                }
            }
        });
        DenseMatrix::from_fn(n, n, |i, j| rows[i][j])
    }
}

/// Node values on Omega from edge values (`n_edges + 1` outputs).
pub fn reconstruct_nodes<T: Scalar>(g: &[T]) -> Vec<T> {
    let ne = g.len();
    let n = ne + 1;
    let end: [T; 3] = END_WEIGHTS.map(lit);
    let near: [T; 4] = NEAR_END_WEIGHTS.map(lit);
    let nine: T = lit(9.0);
    let sixteen: T = lit(16.0);
    let mut out = vec![T::zero(); n];
    out[0] = end[0] * g[0] + end[1] * g[1] + end[2] * g[2];
    out[1] = near[0] * g[0] + near[1] * g[1] + near[2] * g[2] + near[3] * g[3];
    for j in 2..n - 2 {
        out[j] = (nine * (g[j - 1] + g[j]) - g[j - 2] - g[j + 1]) / sixteen;
    }
    out[n - 2] =
        near[0] * g[ne - 1] + near[1] * g[ne - 2] + near[2] * g[ne - 3] + near[3] * g[ne - 4];
    out[n - 1] = end[0] * g[ne - 1] + end[1] * g[ne - 2] + end[2] * g[ne - 3];
    out
}

fn check_field<T: Scalar>(table: &KernelTable<T>, f: &Field<T>, support: Support) -> Result<()> {
    f.expect_support(support)?;
    check_spacing(table, f.grid())
}

/// `(Q * u)(x_i)` at every Omega node.
pub fn convolve_q<T: Scalar>(table: &KernelTable<T>, u: &Field<T>) -> Result<Field<T>> {
    check_field(table, u, Support::OmegaDelta)?;
    let grid = u.grid();
    let values = convolve_q_values(table, grid, u.values());
    Field::new(grid.clone(), Support::Omega, values)
}

pub(crate) fn convolve_q_values<T: Scalar>(
    table: &KernelTable<T>,
    grid: &DomainGrid<T>,
    u: &[T],
) -> Vec<T> {
    let k = table.radius();
    let q = table.q_weights();
    let h = table.grid_h();
    grid.omega()
        .map(|i| {
            // q is even, so the window can be read in either direction
            h * q
                .iter()
                .zip(&u[i - k..=i + k])
                .map(|(&a, &b)| a * b)
                .sum::<T>()
        })
        .collect()
}

/// Nonlocal gradient on the edges between consecutive Omega nodes.
pub fn edge_gradient<T: Scalar>(table: &KernelTable<T>, u: &Field<T>) -> Result<Field<T>> {
    check_field(table, u, Support::OmegaDelta)?;
    let stencil = EdgeStencil::new(table, u.grid())?;
    Field::new(
        u.grid().clone(),
        Support::OmegaEdges,
        stencil.apply(u.values()),
    )
}

/// Nonlocal gradient `D u` at the Omega nodes.
pub fn nonlocal_gradient<T: Scalar>(table: &KernelTable<T>, u: &Field<T>) -> Result<Field<T>> {
    let g = edge_gradient(table, u)?;
    Field::new(
        u.grid().clone(),
        Support::Omega,
        reconstruct_nodes(g.values()),
    )
}

/// Nonlocal divergence at the Omega nodes. In one dimension it coincides with
/// the gradient.
pub fn nonlocal_divergence<T: Scalar>(table: &KernelTable<T>, psi: &Field<T>) -> Result<Field<T>> {
    nonlocal_gradient(table, psi)
}

/// Nonlocal divergence at every node of Omega_delta, from the translation
/// invariant interior stencil applied to the zero extension of `psi`.
///
/// For `psi` supported in Omega_{-delta} this is exactly minus the adjoint of
/// [`nonlocal_gradient`].
pub fn nonlocal_divergence_extended<T: Scalar>(
    table: &KernelTable<T>,
    psi: &Field<T>,
) -> Result<Field<T>> {
    check_field(table, psi, Support::OmegaDelta)?;
    let values = stencil_divergence(table, psi.values());
    Field::new(psi.grid().clone(), Support::OmegaDelta, values)
}

fn stencil_divergence<T: Scalar>(table: &KernelTable<T>, psi: &[T]) -> Vec<T> {
    let n = psi.len() as isize;
    let r = table.d_radius() as isize;
    let d = table.d_weights();
    let h = table.grid_h();
    (0..n)
        .map(|l| {
            let mut acc = T::zero();
            for m in -r..=r {
                let j = l - m;
                if (0..n).contains(&j) {
                    acc = acc + d[(m + r) as usize] * psi[j as usize];
                }
            }
            h * acc
        })
        .collect()
}

/// Adjoint of [`edge_gradient`] with respect to the `h`-weighted inner products.
pub fn gradient_adjoint<T: Scalar>(table: &KernelTable<T>, g: &Field<T>) -> Result<Field<T>> {
    check_field(table, g, Support::OmegaEdges)?;
    let stencil = EdgeStencil::new(table, g.grid())?;
    Field::new(
        g.grid().clone(),
        Support::OmegaDelta,
        stencil.apply_transpose(g.values()),
    )
}

/// The nonlocal boundary operator `-div(1_Omega phi)` on the double collar.
///
/// A field on the Omega nodes is zero-extended and the interior divergence
/// stencil is applied. A field on the Omega edges goes through the exact
/// adjoint of the edge gradient, the form that appears in the discrete
/// Euler-Lagrange system.
pub fn nonlocal_boundary_operator<T: Scalar>(
    table: &KernelTable<T>,
    phi: &Field<T>,
) -> Result<Field<T>> {
    let grid = phi.grid().clone();
    check_spacing(table, &grid)?;
    let full = match phi.support() {
        Support::Omega => {
            let ext = phi.extend_by_zero();
            stencil_divergence(table, &ext)
                .into_iter()
                .map(|v| -v)
                .collect()
        }
        Support::OmegaEdges => gradient_adjoint(table, phi)?.into_values(),
        other => {
            return Err(Error::Support {
                expected: "Omega or Omega edges",
                found: other.name(),
            })
        }
    };
    let values = grid
        .indices(Support::DoubleCollar)
        .into_iter()
        .map(|i| full[i])
        .collect();
    Field::new(grid, Support::DoubleCollar, values)
}

/// Extension of `u` modulo `N`: `w = P E (Q * u)` on the torus, with `E` the
/// even reflection about `a` and `b` around the Omega-mean, smoothly cut off
/// beyond `2 delta` from Omega. `Q * w = Q * u` on Omega, so `u - w` lies in
/// the discrete `N`.
pub fn extend_modulo_n<T: Scalar>(
    table: &KernelTable<T>,
    torus: &TorusTransform<T>,
    u: &Field<T>,
) -> Result<Vec<T>> {
    check_field(table, u, Support::OmegaDelta)?;
    let grid = u.grid();
    let v = convolve_q_values(table, grid, u.values());
    let mean = v.iter().copied().sum::<T>() / from_usize(v.len());

    let delta = grid.delta();
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    let half_len = grid.omega_len() / two;
    let mid = (grid.a() + grid.b()) / two;
    let cutoff = CutoffProfile::new(
        half_len + three * delta,
        (half_len + two * delta) / (half_len + three * delta),
    )?;

    let pos = torus.positions();
    let lo = grid.a() - three * delta;
    let hi = grid.b() + three * delta;
    let margin = two * delta;
    if lo - margin < pos[0] || hi + margin > pos[pos.len() - 1] {
        return Err(Error::Torus(format!(
            "period {} cannot hold the extension of ({}, {}) with seam distance 2 delta",
            torus.period(),
            grid.a(),
            grid.b()
        )));
    }
    let offset = torus
        .grid_offset()
        .ok_or_else(|| Error::Torus("torus was not built for the grid".into()))?;

    let n_om = v.len() as isize;
    let first = (offset + grid.stencil()) as isize;
    let ext: Vec<T> = pos
        .iter()
        .enumerate()
        .map(|(t, &x)| {
            let chi = cutoff.eval((x - mid).abs());
            if chi == T::zero() {
                return mean;
            }
            let j = (t as isize - first).rem_euclid(2 * n_om);
            let j = if j >= n_om { 2 * n_om - 1 - j } else { j };
            mean + chi * (v[j as usize] - mean)
        })
        .collect();
    torus.apply_p(&ext)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn setup(n: usize) -> (Arc<DomainGrid<f64>>, KernelTable<f64>) {
        let grid = Arc::new(DomainGrid::new(-3.0, 3.0, 1.0, n).unwrap());
        let table = KernelTable::for_grid(&grid, 0.5, 0.5).unwrap();
        (grid, table)
    }

    #[test]
    fn constants_and_affine_functions() {
        let (grid, table) = setup(800);
        let one = Field::constant(grid.clone(), Support::OmegaDelta, 1.0).unwrap();
        let c = convolve_q(&table, &one).unwrap();
        assert!(c.values().iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(nonlocal_gradient(&table, &one).unwrap().max_abs() < 1e-12);
        let lin = Field::from_fn(grid.clone(), Support::OmegaDelta, |x| 2.0 * x).unwrap();
        let cl = convolve_q(&table, &lin).unwrap();
        for (v, x) in cl.values().iter().zip(cl.positions()) {
            assert!((v - 2.0 * x).abs() < 1e-12);
        }
        let d = nonlocal_gradient(&table, &lin).unwrap();
        assert!(d.values().iter().all(|v| (v - 2.0).abs() < 1e-10));
        let div = nonlocal_divergence(&table, &lin).unwrap();
        assert!(div.values().iter().all(|v| (v - 2.0).abs() < 1e-10));
    }

    #[test]
    fn reconstruction_is_exact_for_cubics() {
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x * x - 0.1 * x * x * x;
        let g: Vec<f64> = (0..12).map(|e| p(e as f64 + 0.5)).collect();
        let nodes = reconstruct_nodes(&g);
        for (j, v) in nodes.iter().enumerate() {
            let expected = p(j as f64);
            let tol = if j == 0 || j == nodes.len() - 1 {
                f64::INFINITY
            } else {
                1e-12
            };
            assert!((v - expected).abs() < tol, "node {j}");
        }
        // the end rule is quadratic
        let q = |x: f64| 3.0 + x - 0.25 * x * x;
        let g: Vec<f64> = (0..8).map(|e| q(e as f64 + 0.5)).collect();
        let nodes = reconstruct_nodes(&g);
        assert!((nodes[0] - q(0.0)).abs() < 1e-12);
        assert!((nodes[8] - q(8.0)).abs() < 1e-12);
    }

    #[test]
    fn transpose_is_adjoint() {
        let (grid, table) = setup(400);
        let st = EdgeStencil::new(&table, &grid).unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|x| (3.0 * x).sin()).collect();
        let g: Vec<f64> = (0..st.n_edges()).map(|e| (e as f64 * 0.1).cos()).collect();
        let lhs = crate::linalg::dot(&st.apply(&u), &g);
        let rhs = crate::linalg::dot(&u, &st.apply_transpose(&g));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        let a = st.normal_matrix();
        let direct = st.apply_transpose(&st.apply(&u));
        let viamat = a.matvec(&u);
        for (x, y) in direct.iter().zip(&viamat) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn duality_with_extended_divergence() {
        let (grid, table) = setup(400);
        let u = Field::from_fn(grid.clone(), Support::OmegaDelta, |x| {
            (x * 1.3).sin() + x * x
        })
        .unwrap();
        let psi = Field::from_fn(grid.clone(), Support::OmegaDelta, |x| {
            if x.abs() < 1.9 {
                (1.0 - (x / 1.9).powi(2)).powi(3)
            } else {
                0.0
            }
        })
        .unwrap();
        let du = nonlocal_gradient(&table, &u).unwrap();
        let psi_om = psi.restrict(Support::Omega).unwrap();
        let lhs = du.dot(&psi_om);
        let div = nonlocal_divergence_extended(&table, &psi).unwrap();
        let rhs = -u.dot(&div);
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn boundary_operator_support() {
        let (grid, table) = setup(800);
        let zero = Field::zeros(grid.clone(), Support::Omega);
        assert_eq!(
            nonlocal_boundary_operator(&table, &zero).unwrap().max_abs(),
            0.0
        );
        let one = Field::constant(grid.clone(), Support::Omega, 1.0).unwrap();
        let nb = nonlocal_boundary_operator(&table, &one).unwrap();
        assert!(nb.max_abs() > 1e-3);
        let kk = grid.stencil() as f64 * grid.h();
        for (x, v) in nb.positions().iter().zip(nb.values()) {
            let dist = (x - (-3.0)).abs().min((x - 3.0).abs());
            if dist > kk + 3.0 * grid.h() {
                assert!(v.abs() < 1e-13);
            }
        }
        assert!(matches!(
            nonlocal_boundary_operator(&table, &Field::zeros(grid, Support::OmegaDelta)),
            Err(Error::Support { .. })
        ));
    }

    #[test]
    fn spacing_mismatch_is_reported() {
        let (_, table) = setup(800);
        let (other, _) = setup(400);
        let u = Field::zeros(other, Support::OmegaDelta);
        assert!(matches!(
            convolve_q(&table, &u),
            Err(Error::SpacingMismatch { .. })
        ));
    }

    #[test]
    fn extension_reproduces_constants_and_gradient() {
        let (grid, table) = setup(800);
        let torus = TorusTransform::for_grid(&table, &grid).unwrap();
        let k = Field::constant(grid.clone(), Support::OmegaDelta, 2.5).unwrap();
        let w = extend_modulo_n(&table, &torus, &k).unwrap();
        let wg = torus.restrict_to_grid(&w, &grid).unwrap();
        assert!(wg.iter().all(|v| (v - 2.5).abs() < 1e-10));

        let u = Field::from_fn(grid.clone(), Support::OmegaDelta, |x| {
            (0.8 * x).sin() + 0.1 * x * x
        })
        .unwrap();
        let w = extend_modulo_n(&table, &torus, &u).unwrap();
        let wf = Field::new(
            grid.clone(),
            Support::OmegaDelta,
            torus.restrict_to_grid(&w, &grid).unwrap(),
        )
        .unwrap();
        let du = nonlocal_gradient(&table, &u).unwrap();
        let dw = nonlocal_gradient(&table, &wf).unwrap();
        let gap = du.axpby(1.0, &dw, -1.0).max_abs();
        assert!(gap < 1e-8, "gap {gap}");
    }
}
