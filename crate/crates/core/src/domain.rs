//! Cell-centred discretization of the interval Omega = (a, b) and its collars.
//!
//! The grid covers Omega_delta = (a - delta, b + delta) with `n_cells` uniform
//! cells; nodes are cell midpoints. A node belongs to Omega iff `a < x < b`,
//! otherwise to the collar Gamma_delta. The horizon is snapped to `K * h`
//! where `K` is the number of collar nodes on each side, so every stencil has
//! an exact integer radius.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Smallest admissible stencil radius `delta / h`.
pub const MIN_STENCIL_CELLS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DomainGrid<T> {
    a: T,
    b: T,
    delta_requested: T,
    delta: T,
    h: T,
    n_cells: usize,
    stencil: usize,
    nodes: Vec<T>,
}

/// Node subsets a [`Field`] may live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Support {
    /// Every node of Omega_delta.
    OmegaDelta,
    /// Nodes strictly inside (a, b).
    Omega,
    /// The outer collar Omega_delta minus the closure of Omega (both sides).
    GammaDelta,
    /// Omega nodes farther than delta from the boundary.
    OmegaInner,
    /// The inner collar Gamma_{-delta} = Omega minus Omega_{-delta}.
    InnerCollar,
    /// The double collar Gamma_{+-delta}: outer and inner collars together.
    DoubleCollar,
    /// Midpoints between consecutive Omega nodes (where the discrete
    /// nonlocal gradient lives).
    OmegaEdges,
}

impl Support {
    pub fn name(self) -> &'static str {
        match self {
            Support::OmegaDelta => "Omega_delta",
            Support::Omega => "Omega",
            Support::GammaDelta => "Gamma_delta",
            Support::OmegaInner => "Omega_-delta",
            Support::InnerCollar => "Gamma_-delta",
            Support::DoubleCollar => "Gamma_+-delta",
            Support::OmegaEdges => "Omega edges",
        }
    }
}

impl fmt::Display for Support {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Builds the grid for Omega = (a, b) with horizon `delta`.
pub fn build_grid<T: Scalar>(a: T, b: T, delta: T, n_cells: usize) -> Result<DomainGrid<T>> {
    DomainGrid::new(a, b, delta, n_cells)
}

impl<T: Scalar> DomainGrid<T> {
    pub fn new(a: T, b: T, delta: T, n_cells: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::Geometry(format!(
                "need finite a < b, got a = {a}, b = {b}"
            )));
        }
        let half: T = (b - a) / lit(2.0);
        if !(delta > T::zero() && delta < half) {
            return Err(Error::Parameter {
                name: "delta",
                value: to_f64(delta),
                range: format!("(0, (b-a)/2) = (0, {half})"),
            });
        }
        if n_cells < 16 {
            return Err(Error::Parameter {
                name: "n_cells",
                value: n_cells as f64,
                range: "[16, inf)".into(),
            });
        }
        let h = (b - a + delta * lit(2.0)) / from_usize(n_cells);
        let left = a - delta;
        let nodes: Vec<T> = (0..n_cells)
            .map(|i| left + (from_usize::<T>(i) + lit(0.5)) * h)
            .collect();
        let stencil = nodes.iter().take_while(|&&x| x <= a).count();
        let right = nodes.iter().rev().take_while(|&&x| x >= b).count();
        if stencil < MIN_STENCIL_CELLS {
            return Err(Error::Parameter {
                name: "n_cells",
                value: n_cells as f64,
                range: format!(
                    "large enough that delta/h >= {MIN_STENCIL_CELLS} (delta/h = {})",
                    delta / h
                ),
            });
        }
        if stencil != right {
            return Err(Error::Geometry(format!(
                "collars are unbalanced ({stencil} vs {right} nodes)"
            )));
        }
        Ok(Self {
            a,
            b,
            delta_requested: delta,
            delta: from_usize::<T>(stencil) * h,
            h,
            n_cells,
            stencil,
            nodes,
        })
    }

    pub fn a(&self) -> T {
        self.a
    }

    pub fn b(&self) -> T {
        self.b
    }

    /// Horizon as requested.
    pub fn delta_requested(&self) -> T {
        self.delta_requested
    }

    /// Horizon snapped to a whole number of cells; kernels are built for this value.
    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Collar width in cells, which is also the convolution stencil radius.
    pub fn stencil(&self) -> usize {
        self.stencil
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn omega_len(&self) -> T {
        self.b - self.a
    }

    /// Node indices of Omega (contiguous).
    pub fn omega(&self) -> Range<usize> {
        self.stencil..self.n_cells - self.stencil
    }

    pub fn n_omega(&self) -> usize {
        self.n_cells - 2 * self.stencil
    }

    pub fn n_gamma(&self) -> usize {
        2 * self.stencil
    }

    /// Node indices of the outer collar, left block then right block.
    pub fn gamma(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.stencil).chain(self.n_cells - self.stencil..self.n_cells)
    }

    pub fn in_omega(&self, i: usize) -> bool {
        self.omega().contains(&i)
    }

    fn inner_mask(&self, i: usize) -> bool {
        let x = self.nodes[i];
        self.in_omega(i) && x - self.a > self.delta && self.b - x > self.delta
    }

    /// Node indices (in Omega_delta numbering) of a node support.
    ///
    /// # Panics
    /// For [`Support::OmegaEdges`], which is not a node set.
    pub fn indices(&self, support: Support) -> Vec<usize> {
        let n = self.n_cells;
        match support {
            Support::OmegaDelta => (0..n).collect(),
            Support::Omega => self.omega().collect(),
            Support::GammaDelta => self.gamma().collect(),
            Support::OmegaInner => (0..n).filter(|&i| self.inner_mask(i)).collect(),
            Support::InnerCollar => self.omega().filter(|&i| !self.inner_mask(i)).collect(),
            Support::DoubleCollar => (0..n).filter(|&i| !self.inner_mask(i)).collect(),
            Support::OmegaEdges => panic!("Omega edges are not grid nodes"),
        }
    }

    /// Number of samples a field on `support` carries.
    pub fn support_len(&self, support: Support) -> usize {
        match support {
            Support::OmegaDelta => self.n_cells,
            Support::Omega => self.n_omega(),
            Support::GammaDelta => self.n_gamma(),
            Support::OmegaEdges => self.n_omega() - 1,
            other => self.indices(other).len(),
        }
    }

    /// Sample positions of `support`.
    pub fn positions(&self, support: Support) -> Vec<T> {
        match support {
            Support::OmegaEdges => {
                let om = self.omega();
                (om.start..om.end - 1)
                    .map(|i| self.nodes[i] + self.h / lit(2.0))
                    .collect()
            }
            other => self
                .indices(other)
                .into_iter()
                .map(|i| self.nodes[i])
                .collect(),
        }
    }
}

/// Real samples attached to one support of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Arc<DomainGrid<T>>,
    support: Support,
    values: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn new(grid: Arc<DomainGrid<T>>, support: Support, values: Vec<T>) -> Result<Self> {
        let expected = grid.support_len(support);
        if values.len() != expected {
            return Err(Error::Geometry(format!(
                "{} values supplied for {support} with {expected} samples",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            grid,
            support,
            values,
        })
    }

    pub fn from_fn(grid: Arc<DomainGrid<T>>, support: Support, f: impl Fn(T) -> T) -> Result<Self> {
        let values = grid.positions(support).into_iter().map(f).collect();
        Self::new(grid, support, values)
    }

    pub fn constant(grid: Arc<DomainGrid<T>>, support: Support, value: T) -> Result<Self> {
        Self::from_fn(grid, support, |_| value)
    }

    pub fn zeros(grid: Arc<DomainGrid<T>>, support: Support) -> Self {
        let n = grid.support_len(support);
        Self {
            grid,
            support,
            values: vec![T::zero(); n],
        }
    }

    pub fn grid(&self) -> &Arc<DomainGrid<T>> {
        &self.grid
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn positions(&self) -> Vec<T> {
        self.grid.positions(self.support)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn expect_support(&self, expected: Support) -> Result<()> {
        if self.support == expected {
            Ok(())
        } else {
            Err(Error::Support {
                expected: expected.name(),
                found: self.support.name(),
            })
        }
    }

    /// Midpoint-rule integral over the field's support.
    pub fn integrate(&self) -> T {
        self.grid.h * self.values.iter().copied().sum::<T>()
    }

    /// `h`-weighted inner product with a field on the same support.
    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.support, other.support);
        self.grid.h
            * self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&x, &y)| x * y)
                .sum::<T>()
    }

    pub fn l2_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / from_usize(self.values.len())
    }

    /// Values scattered into Omega_delta numbering, zero elsewhere.
    ///
    /// # Panics
    /// For fields on [`Support::OmegaEdges`].
    pub fn extend_by_zero(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.grid.n_cells()];
        for (i, &v) in self.grid.indices(self.support).iter().zip(&self.values) {
            out[*i] = v;
        }
        out
    }

    /// Restriction of an Omega_delta field to a node support.
    pub fn restrict(&self, support: Support) -> Result<Self> {
        self.expect_support(Support::OmegaDelta)?;
        let values = self
            .grid
            .indices(support)
            .into_iter()
            .map(|i| self.values[i])
            .collect();
        Ok(Self {
            grid: self.grid.clone(),
            support,
            values,
        })
    }

    /// Linear combination `alpha * self + beta * other`.
    pub fn axpby(&self, alpha: T, other: &Self, beta: T) -> Self {
        debug_assert_eq!(self.support, other.support);
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&x, &y)| alpha * x + beta * y)
            .collect();
        Self {
            grid: self.grid.clone(),
            support: self.support,
            values,
        }
    }

    /// Writes `x,value` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "x,value")?;
        for (x, v) in self.positions().into_iter().zip(&self.values) {
            writeln!(out, "{:.16e},{:.16e}", to_f64(x), to_f64(*v))?;
        }
        Ok(())
    }
}

/// Builds an Omega_delta field from Omega values and Gamma_delta values.
pub fn assemble<T: Scalar>(
    grid: &Arc<DomainGrid<T>>,
    omega: &[T],
    gamma: &[T],
) -> Result<Field<T>> {
    let mut values = vec![T::zero(); grid.n_cells()];
    for (i, &v) in grid.omega().zip(omega) {
        values[i] = v;
    }
    for (i, &v) in grid.gamma().zip(gamma) {
        values[i] = v;
    }
    if omega.len() != grid.n_omega() || gamma.len() != grid.n_gamma() {
        return Err(Error::Geometry(
            "partition sizes do not match the grid".into(),
        ));
    }
    Field::new(grid.clone(), Support::OmegaDelta, values)
}

/// Midpoint quadrature `h * sum(values)` over the field's support.
pub fn integrate<T: Scalar>(f: &Field<T>) -> T {
    f.integrate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ref_grid(n: usize) -> Arc<DomainGrid<f64>> {
        Arc::new(build_grid(-3.0, 3.0, 1.0, n).unwrap())
    }

    #[test]
    fn reference_grid_partition() {
        let g = ref_grid(800);
        assert!((g.h() - 0.01).abs() < 1e-15);
        assert_eq!(g.stencil(), 100);
        assert_eq!(g.n_gamma(), 200);
        assert_eq!(g.n_omega() + g.n_gamma(), 800);
        assert!((g.delta() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unit_interval_partition_is_strict() {
        let g = build_grid(0.0f64, 1.0, 0.25, 160).unwrap();
        assert!((g.h() - 1.5 / 160.0).abs() < 1e-15);
        for (i, &x) in g.nodes().iter().enumerate() {
            assert_eq!(g.in_omega(i), 0.0 < x && x < 1.0, "node {i} at {x}");
        }
        // delta/h = 26.67 snaps to 27 cells
        assert_eq!(g.stencil(), 27);
        assert!((g.delta() - 27.0 * g.h()).abs() < 1e-15);
        assert!((g.delta() - 0.25).abs() <= g.h() / 2.0);
    }

    #[test]
    fn partition_is_complete_and_disjoint() {
        let g = ref_grid(800);
        let mut seen = vec![0u8; g.n_cells()];
        for i in g
            .indices(Support::Omega)
            .into_iter()
            .chain(g.indices(Support::GammaDelta))
        {
            seen[i] += 1;
        }
        assert!(seen.iter().all(|&c| c == 1));
        let inner = g.indices(Support::OmegaInner);
        let collar = g.indices(Support::InnerCollar);
        assert_eq!(inner.len() + collar.len(), g.n_omega());
        assert!(inner.iter().all(|&i| g.in_omega(i)));
        assert!(!inner.is_empty());
        assert_eq!(
            g.indices(Support::DoubleCollar).len(),
            collar.len() + g.n_gamma()
        );
    }

    #[test]
    fn refinement_keeps_classification_boundary() {
        for n in [200usize, 400, 800] {
            let g = ref_grid(n);
            let f = ref_grid(2 * n);
            let first = g.nodes()[g.omega().start];
            let first_fine = f.nodes()[f.omega().start];
            assert!((first - first_fine).abs() <= g.h());
        }
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(build_grid(-3.0, 3.0, 3.0, 800).is_err());
        assert!(build_grid(3.0, -3.0, 1.0, 800).is_err());
        assert!(build_grid(-3.0, 3.0, 1.0, 8).is_err());
        // delta/h = 0.1/0.4 < 4
        assert!(build_grid(0.0, 6.0, 0.1, 16).is_err());
    }

    #[test]
    fn midpoint_integration() {
        let g = ref_grid(800);
        let one = Field::constant(g.clone(), Support::Omega, 1.0).unwrap();
        assert!((one.integrate() - 6.0).abs() <= 2.0 * g.h());
        let zero = Field::zeros(g.clone(), Support::Omega);
        assert_eq!(integrate(&zero), 0.0);
        let x = Field::from_fn(g.clone(), Support::Omega, |x| x).unwrap();
        assert!(x.integrate().abs() < 1e-12);
        let affine = Field::from_fn(g, Support::Omega, |x| 2.0 * x + 0.5).unwrap();
        assert!((affine.integrate() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn field_length_and_finiteness_are_enforced() {
        let g = ref_grid(800);
        assert!(Field::new(g.clone(), Support::Omega, vec![0.0; 3]).is_err());
        let mut v = vec![0.0; g.n_omega()];
        v[7] = f64::NAN;
        assert!(matches!(
            Field::new(g, Support::Omega, v),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn csv_has_header_and_full_precision() {
        let g = Arc::new(build_grid(0.0, 1.0, 0.25, 32).unwrap());
        let f = Field::from_fn(g, Support::GammaDelta, |x| x / 3.0).unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("x,value"));
        let row = lines.next().unwrap();
        let parsed: Vec<f64> = row.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!(parsed[1], parsed[0] / 3.0);
        assert_eq!(text.lines().count(), 1 + f.len());
    }
}
