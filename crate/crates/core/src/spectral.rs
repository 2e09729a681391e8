//! Periodic realization of the inverse convolution `P` and FFT-backed
//! Toeplitz products.

use rustfft::num_complex::Complex;
use rustfft::FftDirection;

use crate::domain::DomainGrid;
use crate::error::{Error, Result};
use crate::kernels::KernelTable;
use crate::scalar::{from_usize, lit, to_f64, Scalar};

fn forward<T: Scalar>(values: &[T]) -> Vec<Complex<T>> {
    let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
    T::fft_in_place(&mut buf, FftDirection::Forward);
    buf
}

fn inverse_real<T: Scalar>(mut buf: Vec<Complex<T>>) -> Vec<T> {
    let n: T = from_usize(buf.len());
    T::fft_in_place(&mut buf, FftDirection::Inverse);
    buf.into_iter().map(|c| c.re / n).collect()
}

/// Discrete convolution with `Q` on a periodic grid, diagonalized by the DFT.
///
/// Torus node `j` sits at `left + (j + 1/2) h`; the period is `n_modes * h`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusTransform<T> {
    period: T,
    left: T,
    h: T,
    n_modes: usize,
    q_hat: Vec<Complex<T>>,
    min_real_q_hat: T,
    max_imag_q_hat: T,
    grid_offset: Option<usize>,
}

/// Builds the torus of the given period centred at the origin.
pub fn build_torus<T: Scalar>(
    table: &KernelTable<T>,
    period: T,
    n_modes: usize,
) -> Result<TorusTransform<T>> {
    TorusTransform::new(table, period, n_modes, -period / lit(2.0), None)
}

impl<T: Scalar> TorusTransform<T> {
    fn new(
        table: &KernelTable<T>,
        period: T,
        n_modes: usize,
        left: T,
        grid_offset: Option<usize>,
    ) -> Result<Self> {
        if !n_modes.is_power_of_two() {
            return Err(Error::Torus(format!(
                "n_modes = {n_modes} is not a power of two"
            )));
        }
        let h = table.grid_h();
        let spacing = period / from_usize(n_modes);
        if (spacing - h).abs() > lit::<T>(1e-9) * h {
            return Err(Error::SpacingMismatch {
                grid: to_f64(spacing),
                table: to_f64(h),
            });
        }
        let radius = table.radius();
        if n_modes < 4 * radius + 2 {
            return Err(Error::Torus(format!(
                "period {period} must be at least four horizons"
            )));
        }
        let mut placed = vec![T::zero(); n_modes];
        for k in -(radius as isize)..=radius as isize {
            placed[k.rem_euclid(n_modes as isize) as usize] = h * table.q(k);
        }
        let q_hat = forward(&placed);
        let (mode, min_real_q_hat) =
            q_hat
                .iter()
                .enumerate()
                .map(|(m, c)| (m, c.re))
                .fold(
                    (0, T::infinity()),
                    |acc, x| if x.1 < acc.1 { x } else { acc },
                );
        if !(min_real_q_hat > T::zero()) {
            return Err(Error::NonPositiveSymbol {
                mode,
                value: to_f64(min_real_q_hat),
            });
        }
        let max_imag_q_hat = q_hat.iter().fold(T::zero(), |m, c| m.max(c.im.abs()));
        Ok(Self {
            period,
            left,
            h,
            n_modes,
            q_hat,
            min_real_q_hat,
            max_imag_q_hat,
            grid_offset,
        })
    }

    /// Smallest power-of-two torus with period at least `2 (|Omega_delta| + 2 delta)`,
    /// whose nodes contain the grid nodes.
    pub fn for_grid(table: &KernelTable<T>, grid: &DomainGrid<T>) -> Result<Self> {
        check_spacing(table, grid)?;
        let span = grid.nodes().len();
        let needed =
            lit::<T>(2.0) * (from_usize::<T>(span) * grid.h() + lit::<T>(2.0) * grid.delta());
        let cells = (needed / grid.h()).ceil().to_usize().unwrap_or(usize::MAX);
        let n_modes = cells.max(span + 1).next_power_of_two();
        let offset = (n_modes - span) / 2;
        let grid_left = grid.nodes()[0] - grid.h() / lit(2.0);
        let left = grid_left - from_usize::<T>(offset) * grid.h();
        Self::new(
            table,
            from_usize::<T>(n_modes) * grid.h(),
            n_modes,
            left,
            Some(offset),
        )
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn h(&self) -> T {
        self.h
    }

    pub fn q_hat(&self) -> &[Complex<T>] {
        &self.q_hat
    }

    pub fn min_real_q_hat(&self) -> T {
        self.min_real_q_hat
    }

    /// Largest imaginary part of the symbol (zero up to rounding for an even kernel).
    pub fn max_imag_q_hat(&self) -> T {
        self.max_imag_q_hat
    }

    /// Node positions on the torus.
    pub fn positions(&self) -> Vec<T> {
        (0..self.n_modes)
            .map(|j| self.left + (from_usize::<T>(j) + lit(0.5)) * self.h)
            .collect()
    }

    pub fn sample(&self, f: impl Fn(T) -> T) -> Vec<T> {
        self.positions().into_iter().map(f).collect()
    }

    fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != self.n_modes {
            return Err(Error::Torus(format!(
                "expected {} samples, got {}",
                self.n_modes,
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    /// Periodic convolution with the discrete `Q`.
    pub fn convolve(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v)?;
        let mut spec = forward(v);
        for (c, q) in spec.iter_mut().zip(&self.q_hat) {
            *c = *c * q.re;
        }
        Ok(inverse_real(spec))
    }

    /// The inverse of [`Self::convolve`]: divides by the symbol mode by mode.
    pub fn apply_p(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v)?;
        let mut spec = forward(v);
        for (c, q) in spec.iter_mut().zip(&self.q_hat) {
            *c = *c / q.re;
        }
        Ok(inverse_real(spec))
    }

    /// Offset of grid node 0 in torus numbering, for tori built by [`Self::for_grid`].
    pub fn grid_offset(&self) -> Option<usize> {
        self.grid_offset
    }

    fn aligned_offset(&self, grid: &DomainGrid<T>) -> Result<usize> {
        let offset = self
            .grid_offset
            .ok_or_else(|| Error::Torus("torus was not built for a grid".into()))?;
        let x0 = self.left + (from_usize::<T>(offset) + lit(0.5)) * self.h;
        if (grid.h() - self.h).abs() > lit::<T>(1e-9) * self.h
            || (x0 - grid.nodes()[0]).abs() > lit::<T>(1e-6) * self.h
            || offset + grid.n_cells() > self.n_modes
        {
            return Err(Error::Torus("grid nodes are not torus nodes".into()));
        }
        Ok(offset)
    }

    /// Torus samples at the grid nodes of Omega_delta.
    pub fn restrict_to_grid(&self, v: &[T], grid: &DomainGrid<T>) -> Result<Vec<T>> {
        self.check_len(v)?;
        let off = self.aligned_offset(grid)?;
        Ok(v[off..off + grid.n_cells()].to_vec())
    }

    /// Zero-padded embedding of grid samples on Omega_delta.
    pub fn embed_grid(&self, values: &[T], grid: &DomainGrid<T>) -> Result<Vec<T>> {
        let off = self.aligned_offset(grid)?;
        let mut out = vec![T::zero(); self.n_modes];
        out[off..off + values.len()].copy_from_slice(values);
        Ok(out)
    }
}

pub(crate) fn check_spacing<T: Scalar>(table: &KernelTable<T>, grid: &DomainGrid<T>) -> Result<()> {
    if (table.grid_h() - grid.h()).abs() > lit::<T>(1e-9) * grid.h()
        || table.radius() != grid.stencil()
    {
        return Err(Error::SpacingMismatch {
            grid: to_f64(grid.h()),
            table: to_f64(table.grid_h()),
        });
    }
    Ok(())
}

/// Symmetric Toeplitz matrix applied through a circulant embedding.
#[derive(Debug, Clone)]
pub struct SymmetricToeplitz<T> {
    n: usize,
    eigenvalues: Vec<Complex<T>>,
}

impl<T: Scalar> SymmetricToeplitz<T> {
    /// `first_column[k]` is the entry at offset `k`; missing offsets are zero.
    pub fn new(first_column: &[T], n: usize) -> Self {
        let size = (2 * n).next_power_of_two();
        let mut c = vec![T::zero(); size];
        for (k, &v) in first_column.iter().enumerate().take(n) {
            c[k] = v;
            if k > 0 {
                c[size - k] = v;
            }
        }
        Self {
            n,
            eigenvalues: forward(&c),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut padded = vec![T::zero(); self.eigenvalues.len()];
        padded[..self.n].copy_from_slice(x);
        let mut spec = forward(&padded);
        for (a, b) in spec.iter_mut().zip(&self.eigenvalues) {
            *a = *a * *b;
        }
        let mut out = inverse_real(spec);
        out.truncate(self.n);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::CutoffProfile;
    use crate::linalg::DenseMatrix;

    fn table(h: f64) -> KernelTable<f64> {
        KernelTable::build(CutoffProfile::new(1.0, 0.5).unwrap(), 0.5, h).unwrap()
    }

    fn bump(x: f64) -> f64 {
        if x.abs() < 1.0 {
            (-1.0 / (1.0 - x * x)).exp() * std::f64::consts::E
        } else {
            0.0
        }
    }

    #[test]
    fn symbol_has_unit_mass_and_is_real_even_positive() {
        let t = build_torus(&table(1.0 / 128.0), 16.0, 2048).unwrap();
        assert!((t.q_hat()[0].re - 1.0).abs() < 1e-10);
        assert!(t.min_real_q_hat() > 0.0);
        assert!(t.max_imag_q_hat() < 1e-12);
        let n = t.n_modes();
        for m in 1..n / 2 {
            assert!((t.q_hat()[m].re - t.q_hat()[n - m].re).abs() < 1e-12);
        }
    }

    #[test]
    fn p_inverts_convolution() {
        let t = build_torus(&table(1.0 / 128.0), 16.0, 2048).unwrap();
        let v = t.sample(|x| bump(x / 2.0));
        let back = t.apply_p(&t.convolve(&v).unwrap()).unwrap();
        let err: f64 = v
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let nrm: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / nrm < 1e-12);
        assert_eq!(t.apply_p(&vec![0.0; 2048]).unwrap(), vec![0.0; 2048]);
    }

    #[test]
    fn convolution_matches_direct_sum() {
        let tb = table(0.125);
        let t = build_torus(&tb, 8.0, 64).unwrap();
        let v = t.sample(|x| (x * 0.7).sin() + 0.3);
        let fast = t.convolve(&v).unwrap();
        for j in 0..64 {
            let direct: f64 = (-8isize..=8)
                .map(|k| 0.125 * tb.q(k) * v[(j as isize - k).rem_euclid(64) as usize])
                .sum();
            assert!((fast[j] - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let tb = table(1.0 / 128.0);
        assert!(matches!(build_torus(&tb, 16.0, 2000), Err(Error::Torus(_))));
        assert!(matches!(
            build_torus(&tb, 16.0, 1024),
            Err(Error::SpacingMismatch { .. })
        ));
        assert!(matches!(build_torus(&tb, 2.0, 256), Err(Error::Torus(_))));
    }

    #[test]
    fn grid_torus_aligns_nodes() {
        let grid = DomainGrid::new(-3.0f64, 3.0, 1.0, 800).unwrap();
        let tb = KernelTable::for_grid(&grid, 0.5, 0.5).unwrap();
        let t = TorusTransform::for_grid(&tb, &grid).unwrap();
        assert!(t.period() >= 2.0 * (8.0 + 2.0));
        let pos = t.positions();
        let restricted = t.restrict_to_grid(&pos, &grid).unwrap();
        for (a, b) in restricted.iter().zip(grid.nodes()) {
            assert!((a - b).abs() < 1e-12);
        }
        let embedded = t.embed_grid(grid.nodes(), &grid).unwrap();
        assert_eq!(t.restrict_to_grid(&embedded, &grid).unwrap(), grid.nodes());
    }

    #[test]
    fn toeplitz_product_matches_dense() {
        let n = 37;
        let col: Vec<f64> = (0..10).map(|k| 1.0 / (1.0 + k as f64)).collect();
        let op: SymmetricToeplitz<f64> = SymmetricToeplitz::new(&col, n);
        let dense =
            DenseMatrix::from_fn(n, n, |i, j| col.get(i.abs_diff(j)).copied().unwrap_or(0.0));
        let x: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let a = op.apply(&x);
        let b = dense.matvec(&x);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }
}
