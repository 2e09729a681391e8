//! Radial cutoff, normalization constant, potential kernel `Q` and the
//! tabulated stencils that every operator is assembled from.
//!
//! In one dimension with horizon `delta` and order `s`:
//!
//! ```text
//! c * 2 * int_0^delta w(r) r^{-s} dr = 1
//! Q(x) = c * int_{|x|}^delta w(r) r^{-1-s} dr
//! d(x) = Q'(x) = -c * sign(x) * w(|x|) / |x|^{1+s}
//! ```
//!
//! `Q` has unit mass and `D u = (Q * u)'`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::{self, REL_TOL};
use crate::scalar::{from_usize, lit, to_f64, Scalar};

/// Radial cutoff equal to one on `[0, mu*delta]`, zero beyond `delta`, with a
/// C-infinity monotone transition in between.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffProfile<T> {
    delta: T,
    mu: T,
}

/// Default plateau fraction.
pub const DEFAULT_MU: f64 = 0.5;

/// C-infinity step falling from 1 at `t <= 0` to 0 at `t >= 1`.
fn smooth_step_down<T: Scalar>(t: T) -> T {
    if t <= T::zero() {
        return T::one();
    }
    if t >= T::one() {
        return T::zero();
    }
    let f = |x: T| (-x.recip()).exp();
    let up = f(T::one() - t);
    let down = f(t);
    up / (up + down)
}

impl<T: Scalar> CutoffProfile<T> {
    pub fn new(delta: T, mu: T) -> Result<Self> {
        if !(delta > T::zero() && delta.is_finite()) {
            return Err(Error::Parameter {
                name: "delta",
                value: to_f64(delta),
                range: "(0, inf)".into(),
            });
        }
        if !(mu > T::zero() && mu < T::one()) {
            return Err(Error::Parameter {
                name: "mu",
                value: to_f64(mu),
                range: "(0, 1)".into(),
            });
        }
        Ok(Self { delta, mu })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn plateau(&self) -> T {
        self.mu * self.delta
    }

    pub fn eval(&self, r: T) -> T {
        let r = r.abs();
        let p = self.plateau();
        if r <= p {
            T::one()
        } else if r >= self.delta {
            T::zero()
        } else {
            smooth_step_down((r - p) / (self.delta - p))
        }
    }
}

/// Evaluates the cutoff at radius `r >= 0`.
pub fn eval_cutoff<T: Scalar>(profile: &CutoffProfile<T>, r: T) -> T {
    profile.eval(r)
}

fn check_order<T: Scalar>(s: T) -> Result<()> {
    if s > T::zero() && s < T::one() {
        Ok(())
    } else {
        Err(Error::Parameter {
            name: "s",
            value: to_f64(s),
            range: "(0, 1)".into(),
        })
    }
}

/// Scaling constant `c` with `c * int_{-delta}^{delta} w(|z|) |z|^{-s} dz = 1`.
///
/// The weak singularity is removed by `r = t^{1/(1-s)}`, after which the
/// integrand `w(t^{1/(1-s)}) / (1-s)` is bounded on `[0, delta^{1-s}]`.
pub fn normalization_constant<T: Scalar>(profile: &CutoffProfile<T>, s: T) -> Result<T> {
    check_order(s)?;
    let one_minus = T::one() - s;
    let exponent = one_minus.recip();
    let upper = profile.delta.powf(one_minus);
    // Split at the plateau edge so the transition gets its own panels.
    let knee = profile.plateau().powf(one_minus);
    let f = |t: T| profile.eval(t.powf(exponent)) / one_minus;
    let a = quadrature::integrate(f, T::zero(), knee, REL_TOL, "normalization")?;
    let b = quadrature::integrate(f, knee, upper, REL_TOL, "normalization")?;
    Ok((lit::<T>(2.0) * (a.value + b.value)).recip())
}

/// `Q`, its antiderivative and `d = Q'` for one cutoff and order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialKernel<T> {
    profile: CutoffProfile<T>,
    s: T,
    c_norm: T,
    // int_{mu delta}^{delta} w r^{-1-s} dr
    tail_q: T,
    // int_{mu delta}^{delta} w r^{-s} dr
    tail_m: T,
}

impl<T: Scalar> PotentialKernel<T> {
    pub fn new(profile: CutoffProfile<T>, s: T) -> Result<Self> {
        let c_norm = normalization_constant(&profile, s)?;
        let (p, d) = (profile.plateau(), profile.delta);
        let tail_q = quadrature::integrate(
            |r: T| profile.eval(r) * r.powf(-T::one() - s),
            p,
            d,
            REL_TOL,
            "Q tail",
        )?
        .value;
        let tail_m = quadrature::integrate(
            |r: T| profile.eval(r) * r.powf(-s),
            p,
            d,
            REL_TOL,
            "Q moment",
        )?
        .value;
        Ok(Self {
            profile,
            s,
            c_norm,
            tail_q,
            tail_m,
        })
    }

    pub fn profile(&self) -> &CutoffProfile<T> {
        &self.profile
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn c_norm(&self) -> T {
        self.c_norm
    }

    /// `Q(x)`; rejects `x = 0` where the kernel is singular.
    pub fn q(&self, x: T) -> Result<T> {
        let r = x.abs();
        if r == T::zero() {
            return Err(Error::Parameter {
                name: "x",
                value: 0.0,
                range: "R \\ {0} (Q is singular at the origin)".into(),
            });
        }
        let (p, d, s) = (self.profile.plateau(), self.profile.delta, self.s);
        if r >= d {
            return Ok(T::zero());
        }
        if r <= p {
            return Ok(self.c_norm * ((r.powf(-s) - p.powf(-s)) / s + self.tail_q));
        }
        let tail = quadrature::integrate(
            |t: T| self.profile.eval(t) * t.powf(-T::one() - s),
            r,
            d,
            REL_TOL,
            "Q",
        )?;
        Ok(self.c_norm * tail.value)
    }

    /// `c * int_r^delta w(t) t^{-s} dt` for `r >= 0`.
    fn moment_tail(&self, r: T) -> Result<T> {
        let (p, d, s) = (self.profile.plateau(), self.profile.delta, self.s);
        if r >= d {
            return Ok(T::zero());
        }
        let one_minus = T::one() - s;
        if r <= p {
            return Ok(
                self.c_norm * ((p.powf(one_minus) - r.powf(one_minus)) / one_minus + self.tail_m)
            );
        }
        let tail = quadrature::integrate(
            |t: T| self.profile.eval(t) * t.powf(-s),
            r,
            d,
            REL_TOL,
            "Q moment",
        )?;
        Ok(self.c_norm * tail.value)
    }

    /// `int_0^x Q` for `x >= 0`; equals `1/2` for `x >= delta`.
    pub fn antiderivative(&self, x: T) -> Result<T> {
        let (p, s, c) = (self.profile.plateau(), self.s, self.c_norm);
        if x <= T::zero() {
            return Ok(T::zero());
        }
        let one_minus = T::one() - s;
        let total = self.moment_tail(T::zero())?;
        if x >= self.profile.delta {
            return Ok(total);
        }
        if x <= p {
            // closed form on the plateau, free of cancellation for small x
            let pow = x.powf(one_minus);
            return Ok(
                c * (pow * (s.recip() + one_minus.recip()) - x * p.powf(-s) / s + x * self.tail_q)
            );
        }
        Ok(x * self.q(x)? - self.moment_tail(x)? + total)
    }

    /// `int_lo^hi Q` for any `lo <= hi`.
    pub fn integral(&self, lo: T, hi: T) -> Result<T> {
        let signed = |x: T| -> Result<T> {
            let g = self.antiderivative(x.abs())?;
            Ok(if x < T::zero() { -g } else { g })
        };
        Ok(signed(hi)? - signed(lo)?)
    }

    /// The odd kernel `d(x) = Q'(x)`; rejects `x = 0`.
    pub fn d(&self, x: T) -> Result<T> {
        if x == T::zero() {
            return Err(Error::Parameter {
                name: "x",
                value: 0.0,
                range: "R \\ {0} (d is singular at the origin)".into(),
            });
        }
        let r = x.abs();
        let mag = self.c_norm * self.profile.eval(r) * r.powf(-T::one() - self.s);
        Ok(if x > T::zero() { -mag } else { mag })
    }
}

/// `Q(x) = c * int_{|x|}^delta w(r) r^{-1-s} dr`, zero for `|x| >= delta`.
pub fn eval_q<T: Scalar>(profile: &CutoffProfile<T>, s: T, c_norm: T, x: T) -> Result<T> {
    check_order(s)?;
    let mut kernel = PotentialKernel::new(*profile, s)?;
    kernel.c_norm = c_norm;
    kernel.q(x)
}

/// Precomputed stencils for one kernel on one grid spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable<T> {
    kernel: PotentialKernel<T>,
    h: T,
    radius: usize,
    rescale: T,
    q_weights: Vec<T>,
    d_weights: Vec<T>,
    min_symbol: T,
}

/// Builds the tables for spacing `grid_h`; the horizon must be a whole number
/// (at least four) of cells.
pub fn build_kernel_table<T: Scalar>(
    profile: CutoffProfile<T>,
    s: T,
    grid_h: T,
) -> Result<KernelTable<T>> {
    KernelTable::build(profile, s, grid_h)
}

impl<T: Scalar> KernelTable<T> {
    pub fn build(profile: CutoffProfile<T>, s: T, grid_h: T) -> Result<Self> {
        check_order(s)?;
        let ratio = profile.delta() / grid_h;
        let radius = ratio.round().to_usize().unwrap_or(0);
        if !(grid_h > T::zero()) || radius < 4 {
            return Err(Error::Parameter {
                name: "grid_h",
                value: to_f64(grid_h),
                range: format!("(0, delta/4] with delta = {}", profile.delta()),
            });
        }
        if (ratio - from_usize(radius)).abs() > lit(1e-6) {
            return Err(Error::Parameter {
                name: "grid_h",
                value: to_f64(grid_h),
                range: format!("a divisor of delta = {}", profile.delta()),
            });
        }
        let kernel = PotentialKernel::new(profile, s)?;
        let h = grid_h;

        // antiderivative at the cell edges (k + 1/2) h, k = 0..=radius
        let edges: Vec<T> = (0..=radius)
            .into_par_iter()
            .map(|k| kernel.antiderivative((from_usize::<T>(k) + lit(0.5)) * h))
            .collect::<Result<_>>()?;
        let mut half = Vec::with_capacity(radius + 1);
        half.push(lit::<T>(2.0) * edges[0] / h);
        for k in 1..=radius {
            half.push((edges[k] - edges[k - 1]) / h);
        }
        let mass = h * (half[0] + lit::<T>(2.0) * half[1..].iter().copied().sum::<T>());
        if (mass - T::one()).abs() > lit(1e-3) {
            return Err(Error::Rescale(to_f64(mass)));
        }
        for w in &mut half {
            *w = *w / mass;
        }
        let q_weights: Vec<T> = (0..=2 * radius).map(|i| half[i.abs_diff(radius)]).collect();

        let q_at = |k: isize| -> T {
            let k = k.unsigned_abs();
            if k <= radius {
                half[k]
            } else {
                T::zero()
            }
        };
        let span = radius as isize + 2;
        let sixteen: T = lit(16.0);
        let ten: T = lit(10.0);
        let positive: Vec<T> = (1..=span)
            .map(|m| {
                (q_at(m - 2) - ten * q_at(m - 1) + ten * q_at(m + 1) - q_at(m + 2)) / (sixteen * h)
            })
            .collect();
        let d_weights: Vec<T> = (-span..=span)
            .map(|m| match m.signum() {
                0 => T::zero(),
                1 => positive[(m - 1) as usize],
                _ => -positive[(-m - 1) as usize],
            })
            .collect();

        let mut table = Self {
            kernel,
            h,
            radius,
            rescale: mass,
            q_weights,
            d_weights,
            min_symbol: T::zero(),
        };
        let (mode, min_symbol) = table.symbol_minimum();
        if !(min_symbol > T::zero()) {
            return Err(Error::NonPositiveSymbol {
                mode,
                value: to_f64(min_symbol),
            });
        }
        table.min_symbol = min_symbol;
        Ok(table)
    }

    /// Builds the profile for a grid's snapped horizon and tabulates on its spacing.
    pub fn for_grid(grid: &crate::domain::DomainGrid<T>, mu: T, s: T) -> Result<Self> {
        Self::build(CutoffProfile::new(grid.delta(), mu)?, s, grid.h())
    }

    /// Minimum of the DFT of the zero-padded `q_weights` (padded to a power of
    /// two at least eight times the stencil length) and the mode attaining it.
    fn symbol_minimum(&self) -> (usize, T) {
        let len = (8 * self.q_weights.len()).next_power_of_two();
        let half = &self.q_weights[self.radius..];
        (0..=len / 2)
            .map(|mode| {
                let omega: T = T::TAU() * from_usize(mode) / from_usize(len);
                let tail: T = half[1..]
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| w * (omega * from_usize(k + 1)).cos())
                    .sum();
                (mode, self.h * (half[0] + lit::<T>(2.0) * tail))
            })
            .fold(
                (0, T::infinity()),
                |acc, x| if x.1 < acc.1 { x } else { acc },
            )
    }

    pub fn kernel(&self) -> &PotentialKernel<T> {
        &self.kernel
    }

    pub fn profile(&self) -> &CutoffProfile<T> {
        self.kernel.profile()
    }

    pub fn s(&self) -> T {
        self.kernel.s
    }

    pub fn c_norm(&self) -> T {
        self.kernel.c_norm
    }

    pub fn grid_h(&self) -> T {
        self.h
    }

    /// Stencil radius `delta / h` in cells.
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Discrete mass before the unit-mass rescaling (1 up to quadrature error).
    pub fn rescale_factor(&self) -> T {
        self.rescale
    }

    /// Smallest sampled value of the discrete symbol of `q_weights`.
    pub fn min_symbol(&self) -> T {
        self.min_symbol
    }

    /// Cell averages of `Q` for offsets `-radius..=radius` (index `k + radius`).
    pub fn q_weights(&self) -> &[T] {
        &self.q_weights
    }

    /// `q_weights` entry for offset `k`, zero outside the stencil.
    pub fn q(&self, k: isize) -> T {
        let k = k.unsigned_abs();
        if k <= self.radius {
            self.q_weights[self.radius + k]
        } else {
            T::zero()
        }
    }

    /// Interior gradient stencil for offsets `-(radius+2)..=radius+2`
    /// (index `m + radius + 2`): antisymmetric, zero at the centre, and close
    /// to the cell averages of `d`.
    pub fn d_weights(&self) -> &[T] {
        &self.d_weights
    }

    /// Half-width of the interior gradient stencil.
    pub fn d_radius(&self) -> usize {
        self.radius + 2
    }

    /// Exact cell average of `d` over the cell centred at `k h`, `k != 0`.
    pub fn d_cell_average(&self, k: isize) -> Result<T> {
        let x: T = T::from(k).unwrap() * self.h;
        let half = self.h / lit(2.0);
        let right = if (x + half).abs() > T::zero() {
            self.kernel.q(x + half)?
        } else {
            T::zero()
        };
        let left = self.kernel.q(x - half)?;
        Ok((right - left) / self.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ref_profile() -> CutoffProfile<f64> {
        CutoffProfile::new(1.0, 0.5).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        let p = ref_profile();
        assert_eq!(eval_cutoff(&p, 0.3), 1.0);
        assert_eq!(eval_cutoff(&p, 0.5), 1.0);
        assert_eq!(eval_cutoff(&p, 1.2), 0.0);
        assert_eq!(eval_cutoff(&p, 1.0), 0.0);
        let mid = eval_cutoff(&p, 0.75);
        assert!(mid > 0.0 && mid < 1.0);
        assert!(eval_cutoff(&p, 0.75) >= eval_cutoff(&p, 0.8));
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = p.eval(i as f64 * 1.2e-3);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn cutoff_rejects_bad_parameters() {
        assert!(CutoffProfile::new(1.0, 1.0).is_err());
        assert!(CutoffProfile::new(0.0, 0.5).is_err());
    }

    #[test]
    fn normalization_bracket() {
        // indicator of B_delta and B_{mu delta} bracket the cutoff
        for s in [0.5, 0.9] {
            let c = normalization_constant(&ref_profile(), s).unwrap();
            let lo = (1.0 - s) / 2.0;
            let hi = (1.0 - s) / (2.0 * 0.5f64.powf(1.0 - s));
            assert!(c >= lo && c <= hi, "s = {s}: {c} not in [{lo}, {hi}]");
        }
        assert!(normalization_constant(&ref_profile(), 1.0).is_err());
    }

    #[test]
    fn normalization_matches_plateau_split() {
        let k = PotentialKernel::new(ref_profile(), 0.3).unwrap();
        let p: f64 = 0.5;
        let split = 2.0 * (p.powf(0.7) / 0.7 + k.tail_m);
        assert_relative_eq!(k.c_norm() * split, 1.0, max_relative = 1e-10);
    }

    #[test]
    fn q_is_even_and_supported_in_horizon() {
        let k = PotentialKernel::new(ref_profile(), 0.5).unwrap();
        assert_eq!(k.q(1.0).unwrap(), 0.0);
        assert_eq!(k.q(-1.7).unwrap(), 0.0);
        for x in [0.01, 0.3, 0.5, 0.61, 0.9, 0.999] {
            assert_eq!(k.q(x).unwrap(), k.q(-x).unwrap());
            assert!(k.q(x).unwrap() > 0.0);
        }
        assert!(k.q(0.0).is_err());
        assert!(k.d(0.0).is_err());
    }

    #[test]
    fn q_is_continuous_across_the_plateau_edge() {
        let k = PotentialKernel::new(ref_profile(), 0.5).unwrap();
        let a = k.q(0.5 - 1e-12).unwrap();
        let b = k.q(0.5 + 1e-12).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-9);
    }

    #[test]
    fn antiderivative_is_half_at_horizon() {
        let k = PotentialKernel::new(ref_profile(), 0.7).unwrap();
        assert_relative_eq!(k.antiderivative(1.0).unwrap(), 0.5, max_relative = 1e-10);
        assert_relative_eq!(k.integral(-1.0, 1.0).unwrap(), 1.0, max_relative = 1e-10);
        // consistent on both sides of the plateau edge
        let g1 = k.antiderivative(0.5).unwrap();
        let g2 = k.antiderivative(0.5 + 1e-13).unwrap();
        assert!((g1 - g2).abs() < 1e-10);
    }

    #[test]
    fn d_is_odd_and_derivative_of_q() {
        let k = PotentialKernel::new(ref_profile(), 0.5).unwrap();
        for x in [0.2, 0.55, 0.8] {
            let eps = 1e-6;
            let fd = (k.q(x + eps).unwrap() - k.q(x - eps).unwrap()) / (2.0 * eps);
            assert_relative_eq!(k.d(x).unwrap(), fd, max_relative = 1e-6);
            assert_eq!(k.d(-x).unwrap(), -k.d(x).unwrap());
        }
    }

    #[test]
    fn table_invariants() {
        let t = build_kernel_table(ref_profile(), 0.5, 0.01).unwrap();
        let h = t.grid_h();
        let mass: f64 = t.q_weights().iter().sum::<f64>() * h;
        assert!((mass - 1.0).abs() < 1e-14);
        assert!((t.rescale_factor() - 1.0).abs() < 1e-9);
        let dsum: f64 = t.d_weights().iter().sum();
        assert!(dsum.abs() < 1e-12 * t.d_weights().iter().map(|d| d.abs()).sum::<f64>());
        let r = t.radius();
        for k in 0..=r {
            assert_eq!(t.q_weights()[r + k], t.q_weights()[r - k]);
            assert!(t.q_weights()[r + k] >= 0.0);
            if k > 0 {
                assert!(t.q_weights()[r + k] <= t.q_weights()[r + k - 1]);
            }
        }
        let dr = t.d_radius();
        assert_eq!(t.d_weights()[dr], 0.0);
        for m in 1..=dr {
            assert_eq!(t.d_weights()[dr + m], -t.d_weights()[dr - m]);
        }
        assert!(t.min_symbol() > 0.0);
    }

    #[test]
    fn cell_average_is_close_to_midpoint_sample() {
        let t = build_kernel_table(ref_profile(), 0.5, 0.01).unwrap();
        let k = t.kernel();
        for off in 3..t.radius() {
            let x = off as f64 * 0.01;
            let mid = k.q(x).unwrap();
            let avg = t.q(off as isize);
            // deep in the cutoff tail Q is flat to all orders and the
            // midpoint rule loses relative accuracy
            if mid > 1e-4 {
                assert!(
                    (avg - mid).abs() <= 0.05 * mid,
                    "offset {off}: {avg} vs {mid}"
                );
            }
        }
    }

    #[test]
    fn gradient_weights_track_cell_averages_of_d() {
        let t = build_kernel_table(ref_profile(), 0.5, 0.01).unwrap();
        let dr = t.d_radius() as isize;
        for m in [10isize, 25, 45, 60, 80] {
            let exact = t.d_cell_average(m).unwrap();
            let w = t.d_weights()[(m + dr) as usize];
            assert!(
                (w - exact).abs() <= 0.02 * exact.abs(),
                "m = {m}: {w} vs {exact}"
            );
        }
    }

    #[test]
    fn rejects_misaligned_or_coarse_spacing() {
        assert!(build_kernel_table(ref_profile(), 0.5, 0.3).is_err());
        assert!(build_kernel_table(ref_profile(), 0.5, 0.0123).is_err());
    }

    #[test]
    fn eval_q_free_function_matches_kernel() {
        let p = ref_profile();
        let c = normalization_constant(&p, 0.5).unwrap();
        let k = PotentialKernel::new(p, 0.5).unwrap();
        assert_eq!(eval_q(&p, 0.5, c, 0.3).unwrap(), k.q(0.3).unwrap());
    }

    #[test]
    fn single_precision_table_builds() {
        let p = CutoffProfile::new(1.0f32, 0.5).unwrap();
        let t = build_kernel_table(p, 0.5, 0.0625).unwrap();
        let mass: f32 = t.q_weights().iter().sum::<f32>() * t.grid_h();
        assert!((mass - 1.0).abs() < 1e-5);
    }
}
