//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

#![allow(clippy::excessive_precision)]

use crate::error::{Error, Result};
use crate::scalar::{lit, tolerance, Scalar};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Default relative tolerance of every kernel quadrature.
pub const REL_TOL: f64 = 1e-10;
/// Maximum bisection depth of any subinterval.
pub const MAX_DEPTH: u32 = 20;

#[derive(Debug, Clone, Copy)]
pub struct Quadrature<T> {
    pub value: T,
    pub error: T,
}

#[derive(Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    depth: u32,
}

fn kronrod<T: Scalar>(f: &impl Fn(T) -> T, a: T, b: T) -> (T, T) {
    let two: T = lit(2.0);
    let centre = (a + b) / two;
    let half = (b - a) / two;
    let fc = f(centre);
    let mut kron = fc * lit(WGK[7]);
    let mut gauss = fc * lit(WG[3]);
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * lit(x);
        let pair = f(centre - dx) + f(centre + dx);
        kron = kron + pair * lit(w);
        if j % 2 == 1 {
            gauss = gauss + pair * lit(WG[j / 2]);
        }
    }
    (kron * half, ((kron - gauss) * half).abs())
}

/// Integrates `f` over `[a, b]` to relative accuracy `rel_tol`.
///
/// Panels are bisected in order of decreasing error estimate. The routine
/// fails when the worst panel has reached [`MAX_DEPTH`] bisections without
/// meeting the tolerance.
pub fn integrate<T: Scalar>(
    f: impl Fn(T) -> T,
    a: T,
    b: T,
    rel_tol: f64,
    what: &'static str,
) -> Result<Quadrature<T>> {
    if a == b {
        return Ok(Quadrature {
            value: T::zero(),
            error: T::zero(),
        });
    }
    let rel: T = tolerance(rel_tol);
    let tiny = T::min_positive_value() * lit(1e6);
    let (value, error) = kronrod(&f, a, b);
    let mut panels = vec![Panel {
        a,
        b,
        value,
        error,
        depth: 0,
    }];
    loop {
        let total: T = panels.iter().map(|p| p.value).sum();
        let err: T = panels.iter().map(|p| p.error).sum();
        if err <= rel * total.abs() || err <= tiny {
            return Ok(Quadrature {
                value: total,
                error: err,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |acc, (i, p)| {
                if p.error > acc.1 {
                    (i, p.error)
                } else {
                    acc
                }
            });
        let p = panels.swap_remove(worst);
        if p.depth >= MAX_DEPTH {
            return Err(Error::Quadrature {
                what,
                estimate: err.to_f64().unwrap_or(f64::NAN),
            });
        }
        let mid = (p.a + p.b) / lit(2.0);
        for (lo, hi) in [(p.a, mid), (mid, p.b)] {
            let (value, error) = kronrod(&f, lo, hi);
            panels.push(Panel {
                a: lo,
                b: hi,
                value,
                error,
                depth: p.depth + 1,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomials_are_exact() {
        let q = integrate(|x: f64| x.powi(6) - 3.0 * x, -1.0, 2.0, 1e-12, "poly").unwrap();
        assert_relative_eq!(q.value, 129.0 / 7.0 - 4.5, max_relative = 1e-14);
    }

    #[test]
    fn endpoint_singularity_converges() {
        let q = integrate(|x: f64| x.sqrt(), 0.0, 1.0, 1e-10, "sqrt").unwrap();
        assert_relative_eq!(q.value, 2.0 / 3.0, max_relative = 1e-9);
    }

    #[test]
    fn oscillatory_integrand() {
        let q = integrate(|x: f64| (20.0 * x).cos(), 0.0, 3.0, 1e-12, "cos").unwrap();
        assert_relative_eq!(q.value, (60.0f64).sin() / 20.0, max_relative = 1e-10);
    }

    #[test]
    fn non_integrable_reports_failure() {
        let r = integrate(|x: f64| 1.0 / x, 0.0, 1.0, 1e-10, "1/x");
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }

    #[test]
    fn single_precision_terminates() {
        let q = integrate(|x: f32| x.exp(), 0.0, 1.0, 1e-10, "exp").unwrap();
        assert!((q.value - (1f32.exp() - 1.0)).abs() < 1e-5);
    }
}
