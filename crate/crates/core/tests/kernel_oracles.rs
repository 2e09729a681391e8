//! Kernel checks against routes independent of the crate's own quadrature.

use approx::assert_relative_eq;
use nlgrad::kernels::DEFAULT_MU;
use nlgrad::{CutoffProfile, DomainGrid, KernelTable, PotentialKernel};

/// Composite Simpson in `t = x^{1-s}`, sharing nothing with the adaptive rule.
fn simpson_mass(kernel: &PotentialKernel, n: usize) -> f64 {
    let s = kernel.s();
    let p = 1.0 / (1.0 - s);
    let top = kernel.profile().delta().powf(1.0 - s);
    let f = |t: f64| {
        if t == 0.0 {
            return p * kernel.c_norm() / s;
        }
        kernel.q(t.powf(p)).unwrap() * p * t.powf(p - 1.0)
    };
    let h = top / n as f64;
    let mut acc = f(0.0) + f(top);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    2.0 * acc * h / 3.0
}

#[test]
fn unit_mass_by_simpson() {
    for s in [0.2, 0.4, 0.6, 0.8] {
        let kernel = PotentialKernel::new(CutoffProfile::new(1.0, DEFAULT_MU).unwrap(), s).unwrap();
        assert_relative_eq!(simpson_mass(&kernel, 200_000), 1.0, epsilon = 1e-6);
    }
}

#[test]
fn mass_is_independent_of_delta_scaling() {
    for delta in [0.5, 2.0] {
        let kernel =
            PotentialKernel::new(CutoffProfile::new(delta, DEFAULT_MU).unwrap(), 0.5).unwrap();
        assert_relative_eq!(simpson_mass(&kernel, 200_000), 1.0, epsilon = 1e-6);
    }
}

#[test]
fn d_is_derivative_of_q() {
    let kernel = PotentialKernel::new(CutoffProfile::new(1.0, DEFAULT_MU).unwrap(), 0.5).unwrap();
    for x in [0.1, 0.3, 0.55, 0.8, 0.95] {
        let e = 1e-6;
        let fd = (kernel.q(x + e).unwrap() - kernel.q(x - e).unwrap()) / (2.0 * e);
        assert_relative_eq!(kernel.d(x).unwrap(), fd, max_relative = 1e-6);
    }
}

#[test]
fn table_weights_are_symmetric_positive_and_unit_mass() {
    let grid = DomainGrid::new(-3.0, 3.0, 1.0, 600).unwrap();
    let table = KernelTable::for_grid(&grid, DEFAULT_MU, 0.7).unwrap();
    let w = table.q_weights();
    let sum: f64 = w.iter().sum::<f64>() * table.grid_h();
    assert_relative_eq!(sum, 1.0, epsilon = 1e-12);
    let r = table.radius() as isize;
    for k in 0..=r {
        assert_eq!(table.q(k), table.q(-k));
        assert!(table.q(k) >= 0.0);
    }
    assert!((table.rescale_factor() - 1.0).abs() < 1e-2);
    assert!(table.min_symbol() > 0.0);
}
