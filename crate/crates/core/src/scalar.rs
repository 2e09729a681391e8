//! Floating-point abstraction shared by every numerical routine.

use std::cell::RefCell;
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst};
use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};

/// Real scalar the laboratory computes in: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate are tuned for `f64`; routines clamp
/// them from below by a small multiple of machine epsilon so that `f32`
/// instantiations still terminate.
pub trait Scalar:
    Float + FloatConst + Sum + Debug + Display + LowerExp + Default + Send + Sync + 'static
{
    /// Unnormalized in-place DFT; `Forward` uses the kernel `exp(-2 pi i jk / n)`.
    fn fft_in_place(buffer: &mut [Complex<Self>], direction: FftDirection);
}

thread_local! {
    static PLANNER_F32: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
    static PLANNER_F64: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

impl Scalar for f32 {
    fn fft_in_place(buffer: &mut [Complex<f32>], direction: FftDirection) {
        let plan = PLANNER_F32.with(|p| p.borrow_mut().plan_fft(buffer.len(), direction));
        plan.process(buffer);
    }
}

impl Scalar for f64 {
    fn fft_in_place(buffer: &mut [Complex<f64>], direction: FftDirection) {
        let plan = PLANNER_F64.with(|p| p.borrow_mut().plan_fft(buffer.len(), direction));
        plan.process(buffer);
    }
}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<T: Scalar>(x: f64) -> T {
    T::from(x).expect("literal representable in the scalar type")
}

/// Converts an index or count into the working scalar.
#[inline]
pub fn from_usize<T: Scalar>(n: usize) -> T {
    T::from(n).expect("count representable in the scalar type")
}

/// Widens a scalar to `f64` for reporting.
#[inline]
pub fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Relative tolerance clamped to what the scalar type can resolve.
#[inline]
pub fn tolerance<T: Scalar>(rel: f64) -> T {
    let floor = T::epsilon() * lit(64.0);
    let rel: T = lit(rel);
    if rel > floor {
        rel
    } else {
        floor
    }
}
