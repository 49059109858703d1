//! One-dimensional quadrature used by the moment providers.
//!
//! [`adaptive_gk15`] is a globally adaptive Gauss–Kronrod (7, 15) scheme that always
//! bisects the panel with the largest error estimate. [`linear_interpolant_moment`]
//! integrates x^t against tabulated data on an arbitrary increasing grid.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

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
// Gauss weights for the odd-indexed Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Result of a quadrature: value and an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<F> {
    pub value: F,
    pub error: F,
}

#[derive(Debug, Clone, Copy)]
struct Panel<F> {
    a: F,
    b: F,
    value: F,
    error: F,
}

impl<F: Scalar> PartialEq for Panel<F> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<F: Scalar> Eq for Panel<F> {}
impl<F: Scalar> PartialOrd for Panel<F> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<F: Scalar> Ord for Panel<F> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

fn gk15<F: Scalar, G: Fn(F) -> F>(f: &G, a: F, b: F) -> Panel<F> {
    let half = lit::<F>(0.5);
    let center = half * (a + b);
    let radius = half * (b - a);
    let fc = f(center);
    let mut kronrod = fc * lit(WGK[7]);
    let mut gauss = fc * lit(WG[3]);
    for j in 0..7 {
        let dx = radius * lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod += pair * lit(WGK[j]);
        if j % 2 == 1 {
            gauss += pair * lit(WG[j / 2]);
        }
    }
    Panel {
        a,
        b,
        value: kronrod * radius,
        error: ((kronrod - gauss) * radius).abs(),
    }
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
///
/// `breakpoints` seed the initial partition (points outside `(a, b)` are ignored),
/// which is how callers steer refinement toward a known endpoint singularity.
/// Fails with [`Error::QuadratureNonConvergence`] once `max_panels` is exceeded.
pub fn adaptive_gk15<F: Scalar, G: Fn(F) -> F>(
    f: G,
    a: F,
    b: F,
    breakpoints: &[F],
    tol: F,
    max_panels: usize,
) -> Result<Estimate<F>> {
    let mut cuts = vec![a];
    cuts.extend(breakpoints.iter().copied().filter(|&p| p > a && p < b));
    cuts.push(b);
    let mut heap: BinaryHeap<Panel<F>> = cuts.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    loop {
        let (value, error) = heap
            .iter()
            .fold((F::zero(), F::zero()), |(v, e), p| (v + p.value, e + p.error));
        if error <= tol {
            return Ok(Estimate { value, error });
        }
        if heap.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                panels: heap.len(),
                error: error.to_f64().unwrap_or(f64::NAN),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = lit::<F>(0.5) * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel can no longer be split in this precision.
            return Err(Error::QuadratureNonConvergence {
                panels: heap.len() + 1,
                error: error.to_f64().unwrap_or(f64::NAN),
            });
        }
        heap.push(gk15(&f, worst.a, mid));
        heap.push(gk15(&f, mid, worst.b));
    }
}

fn linear_moment<F: Scalar>(x: &[F], w: &[F], t: F) -> F {
    let one = F::one();
    let two = lit::<F>(2.0);
    let p1 = |c: F| c.powf(t + one) / (t + one);
    let p2 = |c: F| c.powf(t + two) / (t + two);
    let mut acc = F::zero();
    for j in 0..x.len() - 1 {
        let (a, b) = (x[j], x[j + 1]);
        let h = b - a;
        let d1 = p1(b) - p1(a);
        let d2 = p2(b) - p2(a);
        // w = w_a (b − x)/h + w_b (x − a)/h
        acc += (w[j] * (b * d1 - d2) + w[j + 1] * (d2 - a * d1)) / h;
    }
    acc
}

/// ∫ x^t w(x) dx for the piecewise-linear interpolant of the samples (x_j, w_j)
/// on an increasing grid in [0, ∞), integrated exactly interval by interval.
///
/// The interpolant of nonnegative samples is itself a nonnegative density, so the
/// values form a genuine moment sequence for every t. The error estimate compares
/// against the interpolant on every other node (always keeping the last) and
/// assumes the O(h²) interpolation error of a smooth density.
pub fn linear_interpolant_moment<F: Scalar>(x: &[F], w: &[F], t: F) -> Estimate<F> {
    assert_eq!(x.len(), w.len());
    assert!(x.len() >= 2, "need at least two nodes");
    let full = linear_moment(x, w, t);
    if x.len() < 3 {
        return Estimate { value: full, error: F::zero() };
    }
    let mut hx: Vec<F> = x.iter().step_by(2).copied().collect();
    let mut hw: Vec<F> = w.iter().step_by(2).copied().collect();
    if x.len() % 2 == 0 {
        hx.push(x[x.len() - 1]);
        hw.push(w[w.len() - 1]);
    }
    let half = linear_moment(&hx, &hw, t);
    Estimate {
        value: full,
        error: (full - half).abs() / lit::<F>(3.0),
    }
}
