//! Adaptive Gauss-Kronrod quadrature used for all continuum radial
//! integrals (ground-state norms, closed-form oracles). Grid-based field
//! quadratures live with the grid, not here.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// 15-point Kronrod abscissae on [-1, 1] (non-negative half).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];

/// Embedded 7-point Gauss weights; the Gauss nodes are XGK[1], XGK[3], ...
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error (sum of per-interval Gauss/Kronrod gaps).
    pub error: f64,
    pub evaluations: usize,
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&x, &wk)) in XGK.iter().zip(WGK.iter()).enumerate() {
        let pair = if x == 0.0 {
            f(center)
        } else {
            f(center - half * x) + f(center + half * x)
        };
        kronrod += wk * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

struct Interval {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Interval {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Interval {}
impl PartialOrd for Interval {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Interval {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.partial_cmp(&other.error).unwrap_or(Ordering::Equal)
    }
}

const MAX_INTERVALS: usize = 4096;

/// Adaptive integration of `f` over the finite interval [a, b] to absolute
/// tolerance `tol`. Worst intervals are bisected first.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<QuadResult> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("quadrature tolerance must be positive, got {tol}")));
    }
    if !(b > a) {
        return Err(Error::Config(format!("empty quadrature interval [{a}, {b}]")));
    }
    let mut heap = BinaryHeap::new();
    let (value, error) = gauss_kronrod(&f, a, b);
    let mut evaluations = 15;
    heap.push(Interval { a, b, value, error });
    let mut total_error: f64 = error;

    while total_error > tol && heap.len() < MAX_INTERVALS {
        let worst = heap.pop().expect("heap never empty inside loop");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution; keep it and give up on
            // shrinking the estimate further.
            heap.push(worst);
            break;
        }
        total_error -= worst.error;
        let (v1, e1) = gauss_kronrod(&f, worst.a, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, worst.b);
        evaluations += 30;
        total_error += e1 + e2;
        heap.push(Interval { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Interval { a: mid, b: worst.b, value: v2, error: e2 });
    }

    let value = heap.iter().map(|iv| iv.value).sum();
    if total_error > tol && heap.len() >= MAX_INTERVALS {
        return Err(Error::Numerical(format!(
            "quadrature did not converge: error estimate {total_error:.3e} > tolerance {tol:.3e} \
             after {evaluations} evaluations on {} intervals",
            heap.len()
        )));
    }
    Ok(QuadResult { value, error: total_error, evaluations })
}

/// Integrate `f` over [0, infinity) by compactifying with r = t/(1-t).
/// The tail is mapped exactly, so no truncation-radius error enters.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<QuadResult> {
    integrate(
        move |t| {
            let one_minus = 1.0 - t;
            if one_minus <= 0.0 {
                return 0.0;
            }
            let r = t / one_minus;
            let jacobian = 1.0 / (one_minus * one_minus);
            let v = f(r) * jacobian;
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        tol,
    )
}
