//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Intervals are bisected in order of their error estimate until the total
//! estimated error falls below `max(abs_tol, rel_tol * |value|)`. Semi-infinite
//! ranges use the maps `x = a + t/(1-t)` and `x = b - t/(1-t)` on `t ∈ [0, 1)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_225,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Stopping rule for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 0.0,
            rel: 1e-9,
            max_intervals: 4000,
        }
    }
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            ..Self::default()
        }
    }
}

/// Value and error estimate of a definite integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

impl Estimate {
    const ZERO: Self = Self {
        value: 0.0,
        error: 0.0,
        intervals: 0,
    };

    fn add(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            error: self.error + other.error,
            intervals: self.intervals + other.intervals,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    (value, error)
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!(
            "finite limits required, got [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(Estimate::ZERO);
    }
    let (value, error) = gauss_kronrod(&f, a, b);
    if !value.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite integrand on [{a}, {b}] (estimate {value})"
        )));
    }
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;

    loop {
        let target = tol.abs.max(tol.rel * total.abs());
        if total_err <= target {
            break;
        }
        if heap.len() >= tol.max_intervals {
            return Err(Error::Numerical(format!(
                "quadrature on [{a}, {b}] did not converge: value {total:e}, \
                 error estimate {total_err:e}, target {target:e}, {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval exhausted at machine resolution; accept its estimate.
            heap.push(Segment {
                error: 0.0,
                ..worst
            });
            total_err -= worst.error;
            continue;
        }
        let (v1, e1) = gauss_kronrod(&f, worst.a, mid);
        let (v2, e2) = gauss_kronrod(&f, mid, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite integrand near [{}, {}]",
                worst.a, worst.b
            )));
        }
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }

    // Re-sum to shed the drift of the running totals.
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    Ok(Estimate {
        value,
        error,
        intervals: heap.len(),
    })
}

/// Integrates `f` over `[a, ∞)`.
pub fn integrate_upper<F: Fn(f64) -> f64>(f: F, a: f64, tol: Tolerance) -> Result<Estimate> {
    integrate(
        |t| {
            let u = 1.0 - t;
            let x = a + t / u;
            if x.is_infinite() {
                0.0
            } else {
                f(x) / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integrates `f` over `(-∞, b]`.
pub fn integrate_lower<F: Fn(f64) -> f64>(f: F, b: f64, tol: Tolerance) -> Result<Estimate> {
    integrate(
        |t| {
            let u = 1.0 - t;
            let x = b - t / u;
            if x.is_infinite() {
                0.0
            } else {
                f(x) / (u * u)
            }
        },
        0.0,
        1.0,
        tol,
    )
}

/// Integrates over `[lo, hi]`, either end possibly infinite, splitting the
/// range at every breakpoint that falls strictly inside it.
pub fn integrate_split<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Estimate> {
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::Domain("NaN integration limit".into()));
    }
    if lo >= hi {
        return Ok(Estimate::ZERO);
    }
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&p| p > lo && p < hi && p.is_finite())
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // Each piece gets the full relative tolerance; pieces are nonnegative in
    // every caller, so the sum inherits it.
    let mut knots = Vec::with_capacity(cuts.len() + 2);
    knots.push(lo);
    knots.extend(cuts);
    knots.push(hi);

    let mut total = Estimate::ZERO;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let piece = match (a.is_infinite(), b.is_infinite()) {
            (false, false) => integrate(&f, a, b, tol)?,
            (false, true) => integrate_upper(&f, a, tol)?,
            (true, false) => integrate_lower(&f, b, tol)?,
            (true, true) => integrate_lower(&f, 0.0, tol)?.add(integrate_upper(&f, 0.0, tol)?),
        };
        total = total.add(piece);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-14);
    }

    #[test]
    fn peaked_integrand() {
        let r = integrate(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, Tolerance::default()).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert!((r.value - exact).abs() < 1e-9 * exact);
    }

    #[test]
    fn semi_infinite_ranges() {
        let r = integrate_upper(|x| (-x).exp(), 0.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let r =
            integrate_upper(|x| 1.0 / ((1.0 + x) * (1.0 + x)), 0.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
        let r = integrate_lower(|x| x.exp(), 0.0, Tolerance::default()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn split_over_whole_line() {
        let gauss = |x: f64| (-0.5 * x * x).exp();
        let r = integrate_split(
            gauss,
            f64::NEG_INFINITY,
            f64::INFINITY,
            &[-3.0, 0.0, 3.0],
            Tolerance::default(),
        )
        .unwrap();
        let exact = (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - exact).abs() < 1e-12);
    }

    #[test]
    fn empty_and_reversed_ranges() {
        let r = integrate_split(|_| 1.0, 2.0, 1.0, &[], Tolerance::default()).unwrap();
        assert_eq!(r.value, 0.0);
        let r = integrate(|_| 1.0, 1.0, 1.0, Tolerance::default()).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance {
            abs: 0.0,
            rel: 1e-15,
            max_intervals: 3,
        };
        let err = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, tol).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }
}
