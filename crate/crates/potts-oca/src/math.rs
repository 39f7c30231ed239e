//! Log-domain arithmetic and small numeric utilities.

use crate::error::{Error, Result};

/// Streaming log-sum-exp accumulator using the max-shift trick.
///
/// Maintains `value() = log(sum_i exp(x_i))` for the values added so
/// far without ever exponentiating an unshifted term.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl LogSumExp {
    pub fn new() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn add(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.sum += (x - self.max).exp();
        } else {
            self.sum = self.sum * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self::new()
    }
}

/// log(sum_i exp(x_i)) over a slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let mut acc = LogSumExp::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Advances `digits` to the next base-`k` tuple (little-endian
/// odometer). Returns false after the last tuple wraps back to all
/// zeros, so a do/while loop visits each of the k^len tuples once.
#[inline]
pub(crate) fn next_digits(digits: &mut [u8], k: u8) -> bool {
    for d in digits.iter_mut() {
        *d += 1;
        if *d < k {
            return true;
        }
        *d = 0;
    }
    false
}

const LOG_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

/// Log density of N(mu, sd^2) at x.
#[inline]
pub fn log_normal_pdf(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - LOG_SQRT_2PI
}

/// Outcome of a 1-D maximization over a closed interval.
#[derive(Debug, Clone, Copy)]
pub struct LineMax {
    pub x: f64,
    pub value: f64,
    /// The maximizer landed within tolerance of an interval endpoint.
    pub boundary_hit: bool,
}

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Golden-section maximization of `f` on `[lo, hi]` to absolute
/// tolerance `tol` on the argument. Deterministic; errors if `f`
/// returns a non-finite value.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<LineMax>
where
    F: FnMut(f64) -> f64,
{
    assert!(lo < hi && tol > 0.0);
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { beta: x })
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_GOLDEN * (b - a);
    let mut x2 = a + INV_GOLDEN * (b - a);
    let mut f1 = eval(x1)?;
    let mut f2 = eval(x2)?;
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_GOLDEN * (b - a);
            f2 = eval(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_GOLDEN * (b - a);
            f1 = eval(x1)?;
        }
    }
    let x = 0.5 * (a + b);
    let value = eval(x)?;
    let boundary_hit = x - lo <= tol || hi - x <= tol;
    Ok(LineMax {
        x,
        value,
        boundary_hit,
    })
}
