//! Scalar special functions and log-space accumulation helpers.
//!
//! Everything here is `f64` and branch-guarded near the removable
//! singularities (`tanh(x)/x`, `artanh(x)/x`, `ln(sinh(x)/x)`).

use std::f64::consts::PI;

pub use libm::{erf, erfc};
pub use statrs::function::gamma::ln_gamma;

/// Largest magnitude fed to `artanh`.
pub const ARTANH_CLAMP: f64 = 1.0 - 1e-15;

pub fn artanh_clamped(x: f64) -> f64 {
    x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP).atanh()
}

/// `tanh(x) / x`, equal to 1 at 0.
pub fn tanhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 3.0 + 2.0 * x2 * x2 / 15.0
    } else {
        x.tanh() / x
    }
}

pub fn tanhc_deriv(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        x * (-2.0 / 3.0 + x2 * (8.0 / 15.0 - x2 * 102.0 / 315.0))
    } else {
        let t = x.tanh();
        (x * (1.0 - t * t) - t) / (x * x)
    }
}

/// `artanh(x) / x` with the input clamped inside (-1, 1).
pub fn artanhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 3.0 + x2 * x2 / 5.0
    } else {
        let xc = x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP);
        xc.atanh() / x
    }
}

pub fn artanhc_deriv(x: f64) -> f64 {
    if x.abs() < 1e-2 {
        let x2 = x * x;
        x * (2.0 / 3.0 + x2 * (4.0 / 5.0 + x2 * 6.0 / 7.0))
    } else {
        let xc = x.clamp(-ARTANH_CLAMP, ARTANH_CLAMP);
        (x / (1.0 - xc * xc) - xc.atanh()) / (x * x)
    }
}

/// `ln(sinh(x) / x)`, even in `x`.
pub fn log_sinhc(x: f64) -> f64 {
    let x = x.abs();
    if x < 1e-2 {
        let x2 = x * x;
        x2 * (1.0 / 6.0 - x2 * (1.0 / 180.0 - x2 * (1.0 / 2835.0 - x2 / 37800.0)))
    } else if x > 20.0 {
        x - (2.0 * x).ln() + (-(-2.0 * x).exp()).ln_1p()
    } else {
        (x.sinh() / x).ln()
    }
}

/// Derivative of [`log_sinhc`]: `coth(x) - 1/x`.
pub fn log_sinhc_deriv(x: f64) -> f64 {
    let s = x.signum();
    let x = x.abs();
    let d = if x < 1e-2 {
        let x2 = x * x;
        x * (1.0 / 3.0 - x2 * (1.0 / 45.0 - x2 * 2.0 / 945.0))
    } else {
        1.0 / x.tanh() - 1.0 / x
    };
    s * d
}

/// `ln(sinh(x))` for `x > 0`.
pub fn log_sinh(x: f64) -> f64 {
    if x > 20.0 {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    } else {
        x.ln() + log_sinhc(x)
    }
}

/// `ln(erfc(x))` without underflow for large positive `x`.
pub fn log_erfc(x: f64) -> f64 {
    if x < 25.0 {
        erfc(x).ln()
    } else {
        // Asymptotic series of the scaled complementary error function.
        let inv2 = 1.0 / (x * x);
        let series = 1.0 - 0.5 * inv2 + 0.75 * inv2 * inv2 - 1.875 * inv2 * inv2 * inv2;
        -x * x - (x * PI.sqrt()).ln() + series.ln()
    }
}

/// `ln(erf(hi) - erf(lo))` for `hi > lo`.
pub fn log_erf_diff(lo: f64, hi: f64) -> f64 {
    debug_assert!(hi >= lo);
    if lo >= 0.0 {
        let a = log_erfc(lo);
        let b = log_erfc(hi);
        a + log1mexp(b - a)
    } else if hi <= 0.0 {
        let a = log_erfc(-hi);
        let b = log_erfc(-lo);
        a + log1mexp(b - a)
    } else {
        (erf(hi) - erf(lo)).ln()
    }
}

/// `ln(1 - exp(x))` for `x <= 0`.
pub fn log1mexp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn ln_binomial(n: u64, k: u64) -> f64 {
    statrs::function::factorial::ln_binomial(n, k)
}

/// Log surface area of the unit sphere `S^{d-1}` in `R^d`.
pub fn log_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    std::f64::consts::LN_2 + h * PI.ln() - ln_gamma(h)
}

/// Outcome of a signed log-space sum that cancelled too far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cancellation {
    /// `|sum| / max |term|`.
    pub ratio: f64,
}

/// Accumulates `Σ sign_i · exp(log_i)` with separate positive and negative
/// log-sum-exp accumulators.
#[derive(Debug, Clone)]
pub struct SignedLogSum {
    pos: Vec<f64>,
    neg: Vec<f64>,
}

/// Relative size below which a signed sum is reported as cancelled.
pub const CANCELLATION_LIMIT: f64 = 1e-12;

impl SignedLogSum {
    pub fn new() -> Self {
        Self { pos: Vec::new(), neg: Vec::new() }
    }

    pub fn push(&mut self, positive: bool, log_mag: f64) {
        if log_mag == f64::NEG_INFINITY {
            return;
        }
        if positive {
            self.pos.push(log_mag);
        } else {
            self.neg.push(log_mag);
        }
    }

    /// Adds a plain real value.
    pub fn push_value(&mut self, v: f64) {
        if v != 0.0 {
            self.push(v > 0.0, v.abs().ln());
        }
    }

    fn max_term(&self) -> f64 {
        self.pos.iter().chain(self.neg.iter()).copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns `(is_positive, ln|sum|)`; an empty or all-zero sum gives `(true, -inf)`.
    pub fn finish(&self) -> Result<(bool, f64), Cancellation> {
        let p = log_sum_exp(&self.pos);
        let n = log_sum_exp(&self.neg);
        let max = self.max_term();
        if max == f64::NEG_INFINITY {
            return Ok((true, f64::NEG_INFINITY));
        }
        let (positive, log_abs) = if p >= n {
            (true, if n == f64::NEG_INFINITY { p } else { p + log1mexp(n - p) })
        } else {
            (false, if p == f64::NEG_INFINITY { n } else { n + log1mexp(p - n) })
        };
        let ratio = (log_abs - max).exp();
        if !(ratio >= CANCELLATION_LIMIT) {
            return Err(Cancellation { ratio });
        }
        Ok((positive, log_abs))
    }

    /// Finishes and converts to a real value.
    pub fn value(&self) -> Result<f64, Cancellation> {
        let (pos, l) = self.finish()?;
        Ok(if pos { l.exp() } else { -l.exp() })
    }
}

impl Default for SignedLogSum {
    fn default() -> Self {
        Self::new()
    }
}
