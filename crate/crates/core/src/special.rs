//! Normal distribution primitives, generic over [`Scalar`].
//!
//! `erfc` uses the incomplete-gamma series for small arguments and a Lentz
//! continued fraction in the tail, so accuracy is limited only by the scalar
//! type. The normal quantile starts from a rational approximation and is
//! polished with Halley steps against [`norm_cdf`].

use crate::scalar::Scalar;

const MAX_TERMS: usize = 500;
const SERIES_CUTOFF: f64 = 1.0;
const MILLS_CUTOFF: f64 = 5.0;

/// Complementary error function.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x < T::zero() {
        return T::two() - erfc(-x);
    }
    if x < T::lit(SERIES_CUTOFF) {
        T::one() - erf_series(x)
    } else {
        erfc_continued_fraction(x)
    }
}

/// Error function.
pub fn erf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    if x.abs() < T::lit(SERIES_CUTOFF) {
        erf_series(x)
    } else {
        T::one() - erfc(x)
    }
}

// erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (2n+1)!!, all terms positive.
fn erf_series<T: Scalar>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    for n in 1..MAX_TERMS {
        term = term * T::two() * x2 / T::lit((2 * n + 1) as f64);
        sum = sum + term;
        if term.abs() <= sum.abs() * T::epsilon() {
            break;
        }
    }
    T::FRAC_2_SQRT_PI() * exp_neg_sq(x) * sum
}

// erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), x > 0.
fn erfc_continued_fraction<T: Scalar>(x: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = x;
    let mut c = x;
    let mut d = T::zero();
    for n in 1..MAX_TERMS {
        let a = T::lit(n as f64) * T::half();
        d = x + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = x + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    (T::FRAC_2_SQRT_PI() * T::half()) * exp_neg_sq(x) / f
}

// e^{-x^2} without the rounding error of forming x*x: split x = hi + lo
// with hi on a 1/16 grid so hi*hi is exact.
fn exp_neg_sq<T: Scalar>(x: T) -> T {
    let sixteen = T::lit(16.0);
    let hi = (x * sixteen).trunc() / sixteen;
    let lo = x - hi;
    (-(hi * hi)).exp() * (-(lo * (x + hi))).exp()
}

/// Standard normal density.
pub fn norm_pdf<T: Scalar>(z: T) -> T {
    let inv_sqrt_2pi = T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::half();
    inv_sqrt_2pi * exp_half_neg_sq(z)
}

// e^{-z^2/2} with the same splitting as `exp_neg_sq`.
fn exp_half_neg_sq<T: Scalar>(z: T) -> T {
    let sixteen = T::lit(16.0);
    let hi = (z * sixteen).trunc() / sixteen;
    let lo = z - hi;
    (-(hi * hi) * T::half()).exp() * (-(lo * (z + hi)) * T::half()).exp()
}

/// Standard normal CDF.
pub fn norm_cdf<T: Scalar>(z: T) -> T {
    if z < -T::lit(MILLS_CUTOFF) {
        lower_tail_mills(-z)
    } else {
        T::half() * erfc(-z * T::FRAC_1_SQRT_2())
    }
}

// Continued fraction f(t) = t + 1/(t + 2/(t + 3/(t + ...))), so that
// Φ(-t) = φ(t) / f(t) for t > 0.
fn mills_denominator<T: Scalar>(t: T) -> T {
    let tiny = T::min_positive_value() / T::epsilon();
    let mut f = t;
    let mut c = t;
    let mut d = T::zero();
    for n in 1..MAX_TERMS {
        let a = T::lit(n as f64);
        d = t + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = t + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = d.recip();
        let delta = c * d;
        f = f * delta;
        if (delta - T::one()).abs() <= T::epsilon() {
            break;
        }
    }
    f
}

fn lower_tail_mills<T: Scalar>(t: T) -> T {
    T::FRAC_1_SQRT_2() * T::FRAC_2_SQRT_PI() * T::half() * exp_half_neg_sq(t) / mills_denominator(t)
}

/// `ln(1 - norm_cdf(z))`, finite far beyond the range where the survival
/// probability itself underflows.
pub fn log_norm_sf<T: Scalar>(z: T) -> T {
    if z > T::lit(MILLS_CUTOFF) {
        let ln_sqrt_2pi = T::lit(0.918_938_533_204_672_8);
        -(z * z) * T::half() - ln_sqrt_2pi - mills_denominator(z).ln()
    } else {
        norm_sf(z).ln()
    }
}

/// Inverse of [`log_norm_sf`]: the `z` with `ln(1 - norm_cdf(z)) = log_p`,
/// for `log_p <= ln(1/2)`.
pub fn norm_quantile_from_log_sf<T: Scalar>(log_p: T) -> T {
    if log_p.is_nan() || log_p > -T::LN_2() {
        return T::nan();
    }
    if log_p == T::neg_infinity() {
        return T::infinity();
    }
    if log_p > T::min_positive_value().ln() + T::lit(30.0) {
        return -norm_quantile(log_p.exp());
    }
    // Newton on g(z) = log_norm_sf(z) with g'(z) = -f(z).
    let mut z = (-T::two() * log_p).sqrt();
    for _ in 0..50 {
        let step = (log_norm_sf(z) - log_p) / mills_denominator(z);
        z = z + step;
        if step.abs() <= T::epsilon() * z {
            break;
        }
    }
    z
}

/// Standard normal survival function `1 - norm_cdf(z)`, accurate in the upper tail.
pub fn norm_sf<T: Scalar>(z: T) -> T {
    norm_cdf(-z)
}

/// Standard normal quantile. Returns `-inf` at 0, `+inf` at 1 and NaN outside `[0, 1]`.
pub fn norm_quantile<T: Scalar>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    if p == T::half() {
        return T::zero();
    }
    if p > T::half() {
        return -lower_quantile(T::one() - p);
    }
    lower_quantile(p)
}

// p in (0, 0.5)
fn lower_quantile<T: Scalar>(p: T) -> T {
    // Rational starting point, absolute error below 4.5e-4.
    let t = (-T::two() * p.ln()).sqrt();
    let num = T::lit(2.515517) + t * (T::lit(0.802853) + t * T::lit(0.010328));
    let den = T::one() + t * (T::lit(1.432788) + t * (T::lit(0.189269) + t * T::lit(0.001308)));
    let mut z = -(t - num / den);
    let sqrt_2pi = T::one() / (T::FRAC_1_SQRT_2() * (T::FRAC_2_SQRT_PI() * T::half()));
    for _ in 0..8 {
        let e = norm_cdf(z) - p;
        let u = e * sqrt_2pi * (z * z * T::half()).exp();
        let step = u / (T::one() + z * u * T::half());
        z = z - step;
        if step.abs() <= T::epsilon() * z.abs().max(T::one()) {
            break;
        }
    }
    z
}
