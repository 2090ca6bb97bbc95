//! Laws of the running maximum `S_t = sup_{s<=t} Y_s` of `Y_t = -mu t + sigma B_t`
//! and of the reflected process `X^x_t = max(x, S_t) - Y_t`.
//!
//! Everything here is a pure function of its arguments. Closed forms follow
//! from the reflection principle for drifted Brownian motion:
//!
//! ```text
//! P(S_t >= m, Y_t <= y) = exp(-lambda m) Phi((y - 2m + mu t) / (sigma sqrt t)),   y <= m, m >= 0
//! ```
//!
//! with `lambda = 2 mu / sigma^2`.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::quad::{integrate, QuadOptions};
use crate::scalar::{norm_cdf, norm_pdf, Scalar};

/// Gaussian envelope below which z-integrals are truncated.
const ENVELOPE_CUTOFF_SDS: f64 = 7.5;

fn check_non_negative<T: Scalar>(name: &str, v: T) -> Result<()> {
    if v >= T::zero() && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "{name} = {v} must be finite and >= 0"
        )))
    }
}

/// `exp(arg) * factor`, reporting overflow instead of producing inf/NaN.
fn scaled<T: Scalar>(arg: T, factor: T, scale: T) -> Result<T> {
    if factor == T::zero() {
        return Ok(T::zero());
    }
    let v = (arg + factor.abs().ln()).exp() * factor.signum();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Overflow {
            scale: scale.to_f64_lossy(),
        })
    }
}

/// `P(S_t >= z)` by the two-term Gaussian closed form.
pub fn running_max_tail<T: Scalar>(t: T, z: T, p: &ModelParams<T>) -> Result<T> {
    check_non_negative("t", t)?;
    check_non_negative("z", z)?;
    if z == T::zero() {
        return Ok(T::one());
    }
    if t == T::zero() {
        return Ok(T::zero());
    }
    let st = p.sigma() * t.sqrt();
    let mt = p.mu() * t;
    let direct = norm_cdf((-z - mt) / st);
    let reflected = scaled(-p.lambda() * z, norm_cdf((mt - z) / st), p.lambda() * st)?;
    Ok((direct + reflected).min(T::one()).max(T::zero()))
}

/// `P(S_t >= z)` as the first-passage-time integral
/// `int_0^t z / (sigma sqrt(2 pi s^3)) exp(-(z + mu s)^2 / (2 sigma^2 s)) ds`.
///
/// Independent of the reflection-principle closed form; used to cross-check it.
pub fn running_max_tail_by_quadrature<T: Scalar>(t: T, z: T, p: &ModelParams<T>) -> Result<T> {
    check_non_negative("t", t)?;
    check_non_negative("z", z)?;
    if z == T::zero() {
        return Ok(T::one());
    }
    if t == T::zero() {
        return Ok(T::zero());
    }
    let sig = p.sigma();
    let two_pi = T::c(2.0) * T::PI();
    let density = |s: T| {
        if s <= T::zero() {
            return T::zero();
        }
        let e = z + p.mu() * s;
        z / (sig * (two_pi * s * s * s).sqrt()) * (-(e * e) / (T::c(2.0) * sig * sig * s)).exp()
    };
    let opts = QuadOptions {
        abs_tol: 1e-12,
        rel_tol: 1e-12,
        max_intervals: 2000,
    };
    Ok(integrate(density, T::zero(), t, opts).value)
}

/// Density of `S_t` at `z > 0`. The law of `S_t` has no atom at 0 for `t > 0`
/// (see [`running_max_atom`]).
pub fn running_max_density<T: Scalar>(t: T, z: T, p: &ModelParams<T>) -> Result<T> {
    if !(t > T::zero()) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "t = {t} must be > 0 for the density"
        )));
    }
    check_non_negative("z", z)?;
    let st = p.sigma() * t.sqrt();
    let mt = p.mu() * t;
    let gauss = T::c(2.0) * norm_pdf((z + mt) / st) / st;
    let reflected = scaled(
        -p.lambda() * z,
        p.lambda() * norm_cdf((mt - z) / st),
        p.lambda() * st,
    )?;
    Ok((gauss + reflected).max(T::zero()))
}

/// Probability mass of `S_t` at zero, `1 - P(S_t > 0)`.
pub fn running_max_atom<T: Scalar>(t: T, p: &ModelParams<T>) -> Result<T> {
    check_non_negative("t", t)?;
    if t == T::zero() {
        return Ok(T::one());
    }
    // P(S_t >= z) is continuous at z = 0+ and equals 1 there.
    let eps = T::epsilon() * p.sigma() * t.sqrt();
    Ok((T::one() - running_max_tail(t, eps, p)?).max(T::zero()))
}

/// `P(S_t <= x, Y_t <= y)` for `y <= x`.
fn max_and_end_below<T: Scalar>(t: T, x: T, y: T, p: &ModelParams<T>) -> Result<T> {
    let st = p.sigma() * t.sqrt();
    let mt = p.mu() * t;
    let end_below = norm_cdf((y + mt) / st);
    let crossed = scaled(
        -p.lambda() * x,
        norm_cdf((y - T::c(2.0) * x + mt) / st),
        p.lambda() * st,
    )?;
    Ok((end_below - crossed).max(T::zero()))
}

/// `E[exp(lambda (max(x, S_t) - x))]`.
///
/// Splits on `{S_t <= x}` and integrates `exp(lambda (m - x))` against the
/// density of `S_t` in closed form:
/// `P(S_t <= x) + exp(-lambda x) [2 Phi(-d) + lambda sigma sqrt(t) (phi(d) - d Phi(-d))]`,
/// `d = (x - mu t) / (sigma sqrt t)`.
pub fn exp_max_moment<T: Scalar>(t: T, x: T, p: &ModelParams<T>) -> Result<T> {
    weighted_reflected_survival(t, x, T::zero(), p)
}

/// Same quantity as [`exp_max_moment`] evaluated by adaptive quadrature of
/// `exp(lambda (z - x))` against [`running_max_density`] on `(x, z*)`.
pub fn exp_max_moment_by_quadrature<T: Scalar>(t: T, x: T, p: &ModelParams<T>) -> Result<T> {
    check_non_negative("t", t)?;
    check_non_negative("x", x)?;
    if t == T::zero() {
        return Ok(T::one());
    }
    let st = p.sigma() * t.sqrt();
    let lam = p.lambda();
    let below = T::one() - running_max_tail(t, x, p)?;
    // exp(lambda z) * density(z) is Gaussian around mu t (see the closed form).
    let z_hi = x.max(p.mu() * t + lam.abs() * st * st + T::c(2.0 * ENVELOPE_CUTOFF_SDS) * st);
    let mut failed = None;
    let integrand = |z: T| match running_max_density(t, z, p) {
        Ok(d) => {
            let v = (lam * (z - x)).exp() * d;
            if !v.is_finite() {
                failed = Some(Error::Overflow {
                    scale: (lam * st).to_f64_lossy(),
                });
            }
            v
        }
        Err(e) => {
            failed = Some(e);
            T::zero()
        }
    };
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-12,
        max_intervals: 2000,
    };
    let r = integrate(integrand, x, z_hi, opts);
    if let Some(e) = failed {
        return Err(e);
    }
    Ok(below + r.value)
}

fn check_survival_args<T: Scalar>(s: T, x: T, c: T) -> Result<()> {
    check_non_negative("s", s)?;
    check_non_negative("x", x)?;
    check_non_negative("c", c)
}

/// `P(X^x_s >= c)` with `X^x_s = max(x, S_s) - Y_s`.
///
/// Splits into `{S_s <= x, x - Y_s >= c}` (closed form) and
/// `{S_s > x, S_s - Y_s >= c}`, the latter integrating the joint density of
/// `(S_s, Y_s)` over `y <= m - c` analytically and over `m > x` by adaptive
/// Gauss–Kronrod.
pub fn reflected_survival<T: Scalar>(s: T, x: T, c: T, p: &ModelParams<T>) -> Result<T> {
    check_survival_args(s, x, c)?;
    if c == T::zero() {
        return Ok(T::one());
    }
    if s == T::zero() {
        return Ok(if x >= c { T::one() } else { T::zero() });
    }
    let st = p.sigma() * s.sqrt();
    let lam = p.lambda();
    let ms = p.mu() * s;
    let below = max_and_end_below(s, x, x - c, p)?;
    // -d/dm P(S >= m, Y <= y), evaluated at y = m - c.
    let two_over_st = T::c(2.0) / st;
    let integrand = |m: T| {
        let a = (ms - m - c) / st;
        (-lam * m).exp() * (lam * norm_cdf(a) + two_over_st * norm_pdf(a))
    };
    let m_hi = x.max(ms - c + lam.abs() * st * st + T::c(ENVELOPE_CUTOFF_SDS + 1.5) * st);
    let opts = QuadOptions {
        abs_tol: 1e-10,
        rel_tol: 1e-12,
        max_intervals: 1000,
    };
    let above = if m_hi > x {
        integrate(integrand, x, m_hi, opts).value
    } else {
        T::zero()
    };
    if !above.is_finite() {
        return Err(Error::Overflow {
            scale: (lam * st).to_f64_lossy(),
        });
    }
    Ok((below + above).min(T::one()).max(T::zero()))
}

/// `E[exp(lambda (max(x, S_s) - x)) 1{X^x_s >= c}]`: the survival probability
/// weighted by the creation factor `exp(lambda L^0_s)`.
///
/// Closed form: with `a = (mu s - x - c) / (sigma sqrt s)`,
/// `P(S_s <= x, Y_s <= x - c) + exp(-lambda x) [lambda sigma sqrt(s) (a Phi(a) + phi(a)) + 2 Phi(a)]`.
pub fn weighted_reflected_survival<T: Scalar>(s: T, x: T, c: T, p: &ModelParams<T>) -> Result<T> {
    check_survival_args(s, x, c)?;
    if s == T::zero() {
        return Ok(if x >= c { T::one() } else { T::zero() });
    }
    let st = p.sigma() * s.sqrt();
    let lam = p.lambda();
    let a = (p.mu() * s - x - c) / st;
    let below = max_and_end_below(s, x, x - c, p)?;
    let cdf = norm_cdf(a);
    let bracket = lam * st * (a * cdf + norm_pdf(a)) + T::c(2.0) * cdf;
    let above = scaled(-lam * x, bracket, lam * st)?;
    Ok((below + above).max(T::zero()))
}

/// [`weighted_reflected_survival`] by Gauss–Kronrod over the maximum level,
/// kept as a second route for cross-checks.
pub fn weighted_reflected_survival_by_quadrature<T: Scalar>(
    s: T,
    x: T,
    c: T,
    p: &ModelParams<T>,
) -> Result<T> {
    check_survival_args(s, x, c)?;
    if s == T::zero() {
        return Ok(if x >= c { T::one() } else { T::zero() });
    }
    let st = p.sigma() * s.sqrt();
    let lam = p.lambda();
    let ms = p.mu() * s;
    let below = max_and_end_below(s, x, x - c, p)?;
    let two_over_st = T::c(2.0) / st;
    let integrand = |m: T| {
        let a = (ms - m - c) / st;
        // exp(lambda (m - x)) * exp(-lambda m) [...]
        (-lam * x).exp() * (lam * norm_cdf(a) + two_over_st * norm_pdf(a))
    };
    let m_hi = x.max(ms - c + T::c(ENVELOPE_CUTOFF_SDS + 1.5) * st);
    let opts = QuadOptions {
        abs_tol: 1e-11,
        rel_tol: 1e-12,
        max_intervals: 1000,
    };
    let above = if m_hi > x {
        integrate(integrand, x, m_hi, opts).value
    } else {
        T::zero()
    };
    Ok(below + above)
}
