//! The 1/2-Tsallis regularizer `psi(x) = -sum sqrt(x)` and the Legendre
//! function `f(x) = <x, 1> + psi(x)` built on it.
//!
//! All functions act entrywise. `f` is strictly convex on `(0, inf)` with
//! gradient `1 - 1/(2 sqrt x)`, which maps `(0, inf)` onto `(-inf, 1)`.

/// `psi(x) = -sqrt(x)`.
#[inline]
pub fn psi(x: f64) -> f64 {
    -x.sqrt()
}

/// `psi'(x) = -1 / (2 sqrt x)`.
#[inline]
pub fn psi_grad(x: f64) -> f64 {
    -0.5 / x.sqrt()
}

/// `f(x) = x - sqrt(x)`.
#[inline]
pub fn legendre(x: f64) -> f64 {
    x - x.sqrt()
}

/// `f'(x) = 1 - 1 / (2 sqrt x)`.
#[inline]
pub fn legendre_grad(x: f64) -> f64 {
    1.0 - 0.5 / x.sqrt()
}

/// Inverse of [`legendre_grad`]: the `x > 0` with `f'(x) = y`, for `y < 1`.
#[inline]
pub fn legendre_grad_inv(y: f64) -> f64 {
    let d = 1.0 - y;
    0.25 / (d * d)
}
