//! Closed-form PF-ODE trajectories under (low-rank) Gaussian data.
//!
//! With data `N(mu, Sigma)` and `Sigma = U diag(lambda) U^T` of rank `r`, the
//! VE PF-ODE is linear and solves exactly: along each eigenvector the state
//! coordinate contracts by `s_k(sigma) = sqrt((lambda_k + sigma^2) /
//! (lambda_k + sigma_max^2))`, and the orthogonal complement scales by
//! `sigma / sigma_max`. The state therefore splits into the endpoint chord
//! plus a residual spanned by the eigenvectors, whose per-direction
//! coefficient `phi_k` vanishes at both endpoints. This module is the
//! analytic oracle that the solver and geometry tests integrate against.

use crate::error::{Error, Result};
use crate::oracles::LowRankGaussian;
use crate::scalar::{cast, Scalar};
use crate::vecmath::{axpy_mut, dot, sub};

/// Precomputed exact-solution model for one Gaussian and one terminal noise
/// level.
#[derive(Debug, Clone)]
pub struct GaussianTrajectoryModel<T: Scalar> {
    gaussian: LowRankGaussian<T>,
    sigma_max: T,
    /// `s_k(0) = sqrt(lambda_k / (lambda_k + sigma_max^2))` per eigenpair.
    s0: Vec<T>,
}

impl<T: Scalar> GaussianTrajectoryModel<T> {
    pub fn new(gaussian: LowRankGaussian<T>, sigma_max: T) -> Result<Self> {
        if !(sigma_max > T::zero()) {
            return Err(Error::InvalidRange(format!(
                "sigma_max must be positive, got {sigma_max}"
            )));
        }
        let s0 = gaussian
            .eigvals()
            .iter()
            .map(|&l| (l / (l + sigma_max * sigma_max)).sqrt())
            .collect();
        Ok(GaussianTrajectoryModel {
            gaussian,
            sigma_max,
            s0,
        })
    }

    pub fn gaussian(&self) -> &LowRankGaussian<T> {
        &self.gaussian
    }

    pub fn sigma_max(&self) -> T {
        self.sigma_max
    }

    fn check_sigma(&self, sigma: T) -> Result<()> {
        if sigma < T::zero() || sigma > self.sigma_max {
            return Err(Error::InvalidRange(format!(
                "sigma {} outside [0, {}]",
                sigma, self.sigma_max
            )));
        }
        Ok(())
    }

    /// Exact PF-ODE state at noise level `sigma`, starting from `x_init` at
    /// `sigma_max`.
    pub fn exact_state(&self, x_init: &[T], sigma: T) -> Result<Vec<T>> {
        self.check_sigma(sigma)?;
        if x_init.len() != self.gaussian.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gaussian.dim(),
                got: x_init.len(),
            });
        }
        let w = sub(x_init, self.gaussian.mean());
        let ratio = sigma / self.sigma_max;
        // complement part: mu + ratio * (w - U U^T w)
        let mut out: Vec<T> = self
            .gaussian
            .mean()
            .iter()
            .zip(&w)
            .map(|(&m, &wi)| m + ratio * wi)
            .collect();
        let s2 = sigma * sigma;
        let st2 = self.sigma_max * self.sigma_max;
        for (u, &l) in self.gaussian.eigvecs().iter().zip(self.gaussian.eigvals()) {
            let sk = ((l + s2) / (l + st2)).sqrt();
            let c = (sk - ratio) * dot(u, &w);
            axpy_mut(&mut out, c, u);
        }
        Ok(out)
    }

    /// Residual of the exact state from the chord between the endpoints,
    /// `Delta(sigma) = sum_k phi_k(sigma) (u_k^T (x_init - mu)) u_k`.
    pub fn residual(&self, x_init: &[T], sigma: T) -> Result<Vec<T>> {
        self.check_sigma(sigma)?;
        if x_init.len() != self.gaussian.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gaussian.dim(),
                got: x_init.len(),
            });
        }
        let w = sub(x_init, self.gaussian.mean());
        let mut out = vec![T::zero(); self.gaussian.dim()];
        for (k, u) in self.gaussian.eigvecs().iter().enumerate() {
            let c = self.phi_k(k, sigma)? * dot(u, &w);
            axpy_mut(&mut out, c, u);
        }
        Ok(out)
    }

    /// Squared norm of the residual,
    /// `h(sigma) = sum_k phi_k(sigma)^2 (u_k^T (x_init - mu))^2`.
    pub fn residual_norm_sq(&self, x_init: &[T], sigma: T) -> Result<T> {
        self.check_sigma(sigma)?;
        if x_init.len() != self.gaussian.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.gaussian.dim(),
                got: x_init.len(),
            });
        }
        let w = sub(x_init, self.gaussian.mean());
        let mut h = T::zero();
        for (k, u) in self.gaussian.eigvecs().iter().enumerate() {
            let c = self.phi_k(k, sigma)? * dot(u, &w);
            h += c * c;
        }
        Ok(h)
    }

    /// Residual coefficient of the k-th eigen-direction, using the
    /// precomputed endpoint value `s_k(0)`.
    pub fn phi_k(&self, k: usize, sigma: T) -> Result<T> {
        if k >= self.gaussian.rank() {
            return Err(Error::IndexOutOfRange {
                index: k,
                len: self.gaussian.rank(),
            });
        }
        self.check_sigma(sigma)?;
        let lambda = self.gaussian.eigvals()[k];
        let s = ((lambda + sigma * sigma) / (lambda + self.sigma_max * self.sigma_max)).sqrt();
        Ok(s - self.s0[k] - (sigma / self.sigma_max) * (T::one() - self.s0[k]))
    }
}

/// Residual coefficient
/// `phi(sigma) = s(sigma) - s(0) - (sigma / sigma_max) (1 - s(0))` with
/// `s(sigma) = sqrt((lambda + sigma^2) / (lambda + sigma_max^2))`. Zero at
/// both endpoints and strictly convex in between, hence negative inside.
pub fn phi<T: Scalar>(lambda: T, sigma: T, sigma_max: T) -> Result<T> {
    if !(lambda > T::zero()) {
        return Err(Error::InvalidRange(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if !(sigma_max > T::zero()) || sigma < T::zero() || sigma > sigma_max {
        return Err(Error::InvalidRange(format!(
            "need 0 <= sigma <= sigma_max, got sigma = {sigma}, sigma_max = {sigma_max}"
        )));
    }
    let st2 = sigma_max * sigma_max;
    let s = ((lambda + sigma * sigma) / (lambda + st2)).sqrt();
    let s0 = (lambda / (lambda + st2)).sqrt();
    Ok(s - s0 - (sigma / sigma_max) * (T::one() - s0))
}

/// Derivative of `phi` with respect to `sigma`.
fn phi_prime<T: Scalar>(lambda: T, sigma: T, sigma_max: T) -> T {
    let st2 = sigma_max * sigma_max;
    let s0 = (lambda / (lambda + st2)).sqrt();
    sigma / ((lambda + sigma * sigma).sqrt() * (lambda + st2).sqrt())
        - (T::one() - s0) / sigma_max
}

/// Location and value of the unique interior minimum of `phi`, found by
/// bisection on `phi'` (the derivative changes sign exactly once on
/// `(0, sigma_max)`).
pub fn phi_extremum<T: Scalar>(lambda: T, sigma_max: T) -> Result<(T, T)> {
    if !(lambda > T::zero()) || !(sigma_max > T::zero()) {
        return Err(Error::InvalidRange(format!(
            "need lambda > 0 and sigma_max > 0, got {lambda}, {sigma_max}"
        )));
    }
    let mut lo = T::zero();
    let mut hi = sigma_max;
    let half = cast::<T>(0.5);
    for _ in 0..200 {
        let mid = half * (lo + hi);
        if phi_prime(lambda, mid, sigma_max) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * sigma_max {
            break;
        }
    }
    let sigma_min = half * (lo + hi);
    Ok((sigma_min, phi(lambda, sigma_min, sigma_max)?))
}
