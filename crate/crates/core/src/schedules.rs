//! Noise processes and sampling time schedules.
//!
//! A linear diffusion is described by the pair `(s(t), sigma(t))`: the state
//! scaling and the noise level of the transition kernel. Sampling runs over a
//! strictly decreasing sequence of times (largest noise first), which this
//! module constructs with the standard polynomial, logSNR, and VP-uniform
//! spacings.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Scale/noise pair of a linear diffusion process on `[0, T]`.
///
/// `sigma` is strictly increasing with `sigma(0) >= 0`, `s` is positive, and
/// the signal-to-noise ratio `1/sigma(t)^2` is non-increasing in `t`.
#[derive(Clone)]
pub enum NoiseProcess<T: Scalar> {
    /// Variance-exploding process: `s = 1`, `sigma(t) = t`.
    Ve { t_max: T },
    /// Variance-preserving process with linear beta schedule:
    /// `sigma(t) = sqrt(exp(beta_d t^2 / 2 + beta_min t) - 1)`,
    /// `s(t) = 1 / sqrt(1 + sigma(t)^2)`.
    Vp { beta_d: T, beta_min: T, t_max: T },
    /// Flow-matching parameterization: `s(t) = 1 - t/T`, `sigma(t) = t/(T-t)`.
    /// `sigma` diverges at `t = T`, so sampling grids must stay strictly
    /// inside `[0, T)`.
    FlowMatching { t_total: T, t_max: T },
    /// User-supplied pair of functions.
    Custom {
        name: String,
        scale: Arc<dyn Fn(T) -> T + Send + Sync>,
        sigma: Arc<dyn Fn(T) -> T + Send + Sync>,
        t_max: T,
    },
}

impl<T: Scalar> std::fmt::Debug for NoiseProcess<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NoiseProcess::Ve { t_max } => write!(f, "Ve {{ t_max: {t_max} }}"),
            NoiseProcess::Vp {
                beta_d,
                beta_min,
                t_max,
            } => write!(f, "Vp {{ beta_d: {beta_d}, beta_min: {beta_min}, t_max: {t_max} }}"),
            NoiseProcess::FlowMatching { t_total, t_max } => {
                write!(f, "FlowMatching {{ t_total: {t_total}, t_max: {t_max} }}")
            }
            NoiseProcess::Custom { name, t_max, .. } => {
                write!(f, "Custom {{ name: {name:?}, t_max: {t_max} }}")
            }
        }
    }
}

impl<T: Scalar> NoiseProcess<T> {
    /// VE process with the standard terminal noise level 80.
    pub fn ve_default() -> Self {
        NoiseProcess::Ve { t_max: cast(80.0) }
    }

    /// VP process with the conventional linear-beta parameters
    /// (`beta_d = 19.9`, `beta_min = 0.1`) on `t in [0, 1]`.
    pub fn vp_default() -> Self {
        NoiseProcess::Vp {
            beta_d: cast(19.9),
            beta_min: cast(0.1),
            t_max: T::one(),
        }
    }

    /// State scaling `s(t)`.
    pub fn scale(&self, t: T) -> T {
        match self {
            NoiseProcess::Ve { .. } => T::one(),
            NoiseProcess::Vp {
                beta_d, beta_min, ..
            } => {
                let half = cast::<T>(0.5);
                (-(half * *beta_d * t * t + *beta_min * t) * half).exp()
            }
            NoiseProcess::FlowMatching { t_total, .. } => T::one() - t / *t_total,
            NoiseProcess::Custom { scale, .. } => scale(t),
        }
    }

    /// Noise level `sigma(t)` of the transition kernel.
    pub fn sigma(&self, t: T) -> T {
        match self {
            NoiseProcess::Ve { .. } => t,
            NoiseProcess::Vp {
                beta_d, beta_min, ..
            } => {
                let half = cast::<T>(0.5);
                ((half * *beta_d * t * t + *beta_min * t).exp() - T::one()).sqrt()
            }
            NoiseProcess::FlowMatching { t_total, .. } => t / (*t_total - t),
            NoiseProcess::Custom { sigma, .. } => sigma(t),
        }
    }

    /// Signal-to-noise ratio `1/sigma(t)^2`.
    pub fn snr(&self, t: T) -> T {
        let s = self.sigma(t);
        T::one() / (s * s)
    }

    /// Terminal sampling time.
    pub fn t_max(&self) -> T {
        match self {
            NoiseProcess::Ve { t_max }
            | NoiseProcess::Vp { t_max, .. }
            | NoiseProcess::FlowMatching { t_max, .. }
            | NoiseProcess::Custom { t_max, .. } => *t_max,
        }
    }

    /// Checks that a sampling grid lies inside the process domain.
    pub fn validate_grid(&self, grid: &TimeGrid<T>) -> Result<()> {
        if let NoiseProcess::FlowMatching { t_total, .. } = self {
            if grid.t_max() >= *t_total {
                return Err(Error::InvalidRange(format!(
                    "flow-matching sigma diverges at t = {}, grid starts at {}",
                    t_total,
                    grid.t_max()
                )));
            }
        }
        if grid.t_min() < T::zero() {
            return Err(Error::InvalidRange(format!(
                "grid time {} below zero",
                grid.t_min()
            )));
        }
        Ok(())
    }
}

/// Strictly decreasing sequence of sampling times `t_N > ... > t_0 >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
pub struct TimeGrid<T: Scalar> {
    times: Vec<T>,
}

impl<T: Scalar> TryFrom<Vec<T>> for TimeGrid<T> {
    type Error = Error;
    fn try_from(times: Vec<T>) -> Result<Self> {
        TimeGrid::new(times)
    }
}

impl<T: Scalar> From<TimeGrid<T>> for Vec<T> {
    fn from(g: TimeGrid<T>) -> Vec<T> {
        g.times
    }
}

impl<T: Scalar> TimeGrid<T> {
    /// Wraps an explicit descending sequence, validating order and length.
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidRange(format!(
                "time grid needs at least 2 entries, got {}",
                times.len()
            )));
        }
        for w in times.windows(2) {
            if !(w[0] > w[1]) {
                return Err(Error::NotDecreasing(format!("{} !> {}", w[0], w[1])));
            }
        }
        if times[times.len() - 1] < T::zero() {
            return Err(Error::InvalidRange("negative sampling time".into()));
        }
        Ok(TimeGrid { times })
    }

    /// Times in sampling order (descending).
    pub fn times(&self) -> &[T] {
        &self.times
    }

    /// Number of solver steps (`len - 1`).
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// Largest (initial) time.
    pub fn t_max(&self) -> T {
        self.times[0]
    }

    /// Smallest (final) time.
    pub fn t_min(&self) -> T {
        self.times[self.times.len() - 1]
    }
}

fn check_range<T: Scalar>(t0: T, t_max: T) -> Result<()> {
    if !(t0 > T::zero()) || !(t0 < t_max) {
        return Err(Error::InvalidRange(format!(
            "need 0 < t0 < tN, got t0 = {t0}, tN = {t_max}"
        )));
    }
    Ok(())
}

/// Polynomial spacing `t_n = (t0^(1/rho) + (n/N)(tN^(1/rho) - t0^(1/rho)))^rho`,
/// emitted in descending order with exact endpoints.
pub fn polynomial_grid<T: Scalar>(n: usize, t0: T, t_max: T, rho: T) -> Result<TimeGrid<T>> {
    check_range(t0, t_max)?;
    if n < 1 {
        return Err(Error::InvalidRange("need at least one step".into()));
    }
    if !(rho > T::zero()) {
        return Err(Error::InvalidRange(format!("rho must be positive, got {rho}")));
    }
    let inv = T::one() / rho;
    let a = t0.powf(inv);
    let b = t_max.powf(inv);
    let nn = cast::<T>(n as f64);
    let mut times = Vec::with_capacity(n + 1);
    for k in (0..=n).rev() {
        let frac = cast::<T>(k as f64) / nn;
        times.push((a + frac * (b - a)).powf(rho));
    }
    // endpoints exactly as requested
    times[0] = t_max;
    times[n] = t0;
    TimeGrid::new(times)
}

/// Geometric spacing: uniform steps in `lambda = -log t` between the
/// endpoints, so consecutive ratios are constant.
pub fn logsnr_grid<T: Scalar>(n: usize, t0: T, t_max: T) -> Result<TimeGrid<T>> {
    check_range(t0, t_max)?;
    if n < 1 {
        return Err(Error::InvalidRange("need at least one step".into()));
    }
    let l_min = -t_max.ln();
    let l_max = -t0.ln();
    let nn = cast::<T>(n as f64);
    let mut times = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let lam = l_min + (cast::<T>(k as f64) / nn) * (l_max - l_min);
        times.push((-lam).exp());
    }
    times[0] = t_max;
    times[n] = t0;
    TimeGrid::new(times)
}

/// VP-uniform spacing rewritten onto the `[t0, tN]` noise range: `tau_n`
/// uniform in `[eps_s, 1]` mapped through
/// `t = sqrt(exp(beta_d tau^2 / 2 + beta_min tau) - 1)` with the beta
/// coefficients chosen so the endpoints land exactly on `t0` and `tN`.
pub fn vp_uniform_grid<T: Scalar>(n: usize, t0: T, t_max: T, eps_s: T) -> Result<TimeGrid<T>> {
    check_range(t0, t_max)?;
    if n < 1 {
        return Err(Error::InvalidRange("need at least one step".into()));
    }
    if !(eps_s > T::zero()) || !(eps_s < T::one()) {
        return Err(Error::InvalidRange(format!(
            "eps_s must lie in (0, 1), got {eps_s}"
        )));
    }
    let one = T::one();
    let two = cast::<T>(2.0);
    let half = cast::<T>(0.5);
    let log0 = (one + t0 * t0).ln();
    let log_n = (one + t_max * t_max).ln();
    let beta_d = two * (log0 / eps_s - log_n) / (eps_s - one);
    let beta_min = log_n - half * beta_d;
    // the tau -> t mapping is monotone iff beta_d tau + beta_min stays
    // positive on [eps_s, 1]; outside that domain the rewrite is undefined
    if !(beta_min + beta_d * eps_s > T::zero()) || !(beta_min + beta_d > T::zero()) {
        return Err(Error::InvalidRange(format!(
            "derived betas (beta_d = {beta_d}, beta_min = {beta_min}) do not give an \
             increasing noise level on [{eps_s}, 1]"
        )));
    }
    let nn = cast::<T>(n as f64);
    let mut times = Vec::with_capacity(n + 1);
    for k in (0..=n).rev() {
        let tau = eps_s + (cast::<T>(k as f64) / nn) * (one - eps_s);
        times.push(((half * beta_d * tau * tau + beta_min * tau).exp() - one).sqrt());
    }
    times[0] = t_max;
    times[n] = t0;
    TimeGrid::new(times)
}

/// Wraps an explicit descending sequence of times.
pub fn explicit_grid<T: Scalar>(times: &[T]) -> Result<TimeGrid<T>> {
    TimeGrid::new(times.to_vec())
}
