//! Deterministic PF-ODE solvers in x-space and z-space.
//!
//! All methods integrate `dx/dsigma = eps(x; sigma) = (x - r(x; sigma)) / sigma`
//! backward over a descending noise grid. The Euler step is written in its
//! convex-combination form `x' = (sigma_to/sigma_from) x +
//! (1 - sigma_to/sigma_from) r(x; sigma_from)`, which is algebraically the
//! classic update but exact at `sigma_to = 0`. Second-order steps (Heun and
//! the geometric-midpoint variant) and the multistep integrator keep the
//! `eps` formulation. General linear processes are handled in z-space through
//! the semi-linear form whose prefactor is `s_to / s_from`; the result equals
//! the `s`-scaled x-space simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracles::ScoreOracle;
use crate::schedules::{NoiseProcess, TimeGrid};
use crate::scalar::{cast, Scalar};
use crate::vecmath::{axpy, axpy_mut, norm, scale, sub};

/// Fixed-step integration method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    /// First-order (DDIM) step.
    Euler,
    /// Predictor plus trapezoidal slope average; 2 evaluations per step.
    Heun,
    /// Midpoint at the geometric mean of the endpoints; 2 evaluations per step.
    Dpm2,
    /// Adams-Bashforth multistep with lower-order warm start; 1 evaluation
    /// per step.
    Ipndm,
}

impl std::str::FromStr for SolveMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(SolveMethod::Euler),
            "heun" => Ok(SolveMethod::Heun),
            "dpm2" => Ok(SolveMethod::Dpm2),
            "ipndm" => Ok(SolveMethod::Ipndm),
            other => Err(Error::InvalidParams(format!("unknown method {other:?}"))),
        }
    }
}

/// Solver configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub method: SolveMethod,
    /// Maximum multistep order for `Ipndm`, in `[1, 4]`.
    pub ipndm_order: usize,
    /// Record denoised outputs and eps norms at every visited state
    /// (including the final one, which costs one extra oracle call).
    pub record_denoised: bool,
}

impl SolverConfig {
    pub fn new(method: SolveMethod) -> Self {
        SolverConfig {
            method,
            ipndm_order: 4,
            record_denoised: true,
        }
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.ipndm_order = order;
        self
    }

    pub fn without_recording(mut self) -> Self {
        self.record_denoised = false;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.method == SolveMethod::Ipndm && !(1..=4).contains(&self.ipndm_order) {
            return Err(Error::InvalidParams(format!(
                "ipndm order must be in [1, 4], got {}",
                self.ipndm_order
            )));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig::new(SolveMethod::Euler)
    }
}

/// One recorded noise-prediction evaluation, used as multistep history.
#[derive(Debug, Clone, PartialEq)]
pub struct EpsSample<T: Scalar> {
    pub sigma: T,
    pub eps: Vec<T>,
}

/// States visited by a solver run, coupled with the denoising outputs
/// recorded at each state.
///
/// `states` has one row per visited time (first row is the initial noise).
/// When recording is enabled, `denoised` and `eps_norms` hold one entry per
/// state as well, each satisfying `r = x - sigma * eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar> {
    times: TimeGrid<T>,
    states: Vec<Vec<T>>,
    denoised: Option<Vec<Vec<T>>>,
    eps_norms: Option<Vec<T>>,
    nfe: usize,
}

impl<T: Scalar> Trajectory<T> {
    pub fn times(&self) -> &TimeGrid<T> {
        &self.times
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &[T] {
        &self.states[n]
    }

    pub fn final_state(&self) -> &[T] {
        self.states.last().expect("nonempty by construction")
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// Number of solver steps.
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// Denoised outputs per state, if recorded.
    pub fn denoised(&self) -> Option<&[Vec<T>]> {
        self.denoised.as_deref()
    }

    /// Noise-prediction norms per state, if recorded.
    pub fn eps_norms(&self) -> Option<&[T]> {
        self.eps_norms.as_deref()
    }

    /// Oracle evaluations consumed by the solver steps (1 per Euler or
    /// multistep step, 2 per Heun or midpoint step). The optional final
    /// diagnostic evaluation is not counted.
    pub fn nfe(&self) -> usize {
        self.nfe
    }

    /// Assembles a trajectory from parts, enforcing shape invariants.
    pub fn from_parts(
        times: TimeGrid<T>,
        states: Vec<Vec<T>>,
        denoised: Option<Vec<Vec<T>>>,
        eps_norms: Option<Vec<T>>,
        nfe: usize,
    ) -> Result<Self> {
        if states.len() != times.times().len() {
            return Err(Error::ShapeMismatch(format!(
                "{} states vs {} times",
                states.len(),
                times.times().len()
            )));
        }
        let d = states.first().map(Vec::len).unwrap_or(0);
        if d == 0 {
            return Err(Error::InvalidParams("empty states".into()));
        }
        for s in &states {
            if s.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: s.len(),
                });
            }
        }
        if let Some(den) = &denoised {
            if den.len() != states.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} denoised rows vs {} states",
                    den.len(),
                    states.len()
                )));
            }
        }
        if let Some(ns) = &eps_norms {
            if ns.len() != states.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} eps norms vs {} states",
                    ns.len(),
                    states.len()
                )));
            }
        }
        Ok(Trajectory {
            times,
            states,
            denoised,
            eps_norms,
            nfe,
        })
    }
}

fn check_step<T: Scalar>(sigma_from: T, sigma_to: T, needs_positive_target: bool) -> Result<()> {
    if !(sigma_from > sigma_to) || sigma_to < T::zero() {
        return Err(Error::InvalidRange(format!(
            "need sigma_from > sigma_to >= 0, got {sigma_from} -> {sigma_to}"
        )));
    }
    if needs_positive_target && !(sigma_to > T::zero()) {
        return Err(Error::InvalidRange(
            "second-order step needs sigma_to > 0 for the slope evaluation".into(),
        ));
    }
    Ok(())
}

fn eps_of<T: Scalar>(oracle: &dyn ScoreOracle<T>, x: &[T], sigma: T) -> (Vec<T>, Vec<T>) {
    let r = oracle.denoise(x, sigma);
    let eps = x
        .iter()
        .zip(&r)
        .map(|(&xi, &ri)| (xi - ri) / sigma)
        .collect();
    (r, eps)
}

#[inline]
fn convex_step<T: Scalar>(x: &[T], r: &[T], sigma_from: T, sigma_to: T) -> Vec<T> {
    let ratio = sigma_to / sigma_from;
    let omr = T::one() - ratio;
    x.iter()
        .zip(r)
        .map(|(&xi, &ri)| ratio * xi + omr * ri)
        .collect()
}

/// Single Euler step from `sigma_from` to `sigma_to`, written as the convex
/// combination of the current state and the denoising output. `sigma_to = 0`
/// returns `r(x; sigma_from)` exactly.
pub fn euler_step<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    x: &[T],
    sigma_from: T,
    sigma_to: T,
) -> Result<Vec<T>> {
    check_step(sigma_from, sigma_to, false)?;
    let r = oracle.denoise(x, sigma_from);
    Ok(convex_step(x, &r, sigma_from, sigma_to))
}

fn heun_from<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    x: &[T],
    sigma_from: T,
    sigma_to: T,
    eps1: &[T],
) -> Vec<T> {
    let ds = sigma_to - sigma_from;
    let x_pred = axpy(x, ds, eps1);
    let (_, eps2) = eps_of(oracle, &x_pred, sigma_to);
    let half = cast::<T>(0.5);
    let mut out = x.to_vec();
    for ((o, &e1), &e2) in out.iter_mut().zip(eps1).zip(&eps2) {
        *o += ds * half * (e1 + e2);
    }
    out
}

/// Heun step: Euler predictor, then the average of the slopes at both ends.
pub fn heun_step<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    x: &[T],
    sigma_from: T,
    sigma_to: T,
) -> Result<Vec<T>> {
    check_step(sigma_from, sigma_to, true)?;
    let (_, eps1) = eps_of(oracle, x, sigma_from);
    Ok(heun_from(oracle, x, sigma_from, sigma_to, &eps1))
}

fn dpm2_from<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    x: &[T],
    sigma_from: T,
    sigma_to: T,
    eps1: &[T],
) -> Vec<T> {
    let sigma_mid = (sigma_from * sigma_to).sqrt();
    let x_mid = axpy(x, sigma_mid - sigma_from, eps1);
    let (_, eps_mid) = eps_of(oracle, &x_mid, sigma_mid);
    axpy(x, sigma_to - sigma_from, &eps_mid)
}

/// Second-order step with the slope taken at the geometric mean
/// `sqrt(sigma_from * sigma_to)` of the endpoints.
pub fn dpm2_step<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    x: &[T],
    sigma_from: T,
    sigma_to: T,
) -> Result<Vec<T>> {
    check_step(sigma_from, sigma_to, true)?;
    let (_, eps1) = eps_of(oracle, x, sigma_from);
    Ok(dpm2_from(oracle, x, sigma_from, sigma_to, &eps1))
}

/// Integral over `[a, b]` of the Lagrange basis polynomial that is 1 at
/// `nodes[j]` and 0 at the other nodes. Nodes are shifted by `a` before the
/// expansion so the monomial powers stay small.
fn lagrange_integral<T: Scalar>(nodes: &[T], j: usize, a: T, b: T) -> T {
    let mut coeffs = vec![T::one()]; // polynomial in u = sigma - a
    let mut denom = T::one();
    for (k, &nk) in nodes.iter().enumerate() {
        if k == j {
            continue;
        }
        denom *= nodes[j] - nk;
        let shift = nk - a;
        // multiply coeffs by (u - shift)
        let mut next = vec![T::zero(); coeffs.len() + 1];
        for (m, &c) in coeffs.iter().enumerate() {
            next[m + 1] += c;
            next[m] -= c * shift;
        }
        coeffs = next;
    }
    let u = b - a;
    let mut integral = T::zero();
    let mut upow = u;
    for (m, &c) in coeffs.iter().enumerate() {
        integral += c * upow / cast::<T>((m + 1) as f64);
        upow *= u;
    }
    integral / denom
}

fn ipndm_from<T: Scalar>(
    x: &[T],
    sigma_from: T,
    sigma_to: T,
    eps_now: &[T],
    history: &[EpsSample<T>],
    max_order: usize,
) -> Result<Vec<T>> {
    let d = x.len();
    if eps_now.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: eps_now.len(),
        });
    }
    let used = history.len().min(max_order.saturating_sub(1)).min(3);
    // nodes ordered most recent first: current sigma, then history backward
    let mut nodes = vec![sigma_from];
    let mut slopes: Vec<&[T]> = vec![eps_now];
    for h in history.iter().rev().take(used) {
        if h.eps.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: h.eps.len(),
            });
        }
        nodes.push(h.sigma);
        slopes.push(&h.eps);
    }
    let mut out = x.to_vec();
    for (j, eps) in slopes.iter().enumerate() {
        let w = lagrange_integral(&nodes, j, sigma_from, sigma_to);
        axpy_mut(&mut out, w, eps);
    }
    Ok(out)
}

/// Adams-Bashforth multistep on `dx/dsigma = eps`, using up to three prior
/// evaluations from `history` (chronological order, most recent last) plus
/// the evaluation at the current state. Quadrature weights come from exact
/// integration of the interpolating polynomial over the actual (generally
/// nonuniform) node spacing; on uniform grids they reduce to the textbook
/// coefficients. With an empty history this is the Euler step.
pub fn ipndm_step<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    history: &[EpsSample<T>],
    x: &[T],
    sigma_from: T,
    sigma_to: T,
) -> Result<Vec<T>> {
    check_step(sigma_from, sigma_to, false)?;
    let (_, eps_now) = eps_of(oracle, x, sigma_from);
    ipndm_from(x, sigma_from, sigma_to, &eps_now, history, 4)
}

/// Runs the configured solver over the grid, recording states and (when
/// enabled) the denoising trajectory. Deterministic for fixed inputs.
pub fn simulate<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    grid: &TimeGrid<T>,
    x_init: &[T],
    cfg: &SolverConfig,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    if x_init.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: x_init.len(),
        });
    }
    let times = grid.times();
    if !(times[times.len() - 1] > T::zero()) {
        return Err(Error::InvalidRange(
            "grid must end at a positive noise level (eps is singular at 0)".into(),
        ));
    }
    let n = grid.steps();
    let mut states = Vec::with_capacity(n + 1);
    let mut denoised = cfg.record_denoised.then(|| Vec::with_capacity(n + 1));
    let mut eps_norms = cfg.record_denoised.then(|| Vec::with_capacity(n + 1));
    let mut history: Vec<EpsSample<T>> = Vec::new();
    let mut nfe = 0usize;

    let mut x = x_init.to_vec();
    states.push(x.clone());
    for step in 0..n {
        let sigma_from = times[step];
        let sigma_to = times[step + 1];
        let (r, eps) = eps_of(oracle, &x, sigma_from);
        nfe += 1;
        if let (Some(den), Some(ns)) = (denoised.as_mut(), eps_norms.as_mut()) {
            den.push(r.clone());
            ns.push(norm(&eps));
        }
        x = match cfg.method {
            SolveMethod::Euler => convex_step(&x, &r, sigma_from, sigma_to),
            SolveMethod::Heun => {
                check_step(sigma_from, sigma_to, true)?;
                nfe += 1;
                heun_from(oracle, &x, sigma_from, sigma_to, &eps)
            }
            SolveMethod::Dpm2 => {
                check_step(sigma_from, sigma_to, true)?;
                nfe += 1;
                dpm2_from(oracle, &x, sigma_from, sigma_to, &eps)
            }
            SolveMethod::Ipndm => {
                let out = ipndm_from(&x, sigma_from, sigma_to, &eps, &history, cfg.ipndm_order)?;
                history.push(EpsSample {
                    sigma: sigma_from,
                    eps,
                });
                if history.len() > cfg.ipndm_order.saturating_sub(1) {
                    history.remove(0);
                }
                out
            }
        };
        states.push(x.clone());
    }
    if let (Some(den), Some(ns)) = (denoised.as_mut(), eps_norms.as_mut()) {
        // diagnostic evaluation at the final state
        let (r, eps) = eps_of(oracle, &x, times[n]);
        den.push(r);
        ns.push(norm(&eps));
    }
    Trajectory::from_parts(grid.clone(), states, denoised, eps_norms, nfe)
}

/// Returns the denoising output recorded at step `n`, i.e. terminates the
/// run early by jumping from the sampling trajectory onto the denoising
/// trajectory.
pub fn ode_jump<T: Scalar>(traj: &Trajectory<T>, n: usize) -> Result<Vec<T>> {
    let den = traj.denoised.as_ref().ok_or(Error::MissingDenoised)?;
    den.get(n).cloned().ok_or(Error::IndexOutOfRange {
        index: n,
        len: den.len(),
    })
}

/// Simulates in z-space with the semi-linear exact form: each step scales the
/// state by `s_to / s_from` and adds the `s_to`-weighted noise-prediction
/// increment, with slopes evaluated at `x = z / s`. For any method the result
/// equals `s(t)` times the x-space simulation started from
/// `z_init / s(t_max)`. A VE process reduces to [`simulate`] exactly.
pub fn simulate_zspace<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    process: &NoiseProcess<T>,
    grid: &TimeGrid<T>,
    z_init: &[T],
    cfg: &SolverConfig,
) -> Result<Trajectory<T>> {
    cfg.validate()?;
    process.validate_grid(grid)?;
    if z_init.len() != oracle.dim() {
        return Err(Error::DimensionMismatch {
            expected: oracle.dim(),
            got: z_init.len(),
        });
    }
    let times = grid.times();
    let n = grid.steps();
    let sigmas: Vec<T> = times.iter().map(|&t| process.sigma(t)).collect();
    let scales: Vec<T> = times.iter().map(|&t| process.scale(t)).collect();
    for (k, w) in sigmas.windows(2).enumerate() {
        if !(w[0] > w[1]) {
            return Err(Error::NotDecreasing(format!(
                "sigma({}) = {} !> sigma({}) = {}",
                times[k],
                w[0],
                times[k + 1],
                w[1]
            )));
        }
        if !(scales[k] > T::zero()) || !(scales[k + 1] > T::zero()) {
            return Err(Error::InvalidRange("scale must stay positive".into()));
        }
    }
    if !(sigmas[n] > T::zero()) {
        return Err(Error::InvalidRange(
            "grid must end at a positive noise level (eps is singular at 0)".into(),
        ));
    }

    let mut states = Vec::with_capacity(n + 1);
    let mut denoised = cfg.record_denoised.then(|| Vec::with_capacity(n + 1));
    let mut eps_norms = cfg.record_denoised.then(|| Vec::with_capacity(n + 1));
    let mut history: Vec<EpsSample<T>> = Vec::new();
    let mut nfe = 0usize;

    let mut z = z_init.to_vec();
    states.push(z.clone());
    for step in 0..n {
        let (sigma_from, sigma_to) = (sigmas[step], sigmas[step + 1]);
        let (s_from, s_to) = (scales[step], scales[step + 1]);
        let ds = sigma_to - sigma_from;
        let x: Vec<T> = scale(&z, T::one() / s_from);
        let (r, eps) = eps_of(oracle, &x, sigma_from);
        nfe += 1;
        if let (Some(den), Some(ns)) = (denoised.as_mut(), eps_norms.as_mut()) {
            den.push(r);
            ns.push(norm(&eps));
        }
        let prefactor = s_to / s_from;
        let increment: Vec<T> = match cfg.method {
            SolveMethod::Euler => scale(&eps, ds),
            SolveMethod::Heun => {
                check_step(sigma_from, sigma_to, true)?;
                nfe += 1;
                let x_pred = axpy(&x, ds, &eps);
                let (_, eps2) = eps_of(oracle, &x_pred, sigma_to);
                let half = cast::<T>(0.5);
                eps.iter()
                    .zip(&eps2)
                    .map(|(&e1, &e2)| ds * half * (e1 + e2))
                    .collect()
            }
            SolveMethod::Dpm2 => {
                check_step(sigma_from, sigma_to, true)?;
                nfe += 1;
                let sigma_mid = (sigma_from * sigma_to).sqrt();
                let x_mid = axpy(&x, sigma_mid - sigma_from, &eps);
                let (_, eps_mid) = eps_of(oracle, &x_mid, sigma_mid);
                scale(&eps_mid, ds)
            }
            SolveMethod::Ipndm => {
                let stepped = ipndm_from(&x, sigma_from, sigma_to, &eps, &history, cfg.ipndm_order)?;
                history.push(EpsSample {
                    sigma: sigma_from,
                    eps,
                });
                if history.len() > cfg.ipndm_order.saturating_sub(1) {
                    history.remove(0);
                }
                sub(&stepped, &x)
            }
        };
        z = z
            .iter()
            .zip(&increment)
            .map(|(&zi, &inc)| prefactor * zi + s_to * inc)
            .collect();
        states.push(z.clone());
    }
    if let (Some(den), Some(ns)) = (denoised.as_mut(), eps_norms.as_mut()) {
        let x: Vec<T> = scale(&z, T::one() / scales[n]);
        let (r, eps) = eps_of(oracle, &x, sigmas[n]);
        den.push(r);
        ns.push(norm(&eps));
    }
    Trajectory::from_parts(grid.clone(), states, denoised, eps_norms, nfe)
}
