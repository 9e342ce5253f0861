//! Closed-form denoising oracles and representation conversions.
//!
//! Every oracle maps a point `x` and a noise level `sigma` to the optimal
//! denoising output `r(x; sigma)`, the posterior mean of the clean data given
//! the noisy observation. Three data models are provided: the empirical
//! distribution of a finite dataset (a Gaussian KDE with bandwidth `sigma`),
//! a low-rank Gaussian, and a mixture of low-rank Gaussians. The KDE oracle
//! coincides with the mean vector of the mean-shift algorithm at bandwidth
//! `sigma`, which is what the mode-seeking iteration here exploits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cast, scaled_tol, Scalar};
use crate::vecmath::{axpy_mut, dist_sq, dot, log_sum_exp, stable_softmax, sub};

/// Finite set of points in `R^d`; doubles as the empirical-KDE oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<Vec<T>>",
    into = "Vec<Vec<T>>",
    bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned")
)]
pub struct Dataset<T: Scalar> {
    points: Vec<Vec<T>>,
    dim: usize,
}

impl<T: Scalar> TryFrom<Vec<Vec<T>>> for Dataset<T> {
    type Error = Error;
    fn try_from(points: Vec<Vec<T>>) -> Result<Self> {
        Dataset::new(points)
    }
}

impl<T: Scalar> From<Dataset<T>> for Vec<Vec<T>> {
    fn from(d: Dataset<T>) -> Self {
        d.points
    }
}

impl<T: Scalar> Dataset<T> {
    pub fn new(points: Vec<Vec<T>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidParams("dataset must be nonempty".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParams("dataset points must have dim >= 1".into()));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
        }
        Ok(Dataset { points, dim })
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // enforced nonempty at construction
    }

    /// Componentwise dataset mean.
    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for p in &self.points {
            axpy_mut(&mut m, T::one(), p);
        }
        let inv = T::one() / cast::<T>(self.points.len() as f64);
        for x in m.iter_mut() {
            *x *= inv;
        }
        m
    }
}

/// Serialized form of [`LowRankGaussian`], re-validated on deserialization.
#[derive(Serialize, Deserialize)]
struct RawLowRankGaussian<T> {
    mean: Vec<T>,
    eigvecs: Vec<Vec<T>>,
    eigvals: Vec<T>,
}

/// Gaussian with low-rank covariance `Sigma = U diag(lambda) U^T`.
///
/// `eigvecs` holds the `r` orthonormal columns of `U` (each of length `d`),
/// `eigvals` the matching positive eigenvalues in descending order. Rank zero
/// (a point mass at `mean`) is allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "RawLowRankGaussian<T>",
    into = "RawLowRankGaussian<T>",
    bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned")
)]
pub struct LowRankGaussian<T: Scalar> {
    mean: Vec<T>,
    eigvecs: Vec<Vec<T>>,
    eigvals: Vec<T>,
}

impl<T: Scalar> TryFrom<RawLowRankGaussian<T>> for LowRankGaussian<T> {
    type Error = Error;
    fn try_from(raw: RawLowRankGaussian<T>) -> Result<Self> {
        LowRankGaussian::new(raw.mean, raw.eigvecs, raw.eigvals)
    }
}

impl<T: Scalar> From<LowRankGaussian<T>> for RawLowRankGaussian<T> {
    fn from(g: LowRankGaussian<T>) -> Self {
        RawLowRankGaussian {
            mean: g.mean,
            eigvecs: g.eigvecs,
            eigvals: g.eigvals,
        }
    }
}

impl<T: Scalar> LowRankGaussian<T> {
    pub fn new(mean: Vec<T>, eigvecs: Vec<Vec<T>>, eigvals: Vec<T>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidParams("mean must have dim >= 1".into()));
        }
        if eigvecs.len() != eigvals.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} eigenvectors vs {} eigenvalues",
                eigvecs.len(),
                eigvals.len()
            )));
        }
        if eigvecs.len() > d {
            return Err(Error::InvalidParams(format!(
                "rank {} exceeds dimension {}",
                eigvecs.len(),
                d
            )));
        }
        let tol = scaled_tol::<T>(1e-10);
        for (i, u) in eigvecs.iter().enumerate() {
            if u.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: u.len(),
                });
            }
            for (j, v) in eigvecs.iter().enumerate() {
                let want = if i == j { T::one() } else { T::zero() };
                if (dot(u, v) - want).abs() > tol {
                    return Err(Error::InvalidParams(format!(
                        "eigenvectors {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        let mut prev = T::infinity();
        for &l in &eigvals {
            if !(l > T::zero()) {
                return Err(Error::InvalidParams(format!(
                    "eigenvalue must be positive, got {l}"
                )));
            }
            if l > prev {
                return Err(Error::InvalidParams(
                    "eigenvalues must be sorted descending".into(),
                ));
            }
            prev = l;
        }
        Ok(LowRankGaussian {
            mean,
            eigvecs,
            eigvals,
        })
    }

    /// Point mass at `mean` (rank zero).
    pub fn point_mass(mean: Vec<T>) -> Result<Self> {
        LowRankGaussian::new(mean, Vec::new(), Vec::new())
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn eigvecs(&self) -> &[Vec<T>] {
        &self.eigvecs
    }

    pub fn eigvals(&self) -> &[T] {
        &self.eigvals
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn rank(&self) -> usize {
        self.eigvals.len()
    }

    /// Log-density of `N(mean, Sigma + sigma^2 I)` at `x`, using the
    /// matrix-determinant lemma for the low-rank structure:
    /// `log det = (d - r) log sigma^2 + sum_k log(lambda_k + sigma^2)`.
    pub fn smoothed_logdensity(&self, x: &[T], sigma: T) -> Result<T> {
        check_sigma(sigma)?;
        check_dim(self.dim(), x.len())?;
        let d = self.dim();
        let r = self.rank();
        let s2 = sigma * sigma;
        let w = sub(x, &self.mean);
        let mut logdet = cast::<T>((d - r) as f64) * s2.ln();
        let mut quad = dot(&w, &w);
        for (u, &l) in self.eigvecs.iter().zip(&self.eigvals) {
            logdet += (l + s2).ln();
            let proj = dot(u, &w);
            quad -= (l / (l + s2)) * proj * proj;
        }
        quad /= s2;
        let two_pi = cast::<T>(2.0 * std::f64::consts::PI);
        let half = cast::<T>(0.5);
        Ok(-half * (cast::<T>(d as f64) * two_pi.ln() + logdet + quad))
    }
}

/// Mixture of low-rank Gaussians with positive weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "Vec<(T, LowRankGaussian<T>)>",
    into = "Vec<(T, LowRankGaussian<T>)>",
    bound(serialize = "T: Serialize", deserialize = "T: serde::de::DeserializeOwned")
)]
pub struct GaussianMixture<T: Scalar> {
    components: Vec<(T, LowRankGaussian<T>)>,
}

impl<T: Scalar> TryFrom<Vec<(T, LowRankGaussian<T>)>> for GaussianMixture<T> {
    type Error = Error;
    fn try_from(components: Vec<(T, LowRankGaussian<T>)>) -> Result<Self> {
        GaussianMixture::new(components)
    }
}

impl<T: Scalar> From<GaussianMixture<T>> for Vec<(T, LowRankGaussian<T>)> {
    fn from(m: GaussianMixture<T>) -> Self {
        m.components
    }
}

impl<T: Scalar> GaussianMixture<T> {
    pub fn new(components: Vec<(T, LowRankGaussian<T>)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return Err(Error::EmptyMixture);
        };
        let d = first.dim();
        let mut total = T::zero();
        for (w, g) in &components {
            if !(*w > T::zero()) {
                return Err(Error::WeightSum((*w).to_f64().unwrap_or(f64::NAN)));
            }
            if g.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: g.dim(),
                });
            }
            total += *w;
        }
        if (total - T::one()).abs() > scaled_tol::<T>(1e-9) {
            return Err(Error::WeightSum(total.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(GaussianMixture { components })
    }

    pub fn components(&self) -> &[(T, LowRankGaussian<T>)] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }
}

/// Denoising output, optionally with the convex-combination weights over the
/// dataset points that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseResult<T: Scalar> {
    pub r: Vec<T>,
    pub weights: Option<Vec<T>>,
}

fn check_sigma<T: Scalar>(sigma: T) -> Result<()> {
    if !(sigma > T::zero()) {
        return Err(Error::NonPositiveSigma(sigma.to_f64().unwrap_or(f64::NAN)));
    }
    Ok(())
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// Softmax weights `u_i(x) = softmax_i(-|x - y_i|^2 / 2 sigma^2)`.
pub(crate) fn kde_weights<T: Scalar>(data: &Dataset<T>, x: &[T], sigma: T) -> Vec<T> {
    let inv = -T::one() / (cast::<T>(2.0) * sigma * sigma);
    let logits: Vec<T> = data
        .points()
        .iter()
        .map(|y| inv * dist_sq(x, y))
        .collect();
    stable_softmax(&logits)
}

/// Optimal denoising output of the empirical distribution:
/// `r = sum_i u_i(x) y_i`, a convex combination of the data points.
pub fn kde_denoise<T: Scalar>(
    data: &Dataset<T>,
    x: &[T],
    sigma: T,
    want_weights: bool,
) -> Result<DenoiseResult<T>> {
    check_sigma(sigma)?;
    check_dim(data.dim(), x.len())?;
    let w = kde_weights(data, x, sigma);
    let mut r = vec![T::zero(); data.dim()];
    for (wi, y) in w.iter().zip(data.points()) {
        if *wi > T::zero() {
            axpy_mut(&mut r, *wi, y);
        }
    }
    Ok(DenoiseResult {
        r,
        weights: want_weights.then_some(w),
    })
}

/// Denoising output under a (low-rank) Gaussian data model:
/// `r = x + sigma^2 (Sigma + sigma^2 I)^{-1} (mu - x)`, evaluated through the
/// eigendecomposition so the cost is `O(d r)`.
pub fn gaussian_denoise<T: Scalar>(
    g: &LowRankGaussian<T>,
    x: &[T],
    sigma: T,
) -> Result<DenoiseResult<T>> {
    check_sigma(sigma)?;
    check_dim(g.dim(), x.len())?;
    let s2 = sigma * sigma;
    let w = sub(g.mean(), x);
    // sigma^2 (Sigma + sigma^2 I)^{-1} w = w - U diag(lambda/(lambda+sigma^2)) U^T w
    let mut r: Vec<T> = x.iter().zip(&w).map(|(&xi, &wi)| xi + wi).collect();
    for (u, &l) in g.eigvecs().iter().zip(g.eigvals()) {
        let c = (l / (l + s2)) * dot(u, &w);
        axpy_mut(&mut r, -c, u);
    }
    Ok(DenoiseResult { r, weights: None })
}

/// Posterior mean of a Gaussian mixture: responsibility-weighted combination
/// of the per-component denoising outputs, with responsibilities proportional
/// to `weight_j * N(x; mu_j, Sigma_j + sigma^2 I)` computed in log space.
pub fn mixture_denoise<T: Scalar>(
    mix: &GaussianMixture<T>,
    x: &[T],
    sigma: T,
) -> Result<DenoiseResult<T>> {
    check_sigma(sigma)?;
    check_dim(mix.dim(), x.len())?;
    let mut logits = Vec::with_capacity(mix.components().len());
    for (w, g) in mix.components() {
        logits.push(w.ln() + g.smoothed_logdensity(x, sigma)?);
    }
    let resp = stable_softmax(&logits);
    let mut r = vec![T::zero(); mix.dim()];
    for (rho, (_, g)) in resp.iter().zip(mix.components()) {
        if *rho > T::zero() {
            let part = gaussian_denoise(g, x, sigma)?;
            axpy_mut(&mut r, *rho, &part.r);
        }
    }
    Ok(DenoiseResult { r, weights: None })
}

/// Score from the denoising output: `score = (s r - x) / (s sigma)^2` in
/// z-space; `s = 1` recovers the x-space form `(r - x) / sigma^2`.
pub fn denoiser_to_score<T: Scalar>(r: &[T], x: &[T], sigma: T, s: T) -> Result<Vec<T>> {
    check_sigma(sigma)?;
    if !(s > T::zero()) {
        return Err(Error::NonPositiveSigma(s.to_f64().unwrap_or(f64::NAN)));
    }
    check_dim(x.len(), r.len())?;
    let denom = (s * sigma) * (s * sigma);
    Ok(r.iter()
        .zip(x)
        .map(|(&ri, &xi)| (s * ri - xi) / denom)
        .collect())
}

/// Inverse of [`denoiser_to_score`]: `r = (x + (s sigma)^2 score) / s`.
pub fn score_to_denoiser<T: Scalar>(score: &[T], x: &[T], sigma: T, s: T) -> Result<Vec<T>> {
    check_sigma(sigma)?;
    if !(s > T::zero()) {
        return Err(Error::NonPositiveSigma(s.to_f64().unwrap_or(f64::NAN)));
    }
    check_dim(x.len(), score.len())?;
    let c = (s * sigma) * (s * sigma);
    Ok(score
        .iter()
        .zip(x)
        .map(|(&si, &xi)| (xi + c * si) / s)
        .collect())
}

/// Noise prediction from the denoising output: `eps = (x - r) / sigma`.
pub fn denoiser_to_eps<T: Scalar>(r: &[T], x: &[T], sigma: T) -> Result<Vec<T>> {
    check_sigma(sigma)?;
    check_dim(x.len(), r.len())?;
    Ok(x.iter().zip(r).map(|(&xi, &ri)| (xi - ri) / sigma).collect())
}

/// Inverse of [`denoiser_to_eps`]: `r = x - sigma eps`.
pub fn eps_to_denoiser<T: Scalar>(eps: &[T], x: &[T], sigma: T) -> Result<Vec<T>> {
    check_sigma(sigma)?;
    check_dim(x.len(), eps.len())?;
    Ok(x.iter()
        .zip(eps)
        .map(|(&xi, &ei)| xi - sigma * ei)
        .collect())
}

/// Log of the Gaussian KDE `(1/|I|) sum_i N(x; y_i, h^2 I)` via log-sum-exp.
pub fn kde_logdensity<T: Scalar>(data: &Dataset<T>, x: &[T], h: T) -> Result<T> {
    check_sigma(h)?;
    check_dim(data.dim(), x.len())?;
    let inv = -T::one() / (cast::<T>(2.0) * h * h);
    let logits: Vec<T> = data.points().iter().map(|y| inv * dist_sq(x, y)).collect();
    let d = cast::<T>(data.dim() as f64);
    let two_pi = cast::<T>(2.0 * std::f64::consts::PI);
    let half = cast::<T>(0.5);
    let count = cast::<T>(data.len() as f64);
    Ok(log_sum_exp(&logits) - count.ln() - half * d * (two_pi * h * h).ln())
}

/// Fixed-bandwidth mean-shift iteration `x <- m(x, h)`. Returns the iterates
/// including the starting point, so the result has `iters + 1` entries. The
/// KDE log-density is non-decreasing along the returned sequence.
pub fn mean_shift_iterate<T: Scalar>(
    data: &Dataset<T>,
    x0: &[T],
    h: T,
    iters: usize,
) -> Result<Vec<Vec<T>>> {
    check_sigma(h)?;
    check_dim(data.dim(), x0.len())?;
    let mut out = Vec::with_capacity(iters + 1);
    out.push(x0.to_vec());
    let mut x = x0.to_vec();
    for _ in 0..iters {
        x = kde_denoise(data, &x, h, false)?.r;
        out.push(x.clone());
    }
    Ok(out)
}

/// Shannon entropy of a convex-combination weight vector,
/// `H(u) = -sum_i u_i log(u_i + 1e-10)`; the small bias keeps zero weights
/// finite without renormalizing anything.
pub fn coefficient_entropy<T: Scalar>(weights: &[T]) -> Result<T> {
    let bias = cast::<T>(1e-10);
    let mut h = T::zero();
    for &u in weights {
        if u < T::zero() {
            return Err(Error::NegativeWeight(u.to_f64().unwrap_or(f64::NAN)));
        }
        h -= u * (u + bias).ln();
    }
    Ok(h)
}

/// Evaluator mapping `(x, sigma)` to the optimal denoising output of some
/// data model. Implementations are immutable and safe to share across
/// threads; inputs are assumed pre-validated (`x.len() == dim`, `sigma > 0`).
pub trait ScoreOracle<T: Scalar>: Send + Sync {
    /// Data dimension.
    fn dim(&self) -> usize;

    /// Denoising output `r(x; sigma)`.
    fn denoise(&self, x: &[T], sigma: T) -> Vec<T>;

    /// Convex-combination weights over dataset points, when the model has
    /// them (only the empirical-KDE oracle does).
    fn convex_weights(&self, _x: &[T], _sigma: T) -> Option<Vec<T>> {
        None
    }

    /// One-line description for manifests and trajectory sidecars.
    fn describe(&self) -> String;
}

impl<T: Scalar> ScoreOracle<T> for Dataset<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn denoise(&self, x: &[T], sigma: T) -> Vec<T> {
        kde_denoise(self, x, sigma, false)
            .expect("validated input")
            .r
    }

    fn convex_weights(&self, x: &[T], sigma: T) -> Option<Vec<T>> {
        Some(kde_weights(self, x, sigma))
    }

    fn describe(&self) -> String {
        format!("kde(|I|={}, d={})", self.len(), self.dim)
    }
}

impl<T: Scalar> ScoreOracle<T> for LowRankGaussian<T> {
    fn dim(&self) -> usize {
        self.mean.len()
    }

    fn denoise(&self, x: &[T], sigma: T) -> Vec<T> {
        gaussian_denoise(self, x, sigma).expect("validated input").r
    }

    fn describe(&self) -> String {
        format!("gaussian(d={}, rank={})", self.dim(), self.rank())
    }
}

impl<T: Scalar> ScoreOracle<T> for GaussianMixture<T> {
    fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    fn denoise(&self, x: &[T], sigma: T) -> Vec<T> {
        mixture_denoise(self, x, sigma).expect("validated input").r
    }

    fn describe(&self) -> String {
        format!("mixture({} components, d={})", self.components.len(), self.dim())
    }
}
