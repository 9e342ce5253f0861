//! Deterministic synthetic datasets and random low-rank Gaussian models.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracles::{Dataset, LowRankGaussian};

/// How cluster centers are chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum CenterSpec {
    /// Centers given explicitly.
    Explicit(Vec<Vec<f64>>),
    /// `num` centers drawn `N(0, scale^2 I)` from the seed.
    Random { num: usize, scale: f64 },
}

/// Synthetic dataset families.
#[derive(Debug, Clone, PartialEq)]
pub enum SynthSpec {
    /// Gaussian blobs around the given centers; points are assigned to
    /// centers round-robin so cluster sizes differ by at most one.
    Clusters {
        dim: usize,
        count: usize,
        centers: CenterSpec,
        spread: f64,
    },
    /// Draws from a random low-rank Gaussian of the given rank.
    LowRankGaussian {
        dim: usize,
        rank: usize,
        count: usize,
        scale: f64,
    },
    /// Regular lattice with `per_axis` points per axis, spacing `spacing`,
    /// centered at the origin.
    Grid {
        dim: usize,
        per_axis: usize,
        spacing: f64,
    },
}

fn standard_normal_vec(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

/// Random low-rank Gaussian: orthonormal columns from Gram-Schmidt over
/// seeded Gaussian draws, eigenvalues `scale^2 / (k + 1)` (descending).
pub fn random_low_rank_gaussian(
    dim: usize,
    rank: usize,
    scale: f64,
    seed: u64,
) -> Result<LowRankGaussian<f64>> {
    if rank > dim {
        return Err(Error::InvalidParams(format!(
            "rank {rank} exceeds dimension {dim}"
        )));
    }
    if !(scale > 0.0) {
        return Err(Error::InvalidParams(format!(
            "scale must be positive, got {scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = standard_normal_vec(&mut rng, dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v = standard_normal_vec(&mut rng, dim);
        for u in &basis {
            let c = crate::vecmath::dot(&v, u);
            crate::vecmath::axpy_mut(&mut v, -c, u);
        }
        let n = crate::vecmath::norm(&v);
        if n > 1e-8 {
            for x in v.iter_mut() {
                *x /= n;
            }
            basis.push(v);
        }
    }
    let eigvals: Vec<f64> = (0..rank).map(|k| scale * scale / (k + 1) as f64).collect();
    LowRankGaussian::new(mean, basis, eigvals)
}

/// Draws `count` samples from a low-rank Gaussian:
/// `y = mean + sum_k sqrt(lambda_k) z_k u_k`.
pub fn sample_low_rank_gaussian(
    g: &LowRankGaussian<f64>,
    count: usize,
    seed: u64,
) -> Result<Dataset<f64>> {
    if count == 0 {
        return Err(Error::InvalidParams("count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut y = g.mean().to_vec();
        for (u, &l) in g.eigvecs().iter().zip(g.eigvals()) {
            let z: f64 = StandardNormal.sample(&mut rng);
            crate::vecmath::axpy_mut(&mut y, l.sqrt() * z, u);
        }
        points.push(y);
    }
    Dataset::new(points)
}

/// Deterministic dataset synthesis; the same spec and seed always produce
/// identical points.
pub fn synth_dataset(spec: &SynthSpec, seed: u64) -> Result<Dataset<f64>> {
    match spec {
        SynthSpec::Clusters {
            dim,
            count,
            centers,
            spread,
        } => {
            if *count == 0 || *dim == 0 {
                return Err(Error::InvalidParams("count and dim must be positive".into()));
            }
            if *spread < 0.0 {
                return Err(Error::InvalidParams(format!(
                    "spread must be nonnegative, got {spread}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let centers: Vec<Vec<f64>> = match centers {
                CenterSpec::Explicit(cs) => {
                    if cs.is_empty() {
                        return Err(Error::InvalidParams("need at least one center".into()));
                    }
                    for c in cs {
                        if c.len() != *dim {
                            return Err(Error::DimensionMismatch {
                                expected: *dim,
                                got: c.len(),
                            });
                        }
                    }
                    cs.clone()
                }
                CenterSpec::Random { num, scale } => {
                    if *num == 0 {
                        return Err(Error::InvalidParams("need at least one center".into()));
                    }
                    (0..*num)
                        .map(|_| standard_normal_vec(&mut rng, *dim).iter().map(|z| z * scale).collect())
                        .collect()
                }
            };
            let mut points = Vec::with_capacity(*count);
            for i in 0..*count {
                let mut p = centers[i % centers.len()].clone();
                if *spread > 0.0 {
                    for x in p.iter_mut() {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *x += spread * z;
                    }
                }
                points.push(p);
            }
            Dataset::new(points)
        }
        SynthSpec::LowRankGaussian {
            dim,
            rank,
            count,
            scale,
        } => {
            let g = random_low_rank_gaussian(*dim, *rank, *scale, seed)?;
            sample_low_rank_gaussian(&g, *count, seed.wrapping_add(1))
        }
        SynthSpec::Grid {
            dim,
            per_axis,
            spacing,
        } => {
            if *dim == 0 || *per_axis == 0 {
                return Err(Error::InvalidParams("dim and per_axis must be positive".into()));
            }
            if !(*spacing > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "spacing must be positive, got {spacing}"
                )));
            }
            let total = (*per_axis as u64).checked_pow(*dim as u32);
            let total = match total {
                Some(t) if t <= 1_000_000 => t as usize,
                _ => {
                    return Err(Error::InvalidParams(format!(
                        "grid of {per_axis}^{dim} points is too large"
                    )))
                }
            };
            let offset = (*per_axis as f64 - 1.0) / 2.0;
            let mut points = Vec::with_capacity(total);
            for idx in 0..total {
                let mut rem = idx;
                let mut p = Vec::with_capacity(*dim);
                for _ in 0..*dim {
                    let coord = rem % per_axis;
                    rem /= per_axis;
                    p.push((coord as f64 - offset) * spacing);
                }
                points.push(p);
            }
            Dataset::new(points)
        }
    }
}
