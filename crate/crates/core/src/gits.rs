//! Geometry-inspired time scheduling: searches an N-step sampling schedule
//! over a fine time grid by minimizing discounted local truncation errors
//! with dynamic programming.
//!
//! Costs come from "warmup" trajectories: each warmup noise is integrated
//! once along the full fine grid with a high-order teacher, and the cost of
//! the candidate step `i -> j` is the distance between a single Euler step
//! launched from the teacher's state at node `i` and the teacher's state at
//! node `j`, averaged over the warmup batch. Grid nodes are indexed in
//! sampling order: index 0 is the initial time `t_N`, the last index is the
//! final time `t_0`, and `cost[i][j]` is defined for `i < j`.

use rayon::prelude::*;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::oracles::ScoreOracle;
use crate::scalar::{cast, Scalar};
use crate::schedules::{polynomial_grid, TimeGrid};
use crate::solvers::{simulate, SolveMethod, SolverConfig, Trajectory};
use crate::vecmath;

/// Upper-triangular matrix of averaged local truncation errors over a fine
/// grid. `cost(i, j)` is finite only for forward pairs `i < j`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix<T: Scalar> {
    grid: TimeGrid<T>,
    /// Row-major `g x g`, `+inf` on non-forward pairs.
    costs: Vec<T>,
    warmup_count: usize,
}

impl<T: Scalar> CostMatrix<T> {
    /// Wraps an explicit cost table (row-major `g x g`; entries on
    /// non-forward pairs are ignored and treated as infinite).
    pub fn from_raw(grid: TimeGrid<T>, costs: Vec<T>, warmup_count: usize) -> Result<Self> {
        let g = grid.times().len();
        if costs.len() != g * g {
            return Err(Error::ShapeMismatch(format!(
                "cost table has {} entries, grid needs {}",
                costs.len(),
                g * g
            )));
        }
        let mut table = vec![T::infinity(); g * g];
        for i in 0..g {
            for j in (i + 1)..g {
                let c = costs[i * g + j];
                if c < T::zero() || c.is_nan() {
                    return Err(Error::InvalidParams(format!(
                        "cost[{i}][{j}] must be nonnegative, got {c}"
                    )));
                }
                table[i * g + j] = c;
            }
        }
        Ok(CostMatrix {
            grid,
            costs: table,
            warmup_count,
        })
    }

    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn size(&self) -> usize {
        self.grid.times().len()
    }

    pub fn warmup_count(&self) -> usize {
        self.warmup_count
    }

    /// Cost of the step from grid node `i` to node `j`; infinite unless
    /// `i < j`.
    pub fn cost(&self, i: usize, j: usize) -> T {
        self.costs[i * self.size() + j]
    }
}

/// Distance metric between a candidate prediction and the teacher state.
/// Only the Euclidean metric ships; the hook exists for callers that need
/// another norm.
pub type CostMetric<T> = fn(&[T], &[T]) -> T;

/// Euclidean distance in state space.
pub fn l2_metric<T: Scalar>(a: &[T], b: &[T]) -> T {
    vecmath::dist(a, b)
}

/// Builds the local-truncation-error cost matrix. Each warmup sample is
/// integrated once along the entire fine grid with the teacher solver; the
/// Euler candidate for the pair `(i, j)` starts from the teacher's state at
/// node `i` and is compared against the teacher's state at node `j`. Costs
/// are averaged (not summed) over the warmup batch.
pub fn build_cost_matrix<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    fine_grid: &TimeGrid<T>,
    warmup: &[Vec<T>],
    teacher_cfg: &SolverConfig,
) -> Result<CostMatrix<T>> {
    build_cost_matrix_with_metric(oracle, fine_grid, warmup, teacher_cfg, l2_metric)
}

/// [`build_cost_matrix`] with a caller-supplied distance metric.
pub fn build_cost_matrix_with_metric<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    fine_grid: &TimeGrid<T>,
    warmup: &[Vec<T>],
    teacher_cfg: &SolverConfig,
    metric: CostMetric<T>,
) -> Result<CostMatrix<T>> {
    if warmup.is_empty() {
        return Err(Error::InvalidParams("warmup batch is empty".into()));
    }
    for w in warmup {
        if w.len() != oracle.dim() {
            return Err(Error::DimensionMismatch {
                expected: oracle.dim(),
                got: w.len(),
            });
        }
    }
    let cfg = SolverConfig {
        record_denoised: true,
        ..*teacher_cfg
    };
    let g = fine_grid.times().len();
    let times = fine_grid.times().to_vec();

    let per_sample: Vec<Result<Vec<T>>> = warmup
        .par_iter()
        .map(|x_init| {
            let traj: Trajectory<T> = simulate(oracle, fine_grid, x_init, &cfg)?;
            let denoised = traj.denoised().expect("recording enabled");
            let mut table = vec![T::zero(); g * g];
            for i in 0..g {
                let x_i = traj.state(i);
                let sigma_i = times[i];
                // eps at the teacher's own state, recovered from the record
                let eps_i: Vec<T> = x_i
                    .iter()
                    .zip(&denoised[i])
                    .map(|(&x, &r)| (x - r) / sigma_i)
                    .collect();
                for j in (i + 1)..g {
                    let candidate = vecmath::axpy(x_i, times[j] - sigma_i, &eps_i);
                    table[i * g + j] = metric(&candidate, traj.state(j));
                }
            }
            Ok(table)
        })
        .collect();

    let mut sum = vec![T::zero(); g * g];
    for table in per_sample {
        let table = table?;
        for (acc, v) in sum.iter_mut().zip(&table) {
            *acc += *v;
        }
    }
    let inv = T::one() / cast::<T>(warmup.len() as f64);
    let costs: Vec<T> = sum.into_iter().map(|v| v * inv).collect();
    CostMatrix::from_raw(fine_grid.clone(), costs, warmup.len())
}

/// Value table of the schedule DP. One forward pass serves every budget up
/// to the maximum it was built for.
#[derive(Debug, Clone)]
pub struct DpTable<T: Scalar> {
    /// `value[k][j]`: minimal discounted cost from node `j` to the final
    /// node in exactly `k` steps.
    value: Vec<Vec<T>>,
    /// `choice[k][j]`: the smallest next index attaining `value[k][j]`.
    choice: Vec<Vec<usize>>,
    gamma: T,
}

/// Schedule selected by the DP.
#[derive(Debug, Clone, PartialEq)]
pub struct DpResult<T: Scalar> {
    /// Fine-grid indices of the selected path (starts at 0, ends at the last
    /// node, strictly increasing).
    pub indices: Vec<usize>,
    /// The selected times as a sampling schedule.
    pub schedule: TimeGrid<T>,
    /// Total discounted cost of the path.
    pub total_cost: T,
}

/// Builds the DP value table for all budgets `1..=max_steps`. The recurrence
/// is `V[j][k] = min over i > j of (gamma * cost[j][i] + V[i][k-1])`; the
/// discount applies to every local cost uniformly. Ties pick the smallest
/// next index.
pub fn dp_table<T: Scalar>(c: &CostMatrix<T>, max_steps: usize, gamma: T) -> Result<DpTable<T>> {
    let g = c.size();
    if max_steps < 1 || max_steps > g - 1 {
        return Err(Error::InfeasibleBudget {
            steps: max_steps,
            grid: g,
        });
    }
    if !(gamma > T::zero()) {
        return Err(Error::InvalidRange(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    let last = g - 1;
    let mut value = vec![vec![T::infinity(); g]; max_steps + 1];
    let mut choice = vec![vec![usize::MAX; g]; max_steps + 1];
    value[0][last] = T::zero();
    for k in 1..=max_steps {
        for j in 0..last {
            let mut best = T::infinity();
            let mut best_i = usize::MAX;
            for i in (j + 1)..g {
                let tail = value[k - 1][i];
                if !tail.is_finite() {
                    continue;
                }
                let cand = gamma * c.cost(j, i) + tail;
                if cand < best {
                    best = cand;
                    best_i = i;
                }
            }
            value[k][j] = best;
            choice[k][j] = best_i;
        }
    }
    Ok(DpTable {
        value,
        choice,
        gamma,
    })
}

impl<T: Scalar> DpTable<T> {
    /// Extracts the optimal exactly-`steps` path from node 0 to the final
    /// node. Any budget up to the table's maximum can be queried.
    pub fn schedule(&self, c: &CostMatrix<T>, steps: usize) -> Result<DpResult<T>> {
        let g = c.size();
        if steps < 1 || steps >= self.value.len() && steps != self.value.len() - 1 {
            return Err(Error::InfeasibleBudget { steps, grid: g });
        }
        if steps > self.value.len() - 1 {
            return Err(Error::InfeasibleBudget { steps, grid: g });
        }
        let total = self.value[steps][0];
        if !total.is_finite() {
            return Err(Error::InfeasibleBudget { steps, grid: g });
        }
        let mut indices = vec![0usize];
        let mut node = 0usize;
        for k in (1..=steps).rev() {
            node = self.choice[k][node];
            indices.push(node);
        }
        debug_assert_eq!(*indices.last().unwrap(), g - 1);
        let times: Vec<T> = indices.iter().map(|&i| c.grid().times()[i]).collect();
        Ok(DpResult {
            indices,
            schedule: TimeGrid::new(times)?,
            total_cost: total,
        })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }
}

/// Globally optimal discounted `n`-step path from the initial to the final
/// grid node.
pub fn dp_schedule<T: Scalar>(c: &CostMatrix<T>, n: usize, gamma: T) -> Result<DpResult<T>> {
    let table = dp_table(c, n, gamma)?;
    table.schedule(c, n)
}

/// Parameters of the end-to-end schedule search.
#[derive(Debug, Clone)]
pub struct GitsParams<T: Scalar> {
    /// Step budget of the searched schedule.
    pub nfe: usize,
    /// Discount applied to each local cost.
    pub gamma: T,
    /// Fine-grid step count (grid has `fine_steps + 1` nodes).
    pub fine_steps: usize,
    /// Final and initial times of the fine polynomial grid.
    pub t0: T,
    pub t_max: T,
    /// Polynomial exponent of the fine grid.
    pub rho: T,
    /// Number of warmup noises.
    pub warmup: usize,
    /// Seed for the warmup draws.
    pub seed: u64,
    /// Teacher solver for the ground-truth pass.
    pub teacher: SolverConfig,
}

impl<T: Scalar> Default for GitsParams<T> {
    fn default() -> Self {
        GitsParams {
            nfe: 10,
            gamma: cast(1.15),
            fine_steps: 60,
            t0: cast(0.002),
            t_max: cast(80.0),
            rho: cast(7.0),
            warmup: 256,
            seed: 0,
            teacher: SolverConfig::new(SolveMethod::Ipndm),
        }
    }
}

/// Outcome of the pipeline: the selected schedule plus the cost matrix it
/// was derived from.
#[derive(Debug, Clone)]
pub struct GitsOutcome<T: Scalar> {
    pub result: DpResult<T>,
    pub cost_matrix: CostMatrix<T>,
}

/// Draws `count` initial noises `N(0, t_max^2 I)` with one independent
/// stream per sample, so the draws do not depend on the batch size.
pub fn warmup_noises<T: Scalar>(count: usize, dim: usize, t_max: T, seed: u64) -> Vec<Vec<T>> {
    (0..count)
        .map(|idx| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    t_max * cast::<T>(z)
                })
                .collect()
        })
        .collect()
}

/// Full schedule search: polynomial fine grid, warmup teacher pass, cost
/// matrix, and the DP. Deterministic for a fixed seed.
pub fn gits_pipeline<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    params: &GitsParams<T>,
) -> Result<GitsOutcome<T>> {
    if params.warmup == 0 {
        return Err(Error::InvalidParams("warmup count must be positive".into()));
    }
    let fine_grid = polynomial_grid(params.fine_steps, params.t0, params.t_max, params.rho)?;
    let warmup = warmup_noises(params.warmup, oracle.dim(), params.t_max, params.seed);
    let cost_matrix = build_cost_matrix(oracle, &fine_grid, &warmup, &params.teacher)?;
    let result = dp_schedule(&cost_matrix, params.nfe, params.gamma)?;
    Ok(GitsOutcome {
        result,
        cost_matrix,
    })
}
