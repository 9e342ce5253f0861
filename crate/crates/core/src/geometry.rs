//! Trajectory-regularity analytics.
//!
//! Quantifies how far a sampling trajectory strays from the straight line
//! between its endpoints (deviation profile), how much of it a few orthogonal
//! directions capture (PCA reconstruction), how two projected trajectories
//! align (orthogonal Procrustes), and the curvature/torsion of the projected
//! 3-D curve (windowed least-squares Frenet-Serret estimates).

use nalgebra::RealField;

use crate::error::{Error, Result};
use crate::oracles::{coefficient_entropy, ScoreOracle};
use crate::scalar::{cast, Scalar};
use crate::solvers::Trajectory;
use crate::vecmath::{axpy_mut, dist, dot, norm, sub};

/// Per-state deviation measurements of one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationProfile<T: Scalar> {
    /// Perpendicular distance from each state to the endpoint displacement
    /// vector. Zero at both endpoints.
    pub d_td: Vec<T>,
    /// Distance from each state to the final sample. Zero at the final state.
    pub d_fsd: Vec<T>,
    /// `max(d_td) / |x_final - x_initial|`.
    pub max_ratio: T,
}

/// Deviation profile of a trajectory: for every state, the perpendicular
/// distance to the line through the endpoints and the distance to the final
/// sample.
pub fn deviation_profile<T: Scalar>(traj: &Trajectory<T>) -> Result<DeviationProfile<T>> {
    let states = traj.states();
    if states.len() < 2 {
        return Err(Error::InvalidParams("trajectory too short".into()));
    }
    let first = &states[0];
    let last = &states[states.len() - 1];
    let v = sub(last, first);
    let v_norm = norm(&v);
    if v_norm < cast(1e-12) {
        return Err(Error::DegenerateEndpoints(v_norm.to_f64().unwrap_or(0.0)));
    }
    let mut d_td = Vec::with_capacity(states.len());
    let mut d_fsd = Vec::with_capacity(states.len());
    let mut max_td = T::zero();
    for x in states {
        let u = sub(last, x);
        // perpendicular component of u against v; equivalent to
        // sqrt(|u|^2 - (u.v/|v|)^2) but immune to the cancellation that
        // form suffers on nearly collinear inputs
        let coeff = dot(&u, &v) / (v_norm * v_norm);
        let mut perp = u.clone();
        axpy_mut(&mut perp, -coeff, &v);
        let td = norm(&perp);
        if td > max_td {
            max_td = td;
        }
        d_td.push(td);
        d_fsd.push(norm(&u));
    }
    Ok(DeviationProfile {
        d_td,
        d_fsd,
        max_ratio: max_td / v_norm,
    })
}

/// Dense symmetric-matrix and small-SVD helpers, kept in a `RealField`-only
/// scope so scalar method calls resolve unambiguously.
mod dense {
    use nalgebra::{DMatrix, Matrix2, Matrix3, RealField, SMatrix, SVector};

    /// Eigen-decomposition of a symmetric matrix, sorted by descending
    /// eigenvalue. Returns (eigenvalues, eigenvectors as rows).
    pub fn sym_eig_desc<T: RealField + Copy>(m: DMatrix<T>) -> (Vec<T>, Vec<Vec<T>>) {
        let n = m.nrows();
        let eig = m.symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().cloned().collect())
            .collect();
        (values, vectors)
    }

    /// Orthogonal factor `U V^T` from the SVD of a 3x3 matrix.
    pub fn orthogonal_polar3<T: RealField + Copy>(m: Matrix3<T>) -> Matrix3<T> {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd with u");
        let vt = svd.v_t.expect("svd with v_t");
        u * vt
    }

    /// Orthogonal factor `U V^T` from the SVD of a 2x2 matrix.
    pub fn orthogonal_polar2<T: RealField + Copy>(m: Matrix2<T>) -> Matrix2<T> {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd with u");
        let vt = svd.v_t.expect("svd with v_t");
        u * vt
    }

    /// Solves the 4x4 system `a x = b` (normal equations of a cubic fit).
    pub fn solve4<T: RealField + Copy>(a: [[T; 4]; 4], b: [T; 4]) -> Option<[T; 4]> {
        let m = SMatrix::<T, 4, 4>::from_fn(|i, j| a[i][j]);
        let rhs = SVector::<T, 4>::from_column_slice(&b);
        m.lu().solve(&rhs).map(|x| [x[0], x[1], x[2], x[3]])
    }
}

/// PCA reconstruction report for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaReport<T: Scalar> {
    /// Subspace dimension used for reconstruction (displacement direction
    /// plus `k - 1` principal components of the complement).
    pub k: usize,
    /// Per-state L2 reconstruction error.
    pub recon_error: Vec<T>,
    /// Eigenvalue fractions of the top-`k` principal components of the
    /// mean-centered orthogonal complement, zero-padded past its rank.
    pub variance_ratios: Vec<T>,
    /// Basis: normalized displacement direction, then the `k - 1` complement
    /// components actually used for reconstruction.
    pub basis: Vec<Vec<T>>,
}

fn center_rows<T: Scalar>(rows: &[Vec<T>]) -> (Vec<Vec<T>>, Vec<T>) {
    let d = rows[0].len();
    let mut mean = vec![T::zero(); d];
    for r in rows {
        axpy_mut(&mut mean, T::one(), r);
    }
    let inv = T::one() / cast::<T>(rows.len() as f64);
    for m in mean.iter_mut() {
        *m *= inv;
    }
    let centered = rows.iter().map(|r| sub(r, &mean)).collect();
    (centered, mean)
}

/// Principal components of a centered point set, via the covariance matrix
/// when `d <= n` and the Gram matrix otherwise. Returns eigenvalues of the
/// scatter (descending, tiny negatives clamped to zero) and the leading
/// `max_vecs` unit components.
fn scatter_pca<T: Scalar + RealField>(
    centered: &[Vec<T>],
    max_vecs: usize,
) -> (Vec<T>, Vec<Vec<T>>) {
    use nalgebra::DMatrix;
    let n = centered.len();
    let d = centered[0].len();
    let (mut values, raw_vectors): (Vec<T>, Vec<Vec<T>>) = if d <= n {
        let mut m = DMatrix::<T>::zeros(d, d);
        for row in centered {
            for i in 0..d {
                for j in i..d {
                    m[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..i {
                m[(i, j)] = m[(j, i)];
            }
        }
        let (vals, vecs) = dense::sym_eig_desc(m);
        (vals, vecs.into_iter().take(max_vecs).collect())
    } else {
        let mut g = DMatrix::<T>::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = dot(&centered[i], &centered[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        let (vals, gram_vecs) = dense::sym_eig_desc(g);
        let mut comps = Vec::new();
        for (idx, gv) in gram_vecs.iter().enumerate().take(max_vecs) {
            if vals[idx] <= T::zero() {
                break;
            }
            let mut c = vec![T::zero(); d];
            for (w, row) in gv.iter().zip(centered) {
                axpy_mut(&mut c, *w, row);
            }
            let len = norm(&c);
            if len > T::zero() {
                for x in c.iter_mut() {
                    *x /= len;
                }
            }
            comps.push(c);
        }
        (vals, comps)
    };
    for v in values.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    // drop components past the numerical rank: their eigenvectors are
    // arbitrary directions of the null space
    let floor = values.first().map_or(T::zero(), |&top| {
        top * cast::<T>(1e-12)
    });
    let rank = values.iter().take_while(|&&v| v > floor).count();
    let vectors = raw_vectors.into_iter().take(rank).collect();
    (values, vectors)
}

/// Projects each state onto the span of the endpoint displacement direction
/// and the top `k - 1` principal components of the mean-centered orthogonal
/// complement. Rank-deficient complements are handled by zero-padding: the
/// missing components contribute nothing and the matching variance ratios
/// are zero.
pub fn pca_reconstruct<T: Scalar + RealField>(
    traj: &Trajectory<T>,
    k: usize,
) -> Result<PcaReport<T>> {
    if k < 1 {
        return Err(Error::InvalidParams("k must be >= 1".into()));
    }
    let states = traj.states();
    if states.len() <= k {
        return Err(Error::InvalidParams(format!(
            "trajectory length {} must exceed k = {}",
            states.len(),
            k
        )));
    }
    let first = &states[0];
    let last = &states[states.len() - 1];
    let v = sub(last, first);
    let v_norm = norm(&v);
    if v_norm < cast(1e-12) {
        return Err(Error::DegenerateEndpoints(v_norm.to_f64().unwrap_or(0.0)));
    }
    let v_hat: Vec<T> = v.iter().map(|&x| x / v_norm).collect();

    // complement projections: x - (x . v_hat) v_hat
    let complement: Vec<Vec<T>> = states
        .iter()
        .map(|x| {
            let c = dot(x, &v_hat);
            let mut out = x.clone();
            axpy_mut(&mut out, -c, &v_hat);
            out
        })
        .collect();
    let (centered, comp_mean) = center_rows(&complement);
    let (eigvals, comps) = scatter_pca(&centered, k.saturating_sub(1));

    let total: T = eigvals.iter().cloned().sum();
    let mut variance_ratios = vec![T::zero(); k];
    if total > T::zero() {
        for (slot, &val) in variance_ratios.iter_mut().zip(&eigvals) {
            *slot = val / total;
        }
    }

    let mut recon_error = Vec::with_capacity(states.len());
    for (x, c) in states.iter().zip(&centered) {
        // reconstruction: (x . v_hat) v_hat + complement mean + retained components
        let mut recon: Vec<T> = comp_mean.clone();
        axpy_mut(&mut recon, dot(x, &v_hat), &v_hat);
        for w in &comps {
            axpy_mut(&mut recon, dot(c, w), w);
        }
        recon_error.push(dist(x, &recon));
    }

    let mut basis = vec![v_hat];
    basis.extend(comps);
    Ok(PcaReport {
        k,
        recon_error,
        variance_ratios,
        basis,
    })
}

/// Eigenvalue fractions of the top-`k` principal components of the
/// mean-centered trajectory itself (no displacement-vector split).
pub fn direct_pca_ratios<T: Scalar + RealField>(states: &[Vec<T>], k: usize) -> Result<Vec<T>> {
    if states.len() < 2 {
        return Err(Error::InvalidParams("need at least 2 states".into()));
    }
    let (centered, _) = center_rows(states);
    let (eigvals, _) = scatter_pca(&centered, 0);
    let total: T = eigvals.iter().cloned().sum();
    let mut out = vec![T::zero(); k];
    if total > T::zero() {
        for (slot, &val) in out.iter_mut().zip(&eigvals) {
            *slot = val / total;
        }
    }
    Ok(out)
}

/// Solves the orthogonal Procrustes problem `min_O |Rref - R O|_F` over
/// orthogonal `O` (rotations and reflections) via the SVD of `R^T Rref`.
/// With `fix_first_axis` the first coordinate is left untouched and only the
/// remaining two are aligned. Returns the optimal transform and the attained
/// residual.
pub fn procrustes_align<T: Scalar + RealField>(
    r: &[[T; 3]],
    r_ref: &[[T; 3]],
    fix_first_axis: bool,
) -> Result<([[T; 3]; 3], T)> {
    use nalgebra::{Matrix2, Matrix3};
    if r.len() != r_ref.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} rows",
            r.len(),
            r_ref.len()
        )));
    }
    if r.len() < 3 {
        return Err(Error::InvalidParams("need at least 3 rows".into()));
    }

    let o: [[T; 3]; 3] = if fix_first_axis {
        let mut m = Matrix2::<T>::zeros();
        for (a, b) in r.iter().zip(r_ref) {
            for i in 0..2 {
                for j in 0..2 {
                    m[(i, j)] += a[i + 1] * b[j + 1];
                }
            }
        }
        let q = dense::orthogonal_polar2(m);
        [
            [T::one(), T::zero(), T::zero()],
            [T::zero(), q[(0, 0)], q[(0, 1)]],
            [T::zero(), q[(1, 0)], q[(1, 1)]],
        ]
    } else {
        let mut m = Matrix3::<T>::zeros();
        for (a, b) in r.iter().zip(r_ref) {
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] += a[i] * b[j];
                }
            }
        }
        let q = dense::orthogonal_polar3(m);
        let mut out = [[T::zero(); 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = q[(i, j)];
            }
        }
        out
    };

    Ok((o, procrustes_residual(r, r_ref, &o)))
}

/// Frobenius norm of `Rref - R O`.
pub fn procrustes_residual<T: Scalar>(r: &[[T; 3]], r_ref: &[[T; 3]], o: &[[T; 3]; 3]) -> T {
    let mut sum = T::zero();
    for (a, b) in r.iter().zip(r_ref) {
        for j in 0..3 {
            let mapped = a[0] * o[0][j] + a[1] * o[1][j] + a[2] * o[2][j];
            let e = b[j] - mapped;
            sum += e * e;
        }
    }
    sum.sqrt()
}

/// Curvature/torsion estimates of a discrete 3-D curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FrenetReport<T: Scalar> {
    /// Cumulative chord length at every curve point.
    pub arc_length: Vec<T>,
    /// Indices of the window centers (interior points with a full window).
    pub centers: Vec<usize>,
    /// Curvature per center, `|r' x r''| / |r'|^3`.
    pub curvature: Vec<T>,
    /// Torsion per center, `((r' x r'') . r''') / |r' x r''|^2`; zero where
    /// the formula is singular (see `torsion_singular`).
    pub torsion: Vec<T>,
    /// True where `|r' x r''|` fell below threshold and torsion was zeroed.
    pub torsion_singular: Vec<bool>,
    /// Window size used for the least-squares fits.
    pub window: usize,
}

fn cross3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn norm3<T: Scalar>(a: &[T; 3]) -> T {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Frenet-Serret statistics with the curve parameterized by its sample index.
pub fn frenet_stats<T: Scalar + RealField>(
    curve: &[[T; 3]],
    window: usize,
) -> Result<FrenetReport<T>> {
    let params: Vec<T> = (0..curve.len()).map(|i| cast::<T>(i as f64)).collect();
    frenet_stats_param(curve, &params, window)
}

/// Frenet-Serret statistics with an explicit strictly increasing curve
/// parameter (for sampling trajectories: `xi = T - t`). Derivatives at each
/// interior point come from a cubic least-squares fit over the surrounding
/// window; curvature and torsion follow from the standard formulas
/// `kappa = |r' x r''| / |r'|^3` and
/// `tau = ((r' x r'') . r''') / |r' x r''|^2`.
pub fn frenet_stats_param<T: Scalar + RealField>(
    curve: &[[T; 3]],
    params: &[T],
    window: usize,
) -> Result<FrenetReport<T>> {
    let n = curve.len();
    if params.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} params vs {} points",
            params.len(),
            n
        )));
    }
    if window < 7 || window.is_multiple_of(2) {
        return Err(Error::InvalidParams(format!(
            "window must be odd and >= 7, got {window}"
        )));
    }
    if n <= window {
        return Err(Error::WindowTooLarge { window, points: n });
    }

    let mut arc_length = Vec::with_capacity(n);
    let mut acc = T::zero();
    arc_length.push(acc);
    for w in curve.windows(2) {
        let d = [w[1][0] - w[0][0], w[1][1] - w[0][1], w[1][2] - w[0][2]];
        acc += norm3(&d);
        arc_length.push(acc);
    }

    let half = window / 2;
    let mut centers = Vec::new();
    let mut curvature = Vec::new();
    let mut torsion = Vec::new();
    let mut torsion_singular = Vec::new();
    let singular_floor = cast::<T>(1e-12);

    for c in half..n - half {
        let lo = c - half;
        let hi = c + half;
        // scale the local parameter so the normal equations stay conditioned
        let mut scale = T::zero();
        for j in lo..=hi {
            let d = num_traits::Float::abs(params[j] - params[c]);
            if d > scale {
                scale = d;
            }
        }
        if !(scale > T::zero()) {
            return Err(Error::InvalidParams(
                "curve parameter must be strictly increasing".into(),
            ));
        }
        let mut moments = [T::zero(); 7];
        for j in lo..=hi {
            let u = (params[j] - params[c]) / scale;
            let mut p = T::one();
            for m in moments.iter_mut() {
                *m += p;
                p *= u;
            }
        }
        let a = [
            [moments[0], moments[1], moments[2], moments[3]],
            [moments[1], moments[2], moments[3], moments[4]],
            [moments[2], moments[3], moments[4], moments[5]],
            [moments[3], moments[4], moments[5], moments[6]],
        ];
        let mut d1 = [T::zero(); 3];
        let mut d2 = [T::zero(); 3];
        let mut d3 = [T::zero(); 3];
        let mut ok = true;
        for axis in 0..3 {
            let mut b = [T::zero(); 4];
            for j in lo..=hi {
                let u = (params[j] - params[c]) / scale;
                let y = curve[j][axis];
                let mut p = T::one();
                for bm in b.iter_mut() {
                    *bm += y * p;
                    p *= u;
                }
            }
            match dense::solve4(a, b) {
                Some(coef) => {
                    d1[axis] = coef[1] / scale;
                    d2[axis] = (coef[2] + coef[2]) / (scale * scale);
                    d3[axis] = cast::<T>(6.0) * coef[3] / (scale * scale * scale);
                }
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            // singular fit (e.g. exactly repeated points): report zeros
            centers.push(c);
            curvature.push(T::zero());
            torsion.push(T::zero());
            torsion_singular.push(true);
            continue;
        }
        let cr = cross3(&d1, &d2);
        let cr_norm = norm3(&cr);
        let speed = norm3(&d1);
        let kappa = if speed > T::zero() {
            cr_norm / (speed * speed * speed)
        } else {
            T::zero()
        };
        let (tau, singular) = if cr_norm < singular_floor {
            (T::zero(), true)
        } else {
            (
                (cr[0] * d3[0] + cr[1] * d3[1] + cr[2] * d3[2]) / (cr_norm * cr_norm),
                false,
            )
        };
        centers.push(c);
        curvature.push(kappa);
        torsion.push(tau);
        torsion_singular.push(singular);
    }

    Ok(FrenetReport {
        arc_length,
        centers,
        curvature,
        torsion,
        torsion_singular,
        window,
    })
}

/// Noise-prediction norms per state and the accumulated trajectory length
/// `sum (sigma_n - sigma_{n+1}) |eps at the step start|`.
pub fn eps_profile<T: Scalar>(traj: &Trajectory<T>) -> Result<(Vec<T>, T)> {
    let norms = traj.eps_norms().ok_or(Error::MissingDenoised)?.to_vec();
    let times = traj.times().times();
    let mut total = T::zero();
    for n in 0..times.len() - 1 {
        total += (times[n] - times[n + 1]) * norms[n];
    }
    Ok((norms, total))
}

/// Shannon entropy of the convex-combination weights at every state, plus its
/// first-order difference in time (one entry per step). Requires an oracle
/// that exposes weights (the empirical-KDE oracle).
pub fn entropy_profile<T: Scalar>(
    oracle: &dyn ScoreOracle<T>,
    traj: &Trajectory<T>,
) -> Result<(Vec<T>, Vec<T>)> {
    let times = traj.times().times();
    let mut entropy = Vec::with_capacity(times.len());
    for (x, &t) in traj.states().iter().zip(times) {
        let w = oracle
            .convex_weights(x, t)
            .ok_or(Error::WeightsUnavailable)?;
        // the stabilizing bias inside the log can push a one-hot entropy a
        // hair below zero; the profile is clamped to the valid range
        entropy.push(coefficient_entropy(&w)?.max(T::zero()));
    }
    let mut diff = Vec::with_capacity(times.len() - 1);
    for n in 0..times.len() - 1 {
        diff.push((entropy[n + 1] - entropy[n]) / (times[n + 1] - times[n]));
    }
    Ok((entropy, diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{Dataset, LowRankGaussian};
    use crate::schedules::{polynomial_grid, TimeGrid};
    use crate::solvers::{simulate, SolverConfig};
    use approx::assert_abs_diff_eq;

    fn traj_from_states(states: Vec<Vec<f64>>) -> Trajectory<f64> {
        let n = states.len();
        let times: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
        Trajectory::from_parts(TimeGrid::new(times).unwrap(), states, None, None, 0).unwrap()
    }

    #[test]
    fn deviation_hand_example() {
        let traj = traj_from_states(vec![
            vec![0.0, 0.0],
            vec![0.5, 1.0],
            vec![1.0, 0.0],
        ]);
        let p = deviation_profile(&traj).unwrap();
        assert_abs_diff_eq!(p.d_td[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.d_td[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.d_td[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.d_fsd[1], 1.25f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(p.d_fsd[2], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.max_ratio, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn deviation_collinear_is_zero() {
        let traj = traj_from_states(vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 2.0, -1.0],
            vec![2.0, 4.0, -2.0],
            vec![3.0, 6.0, -3.0],
        ]);
        let p = deviation_profile(&traj).unwrap();
        for td in &p.d_td {
            assert!(td.abs() < 1e-9);
        }
    }

    #[test]
    fn deviation_pythagoras_identity() {
        let traj = traj_from_states(vec![
            vec![0.3, -1.0, 2.0],
            vec![4.0, 2.5, -0.4],
            vec![8.0, -3.0, 1.1],
            vec![10.0, 5.0, 5.0],
        ]);
        let p = deviation_profile(&traj).unwrap();
        let states = traj.states();
        let last = &states[states.len() - 1];
        let first = &states[0];
        let v = sub(last, first);
        let v_norm = norm(&v);
        for (i, x) in states.iter().enumerate() {
            let u = sub(last, x);
            let proj = dot(&u, &v) / v_norm;
            let lhs = p.d_td[i] * p.d_td[i] + proj * proj;
            let rhs = dot(&u, &u);
            assert!((lhs - rhs).abs() <= 1e-9 * rhs.max(1.0));
        }
    }

    #[test]
    fn deviation_rejects_coincident_endpoints() {
        let traj = traj_from_states(vec![vec![1.0, 1.0], vec![2.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(
            deviation_profile(&traj),
            Err(Error::DegenerateEndpoints(_))
        ));
    }

    #[test]
    fn pca_planar_trajectory_is_exact_at_k2() {
        // curve in the plane spanned by e1 (the displacement direction) and e2
        let states: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let t = i as f64 / 11.0;
                vec![10.0 * t, (std::f64::consts::PI * t).sin(), 0.0, 0.0]
            })
            .collect();
        let traj = traj_from_states(states);
        let rep = pca_reconstruct(&traj, 2).unwrap();
        for e in &rep.recon_error {
            assert!(e.abs() < 1e-10);
        }
        assert_abs_diff_eq!(rep.variance_ratios[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn pca_full_rank_is_exact_and_errors_decrease_in_k() {
        let states: Vec<Vec<f64>> = (0..14)
            .map(|i| {
                let t = i as f64;
                vec![t, (0.9 * t).sin(), (0.4 * t).cos(), 0.05 * t * t]
            })
            .collect();
        let traj = traj_from_states(states.clone());
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let rep = pca_reconstruct(&traj, k).unwrap();
            let maxerr = rep.recon_error.iter().cloned().fold(0.0f64, f64::max);
            assert!(maxerr <= prev + 1e-12, "error grew at k = {k}");
            prev = maxerr;
            // ratios are a probability-like vector
            let mut cum = 0.0;
            let mut last = f64::INFINITY;
            for &r in &rep.variance_ratios {
                assert!(r >= 0.0 && r <= last);
                last = r;
                cum += r;
            }
            assert!(cum <= 1.0 + 1e-9);
        }
        let rep = pca_reconstruct(&traj, 4).unwrap();
        for e in &rep.recon_error {
            assert!(e.abs() < 1e-9);
        }
    }

    #[test]
    fn pca_rank_deficient_complement_zero_pads() {
        // straight line: complement is identically zero
        let states: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let traj = traj_from_states(states);
        let rep = pca_reconstruct(&traj, 3).unwrap();
        for r in &rep.variance_ratios {
            assert_eq!(*r, 0.0);
        }
        for e in &rep.recon_error {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn direct_pca_captures_dominant_direction() {
        let states: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64;
                vec![100.0 * t, (t * 0.7).sin(), 0.01 * t]
            })
            .collect();
        let ratios = direct_pca_ratios(&states, 3).unwrap();
        assert!(ratios[0] > 0.999);
        assert!(ratios.iter().sum::<f64>() <= 1.0 + 1e-9);
    }

    fn rotation3(a: f64, b: f64, c: f64, reflect: bool) -> [[f64; 3]; 3] {
        let (sa, ca) = a.sin_cos();
        let (sb, cb) = b.sin_cos();
        let (sc, cc) = c.sin_cos();
        // Rz(a) * Ry(b) * Rx(c), optional reflection of the last axis
        let rz = [[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]];
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        let rx = [[1.0, 0.0, 0.0], [0.0, cc, -sc], [0.0, sc, cc]];
        let mul = |m: [[f64; 3]; 3], n: [[f64; 3]; 3]| {
            let mut out = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        out[i][j] += m[i][k] * n[k][j];
                    }
                }
            }
            out
        };
        let mut q = mul(mul(rz, ry), rx);
        if reflect {
            for row in q.iter_mut() {
                row[2] = -row[2];
            }
        }
        q
    }

    fn apply3(points: &[[f64; 3]], q: &[[f64; 3]; 3]) -> Vec<[f64; 3]> {
        points
            .iter()
            .map(|p| {
                let mut out = [0.0; 3];
                for j in 0..3 {
                    out[j] = p[0] * q[0][j] + p[1] * q[1][j] + p[2] * q[2][j];
                }
                out
            })
            .collect()
    }

    fn sample_curve() -> Vec<[f64; 3]> {
        (0..25)
            .map(|i| {
                let t = i as f64 * 0.3;
                [t, (1.3 * t).sin() * 2.0, (0.7 * t).cos()]
            })
            .collect()
    }

    #[test]
    fn procrustes_identity_case() {
        let r = sample_curve();
        let (o, resid) = procrustes_align(&r, &r, false).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(o[i][j], want, epsilon = 1e-10);
            }
        }
        assert!(resid < 1e-10);
    }

    #[test]
    fn procrustes_recovers_planted_transform() {
        let r = sample_curve();
        for (idx, reflect) in [(0usize, false), (1, true), (2, false)] {
            let q = rotation3(
                0.3 + idx as f64,
                -0.8 + 0.2 * idx as f64,
                1.1 - 0.4 * idx as f64,
                reflect,
            );
            let r_ref = apply3(&r, &q);
            let (o, resid) = procrustes_align(&r, &r_ref, false).unwrap();
            assert!(resid <= 1e-10);
            for i in 0..3 {
                for j in 0..3 {
                    assert_abs_diff_eq!(o[i][j], q[i][j], epsilon = 1e-10);
                }
            }
            // orthogonality of the output
            for i in 0..3 {
                for j in 0..3 {
                    let g: f64 = (0..3).map(|k| o[k][i] * o[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(g, want, epsilon = 1e-10);
                }
            }
        }
    }

    #[test]
    fn procrustes_beats_random_orthogonal_matrices() {
        let r = sample_curve();
        let q = rotation3(0.9, 0.4, -1.3, false);
        let mut r_ref = apply3(&r, &q);
        // perturb so the optimum is not exactly attainable
        for (i, p) in r_ref.iter_mut().enumerate() {
            p[0] += 0.05 * ((i * 7 % 13) as f64 - 6.0) / 6.0;
            p[1] -= 0.03 * ((i * 5 % 11) as f64 - 5.0) / 5.0;
        }
        let (_, best) = procrustes_align(&r, &r_ref, false).unwrap();
        let mut state = 0x12345678u64;
        let mut unif = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * std::f64::consts::PI
        };
        for trial in 0..100 {
            let q = rotation3(unif(), unif(), unif(), trial % 2 == 0);
            let resid = procrustes_residual(&r, &r_ref, &q);
            assert!(best <= resid + 1e-12);
        }
    }

    #[test]
    fn procrustes_residual_invariant_under_joint_rotation() {
        let r = sample_curve();
        let q = rotation3(0.2, 0.5, -0.7, false);
        let mut r_ref = apply3(&r, &rotation3(1.0, -0.3, 0.8, false));
        for (i, p) in r_ref.iter_mut().enumerate() {
            p[2] += 0.02 * (i as f64).sin();
        }
        let (_, resid) = procrustes_align(&r, &r_ref, false).unwrap();
        let (_, resid_rot) =
            procrustes_align(&apply3(&r, &q), &apply3(&r_ref, &q), false).unwrap();
        assert!((resid - resid_rot).abs() < 1e-9);
    }

    #[test]
    fn procrustes_fix_first_axis_keeps_first_coordinate() {
        let r = sample_curve();
        // plant a rotation in the last two coordinates only
        let theta: f64 = 0.77;
        let q = [
            [1.0, 0.0, 0.0],
            [0.0, theta.cos(), -theta.sin()],
            [0.0, theta.sin(), theta.cos()],
        ];
        let r_ref = apply3(&r, &q);
        let (o, resid) = procrustes_align(&r, &r_ref, true).unwrap();
        assert!(resid < 1e-10);
        for i in 0..3 {
            for j in 0..3 {
                assert_abs_diff_eq!(o[i][j], q[i][j], epsilon = 1e-10);
            }
        }
        assert_eq!(o[0][0], 1.0);
        assert_eq!(o[0][1], 0.0);
        assert_eq!(o[1][0], 0.0);
    }

    #[test]
    fn procrustes_shape_mismatch_is_rejected() {
        let r = sample_curve();
        assert!(procrustes_align(&r, &r[..10], false).is_err());
    }

    #[test]
    fn frenet_straight_line_has_zero_curvature() {
        let curve: Vec<[f64; 3]> = (0..40)
            .map(|i| {
                let t = i as f64 * 0.1;
                [2.0 * t, -t, 0.5 * t]
            })
            .collect();
        let rep = frenet_stats(&curve, 9).unwrap();
        for k in &rep.curvature {
            assert!(k.abs() <= 1e-10);
        }
        // arc length strictly increasing
        for w in rep.arc_length.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn frenet_circle_curvature_and_torsion() {
        let rho = 3.0;
        let n = 200;
        let curve: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let u = i as f64 * 2.0 * std::f64::consts::PI / n as f64;
                [rho * u.cos(), rho * u.sin(), 0.0]
            })
            .collect();
        let rep = frenet_stats(&curve, 11).unwrap();
        let kappa_scale = 1.0 / rho;
        for (&k, (&t, &sing)) in rep
            .curvature
            .iter()
            .zip(rep.torsion.iter().zip(&rep.torsion_singular))
        {
            assert!((k - 1.0 / rho).abs() / (1.0 / rho) < 0.01, "kappa {k}");
            if !sing {
                assert!(t.abs() <= 1e-6 * kappa_scale, "tau {t}");
            }
        }
    }

    #[test]
    fn frenet_helix_matches_analytic_values() {
        let (a, b) = (2.0, 0.5);
        let n = 400;
        let curve: Vec<[f64; 3]> = (0..n)
            .map(|i| {
                let u = i as f64 * 4.0 * std::f64::consts::PI / n as f64;
                [a * u.cos(), a * u.sin(), b * u]
            })
            .collect();
        let rep = frenet_stats(&curve, 11).unwrap();
        let kappa_want = a / (a * a + b * b); // 0.47058823529411764
        let tau_want = b / (a * a + b * b); // 0.11764705882352941
        for (&k, &t) in rep.curvature.iter().zip(&rep.torsion) {
            assert!((k - kappa_want).abs() / kappa_want < 0.01, "kappa {k}");
            assert!((t - tau_want).abs() / tau_want < 0.01, "tau {t}");
        }
    }

    #[test]
    fn frenet_window_validation() {
        let curve: Vec<[f64; 3]> = (0..10).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert!(frenet_stats(&curve, 5).is_err());
        assert!(frenet_stats(&curve, 8).is_err());
        assert!(matches!(
            frenet_stats(&curve, 11),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn eps_profile_single_point_oracle_reproduces_noise_norm() {
        let y = vec![1.0, -1.0, 0.5, 2.0];
        let data = Dataset::new(vec![y.clone()]).unwrap();
        let z = [0.5, 0.5, -0.5, -0.5]; // unit-norm noise direction
        let sigma_t = 80.0;
        let x_init: Vec<f64> = y
            .iter()
            .zip(&z)
            .map(|(&yi, &zi)| yi + sigma_t * zi)
            .collect();
        let grid = polynomial_grid(16, 0.002, sigma_t, 7.0).unwrap();
        let traj = simulate(&data, &grid, &x_init, &SolverConfig::default()).unwrap();
        let (norms, total) = eps_profile(&traj).unwrap();
        // for a single data point eps = (x - y)/sigma stays exactly the initial noise
        for n in &norms {
            assert_abs_diff_eq!(*n, 1.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(total, (sigma_t - 0.002) * 1.0, epsilon = 1e-6);
    }

    #[test]
    fn eps_profile_requires_recording() {
        let data = Dataset::new(vec![vec![0.0, 0.0]]).unwrap();
        let grid = polynomial_grid(4, 0.01, 10.0, 7.0).unwrap();
        let traj = simulate(
            &data,
            &grid,
            &[1.0, 1.0],
            &SolverConfig::default().without_recording(),
        )
        .unwrap();
        assert!(matches!(eps_profile(&traj), Err(Error::MissingDenoised)));
    }

    #[test]
    fn entropy_profile_tracks_weight_collapse() {
        // two well-separated clusters of two points each
        let data = Dataset::new(vec![
            vec![5.0, 5.0],
            vec![5.2, 4.8],
            vec![-5.0, -5.0],
            vec![-5.2, -4.8],
        ])
        .unwrap();
        let grid = polynomial_grid(60, 0.002, 80.0, 7.0).unwrap();
        let traj = simulate(&data, &grid, &[30.0, 70.0], &SolverConfig::default()).unwrap();
        let (h, dh) = entropy_profile(&data, &traj).unwrap();
        assert_eq!(h.len(), traj.states().len());
        assert_eq!(dh.len(), traj.states().len() - 1);
        let log_count = (4.0f64).ln();
        assert!((h[0] - log_count).abs() / log_count < 0.01, "H0 = {}", h[0]);
        assert!(*h.last().unwrap() < 0.1);
        for &v in &h {
            assert!(v >= 0.0 && v <= log_count + 1e-9);
        }
    }

    #[test]
    fn entropy_profile_single_point_is_zero() {
        let data = Dataset::new(vec![vec![0.0]]).unwrap();
        let grid = polynomial_grid(5, 0.01, 10.0, 7.0).unwrap();
        let traj = simulate(&data, &grid, &[3.0], &SolverConfig::default()).unwrap();
        let (h, _) = entropy_profile(&data, &traj).unwrap();
        for &v in &h {
            assert!(f64::abs(v) < 1e-8);
        }
    }

    #[test]
    fn entropy_profile_rejects_weightless_oracles() {
        let g = LowRankGaussian::point_mass(vec![0.0, 0.0]).unwrap();
        let grid = polynomial_grid(4, 0.01, 10.0, 7.0).unwrap();
        let traj = simulate(&g, &grid, &[1.0, 2.0], &SolverConfig::default()).unwrap();
        assert!(matches!(
            entropy_profile(&g, &traj),
            Err(Error::WeightsUnavailable)
        ));
    }
}
