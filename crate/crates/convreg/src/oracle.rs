//! Dense reference solver producing certified high-accuracy solutions.
//!
//! Intended for validating the scalable solvers on instances small enough
//! that cubic dense linear algebra is affordable. The pipeline is
//!
//! 1. a dense feasible-start interior-point solve of the (possibly
//!    regularized) quadratic program, using generic row outer products and a
//!    dense Cholesky factorization — deliberately none of the structured
//!    elimination the production solvers use;
//! 2. an active-set crossover polish that reconstructs the exact
//!    optimality system on the rows the interior-point solve identifies as
//!    tight, removing the `O(√μ)` centering bias;
//! 3. for the unregularized problem, a per-point projection that replaces
//!    the (non-unique) subgradients by the minimum-norm ones;
//! 4. a final check of the full optimality system; a solution that misses
//!    its certificates is reported as an error, never returned silently.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::dataset::{Dataset, PrimalPoint};
use crate::error::{Error, Result};
use crate::ipm::block_slater;
use crate::la::{dot, norm2};
use crate::ops::{pair_of_row, ConstraintOperator};

/// Tuning for the reference solve.
#[derive(Debug, Clone)]
pub struct OracleConfig {
    /// Largest instance size accepted; the dense solve is cubic in
    /// `N(1+n)`, so this guards against accidental huge runs.
    pub cap: usize,
    /// Target on the complementarity measure, relative to the squared
    /// observation scale.
    pub mu_tol: f64,
    /// Dual-residual tolerance relative to `1 + ‖c‖`.
    pub r_tol: f64,
    /// Interior-point iteration cap.
    pub max_iters: usize,
    /// Certificate budget, relative to the instance scales (see
    /// [`KktReport`] for the exact normalizations).
    pub verify_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            cap: 60,
            mu_tol: 1e-12,
            r_tol: 1e-10,
            max_iters: 300,
            verify_tol: 1e-9,
        }
    }
}

/// Residuals of the optimality system at the emitted solution.
///
/// Normalizations: with `Y = 1 + max|ȳ|` and `X = 1 + max|x̄|`, the budgets
/// enforced on emit are `stationarity_y ≤ tol·Y` (root mean square),
/// `stationarity_xi ≤ tol·Y·X` (RMS), `min_slack ≥ −tol·Y·X`,
/// `complementarity ≤ tol·Y²·X`, and `least_norm ≤ tol·(1 + max|h|)` per
/// projection, where `tol` is [`OracleConfig::verify_tol`].
#[derive(Debug, Clone, Copy)]
pub struct KktReport {
    /// RMS of `y − ȳ − A₁ᵀθ`.
    pub stationarity_y: f64,
    /// RMS of `γξ − A₂ᵀθ` (of `A₂ᵀθ` when `γ = 0`).
    pub stationarity_xi: f64,
    /// Smallest constraint value of the emitted model.
    pub min_slack: f64,
    /// Largest product `θ_r · slack_r`.
    pub complementarity: f64,
    /// Worst minimum-norm certificate residual over the per-point
    /// projections (`0` when `γ > 0`).
    pub least_norm: f64,
}

/// Certified reference solution.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Fit values and subgradients; the subgradients are the minimum-norm
    /// ones when `γ = 0`.
    pub point: PrimalPoint,
    /// `½‖y − ȳ‖²`, plus `(γ/2)‖ξ‖²` when `γ > 0`.
    pub objective: f64,
    /// Multipliers, one per ordered constraint row.
    pub theta: Vec<f64>,
    /// Rows treated as tight by the crossover polish.
    pub tight: Vec<usize>,
    pub kkt: KktReport,
    /// `‖ξ‖₂` of the emitted subgradients.
    pub xi_norm: f64,
    /// Interior-point iterations spent in stage 1.
    pub iterations: usize,
    /// Whether the crossover polish produced the emitted solution (as
    /// opposed to the terminal interior-point iterate).
    pub polished: bool,
}

/// Row geometry shared by all stages: ordered pairs and their covariate
/// differences `Δ_r = x̄_{ℓ₁} − x̄_{ℓ₂}`.
struct RowTable {
    pairs: Vec<(usize, usize)>,
    delta: Vec<f64>,
}

impl RowTable {
    fn new(data: &Dataset) -> Self {
        let nb = data.n_points();
        let n = data.dim();
        let m = nb * (nb - 1);
        let mut pairs = Vec::with_capacity(m);
        let mut delta = vec![0.0; m * n];
        for r in 0..m {
            let (l1, l2) = pair_of_row(r, nb);
            pairs.push((l1, l2));
            for t in 0..n {
                delta[r * n + t] = data.x(l1)[t] - data.x(l2)[t];
            }
        }
        RowTable { pairs, delta }
    }

    fn delta_row(&self, r: usize, n: usize) -> &[f64] {
        &self.delta[r * n..(r + 1) * n]
    }
}

struct StageOne {
    eta: Vec<f64>,
    theta: Vec<f64>,
    mu: f64,
    iterations: usize,
    objective: f64,
}

/// Solves the regression problem on `data` to reference accuracy.
pub fn oracle_solve(
    data: &Dataset,
    gamma: f64,
    cfg: &OracleConfig,
) -> Result<OracleSolution> {
    let nb = data.n_points();
    let n = data.dim();
    if nb > cfg.cap {
        return Err(Error::OracleCap { n_points: nb, cap: cfg.cap });
    }
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "regularization weight must be finite and nonnegative, got {gamma}"
        )));
    }
    let op = ConstraintOperator::full(data);
    if op.min_pair_dist2() <= 0.0 {
        return Err(Error::ZeroCrossDistance);
    }
    let rows = RowTable::new(data);
    let y_scale = 1.0 + data.observations().iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let stage1 = dense_interior_point(data, &op, &rows, gamma, cfg, y_scale)?;
    let polish = crossover_polish(data, &op, &rows, gamma, &stage1, cfg, y_scale);
    let (mut theta, tight, polished) = match polish {
        Some((theta, tight)) => (theta, tight, true),
        None => {
            let mut s = vec![0.0; op.rows()];
            let (y, xi) = stage1.eta.split_at(nb);
            op.apply(y, xi, &mut s);
            let thr = stage1.mu.sqrt();
            let tight: Vec<usize> =
                (0..op.rows()).filter(|&r| s[r] <= thr).collect();
            (stage1.theta.clone(), tight, false)
        }
    };

    // Reconstruct the primal from the multipliers so stationarity holds by
    // construction; the unpolished fallback keeps the interior-point primal
    // (its multipliers are centered, not exactly stationary row-wise).
    let mut point = PrimalPoint::zeros(nb, n);
    if polished {
        op.apply_a1_t(&theta, &mut point.y);
        for (l, obs) in data.observations().iter().enumerate() {
            point.y[l] += obs;
        }
        if gamma > 0.0 {
            op.apply_a2_t(&theta, &mut point.xi);
            for v in point.xi.iter_mut() {
                *v /= gamma;
            }
        }
    } else {
        point.y.copy_from_slice(&stage1.eta[..nb]);
        point.xi.copy_from_slice(&stage1.eta[nb..]);
    }

    let mut least_norm = 0.0;
    if gamma == 0.0 {
        let (xi, worst) = least_norm_subgradients(data, &rows, &point.y, cfg)?;
        point.xi = xi;
        least_norm = worst;
    }

    // Drop multiplier dust on rows the final model leaves clearly slack;
    // genuine negative multipliers were already grounds for rejecting the
    // polish, so anything left here is roundoff.
    for t in theta.iter_mut() {
        if *t < 0.0 {
            *t = 0.0;
        }
    }

    let kkt = verify_kkt(data, &op, gamma, &point, &theta, least_norm, cfg, y_scale)?;
    let objective = primal_objective(data, gamma, &point);
    let xi_norm = norm2(&point.xi);
    Ok(OracleSolution {
        point,
        objective,
        theta,
        tight,
        kkt,
        xi_norm,
        iterations: stage1.iterations,
        polished,
    })
}

/// `½‖y − ȳ‖²` plus the regularization term when present.
pub fn primal_objective(data: &Dataset, gamma: f64, point: &PrimalPoint) -> f64 {
    let mut fit = 0.0;
    for (l, obs) in data.observations().iter().enumerate() {
        let d = point.y[l] - obs;
        fit += d * d;
    }
    0.5 * fit + 0.5 * gamma * dot(&point.xi, &point.xi)
}

/// Dense feasible-start interior-point solve. Mirrors the standard
/// primal–dual scheme but assembles the full normal matrix from generic row
/// outer products and factors it with a dense Cholesky; at `γ = 0` the
/// subgradient diagonal gets a static shift compensated by iterative
/// refinement against the unshifted matrix.
fn dense_interior_point(
    data: &Dataset,
    op: &ConstraintOperator,
    rows: &RowTable,
    gamma: f64,
    cfg: &OracleConfig,
    y_scale: f64,
) -> Result<StageOne> {
    let nb = data.n_points();
    let n = data.dim();
    let size = nb * (1 + n);
    let m = op.rows();
    let mut c = vec![0.0; size];
    for (l, obs) in data.observations().iter().enumerate() {
        c[l] = -obs;
    }
    let c_scale = 1.0 + norm2(&c);
    let mu_stop = cfg.mu_tol * y_scale * y_scale;

    let alpha0 = (1.0 / nb as f64).max(2.0 * (1e-8 * y_scale) / op.min_pair_dist2());
    let mut eta = block_slater(op, alpha0)?;
    let mut theta = vec![1.0; m];

    let mut s = vec![0.0; m];
    let mut r_d = vec![0.0; size];
    let mut rhs = vec![0.0; size];
    let mut wrow = vec![0.0; m];
    let mut normal = vec![0.0; size * size];
    let mut idx: Vec<(usize, f64)> = Vec::with_capacity(2 + n);
    let mut delta_s = vec![0.0; m];
    let mut delta_theta = vec![0.0; m];
    let mut last_alpha = 0.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut k = 0usize;
    let (mu, _) = loop {
        {
            let (y, xi) = eta.split_at(nb);
            op.apply(y, xi, &mut s);
        }
        if s.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            // The exact update keeps the slacks positive, but recomputing
            // them from the primal cancels catastrophically once they fall
            // to roundoff level; the previous iterate is then as deep as
            // this stage can go, and the crossover takes over from there.
            let Some((pe, pt)) = prev else {
                return Err(Error::Breakdown(
                    "reference interior-point start is not strictly feasible"
                        .into(),
                ));
            };
            eta = pe;
            theta = pt;
            let (y, xi) = eta.split_at(nb);
            op.apply(y, xi, &mut s);
            let mu = dot(&s, &theta) / m as f64;
            break (mu, f64::INFINITY);
        }
        let mu = dot(&s, &theta) / m as f64;
        {
            let (y, xi) = eta.split_at(nb);
            let (ry, rxi) = r_d.split_at_mut(nb);
            op.apply_t(&theta, ry, rxi);
            for i in 0..nb {
                ry[i] = y[i] + c[i] - ry[i];
            }
            for j in 0..nb * n {
                rxi[j] = gamma * xi[j] + c[nb + j] - rxi[j];
            }
        }
        let r_d_norm = norm2(&r_d);
        if mu <= mu_stop && r_d_norm <= cfg.r_tol * c_scale {
            break (mu, r_d_norm);
        }
        if k >= cfg.max_iters {
            // A crossover from a moderately centered iterate still succeeds;
            // reaching the tight μ target is preferred, not required.
            break (mu, r_d_norm);
        }

        let sigma = if last_alpha >= 0.5 { 0.1 } else { 0.5 };
        let tau = sigma * mu;

        normal.fill(0.0);
        for i in 0..nb {
            normal[i * size + i] = 1.0;
        }
        for j in nb..size {
            normal[j * size + j] = gamma;
        }
        for r in 0..m {
            let w = theta[r] / s[r];
            let (l1, l2) = rows.pairs[r];
            idx.clear();
            idx.push((l2, 1.0));
            idx.push((l1, -1.0));
            for t in 0..n {
                idx.push((nb + l1 * n + t, rows.delta_row(r, n)[t]));
            }
            for &(i, vi) in &idx {
                for &(j, vj) in &idx {
                    normal[i * size + j] += w * vi * vj;
                }
            }
        }

        for i in 0..m {
            wrow[i] = tau / s[i] - theta[i];
        }
        {
            let (ry, rxi) = rhs.split_at_mut(nb);
            op.apply_t(&wrow, ry, rxi);
        }
        for i in 0..size {
            rhs[i] -= r_d[i];
        }

        let delta_eta =
            solve_dense_normal(&normal, &rhs, size, gamma, y_scale)?;
        {
            let (dy, dxi) = delta_eta.split_at(nb);
            op.apply(dy, dxi, &mut delta_s);
        }
        for i in 0..m {
            delta_theta[i] = (tau - s[i] * theta[i] - theta[i] * delta_s[i]) / s[i];
        }

        let mut alpha = 1.0f64;
        for i in 0..m {
            if delta_s[i] < 0.0 {
                alpha = alpha.min(0.995 * (-s[i] / delta_s[i]));
            }
            if delta_theta[i] < 0.0 {
                alpha = alpha.min(0.995 * (-theta[i] / delta_theta[i]));
            }
        }
        let mut halvings = 0;
        loop {
            let mut mu_trial = 0.0;
            for i in 0..m {
                mu_trial +=
                    (s[i] + alpha * delta_s[i]) * (theta[i] + alpha * delta_theta[i]);
            }
            mu_trial /= m as f64;
            if mu_trial <= (1.0 - 0.01 * alpha) * mu {
                break;
            }
            alpha *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::Breakdown(
                    "reference interior-point backtracking stalled".into(),
                ));
            }
        }
        prev = Some((eta.clone(), theta.clone()));
        for (e, d) in eta.iter_mut().zip(&delta_eta) {
            *e += alpha * d;
        }
        for (t, d) in theta.iter_mut().zip(&delta_theta) {
            *t += alpha * d;
        }
        last_alpha = alpha;
        k += 1;
    };

    let point_y = &eta[..nb];
    let mut objective = 0.0;
    for (l, obs) in data.observations().iter().enumerate() {
        let d = point_y[l] - obs;
        objective += d * d;
    }
    objective = 0.5 * objective + 0.5 * gamma * dot(&eta[nb..], &eta[nb..]);
    Ok(StageOne { eta, theta, mu, iterations: k, objective })
}

/// Dense Cholesky solve of the normal system; when `γ = 0` a static shift
/// keeps the factorization positive definite and two rounds of iterative
/// refinement against the unshifted matrix remove its bias.
fn solve_dense_normal(
    normal: &[f64],
    rhs: &[f64],
    size: usize,
    gamma: f64,
    y_scale: f64,
) -> Result<Vec<f64>> {
    let mut maxdiag = 0.0f64;
    for j in 0..size {
        maxdiag = maxdiag.max(normal[j * size + j]);
    }
    // Without regularization the subgradient diagonal can vanish on points
    // with no tight incident rows; start from a static shift there. Either
    // way, escalate a whole-diagonal shift if the factorization breaks down
    // (extreme late-stage ill-conditioning) and repair the bias with
    // refinement against the unshifted matrix.
    let mut shift =
        if gamma == 0.0 { 1e-12 * (y_scale + maxdiag) } else { 0.0 };
    for _attempt in 0..8 {
        let mut shifted = normal.to_vec();
        if shift > 0.0 {
            for j in 0..size {
                shifted[j * size + j] += shift;
            }
        }
        let mat = DMatrix::from_row_slice(size, size, &shifted);
        if let Some(chol) = Cholesky::new(mat) {
            let mut x = chol.solve(&DVector::from_column_slice(rhs));
            if shift > 0.0 {
                for _ in 0..3 {
                    // Residual against the *unshifted* matrix.
                    let mut resid = DVector::from_column_slice(rhs);
                    for i in 0..size {
                        let mut acc = 0.0;
                        for j in 0..size {
                            acc += normal[i * size + j] * x[j];
                        }
                        resid[i] -= acc;
                    }
                    let corr = chol.solve(&resid);
                    x += corr;
                }
            }
            return Ok(x.as_slice().to_vec());
        }
        shift = if shift == 0.0 {
            1e-14 * (y_scale + maxdiag)
        } else {
            shift * 100.0
        };
    }
    Err(Error::Breakdown(
        "reference normal matrix could not be factored".into(),
    ))
}

/// Tries to turn the terminal interior-point iterate into an exact
/// active-set solution. Returns the full multiplier vector and the tight
/// rows on success, `None` if no threshold produces a certified candidate.
fn crossover_polish(
    data: &Dataset,
    op: &ConstraintOperator,
    rows: &RowTable,
    gamma: f64,
    stage1: &StageOne,
    cfg: &OracleConfig,
    y_scale: f64,
) -> Option<(Vec<f64>, Vec<usize>)> {
    let nb = data.n_points();
    let m = op.rows();
    let mut s = vec![0.0; m];
    {
        let (y, xi) = stage1.eta.split_at(nb);
        op.apply(y, xi, &mut s);
    }
    let base = stage1.mu.max(1e-300).sqrt();
    for k in [0i32, 1, -1, 2, -2] {
        let thr = 10f64.powi(k) * base;
        let tight: Vec<usize> = (0..m).filter(|&r| s[r] <= thr).collect();
        if tight.len() > 5000 {
            continue;
        }
        let attempt = if gamma > 0.0 {
            polish_regularized(data, op, rows, gamma, &tight, stage1, cfg, y_scale)
        } else {
            polish_least_squares(data, rows, &tight, stage1, cfg, y_scale)
        };
        if let Some(theta) = attempt {
            return Some((theta, tight));
        }
    }
    None
}

/// Active-set solve for `γ > 0`: with `θ` supported on the tight rows `T`,
/// stationarity gives `y = ȳ + A₁ᵀθ`, `ξ = A₂ᵀθ/γ`, and forcing the tight
/// rows to zero yields `(A₁A₁ᵀ + A₂A₂ᵀ/γ)|_T θ_T = −(A₁ȳ)|_T`.
#[allow(clippy::too_many_arguments)]
fn polish_regularized(
    data: &Dataset,
    op: &ConstraintOperator,
    rows: &RowTable,
    gamma: f64,
    tight: &[usize],
    stage1: &StageOne,
    cfg: &OracleConfig,
    y_scale: f64,
) -> Option<Vec<f64>> {
    let nb = data.n_points();
    let n = data.dim();
    let mt = tight.len();
    let obs = data.observations();
    if mt == 0 {
        // No tight rows: the unconstrained minimum y = ȳ, ξ = 0 must be
        // feasible on its own for this to certify.
        let theta = vec![0.0; op.rows()];
        let point = PrimalPoint {
            y: obs.to_vec(),
            xi: vec![0.0; nb * n],
        };
        let feas_tol = cfg.verify_tol * y_scale * (1.0 + data.b_x());
        return (min_row_value(op, &point) >= -feas_tol).then_some(theta);
    }

    let mut gram = vec![0.0; mt * mt];
    for (a, &r) in tight.iter().enumerate() {
        let (l1, l2) = rows.pairs[r];
        let dr = rows.delta_row(r, n);
        for (b, &q) in tight.iter().enumerate().take(a + 1) {
            let (k1, k2) = rows.pairs[q];
            let mut v = 0.0;
            if l2 == k2 {
                v += 1.0;
            }
            if l1 == k1 {
                v += 1.0 + dot(dr, rows.delta_row(q, n)) / gamma;
            }
            if l2 == k1 {
                v -= 1.0;
            }
            if l1 == k2 {
                v -= 1.0;
            }
            gram[a * mt + b] = v;
            gram[b * mt + a] = v;
        }
    }
    let mut rhs = DVector::zeros(mt);
    for (a, &r) in tight.iter().enumerate() {
        let (l1, l2) = rows.pairs[r];
        rhs[a] = obs[l1] - obs[l2];
    }

    // Fast path: Cholesky with a tiny adaptive ridge plus refinement
    // (redundant tight rows make the Gram only positive semidefinite). If
    // the solution is unusable — poor residual, or negative entries, which
    // happen both through degeneracy and when the guess includes rows the
    // optimum leaves slack — fall back to solving the sign-constrained
    // restricted dual directly: `min ½λᵀ(Gram)λ − rhsᵀλ` over `λ ≥ 0`
    // equals `min ‖Mλ − b‖²` with `M = [A₁ᵀ; A₂ᵀ/√γ]` on the tight
    // columns and `b = [−ȳ; 0]`, an NNLS problem whose gradient at the
    // solution is the rebuilt slack vector, so complementarity on the
    // tight set holds by construction.
    let fast = (|| {
        let trace: f64 = (0..mt).map(|i| gram[i * mt + i]).sum();
        let ridge = 1e-13 * (1.0 + trace / mt as f64);
        let mut ridged = gram.clone();
        for i in 0..mt {
            ridged[i * mt + i] += ridge;
        }
        let chol = Cholesky::new(DMatrix::from_row_slice(mt, mt, &ridged))?;
        let mut lam = chol.solve(&rhs);
        for _ in 0..3 {
            let mut resid = rhs.clone();
            for i in 0..mt {
                let mut acc = 0.0;
                for j in 0..mt {
                    acc += gram[i * mt + j] * lam[j];
                }
                resid[i] -= acc;
            }
            let corr = chol.solve(&resid);
            lam += corr;
        }
        let mut worst = 0.0f64;
        for i in 0..mt {
            let mut acc = 0.0;
            for j in 0..mt {
                acc += gram[i * mt + j] * lam[j];
            }
            worst = worst.max((acc - rhs[i]).abs());
        }
        if worst > 1e-8 * y_scale {
            return None;
        }
        let neg_tol = 1e-7 * (1.0 + lam.amax());
        lam.iter().all(|v| *v >= -neg_tol).then_some(lam)
    })();
    let lam = match fast {
        Some(lam) => lam,
        None => {
            let sg = gamma.sqrt();
            let mut mstack = DMatrix::<f64>::zeros(nb + nb * n, mt);
            for (a, &r) in tight.iter().enumerate() {
                let (l1, l2) = rows.pairs[r];
                mstack[(l2, a)] += 1.0;
                mstack[(l1, a)] -= 1.0;
                let dr = rows.delta_row(r, n);
                for t in 0..n {
                    mstack[(nb + l1 * n + t, a)] = dr[t] / sg;
                }
            }
            let mut b = DVector::<f64>::zeros(nb + nb * n);
            for (l, o) in obs.iter().enumerate() {
                b[l] = -o;
            }
            nnls(&mstack, &b)
        }
    };
    let mut theta = vec![0.0; op.rows()];
    for (a, &r) in tight.iter().enumerate() {
        theta[r] = lam[a].max(0.0);
    }

    // Certify: rebuild the primal from θ and check global feasibility and
    // that the polish did not lose objective against the interior point.
    let mut point = PrimalPoint::zeros(nb, n);
    op.apply_a1_t(&theta, &mut point.y);
    for (l, o) in obs.iter().enumerate() {
        point.y[l] += o;
    }
    op.apply_a2_t(&theta, &mut point.xi);
    for v in point.xi.iter_mut() {
        *v /= gamma;
    }
    let feas_tol = cfg.verify_tol * y_scale * (1.0 + data.b_x());
    if min_row_value(op, &point) < -feas_tol {
        return None;
    }
    let obj = primal_objective(data, gamma, &point);
    (obj <= stage1.objective + 1e-9 * y_scale * y_scale).then_some(theta)
}

/// Active-set solve for `γ = 0`. With tight rows `T` and `B = A₂|_T`
/// (block-diagonal over the first index of each row), the fit values
/// compatible with making `T` tight form the subspace
/// `{y : A₁|_T y ∈ range(B)} = range(C)^⊥` with `C = A₁|_TᵀΠ`, where `Π`
/// projects each block onto `null(Bᵀ)`. Projecting `ȳ` onto that subspace
/// gives the candidate fit; a nonnegative multiplier supported on `T`
/// satisfying both stationarity equations is then recovered by sign-
/// constrained least squares (an unconstrained least-norm multiplier can
/// have negative entries even when a valid nonnegative one exists).
/// Complementarity is certified without the subgradients: when `A₂ᵀθ = 0`,
/// the subgradient terms cancel in `Σ θ_r·slack_r`, leaving `θᵀ(A₁y)`.
fn polish_least_squares(
    data: &Dataset,
    rows: &RowTable,
    tight: &[usize],
    stage1: &StageOne,
    cfg: &OracleConfig,
    y_scale: f64,
) -> Option<Vec<f64>> {
    let nb = data.n_points();
    let n = data.dim();
    let mt = tight.len();
    let obs = data.observations();
    let m = nb * (nb - 1);
    if mt == 0 {
        return Some(vec![0.0; m]);
    }

    // Group the tight rows by their first index; each group owns one
    // subgradient block and its own null-space projector.
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); nb];
    for (a, &r) in tight.iter().enumerate() {
        groups[rows.pairs[r].0].push(a);
    }
    // C = A₁|_Tᵀ Π, assembled group by group.
    let mut cmat = DMatrix::<f64>::zeros(nb, mt);
    for (l, members) in groups.iter().enumerate() {
        let g = members.len();
        if g == 0 {
            continue;
        }
        let mut b = DMatrix::<f64>::zeros(g, n);
        for (i, &a) in members.iter().enumerate() {
            let dr = rows.delta_row(tight[a], n);
            for t in 0..n {
                b[(i, t)] = dr[t];
            }
        }
        let svd = b.svd(true, true);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let cut = 1e-11 * (1.0 + smax);
        // Π = I − U_r U_rᵀ over the range columns of B.
        let mut pi = DMatrix::<f64>::identity(g, g);
        for (j, &sv) in svd.singular_values.iter().enumerate() {
            if sv > cut {
                let col = u.column(j);
                for p in 0..g {
                    for q in 0..g {
                        pi[(p, q)] -= col[p] * col[q];
                    }
                }
            }
        }
        for (i, &a) in members.iter().enumerate() {
            let (l1, l2) = rows.pairs[tight[a]];
            debug_assert_eq!(l1, l);
            for (j, &aj) in members.iter().enumerate() {
                cmat[(l2, aj)] += pi[(i, j)];
                cmat[(l1, aj)] -= pi[(i, j)];
            }
        }
    }

    let svd = cmat.svd(true, true);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let cut = 1e-11 * (1.0 + smax);
    let obs_v = DVector::from_column_slice(obs);
    // y = ȳ − (projection of ȳ onto range C); the correction is y − ȳ.
    let mut corr = DVector::<f64>::zeros(nb);
    for (j, &sv) in svd.singular_values.iter().enumerate() {
        if sv > cut {
            let col = u.column(j);
            let w = col.dot(&obs_v);
            for p in 0..nb {
                corr[p] -= w * col[p];
            }
        }
    }

    // Objective window: stage 1 is feasible, so its objective sits at most
    // the duality gap above the optimum. A candidate below that window
    // means the guess dropped genuinely active rows (its tightened subspace
    // can't reach it feasibly); above it, extra rows were forced tight.
    let obj: f64 = 0.5 * corr.iter().map(|v| v * v).sum::<f64>();
    let gap = (m as f64) * stage1.mu;
    let pad = cfg.verify_tol * y_scale * y_scale;
    if obj > stage1.objective + pad || obj < stage1.objective - gap - pad {
        return None;
    }

    // Stacked stationarity system for the multiplier: y-rows want
    // A₁|_Tᵀ θ_T = y − ȳ, subgradient rows want A₂|_Tᵀ θ_T = 0.
    let mut mstack = DMatrix::<f64>::zeros(nb + nb * n, mt);
    for (a, &r) in tight.iter().enumerate() {
        let (l1, l2) = rows.pairs[r];
        mstack[(l2, a)] += 1.0;
        mstack[(l1, a)] -= 1.0;
        let dr = rows.delta_row(r, n);
        for t in 0..n {
            mstack[(nb + l1 * n + t, a)] = dr[t];
        }
    }
    let mut d = DVector::<f64>::zeros(nb + nb * n);
    for l in 0..nb {
        d[l] = corr[l];
    }
    let lam = nnls(&mstack, &d);

    // Certify: both stationarity residuals, and the slack-weighted sum.
    let resid = &mstack * &lam - &d;
    let x_scale = 1.0 + data.b_x();
    let mut worst_y = 0.0f64;
    for l in 0..nb {
        worst_y = worst_y.max(resid[l].abs());
    }
    let mut worst_xi = 0.0f64;
    for j in 0..nb * n {
        worst_xi = worst_xi.max(resid[nb + j].abs());
    }
    if worst_y > cfg.verify_tol * y_scale || worst_xi > cfg.verify_tol * y_scale * x_scale
    {
        return None;
    }
    let mut comp = 0.0;
    for (a, &r) in tight.iter().enumerate() {
        let (l1, l2) = rows.pairs[r];
        comp += lam[a] * (obs[l2] + corr[l2] - obs[l1] - corr[l1]);
    }
    if comp.abs() > 0.1 * cfg.verify_tol * y_scale * y_scale * x_scale {
        return None;
    }

    let mut theta = vec![0.0; m];
    for (a, &r) in tight.iter().enumerate() {
        theta[r] = lam[a];
    }
    Some(theta)
}

/// Smallest constraint value over all ordered rows.
fn min_row_value(op: &ConstraintOperator, point: &PrimalPoint) -> f64 {
    let mut s = vec![0.0; op.rows()];
    op.apply(&point.y, &point.xi, &mut s);
    s.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Minimum-norm subgradients for fixed fit values: for each point `ℓ`,
/// projects the origin onto `{v : (x̄_ℓ − x̄_j)ᵀv ≥ y_ℓ − y_j ∀j}` with a
/// small splitting iteration, then makes the result exact by solving the
/// tight-row system and checking its optimality certificate. Returns the
/// subgradients and the worst certificate residual.
fn least_norm_subgradients(
    data: &Dataset,
    rows: &RowTable,
    y: &[f64],
    cfg: &OracleConfig,
) -> Result<(Vec<f64>, f64)> {
    let nb = data.n_points();
    let n = data.dim();
    let mut xi = vec![0.0; nb * n];
    let mut worst = 0.0f64;
    for l in 0..nb {
        // Rows (l, j) in global order have first index l; collect their
        // geometry directly.
        let mut x_rows = DMatrix::<f64>::zeros(nb - 1, n);
        let mut h = DVector::<f64>::zeros(nb - 1);
        let mut i = 0;
        for j in 0..nb {
            if j == l {
                continue;
            }
            let r = crate::ops::row_of_pair(l, j, nb);
            let dr = rows.delta_row(r, n);
            for t in 0..n {
                x_rows[(i, t)] = dr[t];
            }
            h[i] = y[l] - y[j];
            i += 1;
        }
        let h_scale = 1.0 + h.amax();
        let relax = cfg.verify_tol * h_scale;
        if h.iter().all(|v| *v <= relax) {
            // The origin is already feasible, hence minimum-norm.
            continue;
        }

        let v = project_onto_halfspaces(&x_rows, &h, relax)?;
        for t in 0..n {
            xi[l * n + t] = v.0[t];
        }
        worst = worst.max(v.1);
        if v.1 > relax {
            return Err(Error::OracleVerification(format!(
                "minimum-norm certificate for point {l} missed its budget: \
                 residual {:.3e} > {:.3e}",
                v.1, relax
            )));
        }
    }
    Ok((xi, worst))
}

/// Projects the origin onto `{v : Xv ≥ h}` (assumed nonempty within
/// `relax`). Splitting iteration to localize the tight rows, then an exact
/// solve `v = X_Tᵀμ` with `X_T X_Tᵀ μ = h_T`; the returned residual is the
/// largest certificate violation (negative multiplier, tight-row error, or
/// feasibility shortfall).
fn project_onto_halfspaces(
    x_rows: &DMatrix<f64>,
    h: &DVector<f64>,
    relax: f64,
) -> Result<(Vec<f64>, f64)> {
    let mrows = x_rows.nrows();
    let n = x_rows.ncols();
    let rho = 1.0;
    let mut factor = DMatrix::<f64>::identity(n, n);
    for i in 0..mrows {
        for a in 0..n {
            for b in 0..n {
                factor[(a, b)] += rho * x_rows[(i, a)] * x_rows[(i, b)];
            }
        }
    }
    let chol = Cholesky::new(factor).ok_or_else(|| {
        Error::Breakdown("projection system could not be factored".into())
    })?;
    let mut v = DVector::<f64>::zeros(n);
    let mut w = DVector::<f64>::zeros(mrows);
    let mut u = DVector::<f64>::zeros(mrows);
    for _ in 0..2000 {
        // v-update: (I + ρXᵀX)v = ρXᵀ(h + w − u)
        let target = h + &w - &u;
        let rhs = rho * x_rows.transpose() * &target;
        let v_new = chol.solve(&rhs);
        let xv = x_rows * &v_new;
        let w_new = (&xv - h + &u).map(|t| t.max(0.0));
        let prim = (&xv - h - &w_new).amax();
        let dual = (&v_new - &v).amax();
        u += &xv - h - &w_new;
        v = v_new;
        w = w_new;
        if prim <= 1e-13 * (1.0 + h.amax()) && dual <= 1e-13 * (1.0 + v.amax()) {
            break;
        }
    }

    // Exact polish over candidate tight sets: recover the unique
    // projection from the tight-row normal equations, then certify it with
    // a nonnegative multiplier (the minimum-norm multiplier of a rank-
    // deficient tight set can have negative entries even when a valid
    // nonnegative one exists, so the certificate solve must itself impose
    // the sign constraint).
    let slack = x_rows * &v - h;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for scale in [1e-7, 1e-6, 1e-8, 1e-5, 1e-9] {
        let thr = scale * (1.0 + h.amax());
        let tight: Vec<usize> = (0..mrows).filter(|&i| slack[i] <= thr).collect();
        let t = tight.len();
        let cand: DVector<f64> = if t == 0 {
            DVector::zeros(n)
        } else {
            let mut gram = DMatrix::<f64>::zeros(t, t);
            for (a, &i) in tight.iter().enumerate() {
                for (b, &j) in tight.iter().enumerate() {
                    let mut acc = 0.0;
                    for q in 0..n {
                        acc += x_rows[(i, q)] * x_rows[(j, q)];
                    }
                    gram[(a, b)] = acc;
                }
            }
            let mut ht = DVector::<f64>::zeros(t);
            for (a, &i) in tight.iter().enumerate() {
                ht[a] = h[i];
            }
            let svd = gram.svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
            let lam = match svd.solve(&ht, 1e-12 * (1.0 + smax)) {
                Ok(lam) => lam,
                Err(_) => continue,
            };
            let mut cand = DVector::<f64>::zeros(n);
            for (a, &i) in tight.iter().enumerate() {
                for q in 0..n {
                    cand[q] += lam[a] * x_rows[(i, q)];
                }
            }
            cand
        };
        // Nonnegative multiplier expressing cand = X_Tᵀμ.
        let mut xt = DMatrix::<f64>::zeros(n, t);
        for (a, &i) in tight.iter().enumerate() {
            for q in 0..n {
                xt[(q, a)] = x_rows[(i, q)];
            }
        }
        let mu = nnls(&xt, &cand);
        // Certificate: stationarity of the multiplier expression,
        // complementary slackness, and global feasibility (dual
        // feasibility μ ≥ 0 holds by construction).
        let mut expr = DVector::<f64>::zeros(n);
        for (a, &i) in tight.iter().enumerate() {
            for q in 0..n {
                expr[q] += mu[a] * x_rows[(i, q)];
            }
        }
        let cand_slack = x_rows * &cand - h;
        let mut resid = (&expr - &cand).amax();
        for (a, &i) in tight.iter().enumerate() {
            if mu[a] > 0.0 {
                resid = resid.max(cand_slack[i].abs());
            }
        }
        resid = resid.max(-cand_slack.min());
        if best.as_ref().is_none_or(|(_, r)| resid < *r) {
            best = Some((cand.as_slice().to_vec(), resid));
        }
        if resid <= relax {
            break;
        }
    }
    best.ok_or_else(|| {
        Error::Breakdown("projection polish produced no candidate".into())
    })
}

/// Nonnegative least squares `min ‖Aμ − b‖₂ s.t. μ ≥ 0` by the classic
/// active-set scheme: grow a passive set greedily on the gradient, retreat
/// along the segment to the unconstrained passive solution whenever it
/// turns a coordinate negative. Problems here are tiny (tens of columns).
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let t = a.ncols();
    let mut mu = DVector::<f64>::zeros(t);
    let mut passive = vec![false; t];
    let scale = 1.0 + b.amax();
    let ls = |set: &[usize]| -> Option<DVector<f64>> {
        let sub = a.select_columns(set.iter());
        let svd = sub.svd(true, true);
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        svd.solve(b, 1e-13 * (1.0 + smax)).ok()
    };
    // The support can never exceed the row count, so the iteration budget
    // scales with the smaller dimension even for very redundant systems.
    for _ in 0..(10 * t.min(a.nrows()).max(1) + 100) {
        let grad = a.transpose() * (b - a * &mu);
        let mut pick = None;
        let mut best = 1e-13 * scale;
        for j in 0..t {
            if !passive[j] && grad[j] > best {
                best = grad[j];
                pick = Some(j);
            }
        }
        let Some(j) = pick else { break };
        passive[j] = true;
        loop {
            let set: Vec<usize> =
                (0..t).filter(|&i| passive[i]).collect();
            let Some(z) = ls(&set) else {
                passive[j] = false;
                return mu;
            };
            if z.iter().all(|v| *v > 0.0) {
                mu.fill(0.0);
                for (a_i, &i) in set.iter().enumerate() {
                    mu[i] = z[a_i];
                }
                break;
            }
            let mut alpha = 1.0f64;
            for (a_i, &i) in set.iter().enumerate() {
                if z[a_i] <= 0.0 && mu[i] > z[a_i] {
                    alpha = alpha.min(mu[i] / (mu[i] - z[a_i]));
                }
            }
            for (a_i, &i) in set.iter().enumerate() {
                mu[i] += alpha * (z[a_i] - mu[i]);
                if mu[i] <= 1e-15 * scale {
                    mu[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    mu
}

/// Recomputes every optimality residual of the emitted solution and fails
/// hard when any misses its budget.
#[allow(clippy::too_many_arguments)]
fn verify_kkt(
    data: &Dataset,
    op: &ConstraintOperator,
    gamma: f64,
    point: &PrimalPoint,
    theta: &[f64],
    least_norm: f64,
    cfg: &OracleConfig,
    y_scale: f64,
) -> Result<KktReport> {
    let nb = data.n_points();
    let n = data.dim();
    let x_scale = 1.0 + data.b_x();
    let tol = cfg.verify_tol;

    let mut a1t = vec![0.0; nb];
    let mut a2t = vec![0.0; nb * n];
    op.apply_a1_t(theta, &mut a1t);
    op.apply_a2_t(theta, &mut a2t);
    let mut acc = 0.0;
    for ((&yl, &ol), &al) in point.y.iter().zip(data.observations()).zip(&a1t) {
        let r = yl - ol - al;
        acc += r * r;
    }
    let stationarity_y = (acc / nb as f64).sqrt();
    let mut acc = 0.0;
    for (&xj, &aj) in point.xi.iter().zip(&a2t) {
        let r = gamma * xj - aj;
        acc += r * r;
    }
    let stationarity_xi = (acc / (nb * n) as f64).sqrt();

    let mut s = vec![0.0; op.rows()];
    op.apply(&point.y, &point.xi, &mut s);
    let min_slack = s.iter().cloned().fold(f64::INFINITY, f64::min);
    let complementarity = s
        .iter()
        .zip(theta)
        .map(|(a, b)| (a * b).abs())
        .fold(0.0f64, f64::max);

    let report = KktReport {
        stationarity_y,
        stationarity_xi,
        min_slack,
        complementarity,
        least_norm,
    };
    let checks = [
        (stationarity_y <= tol * y_scale, "fit-value stationarity", stationarity_y),
        (
            stationarity_xi <= tol * y_scale * x_scale,
            "subgradient stationarity",
            stationarity_xi,
        ),
        (min_slack >= -tol * y_scale * x_scale, "feasibility", min_slack),
        (
            complementarity <= tol * y_scale * y_scale * x_scale,
            "complementarity",
            complementarity,
        ),
    ];
    for (ok, what, val) in checks {
        if !ok {
            return Err(Error::OracleVerification(format!(
                "{what} residual {val:.3e} exceeds its budget on emit"
            )));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{gen_instance, FunctionKind};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_data_reproduces_observations_with_minimal_subgradients() {
        // Three collinear points on the identity line. The fit passes
        // through the data; the minimum-norm subgradients are 0 at the left
        // endpoint (any slope ≤ 1 works there), and 1 elsewhere, computed by
        // hand from the one-sided constraints.
        let data =
            Dataset::new(1, vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 2.0]).unwrap();
        let sol = oracle_solve(&data, 0.0, &OracleConfig::default()).unwrap();
        for (got, want) in sol.point.y.iter().zip([0.0, 1.0, 2.0]) {
            assert!((got - want).abs() <= 1e-9, "fit {got} vs {want}");
        }
        assert!(sol.objective <= 1e-16);
        let want_xi = [0.0, 1.0, 1.0];
        for (got, want) in sol.point.xi.iter().zip(want_xi) {
            assert!((got - want).abs() <= 1e-8, "subgradient {got} vs {want}");
        }
        assert!((sol.xi_norm - 2f64.sqrt()).abs() <= 1e-8);
    }

    /// Independent reference for tiny instances: enumerate active sets.
    fn combinatorial_optimum(data: &Dataset, gamma: f64) -> (f64, Vec<f64>) {
        let nb = data.n_points();
        let n = data.dim();
        let size = nb * (1 + n);
        let m = nb * (nb - 1);
        assert!(m <= 12);
        let op = ConstraintOperator::full(data);
        let mut rows_d = vec![vec![0.0; size]; m];
        for (r, row) in rows_d.iter_mut().enumerate() {
            let (l1, l2) = pair_of_row(r, nb);
            row[l2] += 1.0;
            row[l1] -= 1.0;
            for t in 0..n {
                row[nb + l1 * n + t] = op.x(l1)[t] - op.x(l2)[t];
            }
        }
        let mut c = vec![0.0; size];
        for (l, o) in data.observations().iter().enumerate() {
            c[l] = -o;
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let active: Vec<usize> = (0..m).filter(|r| mask >> r & 1 == 1).collect();
            let w = active.len();
            let dim = size + w;
            let mut kkt = DMatrix::<f64>::zeros(dim, dim);
            for i in 0..nb {
                kkt[(i, i)] = 1.0;
            }
            for i in nb..size {
                kkt[(i, i)] = gamma;
            }
            for (j, &r) in active.iter().enumerate() {
                for i in 0..size {
                    kkt[(i, size + j)] = -rows_d[r][i];
                    kkt[(size + j, i)] = rows_d[r][i];
                }
            }
            let mut rhs = DVector::<f64>::zeros(dim);
            for i in 0..size {
                rhs[i] = -c[i];
            }
            let svd = kkt.clone().svd(true, true);
            let sol = match svd.solve(&rhs, 1e-12) {
                Ok(sol) => sol,
                Err(_) => continue,
            };
            if (&kkt * &sol - &rhs).norm() > 1e-8 {
                continue;
            }
            let eta: Vec<f64> = sol.as_slice()[..size].to_vec();
            if sol.as_slice()[size..].iter().any(|l| *l < -1e-8) {
                continue;
            }
            if rows_d.iter().any(|row| dot(row, &eta) < -1e-8) {
                continue;
            }
            let mut obj = 0.0;
            for (l, o) in data.observations().iter().enumerate() {
                let d = eta[l] - o;
                obj += d * d;
            }
            obj = 0.5 * obj + 0.5 * gamma * dot(&eta[nb..], &eta[nb..]);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, eta));
            }
        }
        best.expect("some active set certifies optimality")
    }

    #[test]
    fn matches_combinatorial_reference_on_tiny_regularized_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for gamma in [0.5, 1e-2] {
            let points: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let obs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let data = Dataset::new(1, points, obs).unwrap();
            let (want_obj, want_eta) = combinatorial_optimum(&data, gamma);
            let sol = oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();
            assert!(
                (sol.objective - want_obj).abs() <= 1e-9 * (1.0 + want_obj.abs()),
                "objective {} vs reference {want_obj}",
                sol.objective
            );
            for (g, w) in sol.point.y.iter().zip(&want_eta[..3]) {
                assert!((g - w).abs() <= 1e-7);
            }
            for (g, w) in sol.point.xi.iter().zip(&want_eta[3..]) {
                assert!((g - w).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn regularized_fits_drift_from_the_unregularized_one_at_sqrt_rate() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 2, 14, 5).unwrap();
        let cfg = OracleConfig::default();
        let base = oracle_solve(&data, 0.0, &cfg).unwrap();
        for gamma in [1e-1, 1e-2, 1e-3] {
            let sol = oracle_solve(&data, gamma, &cfg).unwrap();
            let mut diff = 0.0;
            for (a, b) in sol.point.y.iter().zip(&base.point.y) {
                diff += (a - b) * (a - b);
            }
            let diff = diff.sqrt();
            assert!(
                diff <= base.xi_norm * gamma.sqrt() + 1e-7,
                "γ={gamma}: fit moved {diff}, allowed {}",
                base.xi_norm * gamma.sqrt()
            );
            assert!(sol.xi_norm <= base.xi_norm + 1e-7);
        }
    }

    #[test]
    fn emitted_certificates_meet_their_budgets() {
        let (data, _) = gen_instance(FunctionKind::Exponential, 2, 15, 9).unwrap();
        let y_scale =
            1.0 + data.observations().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let x_scale = 1.0 + data.b_x();
        for gamma in [0.0, 1e-3] {
            let sol = oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();
            assert!(sol.kkt.stationarity_y <= 1e-9 * y_scale);
            assert!(sol.kkt.stationarity_xi <= 1e-9 * y_scale * x_scale);
            assert!(sol.kkt.min_slack >= -1e-9 * y_scale * x_scale);
            assert!(sol.kkt.complementarity <= 1e-9 * y_scale * y_scale * x_scale);
            assert!(sol.polished, "crossover should certify on this instance");
            assert!(!sol.tight.is_empty());
        }
    }

    #[test]
    fn agrees_with_the_structured_interior_point_solver() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 2, 12, 13).unwrap();
        let gamma = 1e-3;
        let sol = oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();
        let op = ConstraintOperator::full(&data);
        let mut c = vec![0.0; 12 * 3];
        for (l, o) in data.observations().iter().enumerate() {
            c[l] = -o;
        }
        let cfg = crate::ipm::IpmConfig { tol: 1e-10, ..Default::default() };
        let out = crate::ipm::ipm_solve(&op, gamma, &c, &cfg, None, false).unwrap();
        let y_scale =
            1.0 + data.observations().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in sol.point.y.iter().zip(&out.state.eta[..12]) {
            assert!((a - b).abs() <= 1e-5 * y_scale, "{a} vs {b}");
        }
        let ipm_obj = {
            let mut point = PrimalPoint::zeros(12, 2);
            point.y.copy_from_slice(&out.state.eta[..12]);
            point.xi.copy_from_slice(&out.state.eta[12..]);
            primal_objective(&data, gamma, &point)
        };
        assert!((sol.objective - ipm_obj).abs() <= 1e-7 * y_scale * y_scale);
        assert!(sol.objective <= ipm_obj + 1e-9 * y_scale * y_scale);
    }

    #[test]
    fn constant_observations_yield_the_flat_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let points: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data = Dataset::new(2, points, vec![2.0; 8]).unwrap();
        for gamma in [0.0, 1e-2] {
            let sol = oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();
            for v in &sol.point.y {
                assert!((v - 2.0).abs() <= 1e-7, "fit {v}");
            }
            for v in &sol.point.xi {
                assert!(v.abs() <= 1e-6, "subgradient {v}");
            }
            assert!(sol.objective <= 1e-12);
        }
    }

    #[test]
    fn size_cap_is_enforced_and_configurable() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 1, 61, 3).unwrap();
        match oracle_solve(&data, 1e-2, &OracleConfig::default()) {
            Err(Error::OracleCap { n_points, cap }) => {
                assert_eq!((n_points, cap), (61, 60));
            }
            other => panic!("expected a cap error, got {other:?}"),
        }
        let cfg = OracleConfig { cap: 70, ..OracleConfig::default() };
        let sol = oracle_solve(&data, 1e-2, &cfg).unwrap();
        assert!(sol.kkt.complementarity.is_finite());
    }

    #[test]
    fn duplicate_locations_are_rejected() {
        let data =
            Dataset::new(1, vec![0.0, 1.0, 1.0], vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(
            oracle_solve(&data, 0.0, &OracleConfig::default()),
            Err(Error::ZeroCrossDistance)
        ));
    }
}
