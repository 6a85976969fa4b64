//! Feasible-start primal–dual interior-point solver for the quadratic
//! programs `min ½ηᵀGη + cᵀη  s.t.  Aη ≥ 0` with `G = diag(I, γI)`.
//!
//! The full regression problem and every per-block subproblem of the dual
//! smoothing method have this shape, differing only in the linear term `c`.
//! The iteration stays strictly feasible throughout: the slack is defined as
//! `s = Aη` and recomputed exactly every step, so the primal residual is zero
//! by construction and only the complementarity measure `μ = sᵀθ/m` and the
//! dual residual have to be driven down. Each Newton step solves one
//! arrowhead system `(G + AᵀDA)Δη = −(Gη + c) + Aᵀ(τ/s)` with `D = diag(θ/s)`.

use std::time::{Duration, Instant};

use crate::arrowhead::ArrowheadSystem;
use crate::error::{Error, Result};
use crate::la::{axpy, dot, norm2};
use crate::ops::ConstraintOperator;
use crate::report::{IpmRecord, Termination};

/// Tuning knobs for one interior-point solve.
#[derive(Debug, Clone)]
pub struct IpmConfig {
    /// Complementarity tolerance; the dual residual must also fall below
    /// `tol · (1 + ‖c‖)`.
    pub tol: f64,
    /// Newton-step cap.
    pub max_iters: usize,
    /// Lower bound imposed on the smallest initial slack when building the
    /// strictly feasible starting point.
    pub slack_floor: f64,
    /// Fraction by which a warm-started iterate is pulled toward the
    /// strictly feasible starting point, to restore a safe margin.
    pub warm_blend: f64,
    /// Optional wall-clock cap for this solve.
    pub time_cap: Option<Duration>,
}

impl Default for IpmConfig {
    fn default() -> Self {
        IpmConfig {
            tol: 1e-8,
            max_iters: 200,
            slack_floor: 1e-8,
            warm_blend: 0.05,
            time_cap: None,
        }
    }
}

/// Primal–dual iterate: `eta = [y; ξ]` flattened, `theta` one multiplier per
/// ordered constraint row.
#[derive(Debug, Clone)]
pub struct IpmState {
    pub eta: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Result of one interior-point solve.
#[derive(Debug, Clone)]
pub struct IpmOutcome {
    pub state: IpmState,
    pub termination: Termination,
    /// Newton steps taken.
    pub iterations: usize,
    /// Final complementarity measure `sᵀθ/m`.
    pub mu: f64,
    /// Final dual residual norm `‖Gη + c − Aᵀθ‖`.
    pub r_dual: f64,
    pub records: Vec<IpmRecord>,
}

/// Strictly feasible point for one block: the convex quadratic
/// `ŷ + (α/2)‖x − x̂‖²` interpolated at the block's points, with its exact
/// gradients as subgradients. Every constraint row then has slack exactly
/// `(α/2)‖x_{ℓ₁} − x_{ℓ₂}‖² > 0`.
pub fn block_slater(op: &ConstraintOperator, alpha: f64) -> Result<Vec<f64>> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "slater curvature must be positive, got {alpha}"
        )));
    }
    let nb = op.len();
    let n = op.dataset().dim();
    let inv = 1.0 / nb as f64;
    let mut center = vec![0.0; n];
    for l in 0..nb {
        axpy(inv, op.x(l), &mut center);
    }
    let mean_obs = op.observations().iter().sum::<f64>() * inv;
    let mut eta = vec![0.0; nb * (1 + n)];
    for l in 0..nb {
        let x = op.x(l);
        let mut d2 = 0.0;
        for t in 0..n {
            let dt = x[t] - center[t];
            d2 += dt * dt;
            eta[nb + l * n + t] = alpha * dt;
        }
        eta[l] = mean_obs + 0.5 * alpha * d2;
    }
    Ok(eta)
}

/// Quadratic-program objective `½(‖y‖² + γ‖ξ‖²) + cᵀη`.
pub fn qp_objective(gamma: f64, c: &[f64], eta: &[f64], n_points: usize) -> f64 {
    let (y, xi) = eta.split_at(n_points);
    0.5 * (dot(y, y) + gamma * dot(xi, xi)) + dot(c, eta)
}

/// Solves `min ½ηᵀGη + cᵀη  s.t.  Aη ≥ 0` over the rows of `op`.
///
/// A warm start is blended toward the strictly feasible starting point and
/// its multipliers are floored away from zero; if the blended point is not
/// strictly feasible the solve falls back to the cold start. Records are
/// collected only when `trace` is set.
pub fn ipm_solve(
    op: &ConstraintOperator,
    gamma: f64,
    c: &[f64],
    cfg: &IpmConfig,
    warm: Option<&IpmState>,
    trace: bool,
) -> Result<IpmOutcome> {
    let start = Instant::now();
    let nb = op.len();
    let n = op.dataset().dim();
    let size = nb * (1 + n);
    let m = op.rows();
    if c.len() != size {
        return Err(Error::Dimension(format!(
            "linear term has {} entries, expected {}",
            c.len(),
            size
        )));
    }
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {}",
            cfg.tol
        )));
    }
    let min_d2 = op.min_pair_dist2();
    if min_d2 <= 0.0 {
        return Err(Error::ZeroCrossDistance);
    }

    // Curvature that keeps every starting slack at least `slack_floor`
    // while never falling below the scale-free default 1/N.
    let alpha0 = (1.0 / nb as f64).max(2.0 * cfg.slack_floor / min_d2);
    let slater = block_slater(op, alpha0)?;

    let mut eta;
    let mut theta;
    let mut s = vec![0.0; m];
    match warm {
        Some(prev) => {
            if prev.eta.len() != size || prev.theta.len() != m {
                return Err(Error::Dimension(format!(
                    "warm start sized ({}, {}), expected ({size}, {m})",
                    prev.eta.len(),
                    prev.theta.len()
                )));
            }
            let b = cfg.warm_blend.clamp(0.0, 1.0);
            eta = prev
                .eta
                .iter()
                .zip(&slater)
                .map(|(p, sl)| (1.0 - b) * p + b * sl)
                .collect::<Vec<f64>>();
            let (y, xi) = eta.split_at(nb);
            op.apply(y, xi, &mut s);
            if s.iter().all(|v| v.is_finite() && *v > 0.0) {
                let top = prev.theta.iter().fold(1.0f64, |acc, t| acc.max(t.abs()));
                let floor = 1e-8 * top;
                theta = prev.theta.iter().map(|t| t.max(floor)).collect();
            } else {
                eta = slater.clone();
                theta = vec![1.0; m];
            }
        }
        None => {
            eta = slater.clone();
            theta = vec![1.0; m];
        }
    }

    let c_scale = 1.0 + norm2(c);
    let mut records = Vec::new();
    let mut r_d = vec![0.0; size];
    let mut rhs = vec![0.0; size];
    let mut wrow = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut delta_s = vec![0.0; m];
    let mut delta_theta = vec![0.0; m];
    let mut last_alpha = 0.0;
    let mut k = 0usize;
    let (mu, r_d_norm, termination) = loop {
        // The slack is defined as Aη, recomputed so the primal residual
        // stays identically zero.
        {
            let (y, xi) = eta.split_at(nb);
            op.apply(y, xi, &mut s);
        }
        if s.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Breakdown(
                "interior-point iterate lost strict feasibility".into(),
            ));
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
        if mu <= cfg.tol && r_d_norm <= cfg.tol * c_scale {
            break (mu, r_d_norm, Termination::Converged);
        }
        if k >= cfg.max_iters {
            break (mu, r_d_norm, Termination::IterCap);
        }
        if let Some(cap) = cfg.time_cap {
            if start.elapsed() >= cap {
                break (mu, r_d_norm, Termination::TimeCap);
            }
        }

        // Short step after an aggressive previous one, aggressive otherwise.
        let sigma = if last_alpha >= 0.5 { 0.1 } else { 0.5 };
        let tau = sigma * mu;

        // rhs = −(Gη + c) + Aᵀ(τ/s), assembled as Aᵀ(τ/s − θ) − r_d.
        for i in 0..m {
            wrow[i] = tau / s[i] - theta[i];
            d[i] = theta[i] / s[i];
        }
        {
            let (ry, rxi) = rhs.split_at_mut(nb);
            op.apply_t(&wrow, ry, rxi);
        }
        for i in 0..size {
            rhs[i] -= r_d[i];
        }
        let sys = ArrowheadSystem::assemble(op, gamma, &d)?;
        let delta_eta = sys.solve_permuted(&rhs)?;
        {
            let (dy, dxi) = delta_eta.split_at(nb);
            op.apply(dy, dxi, &mut delta_s);
        }
        for i in 0..m {
            delta_theta[i] = (tau - s[i] * theta[i] - theta[i] * delta_s[i]) / s[i];
        }

        // Fraction-to-boundary step, then halve until the complementarity
        // measure actually decreases. The curvature term sᵀ(α)θ(α) picks up
        // is α²ΔηᵀGΔη ≥ 0, so small enough α always passes.
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
                mu_trial += (s[i] + alpha * delta_s[i]) * (theta[i] + alpha * delta_theta[i]);
            }
            mu_trial /= m as f64;
            if mu_trial <= (1.0 - 0.01 * alpha) * mu {
                break;
            }
            alpha *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::Breakdown(
                    "interior-point backtracking could not reduce complementarity".into(),
                ));
            }
        }
        axpy(alpha, &delta_eta, &mut eta);
        axpy(alpha, &delta_theta, &mut theta);
        last_alpha = alpha;
        k += 1;
        if trace {
            records.push(IpmRecord {
                k,
                mu,
                r_p: 0.0,
                r_d: r_d_norm,
                alpha,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
    };

    Ok(IpmOutcome {
        state: IpmState { eta, theta },
        termination,
        iterations: k,
        mu,
        r_dual: r_d_norm,
        records,
    })
}
