//! Accelerated dual-smoothing solver.
//!
//! The regularized problem is split by a partition of the points: the
//! constraints inside each block stay exact, the cross-block rows are
//! dualized with multipliers `θ ≥ 0`, and the smoothed dual
//!
//! ```text
//! g_γ(θ) = min { ½‖y − ȳ‖² + (γ/2)‖ξ‖² − θᵀCη : block rows feasible }
//! ```
//!
//! is maximized by an accelerated projected-gradient iteration. Evaluating
//! `g_γ` decomposes into one small quadratic program per block — these run
//! independently, so the evaluation fans out across threads while producing
//! bit-identical results for any worker count. The gradient is `−Cη(θ)`
//! with Lipschitz constant `σ_max(C)²/γ`.
//!
//! A continuation driver re-solves with geometrically tightening
//! regularization and warm-started multipliers, certifying each stage by
//! the gap between a rounded strictly feasible point and the dual value.

use std::time::{Duration, Instant};

use crate::bounds::{alpha_star, b_theta, error_bounds, lipschitz, sigma_max};
use crate::dataset::{Dataset, Partition, PrimalPoint};
use crate::error::{Error, Result};
use crate::ipm::{ipm_solve, qp_objective, IpmConfig, IpmState};
use crate::la::{dot, norm2};
use crate::ops::{slater_point, ConstraintOperator, CrossOp, CrossOperator};
use crate::oracle::primal_objective;
use crate::report::{PapgRecord, RunCaps, StopRule, Termination};

/// Dual step-size policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Fixed step `1/L` from the estimated gradient Lipschitz constant.
    Constant,
    /// Backtracking curvature estimate: each iteration first tries a
    /// longer step than the last accepted one and grows the curvature
    /// until the accepted point satisfies the smoothness inequality.
    Adaptive,
}

/// Tuning for one accelerated dual solve.
#[derive(Debug, Clone)]
pub struct PapgConfig {
    pub step: StepRule,
    pub stop: StopRule,
    pub caps: RunCaps,
    /// Worker threads for the block fan-out; `None` reads the
    /// `CONVREG_WORKERS` environment variable and falls back to the
    /// available parallelism.
    pub workers: Option<usize>,
    /// Collect per-iteration metric records.
    pub trace: bool,
    /// Keep every projected dual iterate with its block minimizer and dual
    /// value (costs one extra evaluation per iteration under the constant
    /// step rule); intended for small diagnostic runs.
    pub record_iterates: bool,
    /// Starting multipliers (zeros when absent).
    pub warm_theta: Option<Vec<f64>>,
    /// Stop once the rounding certificate `p̂ − g_γ(θᵏ) ≤ δ`; drives the
    /// continuation stages.
    pub certificate_delta: Option<f64>,
    /// Stage tag copied into records.
    pub stage: usize,
    /// Cap on dual-step backtracking trials within one iteration.
    pub backtrack_cap: usize,
    /// Growth factor (> 1) for the backtracking curvature search; each
    /// iteration first retries one notch below the last accepted curvature
    /// and multiplies by this factor until acceptance.
    pub step_growth: f64,
    /// Relative tolerance of the power-iteration spectral estimate.
    pub sigma_tol: f64,
}

impl Default for PapgConfig {
    fn default() -> Self {
        PapgConfig {
            step: StepRule::Adaptive,
            stop: StopRule::GapInfeas { infeas_tol: 1e-3, gap_tol: 1e-6 },
            caps: RunCaps::default(),
            workers: None,
            trace: false,
            record_iterates: false,
            warm_theta: None,
            certificate_delta: None,
            stage: 0,
            backtrack_cap: 60,
            step_growth: 2.0,
            sigma_tol: 1e-6,
        }
    }
}

/// One recorded dual iterate (diagnostic mode).
#[derive(Debug, Clone)]
pub struct PapgIterate {
    pub theta: Vec<f64>,
    pub g: f64,
    pub point: PrimalPoint,
}

/// Result of an accelerated dual solve.
#[derive(Debug, Clone)]
pub struct PapgOutcome {
    /// Block minimizer paired with [`theta`](Self::theta) (the best
    /// iterate under the stop rule's own measure).
    pub point: PrimalPoint,
    pub theta: Vec<f64>,
    /// Dual value at the evaluation that produced
    /// [`point`](Self::point) (the extrapolated point's value under the
    /// constant step rule, the accepted iterate's under the adaptive one).
    pub g_value: f64,
    pub termination: Termination,
    pub iterations: usize,
    /// Strictly feasible rounding of the returned primal and its
    /// objective; present when rounding succeeded.
    pub rounded: Option<RoundedPoint>,
    /// Certified suboptimality `p̂ − g` of the returned dual value, from
    /// the rounded objective; `None` when rounding was unavailable.
    pub delta_certificate: Option<f64>,
    /// Estimated `σ_max(C)` and the production Lipschitz constant in use.
    pub sigma_hat: f64,
    pub l_gamma: f64,
    pub preprocess_s: f64,
    /// Accepted adaptive steps that failed an independent recheck of the
    /// acceptance inequality (expected to stay 0; exposed so validation
    /// runs can assert it).
    pub accept_violations: usize,
    pub records: Vec<PapgRecord>,
    pub trajectory: Vec<PapgIterate>,
}

/// Strictly feasible point obtained by blending toward an interior point,
/// with its regularized objective.
#[derive(Debug, Clone)]
pub struct RoundedPoint {
    pub point: PrimalPoint,
    /// Blend weight on the interior point (0 = already feasible).
    pub lambda: f64,
    pub objective: f64,
}

/// Blends `point` toward the strictly feasible quadratic interpolant just
/// far enough to clear every constraint row. Constraint values are affine
/// in the blend weight, so the smallest sufficient weight is found exactly
/// from one pass over the rows (no search).
pub fn round_to_feasible(
    data: &Dataset,
    gamma: f64,
    point: &PrimalPoint,
    alpha: f64,
) -> Result<RoundedPoint> {
    let op = ConstraintOperator::full(data);
    let interior = slater_point(data, alpha)?;
    let m = op.rows();
    let mut v = vec![0.0; m];
    op.apply(&point.y, &point.xi, &mut v);
    let mut v_int = vec![0.0; m];
    op.apply(&interior.y, &interior.xi, &mut v_int);
    let mut lambda = 0.0f64;
    for r in 0..m {
        if v[r] < 0.0 {
            if v_int[r] <= 0.0 {
                return Err(Error::ZeroCrossDistance);
            }
            lambda = lambda.max(-v[r] / (v_int[r] - v[r]));
        }
    }
    // Nudge past the exact crossing so blend round-off cannot leave a
    // residual violation; the objective cost of the nudge is negligible.
    let lambda = if lambda > 0.0 {
        (lambda * (1.0 + 1e-9) + 1e-12).min(1.0)
    } else {
        0.0
    };
    let nb = data.n_points();
    let n = data.dim();
    let mut blended = PrimalPoint::zeros(nb, n);
    for l in 0..nb {
        blended.y[l] = lambda * interior.y[l] + (1.0 - lambda) * point.y[l];
    }
    for j in 0..nb * n {
        blended.xi[j] = lambda * interior.xi[j] + (1.0 - lambda) * point.xi[j];
    }
    let objective = primal_objective(data, gamma, &blended);
    Ok(RoundedPoint { point: blended, lambda, objective })
}

// ---------------------------------------------------------------------------
// Smoothed dual evaluation
// ---------------------------------------------------------------------------

/// Result of one smoothed-dual evaluation.
#[derive(Debug, Clone)]
pub struct DualEval {
    /// `g_γ(θ)`.
    pub g: f64,
    /// Minimizer of the inner problem, assembled over all blocks.
    pub point: PrimalPoint,
    /// Total interior-point iterations spent across blocks.
    pub subproblem_iters: usize,
}

struct BlockOut {
    value: f64,
    eta: Vec<f64>,
    iters: usize,
    error: Option<Error>,
}

/// Evaluator for the smoothed dual function: owns the per-block operators
/// and their warm-started subproblem states.
pub struct DualSmoothing<'a> {
    data: &'a Dataset,
    cross: CrossOperator<'a>,
    blocks: Vec<ConstraintOperator<'a>>,
    states: Vec<Option<IpmState>>,
    gamma: f64,
    workers: usize,
    obs_sq_half: f64,
}

/// Resolves the worker count: explicit choice, then the `CONVREG_WORKERS`
/// environment variable, then the machine's available parallelism.
pub fn resolve_workers(requested: Option<usize>) -> usize {
    requested
        .or_else(|| {
            std::env::var("CONVREG_WORKERS").ok().and_then(|v| v.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
        })
        .max(1)
}

impl<'a> DualSmoothing<'a> {
    pub fn new(
        data: &'a Dataset,
        part: Partition,
        gamma: f64,
        workers: Option<usize>,
    ) -> Result<Self> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dual smoothing needs a positive regularization weight, got {gamma}"
            )));
        }
        let blocks: Vec<ConstraintOperator<'a>> =
            (0..part.k()).map(|i| ConstraintOperator::block(data, &part, i)).collect();
        let states = vec![None; part.k()];
        let cross = CrossOperator::new(data, part);
        let obs_sq_half = 0.5 * dot(data.observations(), data.observations());
        Ok(DualSmoothing {
            data,
            cross,
            blocks,
            states,
            gamma,
            workers: resolve_workers(workers),
            obs_sq_half,
        })
    }

    pub fn cross(&self) -> &CrossOperator<'a> {
        &self.cross
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Changes the regularization weight, keeping the warm block states.
    pub fn set_gamma(&mut self, gamma: f64) -> Result<()> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dual smoothing needs a positive regularization weight, got {gamma}"
            )));
        }
        self.gamma = gamma;
        Ok(())
    }

    /// Number of dualized rows (the length of `θ`).
    pub fn dual_len(&self) -> usize {
        self.cross.rows()
    }

    /// Evaluates `g_γ(θ)` and the inner minimizer by solving one quadratic
    /// program per block to tolerance `tol`, warm-starting from the states
    /// of the previous evaluation. Blocks are independent, so the result is
    /// identical for every worker count.
    pub fn eval(
        &mut self,
        theta: &[f64],
        tol: f64,
        time_cap: Option<Duration>,
    ) -> Result<DualEval> {
        if theta.len() != self.cross.rows() {
            return Err(Error::Dimension(format!(
                "multiplier vector has {} entries, expected {}",
                theta.len(),
                self.cross.rows()
            )));
        }
        let nb = self.data.n_points();
        let n = self.data.dim();
        let ct = self.cross.apply_c_t(theta);
        let obs = self.data.observations();
        let gamma = self.gamma;
        let k_blocks = self.blocks.len();

        let mut outs: Vec<BlockOut> = (0..k_blocks)
            .map(|_| BlockOut { value: 0.0, eta: Vec::new(), iters: 0, error: None })
            .collect();

        let run_block = |op: &ConstraintOperator,
                         state: &mut Option<IpmState>,
                         out: &mut BlockOut| {
            let bl = op.len();
            let s0 = op.start();
            let mut c = vec![0.0; bl * (1 + n)];
            for l in 0..bl {
                c[l] = -obs[s0 + l] - ct.y[s0 + l];
            }
            for j in 0..bl * n {
                c[bl + j] = -ct.xi[s0 * n + j];
            }
            let cfg = IpmConfig { tol, time_cap, ..IpmConfig::default() };
            let warm = state.take();
            match ipm_solve(op, gamma, &c, &cfg, warm.as_ref(), false) {
                Ok(o) => {
                    out.value = qp_objective(gamma, &c, &o.state.eta, bl);
                    out.eta.clone_from(&o.state.eta);
                    out.iters = o.iterations;
                    *state = Some(o.state);
                }
                Err(e) => out.error = Some(e),
            }
        };

        let workers = self.workers.min(k_blocks).max(1);
        if workers == 1 {
            for ((op, state), out) in
                self.blocks.iter().zip(self.states.iter_mut()).zip(outs.iter_mut())
            {
                run_block(op, state, out);
            }
        } else {
            let mut buckets: Vec<
                Vec<(&ConstraintOperator, &mut Option<IpmState>, &mut BlockOut)>,
            > = (0..workers).map(|_| Vec::new()).collect();
            for (i, ((op, state), out)) in self
                .blocks
                .iter()
                .zip(self.states.iter_mut())
                .zip(outs.iter_mut())
                .enumerate()
            {
                buckets[i % workers].push((op, state, out));
            }
            std::thread::scope(|scope| {
                for bucket in buckets {
                    scope.spawn(|| {
                        for (op, state, out) in bucket {
                            run_block(op, state, out);
                        }
                    });
                }
            });
        }

        let mut g = self.obs_sq_half;
        let mut point = PrimalPoint::zeros(nb, n);
        let mut subproblem_iters = 0;
        for (i, out) in outs.iter_mut().enumerate() {
            if let Some(e) = out.error.take() {
                return Err(Error::Subproblem { block: i, source: Box::new(e) });
            }
            let op = &self.blocks[i];
            let (bl, s0) = (op.len(), op.start());
            g += out.value;
            point.y[s0..s0 + bl].copy_from_slice(&out.eta[..bl]);
            point.xi[s0 * n..(s0 + bl) * n].copy_from_slice(&out.eta[bl..]);
            subproblem_iters += out.iters;
        }
        Ok(DualEval { g, point, subproblem_iters })
    }

    /// `∇g_γ(θ) = −Cη(θ)` for the minimizer returned by
    /// [`eval`](Self::eval).
    pub fn gradient(&self, point: &PrimalPoint) -> Vec<f64> {
        let mut out = vec![0.0; self.cross.rows()];
        self.cross.apply_c(point, &mut out);
        for v in out.iter_mut() {
            *v = -*v;
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Accelerated projected dual ascent
// ---------------------------------------------------------------------------

/// Per-iteration subproblem tolerance: a fixed ceiling early, then a
/// summable `O(1/k²)` schedule so the inexactness cannot accumulate.
pub fn subproblem_tol(k: usize) -> f64 {
    let kk = k.max(1) as f64;
    (1e-2 / (kk * kk)).min(1e-6)
}

/// Solves the regularized problem by accelerated ascent on the smoothed
/// dual of the cross-block rows.
pub fn papg_solve(
    data: &Dataset,
    part: Partition,
    gamma: f64,
    cfg: &PapgConfig,
) -> Result<PapgOutcome> {
    let mut ds = DualSmoothing::new(data, part, gamma, cfg.workers)?;
    papg_run(&mut ds, cfg)
}

struct Best {
    score: f64,
    theta: Vec<f64>,
    point: PrimalPoint,
    g: f64,
    /// Whether `g` was evaluated at nonnegative multipliers, making it a
    /// valid lower bound on the regularized optimum.
    g_is_lower_bound: bool,
}

/// Runs the accelerated iteration on an existing evaluator (`papg_solve`
/// wraps this; the continuation driver calls it per stage to reuse warm
/// block states).
pub fn papg_run(ds: &mut DualSmoothing, cfg: &PapgConfig) -> Result<PapgOutcome> {
    let start = Instant::now();
    let data = ds.data;
    let gamma = ds.gamma();
    let op_full = ConstraintOperator::full(data);
    let m_dual = ds.dual_len();

    // Spectral estimate and production Lipschitz constant (a 1% inflation
    // absorbs the power-iteration tolerance). Skipped when nothing is
    // dualized: the first evaluation is then already the exact solve.
    let (sigma_hat, l_gamma) = if m_dual == 0 {
        (0.0, 0.0)
    } else {
        let est = sigma_max(&CrossOp(*ds.cross()), cfg.sigma_tol)?;
        (est.value, 1.01 * lipschitz(gamma, est.value)?)
    };

    // Constants for the record columns; the dual-norm bound needs a
    // cross-block separation, so it only exists for real partitions.
    let alpha_rec = alpha_star(gamma, data).ok().map(|a| a.value);
    let b_theta_rec = match (alpha_rec, ds.cross().upsilon()) {
        (Some(a), Ok(ups)) => b_theta(gamma, a, data, ups).ok(),
        _ => None,
    };
    // Interior-point curvature used for certificates and rounding.
    let round_alpha = alpha_rec.unwrap_or(1.0);
    let preprocess_s = start.elapsed().as_secs_f64();

    let mut theta = match &cfg.warm_theta {
        Some(w) => {
            if w.len() != m_dual {
                return Err(Error::Dimension(format!(
                    "warm multipliers have {} entries, expected {m_dual}",
                    w.len()
                )));
            }
            // The iteration lives in the nonnegative cone.
            w.iter().map(|v| v.max(0.0)).collect()
        }
        None => vec![0.0; m_dual],
    };
    let mut theta_prev = theta.clone();
    let mut theta_tilde = theta.clone();
    let mut t_momentum = 1.0f64;
    let mut s_curv = if l_gamma > 0.0 { l_gamma } else { 1.0 };
    let curv_factor = cfg.step_growth;
    if curv_factor.is_nan() || curv_factor <= 1.0 {
        return Err(Error::InvalidArgument(format!(
            "backtracking growth factor must exceed 1, got {curv_factor}"
        )));
    }

    let mut records = Vec::new();
    let mut trajectory = Vec::new();
    let mut best: Option<Best> = None;
    let mut accept_violations = 0usize;
    let mut k = 0usize;

    let time_left = |caps: &RunCaps| -> Option<Duration> {
        caps.time_cap.map(|cap| cap.saturating_sub(start.elapsed()))
    };

    // Shared bookkeeping for one (multiplier, minimizer) pair: metrics,
    // optional feasibility certificate, best-iterate tracking, optional
    // metric record, and the stop decision. The same logic runs on the
    // evaluated extrapolation before stepping (so an already-satisfied
    // start terminates without a step) and on the accepted iterate after.
    let cross_copy = *ds.cross();
    let assess = |eval: &DualEval,
                      pair_theta: &[f64],
                      nonneg: bool,
                      k: usize,
                      step_used: f64,
                      record_row: bool,
                      best: &mut Option<Best>,
                      records: &mut Vec<PapgRecord>|
     -> bool {
        let infeas_norm = op_full.infeasibility(&eval.point);
        let gap_norm = cross_copy.duality_gap(pair_theta, &eval.point);

        // Feasible-rounding certificate; valid only when the dual value
        // came from nonnegative multipliers (a true lower bound).
        let mut delta_hat = None;
        if (cfg.certificate_delta.is_some() || cfg.trace) && nonneg {
            if let Ok(rounded) =
                round_to_feasible(data, gamma, &eval.point, round_alpha)
            {
                delta_hat = Some(rounded.objective - eval.g);
            }
        }

        if record_row {
            let (subopt_bound, infeas_bound) = match delta_hat {
                Some(dh) if dh >= 0.0 => {
                    let xi_norm = norm2(&eval.point.xi);
                    match error_bounds(
                        gamma,
                        dh,
                        xi_norm,
                        data.n_points(),
                        data.b_x(),
                    ) {
                        Ok(b) => (Some(b.subopt_bound), Some(b.infeas_bound)),
                        Err(_) => (None, None),
                    }
                }
                _ => (None, None),
            };
            records.push(PapgRecord {
                k,
                stage: cfg.stage,
                g_value: eval.g,
                gap_norm,
                infeas_norm,
                step: step_used,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                b_theta: b_theta_rec,
                alpha_star: alpha_rec,
                l_gamma: (m_dual > 0).then_some(l_gamma),
                subopt_bound,
                infeas_bound,
            });
        }

        // Best-iterate score under the run's own success measure.
        let score = match (&cfg.stop, cfg.certificate_delta) {
            (_, Some(_)) => delta_hat.unwrap_or(f64::INFINITY),
            (StopRule::GapInfeas { infeas_tol, gap_tol }, None) => {
                let a = infeas_norm / infeas_tol.max(1e-300);
                let b = gap_norm.abs() / gap_tol.max(1e-300);
                a.max(b)
            }
            (StopRule::AccuracyInfeas { accuracy_tol, infeas_tol, y_ref }, None) => {
                let a = infeas_norm / infeas_tol.max(1e-300);
                let b = crate::report::accuracy(&eval.point.y, y_ref)
                    / accuracy_tol.max(1e-300);
                a.max(b)
            }
            (StopRule::Never, None) => infeas_norm.max(gap_norm.abs()),
        };
        if best.as_ref().is_none_or(|b| score < b.score) {
            *best = Some(Best {
                score,
                theta: pair_theta.to_vec(),
                point: eval.point.clone(),
                g: eval.g,
                g_is_lower_bound: nonneg,
            });
        }

        let rule_hit = cfg.stop.satisfied(infeas_norm, gap_norm, &eval.point.y);
        let cert_hit = match (cfg.certificate_delta, delta_hat) {
            (Some(target), Some(dh)) => dh <= target,
            _ => false,
        };
        rule_hit || cert_hit
    };

    let termination = loop {
        k += 1;
        let tol_k = subproblem_tol(k);
        // Evaluate the inner minimizer at the extrapolated multipliers.
        let tilde_eval = ds.eval(&theta_tilde, tol_k, time_left(&cfg.caps))?;
        let grad = ds.gradient(&tilde_eval.point);

        // Check the evaluated pair before stepping: a start that already
        // meets the stop rule (e.g. warm-started at a certified point)
        // terminates in this iteration without a dual update.
        let tilde_nonneg = theta_tilde.iter().all(|v| *v >= 0.0);
        if assess(
            &tilde_eval,
            &theta_tilde,
            tilde_nonneg,
            k,
            0.0,
            cfg.trace && (m_dual == 0 || cfg.step == StepRule::Constant),
            &mut best,
            &mut records,
        ) {
            // The constant rule records this pair as the iteration row;
            // the adaptive rule normally records the accepted iterate, so
            // on an early stop log the pair that satisfied the rule.
            if cfg.trace && m_dual > 0 && cfg.step == StepRule::Adaptive {
                assess(
                    &tilde_eval,
                    &theta_tilde,
                    tilde_nonneg,
                    k,
                    0.0,
                    true,
                    &mut best,
                    &mut records,
                );
            }
            break Termination::Converged;
        }

        // Dual update.
        if m_dual > 0 {
            match cfg.step {
                StepRule::Constant => {
                    let step_used = 1.0 / l_gamma;
                    let mut cand = theta_tilde.clone();
                    for (c, g) in cand.iter_mut().zip(&grad) {
                        *c = (*c + step_used * g).max(0.0);
                    }
                    theta_prev = std::mem::replace(&mut theta, cand);
                    if cfg.record_iterates {
                        // Diagnostic pass: evaluate the projected iterate
                        // so the trajectory holds nonnegative multipliers
                        // with their own values.
                        let e = ds.eval(&theta, tol_k, time_left(&cfg.caps))?;
                        trajectory.push(PapgIterate {
                            theta: theta.clone(),
                            g: e.g,
                            point: e.point,
                        });
                    }
                }
                StepRule::Adaptive => {
                    // Backtracking curvature search: first trial one notch
                    // below the last accepted curvature, growing until the
                    // candidate's value clears the quadratic model.
                    let mut s_try = s_curv / curv_factor;
                    let mut trial = 0usize;
                    let accepted = loop {
                        trial += 1;
                        if trial > cfg.backtrack_cap {
                            return Err(Error::BacktrackingCap {
                                cap: cfg.backtrack_cap,
                            });
                        }
                        let mut cand = theta_tilde.clone();
                        for (c, g) in cand.iter_mut().zip(&grad) {
                            *c = (*c + g / s_try).max(0.0);
                        }
                        if cand == theta_tilde {
                            // The trial curvature is so large that the
                            // candidate coincides with the evaluated point;
                            // the acceptance inequality holds with equality
                            // and needs no new evaluation.
                            break (cand, tilde_eval.clone());
                        }
                        let cand_eval =
                            ds.eval(&cand, tol_k, time_left(&cfg.caps))?;
                        // At or beyond the certified global curvature bound
                        // the acceptance inequality holds analytically; the
                        // floating-point comparison can still fail there on
                        // rounding noise once the model margin drops under
                        // the last bits of the objective values, so the
                        // trial is accepted without consulting it.
                        let certified = s_try >= l_gamma;
                        let mut inner = 0.0;
                        let mut dist2 = 0.0;
                        for ((c, t), g) in
                            cand.iter().zip(&theta_tilde).zip(&grad)
                        {
                            let d = c - t;
                            inner += g * d;
                            dist2 += d * d;
                        }
                        let model = tilde_eval.g + inner - 0.5 * s_try * dist2;
                        if certified || cand_eval.g >= model {
                            // Independent recheck of the inequality that
                            // gated acceptance, so validation runs can
                            // count violations.
                            if !certified {
                                let mut inner2 = 0.0;
                                let mut dist2b = 0.0;
                                for r in 0..m_dual {
                                    let d = cand[r] - theta_tilde[r];
                                    inner2 += grad[r] * d;
                                    dist2b += d * d;
                                }
                                if cand_eval.g
                                    < tilde_eval.g + inner2
                                        - 0.5 * s_try * dist2b
                                {
                                    accept_violations += 1;
                                }
                            }
                            break (cand, cand_eval);
                        }
                        s_try *= curv_factor;
                    };
                    let (cand, cand_eval) = accepted;
                    s_curv = s_try;
                    theta_prev = std::mem::replace(&mut theta, cand);
                    if cfg.record_iterates {
                        trajectory.push(PapgIterate {
                            theta: theta.clone(),
                            g: cand_eval.g,
                            point: cand_eval.point.clone(),
                        });
                    }
                    // The accepted pair is nonnegative by projection; it
                    // carries this iteration's metric record and gets the
                    // same stop checks as the pre-step pair.
                    if assess(
                        &cand_eval,
                        &theta,
                        true,
                        k,
                        1.0 / s_try,
                        cfg.trace,
                        &mut best,
                        &mut records,
                    ) {
                        break Termination::Converged;
                    }
                }
            }
        }

        if let Some(capped) = cfg.caps.exceeded(k, start) {
            break capped;
        }

        // Momentum update toward the next extrapolated point.
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_momentum * t_momentum).sqrt());
        debug_assert!(t_momentum >= 0.5 * (k as f64 + 1.0) - 1e-9);
        let w = (t_momentum - 1.0) / t_next;
        for r in 0..m_dual {
            theta_tilde[r] = theta[r] + w * (theta[r] - theta_prev[r]);
        }
        t_momentum = t_next;
    };

    let best = best.expect("at least one iteration ran");
    // Final certificate for the returned pair.
    let rounded = round_to_feasible(data, gamma, &best.point, round_alpha).ok();
    let delta_certificate = match (&rounded, best.g_is_lower_bound) {
        (Some(r), true) => Some(r.objective - best.g),
        _ => None,
    };
    Ok(PapgOutcome {
        point: best.point,
        theta: best.theta,
        g_value: best.g,
        termination,
        iterations: k,
        rounded,
        delta_certificate,
        sigma_hat,
        l_gamma,
        preprocess_s,
        accept_violations,
        records,
        trajectory,
    })
}

// ---------------------------------------------------------------------------
// Continuation
// ---------------------------------------------------------------------------

/// Tuning for the continuation driver.
#[derive(Debug, Clone)]
pub struct ContinuationConfig {
    /// Initial accuracy scale; stage `t` targets `ε_t = ε₀/βᵗ`.
    pub eps0: f64,
    /// Per-stage tightening factor (> 1).
    pub beta: f64,
    /// Regularization weight per stage: `γ_t = κ_γ·ε_t`.
    pub kappa_gamma: f64,
    /// Certified suboptimality per stage: `δ_t = κ_δ·ε_t`.
    pub kappa_delta: f64,
    /// Number of stages.
    pub stages: usize,
    /// Inner iteration budget per stage.
    pub stage_iter_cap: usize,
    pub step: StepRule,
    pub workers: Option<usize>,
    pub trace: bool,
    pub time_cap: Option<Duration>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            eps0: 1e-1,
            beta: 2.0,
            kappa_gamma: 1e-2,
            kappa_delta: 1e-2,
            stages: 5,
            stage_iter_cap: 20_000,
            step: StepRule::Adaptive,
            workers: None,
            trace: false,
            time_cap: None,
        }
    }
}

/// One continuation stage's outcome.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub gamma: f64,
    pub delta_target: f64,
    /// Achieved certificate `p̂ − g` at the stage's final iterate.
    pub certificate: Option<f64>,
    pub iterations: usize,
    /// Inner-iteration cap the stage ran under: the a-priori worst-case
    /// count (from the dual-radius bound and the step count an accelerated
    /// ascent needs to close the target gap), clipped by the configured
    /// per-stage cap.
    pub budget: usize,
    pub g_value: f64,
    /// Fit values of the stage's inner minimizer.
    pub y: Vec<f64>,
    pub termination: Termination,
}

/// Result of a continuation run.
#[derive(Debug, Clone)]
pub struct ContinuationOutcome {
    pub stages: Vec<StageOutcome>,
    /// Inner minimizer at the final stage's multipliers.
    pub point: PrimalPoint,
    pub theta: Vec<f64>,
    pub total_inner_iterations: usize,
    pub termination: Termination,
    pub records: Vec<PapgRecord>,
    /// Seconds spent on shared setup (block evaluator, spectral estimate)
    /// before the first stage.
    pub preprocess_s: f64,
}

/// Re-solves with geometrically tightening regularization, warm-starting
/// each stage's multipliers and block states from the previous one, and
/// stopping each stage on its rounding certificate.
pub fn continuation_solve(
    data: &Dataset,
    part: Partition,
    cfg: &ContinuationConfig,
) -> Result<ContinuationOutcome> {
    if cfg.beta <= 1.0 || cfg.eps0 <= 0.0 || cfg.stages == 0 {
        return Err(Error::InvalidArgument(
            "continuation needs β > 1, ε₀ > 0 and at least one stage".into(),
        ));
    }
    if cfg.kappa_gamma <= 0.0 || cfg.kappa_delta <= 0.0 {
        return Err(Error::InvalidArgument(
            "continuation scale factors must be positive".into(),
        ));
    }
    let started = Instant::now();
    let gamma0 = cfg.kappa_gamma * cfg.eps0;
    let mut ds = DualSmoothing::new(data, part, gamma0, cfg.workers)?;

    // Ingredients of the a-priori per-stage iteration bound: an accelerated
    // ascent closes a dual gap of δ within σ_max(C)·R·√(2/(δγ)) steps,
    // where R bounds the distance from the warm start to the stage's dual
    // optimum via the multiplier-norm bound (plus the certified-suboptimality
    // slack of the previous stage's final multipliers).
    let sigma = sigma_max(&CrossOp(*ds.cross()), 1e-6)?.value;
    let preprocess_s = started.elapsed().as_secs_f64();
    let upsilon = ds.cross().upsilon().ok();
    let radius_bound = |gamma_t: f64| -> Option<f64> {
        let ups = upsilon?;
        let alpha = alpha_star(gamma_t, data).ok()?.value;
        let b = b_theta(gamma_t, alpha, data, ups).ok()?;
        Some(b)
    };
    let alpha_of = |gamma_t: f64| alpha_star(gamma_t, data).ok().map(|a| a.value);

    let mut warm: Option<Vec<f64>> = None;
    let mut stages = Vec::with_capacity(cfg.stages);
    let mut records = Vec::new();
    let mut total_inner_iterations = 0;
    let mut final_point = None;
    let mut final_theta = Vec::new();
    let mut termination = Termination::Converged;
    let mut prev: Option<(f64, f64)> = None; // (γ_{t−1}, δ_{t−1})

    for t in 0..cfg.stages {
        let eps_t = cfg.eps0 / cfg.beta.powi(t as i32);
        let gamma_t = cfg.kappa_gamma * eps_t;
        let delta_t = cfg.kappa_delta * eps_t;
        ds.set_gamma(gamma_t)?;

        let radius = match prev {
            // Cold start from zero multipliers: distance to the optimum is
            // at most the multiplier-norm bound itself.
            None => radius_bound(gamma_t),
            // Warm start: previous multipliers are within the previous
            // stage's bound plus its certified slack, and the bound only
            // tightens as the regularization shrinks.
            Some((gamma_prev, delta_prev)) => match (
                radius_bound(gamma_prev),
                alpha_of(gamma_prev),
                upsilon,
            ) {
                (Some(b), Some(alpha), Some(ups)) => {
                    Some(2.0 * b + 2.0 * delta_prev / (alpha * ups))
                }
                _ => None,
            },
        };
        let budget = match radius {
            Some(r) => {
                let kbar = sigma * r * (2.0 / (delta_t * gamma_t)).sqrt();
                if kbar.is_finite() && kbar < cfg.stage_iter_cap as f64 {
                    (kbar.ceil() as usize).max(1)
                } else {
                    cfg.stage_iter_cap
                }
            }
            None => cfg.stage_iter_cap,
        };

        let stage_cfg = PapgConfig {
            step: cfg.step,
            stop: StopRule::Never,
            caps: RunCaps {
                iter_cap: budget,
                time_cap: cfg
                    .time_cap
                    .map(|cap| cap.saturating_sub(started.elapsed())),
            },
            workers: cfg.workers,
            trace: cfg.trace,
            record_iterates: false,
            warm_theta: warm.take(),
            certificate_delta: Some(delta_t),
            stage: t,
            ..PapgConfig::default()
        };
        let out = papg_run(&mut ds, &stage_cfg)?;
        total_inner_iterations += out.iterations;
        records.extend(out.records.iter().cloned());
        stages.push(StageOutcome {
            gamma: gamma_t,
            delta_target: delta_t,
            certificate: out.delta_certificate,
            iterations: out.iterations,
            budget,
            g_value: out.g_value,
            y: out.point.y.clone(),
            termination: out.termination,
        });
        termination = out.termination;
        warm = Some(out.theta.clone());
        final_theta = out.theta;
        final_point = Some(out.point);
        prev = Some((gamma_t, delta_t));
        if matches!(out.termination, Termination::TimeCap) {
            break;
        }
    }

    Ok(ContinuationOutcome {
        stages,
        point: final_point.expect("at least one stage ran"),
        theta: final_theta,
        total_inner_iterations,
        termination,
        records,
        preprocess_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{oracle_solve, OracleConfig};
    use crate::synth::{gen_instance, FunctionKind};

    /// `N` points on an even grid over [−1, 1], observing `x²` plus a
    /// deterministic ripple of magnitude `wiggle`.
    fn parabola_data(n_points: usize, wiggle: f64) -> Dataset {
        let mut x = Vec::with_capacity(n_points);
        let mut y = Vec::with_capacity(n_points);
        for l in 0..n_points {
            let t = -1.0 + 2.0 * l as f64 / (n_points - 1) as f64;
            x.push(t);
            y.push(t * t + wiggle * (((7 * l) % 5) as f64 - 2.0) / 2.0);
        }
        Dataset::new(1, x, y).unwrap()
    }

    #[test]
    fn subproblem_tolerance_schedule_is_capped_then_quadratic() {
        assert_eq!(subproblem_tol(1), 1e-6);
        assert_eq!(subproblem_tol(50), 1e-6);
        assert_eq!(subproblem_tol(100), 1e-6);
        let t = subproblem_tol(200);
        assert!((t - 1e-2 / 4e4).abs() < 1e-20);
    }

    #[test]
    fn zero_multipliers_decouple_identical_blocks() {
        // Two blocks with the same observations and the same within-block
        // geometry (the second is the first shifted in x). With θ = 0 the
        // blocks solve independently, so their minimizers must coincide.
        let half = 5;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for l in 0..half {
            let t = l as f64 * 0.3;
            x.push(t);
            y.push(0.5 * t * t - t + 0.25 * if l % 2 == 0 { 1.0 } else { -1.0 });
        }
        for l in 0..half {
            x.push(x[l] + 10.0);
            y.push(y[l]);
        }
        let data = Dataset::new(1, x, y).unwrap();
        let part = Partition::new(&data, 2).unwrap();
        let mut ds = DualSmoothing::new(&data, part, 1e-2, Some(1)).unwrap();
        let theta = vec![0.0; ds.dual_len()];
        let e = ds.eval(&theta, 1e-10, None).unwrap();
        for l in 0..half {
            assert!(
                (e.point.y[l] - e.point.y[half + l]).abs() < 1e-7,
                "block fits differ at {l}: {} vs {}",
                e.point.y[l],
                e.point.y[half + l]
            );
            assert!((e.point.xi[l] - e.point.xi[half + l]).abs() < 1e-6);
        }
    }

    #[test]
    fn worker_count_does_not_change_the_evaluation() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 1, 9, 11).unwrap();
        let theta_len = {
            let part = Partition::new(&data, 3).unwrap();
            CrossOperator::new(&data, part).rows()
        };
        let theta: Vec<f64> = (0..theta_len).map(|r| 0.01 * (r % 7) as f64).collect();
        let mut results = Vec::new();
        for workers in [1usize, 3, 8] {
            let part = Partition::new(&data, 3).unwrap();
            let mut ds = DualSmoothing::new(&data, part, 1e-2, Some(workers)).unwrap();
            results.push(ds.eval(&theta, 1e-8, None).unwrap());
        }
        for r in &results[1..] {
            assert_eq!(r.g.to_bits(), results[0].g.to_bits());
            assert_eq!(r.point.y, results[0].point.y);
            assert_eq!(r.point.xi, results[0].point.xi);
        }
    }

    #[test]
    fn single_block_run_solves_the_whole_problem_in_one_iteration() {
        let data = parabola_data(8, 0.15);
        let part = Partition::new(&data, 1).unwrap();
        let gamma = 1e-2;
        let cfg = PapgConfig {
            stop: StopRule::GapInfeas { infeas_tol: 1e-8, gap_tol: 1e-8 },
            ..PapgConfig::default()
        };
        let out = papg_solve(&data, part, gamma, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(matches!(out.termination, Termination::Converged));
        assert!(out.theta.is_empty());
        assert_eq!(out.l_gamma, 0.0);

        let reference =
            oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();
        let obj = primal_objective(&data, gamma, &out.point);
        assert!(
            (obj - reference.objective).abs() <= 1e-5 * (1.0 + reference.objective),
            "objective {obj} vs reference {}",
            reference.objective
        );
        // The interior iterate is already strictly feasible, so rounding
        // must be a no-op and certify a vanishing gap.
        let rounded = out.rounded.as_ref().expect("rounding succeeds");
        assert_eq!(rounded.lambda, 0.0);
        let delta = out.delta_certificate.expect("certificate present");
        assert!(delta.abs() <= 1e-8 * (1.0 + obj.abs()), "delta {delta}");
    }

    #[test]
    fn rounding_blends_just_enough_to_restore_feasibility() {
        let data = parabola_data(10, 0.3);
        let gamma = 1e-2;
        // Interpolating the noisy observations with zero subgradients
        // violates many rows.
        let bad = PrimalPoint {
            y: data.observations().to_vec(),
            xi: vec![0.0; data.n_points()],
        };
        let op = ConstraintOperator::full(&data);
        assert!(op.infeasibility(&bad) > 0.0);
        let alpha = alpha_star(gamma, &data).unwrap().value;
        let rounded = round_to_feasible(&data, gamma, &bad, alpha).unwrap();
        assert!(rounded.lambda > 0.0 && rounded.lambda <= 1.0);
        assert_eq!(op.infeasibility(&rounded.point), 0.0, "rounded point infeasible");
        // Shrinking the blend below the computed value must leave at least
        // one violated row, i.e. the blend is minimal up to its safety nudge.
        let lam = rounded.lambda / (1.0 + 1e-6);
        let interior = slater_point(&data, alpha).unwrap();
        let mut shy = PrimalPoint::zeros(data.n_points(), data.dim());
        for l in 0..data.n_points() {
            shy.y[l] = lam * interior.y[l] + (1.0 - lam) * bad.y[l];
        }
        for j in 0..data.n_points() * data.dim() {
            shy.xi[j] = lam * interior.xi[j] + (1.0 - lam) * bad.xi[j];
        }
        assert!(op.infeasibility(&shy) > 0.0, "blend was not minimal");

        // A feasible input must come back unchanged.
        let ok = round_to_feasible(&data, gamma, &rounded.point, alpha).unwrap();
        assert_eq!(ok.lambda, 0.0);
        assert_eq!(ok.point.y, rounded.point.y);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 1, 12, 7).unwrap();
        let part = Partition::new(&data, 2).unwrap();
        let gamma = 1e-2;
        let mut ds = DualSmoothing::new(&data, part, gamma, Some(1)).unwrap();
        let m = ds.dual_len();
        let theta: Vec<f64> = (0..m).map(|r| 0.05 * ((r % 5) as f64)).collect();
        let tol = 1e-10;
        let e0 = ds.eval(&theta, tol, None).unwrap();
        let grad = ds.gradient(&e0.point);
        // Probe the rows with the largest analytic entries.
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| grad[b].abs().total_cmp(&grad[a].abs()));
        for &r in idx.iter().take(4) {
            let h = 1e-3 * (1.0 + theta[r].abs());
            let mut tp = theta.clone();
            tp[r] += h;
            let gp = ds.eval(&tp, tol, None).unwrap().g;
            let mut tm = theta.clone();
            tm[r] -= h;
            let gm = ds.eval(&tm, tol, None).unwrap().g;
            let fd = (gp - gm) / (2.0 * h);
            let denom = grad[r].abs().max(1.0);
            assert!(
                (fd - grad[r]).abs() / denom < 1e-3,
                "row {r}: fd {fd} vs analytic {}",
                grad[r]
            );
        }
    }

    #[test]
    fn constant_step_iterates_follow_the_projected_momentum_recursion() {
        let data = parabola_data(6, 0.2);
        let gamma = 1e-2;
        let cfg = PapgConfig {
            step: StepRule::Constant,
            stop: StopRule::GapInfeas { infeas_tol: 0.0, gap_tol: 0.0 },
            caps: RunCaps::iters(3),
            workers: Some(1),
            record_iterates: true,
            ..PapgConfig::default()
        };
        let part = Partition::new(&data, 2).unwrap();
        let out = papg_solve(&data, part, gamma, &cfg).unwrap();
        assert_eq!(out.trajectory.len(), 3);

        // Replay the recursion with an independent evaluator, issuing the
        // same evaluation sequence so the warm starts match exactly.
        let part = Partition::new(&data, 2).unwrap();
        let mut ds = DualSmoothing::new(&data, part, gamma, Some(1)).unwrap();
        let m = ds.dual_len();
        let sigma = sigma_max(&CrossOp(*ds.cross()), cfg.sigma_tol).unwrap().value;
        let l_gamma = 1.01 * lipschitz(gamma, sigma).unwrap();
        assert!((l_gamma - out.l_gamma).abs() <= 1e-12 * l_gamma);

        let mut theta = vec![0.0; m];
        let mut theta_prev;
        let mut theta_tilde = theta.clone();
        let mut t_momentum = 1.0f64;
        for k in 1..=3usize {
            let tol_k = subproblem_tol(k);
            let e = ds.eval(&theta_tilde, tol_k, None).unwrap();
            let grad = ds.gradient(&e.point);
            let mut cand = theta_tilde.clone();
            for (c, g) in cand.iter_mut().zip(&grad) {
                *c = (*c + g / l_gamma).max(0.0);
            }
            theta_prev = std::mem::replace(&mut theta, cand);
            // The run's diagnostic pass evaluates the projected iterate too.
            let e_proj = ds.eval(&theta, tol_k, None).unwrap();

            let it = &out.trajectory[k - 1];
            for (r, (&recorded, &replayed)) in it.theta.iter().zip(&theta).enumerate() {
                assert!(
                    (recorded - replayed).abs() <= 1e-12 * (1.0 + replayed.abs()),
                    "iterate {k} row {r}: {recorded} vs {replayed}"
                );
            }
            assert!((it.g - e_proj.g).abs() <= 1e-10 * (1.0 + e_proj.g.abs()));

            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_momentum * t_momentum).sqrt());
            let w = (t_momentum - 1.0) / t_next;
            for r in 0..m {
                theta_tilde[r] = theta[r] + w * (theta[r] - theta_prev[r]);
            }
            t_momentum = t_next;
        }
        // The momentum scalars follow t₁ = 1, t₂ = (1+√5)/2, and so on;
        // after three updates the replay holds t₄.
        let t2 = 0.5 * (1.0 + 5.0f64.sqrt());
        let t3 = 0.5 * (1.0 + (1.0 + 4.0 * t2 * t2).sqrt());
        let t4 = 0.5 * (1.0 + (1.0 + 4.0 * t3 * t3).sqrt());
        assert!((t4 - t_momentum).abs() < 1e-12);
    }

    #[test]
    fn dual_gap_envelopes_distance_to_the_regularized_optimum() {
        let data = parabola_data(10, 0.25);
        let gamma = 1e-2;
        let reference = oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();

        let part = Partition::new(&data, 2).unwrap();
        let cfg = PapgConfig {
            step: StepRule::Adaptive,
            stop: StopRule::Never,
            caps: RunCaps::iters(40),
            workers: Some(1),
            record_iterates: true,
            ..PapgConfig::default()
        };
        let out = papg_solve(&data, part, gamma, &cfg).unwrap();
        assert_eq!(out.accept_violations, 0);
        assert_eq!(out.trajectory.len(), 40);

        // Re-evaluate each recorded multiplier tightly so subproblem
        // inexactness cannot blur the comparison.
        let part = Partition::new(&data, 2).unwrap();
        let mut tight = DualSmoothing::new(&data, part, gamma, Some(1)).unwrap();
        for (k, it) in out.trajectory.iter().enumerate() {
            assert!(it.theta.iter().all(|v| *v >= 0.0), "negative multiplier at {k}");
            let e = tight.eval(&it.theta, 1e-12, None).unwrap();
            assert!(
                e.g <= reference.objective + 1e-7 * (1.0 + reference.objective.abs()),
                "dual value above the optimum at iterate {k}"
            );
            let mut lhs = 0.0;
            for l in 0..data.n_points() {
                let d = e.point.y[l] - reference.point.y[l];
                lhs += d * d;
            }
            for j in 0..data.n_points() * data.dim() {
                let d = e.point.xi[j] - reference.point.xi[j];
                lhs += gamma * d * d;
            }
            let rhs = 2.0 * (reference.objective - e.g);
            assert!(
                lhs <= rhs + 1e-8,
                "envelope failed at iterate {k}: {lhs} > {rhs}"
            );
        }
    }

    #[test]
    fn warm_start_at_a_certified_point_converges_immediately() {
        let data = parabola_data(12, 0.25);
        let gamma = 1e-2;
        let delta = 0.05;
        let part = Partition::new(&data, 2).unwrap();
        let cfg = PapgConfig {
            stop: StopRule::Never,
            certificate_delta: Some(delta),
            caps: RunCaps::iters(5_000),
            workers: Some(1),
            ..PapgConfig::default()
        };
        let first = papg_solve(&data, part, gamma, &cfg).unwrap();
        assert!(matches!(first.termination, Termination::Converged));
        let achieved = first.delta_certificate.expect("certificate present");
        assert!(achieved <= delta);

        let part = Partition::new(&data, 2).unwrap();
        let warm_cfg = PapgConfig {
            warm_theta: Some(first.theta.clone()),
            ..cfg.clone()
        };
        let second = papg_solve(&data, part, gamma, &warm_cfg).unwrap();
        assert!(matches!(second.termination, Termination::Converged));
        assert!(
            second.iterations <= 2,
            "warm start took {} iterations",
            second.iterations
        );
    }

    #[test]
    fn continuation_certifies_each_stage_and_tightens_geometrically() {
        let data = parabola_data(12, 0.25);
        let cfg = ContinuationConfig {
            eps0: 1.0,
            beta: 2.0,
            kappa_gamma: 1e-2,
            kappa_delta: 0.1,
            stages: 3,
            stage_iter_cap: 5_000,
            step: StepRule::Adaptive,
            workers: Some(1),
            trace: false,
            time_cap: None,
        };
        let part = Partition::new(&data, 2).unwrap();
        let out = continuation_solve(&data, part, &cfg).unwrap();
        assert_eq!(out.stages.len(), 3);
        let mut total = 0;
        for (t, st) in out.stages.iter().enumerate() {
            let eps = 1.0 / 2.0f64.powi(t as i32);
            assert!((st.gamma - 1e-2 * eps).abs() < 1e-15);
            assert!((st.delta_target - 0.1 * eps).abs() < 1e-15);
            assert!(matches!(st.termination, Termination::Converged));
            let c = st.certificate.expect("stage certified");
            assert!(c <= st.delta_target, "stage {t}: {c} > {}", st.delta_target);
            total += st.iterations;
        }
        assert_eq!(total, out.total_inner_iterations);
        assert_eq!(out.stages.last().unwrap().y, out.point.y);
    }
}
