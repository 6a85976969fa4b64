//! Stop rules, run caps, per-iteration metrics records, and the final
//! report shared by all solvers.

use std::time::{Duration, Instant};

/// How a solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// The stop rule (or the method's own optimality certificate) was met.
    Converged,
    /// Iteration cap reached; the result is the best partial iterate.
    IterCap,
    /// Wall-clock cap reached; the result is the best partial iterate.
    TimeCap,
    /// Divergence detected (ADMM only); the result is the best iterate
    /// observed before the abort.
    Diverged,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::IterCap => "iter_cap",
            Termination::TimeCap => "time_cap",
            Termination::Diverged => "diverged",
        }
    }

    /// Whether the run hit a resource cap rather than its stop rule.
    pub fn capped(&self) -> bool {
        matches!(self, Termination::IterCap | Termination::TimeCap)
    }
}

/// Iteration-level stopping criterion for the iterative solvers.
#[derive(Debug, Clone)]
pub enum StopRule {
    /// Stop when normalized infeasibility ≤ `infeas_tol` **and**
    /// normalized |duality gap| ≤ `gap_tol`.
    GapInfeas { infeas_tol: f64, gap_tol: f64 },
    /// Stop when `‖y − y_ref‖/√N ≤ accuracy_tol` **and** normalized
    /// infeasibility ≤ `infeas_tol`; `y_ref` is a reference solution
    /// (typically from the dense oracle).
    AccuracyInfeas { accuracy_tol: f64, infeas_tol: f64, y_ref: Vec<f64> },
    /// Never stops on metrics; used when an outer driver supplies its own
    /// stopping certificate (continuation stages) or wants caps only.
    Never,
}

impl StopRule {
    /// Evaluate the rule on the current iterate's metrics.
    pub fn satisfied(&self, infeas_norm: f64, gap_norm: f64, y: &[f64]) -> bool {
        match self {
            StopRule::GapInfeas { infeas_tol, gap_tol } => {
                infeas_norm <= *infeas_tol && gap_norm.abs() <= *gap_tol
            }
            StopRule::AccuracyInfeas { accuracy_tol, infeas_tol, y_ref } => {
                infeas_norm <= *infeas_tol && accuracy(y, y_ref) <= *accuracy_tol
            }
            StopRule::Never => false,
        }
    }
}

/// Root-mean-square distance to a reference: `‖y − y_ref‖₂ / √N`.
pub fn accuracy(y: &[f64], y_ref: &[f64]) -> f64 {
    assert_eq!(y.len(), y_ref.len());
    let s: f64 = y.iter().zip(y_ref).map(|(a, b)| (a - b) * (a - b)).sum();
    (s / y.len() as f64).sqrt()
}

/// Resource caps applied on top of a [`StopRule`].
#[derive(Debug, Clone, Copy)]
pub struct RunCaps {
    pub iter_cap: usize,
    pub time_cap: Option<Duration>,
}

impl Default for RunCaps {
    fn default() -> Self {
        Self { iter_cap: 200_000, time_cap: None }
    }
}

impl RunCaps {
    pub fn iters(iter_cap: usize) -> Self {
        Self { iter_cap, time_cap: None }
    }

    /// Returns the cap that fired, if any.
    pub fn exceeded(&self, iter: usize, started: Instant) -> Option<Termination> {
        if iter >= self.iter_cap {
            return Some(Termination::IterCap);
        }
        if let Some(cap) = self.time_cap {
            if started.elapsed() >= cap {
                return Some(Termination::TimeCap);
            }
        }
        None
    }
}

/// One accelerated-dual iteration.
#[derive(Debug, Clone, Copy)]
pub struct PapgRecord {
    pub k: usize,
    pub stage: usize,
    pub g_value: f64,
    pub gap_norm: f64,
    pub infeas_norm: f64,
    /// Effective step size `1/s_k` used for the accepted dual update.
    pub step: f64,
    pub wall_ms: f64,
    pub b_theta: Option<f64>,
    pub alpha_star: Option<f64>,
    pub l_gamma: Option<f64>,
    pub subopt_bound: Option<f64>,
    pub infeas_bound: Option<f64>,
}

/// One active-set iteration.
#[derive(Debug, Clone, Copy)]
pub struct AsmRecord {
    pub k: usize,
    pub objective: f64,
    /// Working-set size after the update.
    pub m_k: usize,
    pub t_step: f64,
    pub wall_ms: f64,
}

/// One ADMM sweep.
#[derive(Debug, Clone, Copy)]
pub struct AdmmRecord {
    pub k: usize,
    pub objective: f64,
    pub infeas_norm: f64,
    pub wall_ms: f64,
}

/// One interior-point Newton step.
#[derive(Debug, Clone, Copy)]
pub struct IpmRecord {
    pub k: usize,
    pub mu: f64,
    pub r_p: f64,
    pub r_d: f64,
    pub alpha: f64,
    pub wall_ms: f64,
}

/// Per-iteration metrics, tagged by solver family.
#[derive(Debug, Clone)]
pub enum MetricsLog {
    Papg(Vec<PapgRecord>),
    Asm(Vec<AsmRecord>),
    Admm(Vec<AdmmRecord>),
    Ipm(Vec<IpmRecord>),
    None,
}

/// Final outcome of a solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub method: String,
    pub termination: Termination,
    pub iterations: usize,
    pub walltime_s: f64,
    /// Time spent before the first iteration (spectral estimates,
    /// factorization caches, starting-point construction).
    pub preprocess_s: f64,
    /// Final objective of the problem the method solves (regularized for
    /// the dual/active-set/interior-point methods, unregularized for ADMM).
    pub objective: f64,
    /// Normalized infeasibility of the returned model.
    pub infeasibility: f64,
    /// Normalized duality gap of the returned primal/dual pair over the
    /// rows the method dualizes.
    pub duality_gap: f64,
    pub log: MetricsLog,
}

impl SolveReport {
    pub fn new(method: &str) -> Self {
        Self {
            method: method.to_string(),
            termination: Termination::Converged,
            iterations: 0,
            walltime_s: 0.0,
            preprocess_s: 0.0,
            objective: f64::NAN,
            infeasibility: f64::NAN,
            duality_gap: f64::NAN,
            log: MetricsLog::None,
        }
    }
}
