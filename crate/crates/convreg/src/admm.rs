//! Multi-block ADMM baseline for the unregularized fit.
//!
//! Minimizes `½‖y − ȳ‖²` subject to the pairwise convexity constraints by
//! splitting into three primal blocks: the subgradients `ξ`, the fit values
//! `y`, and the residuals `ν ∈ R^{N²}` constrained to `ν ≤ 0` and coupled
//! through `ν = Dy + Ξ`, where `(Dy)_{ij} = y_j − y_i` over all ordered
//! pairs including `(i,i)` (zero rows) and `Ξ_{ij} = Δ_ijᵀ ξ_j` with
//! `Δ_ij = x̄_i − x̄_j`. One sweep updates, in order,
//!
//! ```text
//!   1: ξ_j ← Δ̄_j Σ_i Δ_ij (θ_ij/ρ + ν_ij + y_i − y_j)
//!   2: ν̃_ij ← ν_ij − Δ_ijᵀ ξ_j
//!   3: w ← ȳ + Dᵀθ + ρ Dᵀν̃
//!   4: y_i ← (w_i + 2ρ Σ_j w_j) / (1 + 2Nρ)
//!   5: ν_ij ← min{ y_j + Δ_ijᵀξ_j − y_i − θ_ij/ρ, 0 }
//!   6: θ_ij ← θ_ij + ρ (ν_ij + y_i − y_j − Δ_ijᵀξ_j)
//! ```
//!
//! with the per-point inverse blocks `Δ̄_j = (Σ_i Δ_ij Δ_ijᵀ)⁻¹` built once
//! up front. Step 4 is the closed-form solve of `(I + ρDᵀD) y = w`, since
//! `DᵀD = 2N·I − 2·𝟙𝟙ᵀ`.
//!
//! A pair `(i,j)` here corresponds to the ordered constraint row
//! `(ℓ₁, ℓ₂) = (j, i)` of the rest of the crate — `ν_{ij} ≤ 0` states that
//! the supporting plane at `x̄_j` stays below `y_i` — and at a fixed point
//! `θ_{ij} = −θ*_{(j,i)} ≤ 0` recovers the (sign-flipped) multipliers of
//! the constrained least-squares problem.
//!
//! With three or more blocks this scheme has no general convergence
//! guarantee, so the driver watches the combined residual and aborts when
//! it stays an order of magnitude above its running minimum for a long
//! stretch.

use std::time::Instant;

use crate::dataset::{Dataset, PrimalPoint};
use crate::error::{Error, Result};
use crate::la::{chol_solve, cholesky_in_place, dot};
use crate::ops::row_of_pair;
use crate::report::{AdmmRecord, RunCaps, StopRule, Termination};

/// Abort once the combined residual has stayed above
/// `DIVERGENCE_FACTOR × running minimum` for this many consecutive sweeps.
const DIVERGENCE_WINDOW: usize = 500;
const DIVERGENCE_FACTOR: f64 = 10.0;

// ---------------------------------------------------------------------------
// Precomputed geometry
// ---------------------------------------------------------------------------

/// Location differences `Δ_ij = x̄_i − x̄_j` and the per-point inverse
/// blocks `Δ̄_j = (Σ_i Δ_ij Δ_ijᵀ)⁻¹` used by the ξ update.
#[derive(Debug, Clone)]
pub struct AdmmCaches {
    n_points: usize,
    dim: usize,
    /// `Δ_ij`, flattened as `(i·N + j)·n ..`; `Δ_ii = 0`.
    delta: Vec<f64>,
    /// `Δ̄_j`, one row-major `n × n` block per point.
    delta_bar: Vec<f64>,
}

impl AdmmCaches {
    #[inline]
    pub fn delta(&self, i: usize, j: usize) -> &[f64] {
        let s = (i * self.n_points + j) * self.dim;
        &self.delta[s..s + self.dim]
    }

    #[inline]
    pub fn delta_bar(&self, j: usize) -> &[f64] {
        let s = j * self.dim * self.dim;
        &self.delta_bar[s..s + self.dim * self.dim]
    }
}

/// Build [`AdmmCaches`]: `O(N²n)` differences and `N` dense `n × n`
/// inversions (`O(N²n² + Nn³)` total). Fails when some point's difference
/// block `Σ_i Δ_ij Δ_ijᵀ` is singular, i.e. the locations seen from `x̄_j`
/// do not span `R^n`.
pub fn admm_precompute(data: &Dataset) -> Result<AdmmCaches> {
    let np = data.n_points();
    let n = data.dim();
    let mut delta = vec![0.0; np * np * n];
    for i in 0..np {
        let xi = data.x(i);
        for j in 0..np {
            let xj = data.x(j);
            let s = (i * np + j) * n;
            for d in 0..n {
                delta[s + d] = xi[d] - xj[d];
            }
        }
    }
    let mut delta_bar = vec![0.0; np * n * n];
    let mut block = vec![0.0; n * n];
    for j in 0..np {
        block.fill(0.0);
        for i in 0..np {
            let dij = &delta[(i * np + j) * n..(i * np + j + 1) * n];
            for a in 0..n {
                for b in 0..n {
                    block[a * n + b] += dij[a] * dij[b];
                }
            }
        }
        let mut factor = block.clone();
        if cholesky_in_place(&mut factor, n).is_err() {
            return Err(Error::SingularBlock { index: j });
        }
        // Invert by solving against the identity columns.
        let inv = &mut delta_bar[j * n * n..(j + 1) * n * n];
        let mut col = vec![0.0; n];
        for b in 0..n {
            col.fill(0.0);
            col[b] = 1.0;
            chol_solve(&factor, n, &mut col);
            for a in 0..n {
                inv[a * n + b] = col[a];
            }
        }
    }
    Ok(AdmmCaches { n_points: np, dim: n, delta, delta_bar })
}

// ---------------------------------------------------------------------------
// Difference operator over all ordered pairs
// ---------------------------------------------------------------------------

/// `z_{ij} = y_j − y_i` over all `N²` ordered pairs in lexicographic order
/// (the `(i,i)` rows are zero).
pub fn apply_d(y: &[f64]) -> Vec<f64> {
    let np = y.len();
    let mut z = vec![0.0; np * np];
    for i in 0..np {
        for j in 0..np {
            z[i * np + j] = y[j] - y[i];
        }
    }
    z
}

/// Adjoint of [`apply_d`]: `(Dᵀz)_ℓ = Σ_i z_{iℓ} − Σ_j z_{ℓj}` (column sum
/// minus row sum of the `N × N` view of `z`).
pub fn apply_d_t(z: &[f64], n_points: usize) -> Vec<f64> {
    debug_assert_eq!(z.len(), n_points * n_points);
    let mut out = vec![0.0; n_points];
    for i in 0..n_points {
        for j in 0..n_points {
            let v = z[i * n_points + j];
            out[j] += v;
            out[i] -= v;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// State and one sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub y: Vec<f64>,
    /// Subgradients, `ξ_j` at `j·n ..`.
    pub xi: Vec<f64>,
    /// Residual variables over ordered pairs, `ν_{ij}` at `i·N + j`;
    /// `ν ≤ 0` after every sweep.
    pub nu: Vec<f64>,
    /// Multipliers over ordered pairs; `≤ 0` at a fixed point.
    pub theta: Vec<f64>,
    /// Step-3 work vector (kept for inspection; recomputed each sweep).
    pub w: Vec<f64>,
    pub rho: f64,
}

impl AdmmState {
    /// Cold start: `y = ȳ`, `ξ = 0`, `θ = 0`, and `ν` clamped consistent
    /// with them (`ν_{ij} = min{ȳ_j − ȳ_i, 0}`).
    pub fn cold(data: &Dataset, rho: f64) -> Result<Self> {
        if rho <= 0.0 {
            return Err(Error::InvalidArgument(format!("ADMM needs ρ > 0, got {rho}")));
        }
        let np = data.n_points();
        let obs = data.observations();
        let mut nu = apply_d(obs);
        for v in nu.iter_mut() {
            *v = v.min(0.0);
        }
        Ok(Self {
            y: obs.to_vec(),
            xi: vec![0.0; np * data.dim()],
            nu,
            theta: vec![0.0; np * np],
            w: vec![0.0; np],
            rho,
        })
    }

    /// Seed from a solution of the constrained least-squares problem:
    /// `y, ξ` from `point`, `θ_{ij} = −theta_rows[(j,i)]` (sign-flipped,
    /// reindexed multipliers of the ordered constraint rows), and `ν`
    /// clamped consistent with the point. An optimal KKT triple seeded this
    /// way is a fixed point of [`admm_step`] for any `ρ`.
    pub fn from_kkt(
        data: &Dataset,
        rho: f64,
        point: &PrimalPoint,
        theta_rows: &[f64],
    ) -> Result<Self> {
        if rho <= 0.0 {
            return Err(Error::InvalidArgument(format!("ADMM needs ρ > 0, got {rho}")));
        }
        let np = data.n_points();
        let n = data.dim();
        let mut nu = vec![0.0; np * np];
        let mut theta = vec![0.0; np * np];
        for i in 0..np {
            for j in 0..np {
                if i == j {
                    continue;
                }
                let xj = &point.xi[j * n..(j + 1) * n];
                let mut v = point.y[j] - point.y[i];
                for ((&xi_d, &xj_d), &g) in data.x(i).iter().zip(data.x(j)).zip(xj) {
                    v += (xi_d - xj_d) * g;
                }
                nu[i * np + j] = v.min(0.0);
                theta[i * np + j] = -theta_rows[row_of_pair(j, i, np)];
            }
        }
        Ok(Self {
            y: point.y.clone(),
            xi: point.xi.clone(),
            nu,
            theta,
            w: vec![0.0; np],
            rho,
        })
    }
}

/// Residual diagnostics of one sweep.
#[derive(Debug, Clone, Copy)]
pub struct AdmmStepInfo {
    /// `‖ν − Dy − Ξ‖₂` after the sweep (coupling-constraint violation).
    pub primal_res: f64,
    /// `ρ‖ν − ν_prev‖₂` (change of the residual block).
    pub dual_res: f64,
    /// Unnormalized convexity infeasibility `‖(Dy + Ξ)₊‖₂` of `(y, ξ)`
    /// over the off-diagonal pairs (identical to the constraint operator's
    /// raw infeasibility).
    pub infeas_raw: f64,
}

/// One six-step sweep, updating `state` in place.
pub fn admm_step(data: &Dataset, caches: &AdmmCaches, state: &mut AdmmState) -> AdmmStepInfo {
    let np = data.n_points();
    let n = data.dim();
    let rho = state.rho;
    let obs = data.observations();
    debug_assert_eq!(caches.n_points, np);
    debug_assert_eq!(caches.dim, n);

    // Step 1: ξ_j = Δ̄_j Σ_i Δ_ij (θ_ij/ρ + ν_ij + y_i − y_j).
    let mut acc = vec![0.0; n];
    for j in 0..np {
        acc.fill(0.0);
        for i in 0..np {
            let coeff = state.theta[i * np + j] / rho + state.nu[i * np + j] + state.y[i]
                - state.y[j];
            let dij = caches.delta(i, j);
            for d in 0..n {
                acc[d] += coeff * dij[d];
            }
        }
        let bar = caches.delta_bar(j);
        let xj = &mut state.xi[j * n..(j + 1) * n];
        for a in 0..n {
            xj[a] = dot(&bar[a * n..(a + 1) * n], &acc);
        }
    }

    // Ξ_{ij} = Δ_ijᵀ ξ_j, shared by steps 2, 5 and 6.
    let mut dxi = vec![0.0; np * np];
    for i in 0..np {
        for j in 0..np {
            dxi[i * np + j] = dot(caches.delta(i, j), &state.xi[j * n..(j + 1) * n]);
        }
    }

    // Steps 3–4: w = ȳ + Dᵀ(θ + ρν̃) with ν̃ = ν − Ξ, then the closed-form
    // solve of (I + 2Nρ·I − 2ρ𝟙𝟙ᵀ) y = w.
    state.w.copy_from_slice(obs);
    for i in 0..np {
        for j in 0..np {
            let z = state.theta[i * np + j] + rho * (state.nu[i * np + j] - dxi[i * np + j]);
            state.w[j] += z;
            state.w[i] -= z;
        }
    }
    let wsum: f64 = state.w.iter().sum();
    let scale = 1.0 / (1.0 + 2.0 * np as f64 * rho);
    for (yi, wi) in state.y.iter_mut().zip(&state.w) {
        *yi = (wi + 2.0 * rho * wsum) * scale;
    }

    // Steps 5–6: clamp the residuals, then ascend the multipliers along
    // the coupling violation c = ν − Dy − Ξ.
    let mut primal_sq = 0.0;
    let mut dual_sq = 0.0;
    let mut infeas_sq = 0.0;
    for i in 0..np {
        for j in 0..np {
            let idx = i * np + j;
            let coupling = state.y[j] + dxi[idx] - state.y[i];
            let nu_new = (coupling - state.theta[idx] / rho).min(0.0);
            let step = nu_new - state.nu[idx];
            dual_sq += step * step;
            state.nu[idx] = nu_new;
            let c = nu_new - coupling;
            state.theta[idx] += rho * c;
            primal_sq += c * c;
            if i != j && coupling > 0.0 {
                infeas_sq += coupling * coupling;
            }
        }
    }
    AdmmStepInfo {
        primal_res: primal_sq.sqrt(),
        dual_res: rho * dual_sq.sqrt(),
        infeas_raw: infeas_sq.sqrt(),
    }
}

// ---------------------------------------------------------------------------
// Divergence guard
// ---------------------------------------------------------------------------

/// Watches a residual sequence and trips once it has stayed above
/// [`DIVERGENCE_FACTOR`] times its running minimum for
/// [`DIVERGENCE_WINDOW`] consecutive observations.
#[derive(Debug, Clone, Copy)]
pub struct DivergenceGuard {
    running_min: f64,
    streak: usize,
}

impl DivergenceGuard {
    pub fn new() -> Self {
        Self { running_min: f64::INFINITY, streak: 0 }
    }

    /// Feed one residual; returns `true` when divergence is declared.
    pub fn observe(&mut self, residual: f64) -> bool {
        if residual < self.running_min {
            self.running_min = residual;
        }
        if residual > DIVERGENCE_FACTOR * self.running_min {
            self.streak += 1;
        } else {
            self.streak = 0;
        }
        self.streak >= DIVERGENCE_WINDOW
    }
}

impl Default for DivergenceGuard {
    fn default() -> Self {
        Self::new()
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AdmmConfig {
    /// Penalty parameter. Nothing in the problem fixes it; 1.0 is an
    /// artifact default, and [`rho_grid`] supports sweeping it.
    pub rho: f64,
    pub caps: RunCaps,
    /// Record one [`AdmmRecord`] per sweep.
    pub trace: bool,
    /// Stopping rule. [`StopRule::GapInfeas`] reads the normalized combined
    /// residual `(‖c‖ + ρ‖Δν‖)/N` in place of a duality gap (the method
    /// does not produce dual bounds).
    pub stop: StopRule,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            rho: 1.0,
            caps: RunCaps::default(),
            trace: false,
            stop: StopRule::GapInfeas { infeas_tol: 1e-6, gap_tol: 1e-7 },
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Returned iterate: the stopping iterate when converged, otherwise
    /// the best iterate seen (smallest combined residual).
    pub point: PrimalPoint,
    /// `½‖y − ȳ‖²` at the returned iterate (the objective this method
    /// minimizes; there is no ξ regularization here).
    pub objective: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub records: Vec<AdmmRecord>,
    /// Final sweep diagnostics.
    pub primal_res: f64,
    pub dual_res: f64,
    /// Normalized convexity infeasibility of the returned iterate.
    pub infeasibility: f64,
    /// Seconds spent building [`AdmmCaches`].
    pub preprocess_s: f64,
    pub rho: f64,
}

/// Run the multi-block scheme from the cold start until the stop rule,
/// a cap, or the divergence guard fires.
pub fn admm_solve(data: &Dataset, cfg: &AdmmConfig) -> Result<AdmmOutcome> {
    let started = Instant::now();
    let caches = admm_precompute(data)?;
    let mut state = AdmmState::cold(data, cfg.rho)?;
    let preprocess_s = started.elapsed().as_secs_f64();

    let np = data.n_points();
    let off_rows = (np * np - np) as f64;
    let mut records = Vec::new();
    let mut guard = DivergenceGuard::new();
    let mut best_combined = f64::INFINITY;
    let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut k = 0usize;
    let mut last;

    let termination = loop {
        k += 1;
        let info = admm_step(data, &caches, &mut state);
        last = info;
        let combined = info.primal_res + info.dual_res;
        let infeas_norm = info.infeas_raw / off_rows.sqrt();
        let objective: f64 = state
            .y
            .iter()
            .zip(data.observations())
            .map(|(y, o)| (y - o) * (y - o))
            .sum::<f64>()
            * 0.5;

        if combined < best_combined {
            best_combined = combined;
            best = Some((state.y.clone(), state.xi.clone(), infeas_norm));
        }
        if cfg.trace {
            records.push(AdmmRecord {
                k,
                objective,
                infeas_norm,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }

        let combined_norm = combined / (np * np) as f64;
        if cfg.stop.satisfied(infeas_norm, combined_norm, &state.y) {
            break Termination::Converged;
        }
        if guard.observe(combined) {
            break Termination::Diverged;
        }
        if let Some(capped) = cfg.caps.exceeded(k, started) {
            break capped;
        }
    };

    let (y, xi, infeasibility) = if termination == Termination::Converged {
        let infeas = last.infeas_raw / off_rows.sqrt();
        (state.y, state.xi, infeas)
    } else {
        best.expect("at least one sweep ran")
    };
    let objective: f64 =
        y.iter().zip(data.observations()).map(|(v, o)| (v - o) * (v - o)).sum::<f64>() * 0.5;
    Ok(AdmmOutcome {
        point: PrimalPoint { y, xi },
        objective,
        iterations: k,
        termination,
        records,
        primal_res: last.primal_res,
        dual_res: last.dual_res,
        infeasibility,
        preprocess_s,
        rho: cfg.rho,
    })
}

/// Logarithmically spaced penalty grid for sweeping `ρ`, inclusive of both
/// endpoints.
pub fn rho_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && count >= 1);
    if count == 1 {
        return vec![lo];
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    (0..count).map(|i| lo * (step * i as f64).exp()).collect()
}

/// Run [`admm_solve`] once per penalty value; callers pick by the reported
/// residuals/infeasibility.
pub fn admm_sweep(data: &Dataset, rhos: &[f64], cfg: &AdmmConfig) -> Result<Vec<AdmmOutcome>> {
    rhos.iter()
        .map(|&rho| admm_solve(data, &AdmmConfig { rho, ..cfg.clone() }))
        .collect()
}

// ---------------------------------------------------------------------------
