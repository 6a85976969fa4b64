//! Primal active-set method for the regularized least-squares fit.
//!
//! Solves `min ½‖y − ȳ‖² + (γ/2)‖ξ‖²` subject to the pairwise convexity
//! constraints (γ > 0) by walking along faces of the feasible polyhedron;
//! every iterate is feasible. Writing `η = (y, ξ)`, `G = diag(I, γI)` and
//! `c = (−ȳ, 0)`, each iteration solves the equality-constrained problem on
//! the current working set `W` (the constraint rows held tight) through its
//! Gram system:
//!
//! ```text
//!   (A_W G⁻¹ A_Wᵀ) θ = A_W (η + c),
//!   η₊ = G⁻¹ A_Wᵀ θ − c          (G⁻¹c = c, so η₊ starts from (ȳ, 0)),
//!   Δη = η₊ − η.
//! ```
//!
//! `Δη` keeps the values of all rows in `W` unchanged, so tight rows stay
//! tight. A ratio test limits the step to the first blocking row, which is
//! appended to `W`; when `Δη = 0` and some multiplier `θ_j` is negative,
//! the most negative row is dropped. At exit `Δη = 0` and `θ ≥ 0`, i.e.
//! `Gη + c = A_Wᵀθ` with nonnegative multipliers on tight rows only.
//!
//! The Gram matrix is never assembled during normal operation: its entries
//! are inner products of constraint rows with `3 + 2n` nonzeros each, and
//! its Cholesky factor is appended/downdated in `O(m²)` per working-set
//! change ([`GrowingChol`]) instead of refactored in `O(m³)`.

use std::time::Instant;

use crate::dataset::{Dataset, PrimalPoint};
use crate::error::{Error, Result};
use crate::la::{dot, GrowingChol};
use crate::ops::{pair_of_row, slater_point, ConstraintOperator};
use crate::oracle::primal_objective;
use crate::report::{AsmRecord, RunCaps, Termination};

/// Working-set switches to the smallest-index drop rule after this many
/// consecutive iterations without progress (anti-cycling).
const BLAND_AFTER: usize = 50;
/// Factor drift is measured against a freshly assembled Gram matrix every
/// this many append/delete updates.
const DRIFT_CHECK_EVERY: usize = 100;
/// Relative Frobenius drift `‖LLᵀ − Gram‖_F / ‖Gram‖_F` that forces a
/// factor rebuild.
const DRIFT_REL_TOL: f64 = 1e-8;
/// Appending a row whose Schur complement falls below this fraction of its
/// diagonal Gram entry is treated as linear dependence.
const APPEND_REL_TOL: f64 = 1e-12;
/// Steps with `t` below this are counted as zero steps for anti-cycling.
const ZERO_STEP_TOL: f64 = 1e-14;
/// Ratio-test results this close to a full step are snapped to `t = 1`
/// (prevents appending rows that merely become tight at the target point).
const FULL_STEP_SNAP: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Working set with an incrementally factored Gram matrix
// ---------------------------------------------------------------------------

/// Ordered set of constraint rows held tight, together with the Cholesky
/// factor of its Gram matrix `A_W G⁻¹ A_Wᵀ`.
pub struct WorkingSet<'a> {
    op: ConstraintOperator<'a>,
    gamma: f64,
    /// Row ids in insertion order; parallel to the factor rows.
    rows: Vec<usize>,
    /// Membership flags indexed by row id.
    member: Vec<bool>,
    chol: GrowingChol,
    updates_since_check: usize,
}

impl<'a> WorkingSet<'a> {
    pub fn new(data: &'a Dataset, gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "the active-set method needs γ > 0 (G must be invertible), got {gamma}"
            )));
        }
        let op = ConstraintOperator::full(data);
        let nvar = data.n_points() * (1 + data.dim());
        let cap = nvar.min((2 * data.n_points()).max(32));
        Ok(Self {
            op,
            gamma,
            rows: Vec::new(),
            member: vec![false; op.rows()],
            chol: GrowingChol::new(cap),
            updates_since_check: 0,
        })
    }

    /// Row ids in insertion order (parallel to the multiplier vector).
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn contains(&self, row: usize) -> bool {
        self.member[row]
    }

    /// Gram entry `a_rᵀ G⁻¹ a_q` between two constraint rows. The y-parts
    /// contribute `±1` on the four point coincidences; the ξ-parts couple
    /// only when both rows share the subgradient point `ℓ₁`.
    pub fn gram_entry(&self, r: usize, q: usize) -> f64 {
        let n_points = self.op.len();
        let (l1, l2) = pair_of_row(r, n_points);
        let (k1, k2) = pair_of_row(q, n_points);
        let mut v = 0.0;
        if l2 == k2 {
            v += 1.0;
        }
        if l1 == k1 {
            v += 1.0;
        }
        if l2 == k1 {
            v -= 1.0;
        }
        if l1 == k2 {
            v -= 1.0;
        }
        if l1 == k1 {
            let x1 = self.op.x(l1);
            let x2 = self.op.x(l2);
            let z2 = self.op.x(k2);
            let mut d = 0.0;
            for j in 0..x1.len() {
                d += (x1[j] - x2[j]) * (x1[j] - z2[j]);
            }
            v += d / self.gamma;
        }
        v
    }

    /// Dense Gram matrix of the current set (row-major `m × m`), assembled
    /// from scratch; used for drift checks and factor rebuilds.
    pub fn gram_dense(&self) -> Vec<f64> {
        let m = self.rows.len();
        let mut g = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..=i {
                let v = self.gram_entry(self.rows[i], self.rows[j]);
                g[i * m + j] = v;
                g[j * m + i] = v;
            }
        }
        g
    }

    /// `‖LLᵀ − Gram‖_F / ‖Gram‖_F` of the incremental factor against a
    /// freshly assembled Gram matrix.
    pub fn factor_drift(&self) -> f64 {
        self.chol.drift(&self.gram_dense())
    }

    /// Refactor the Gram matrix from scratch.
    pub fn rebuild(&mut self) -> Result<()> {
        let gram = self.gram_dense();
        self.chol.rebuild(&gram, self.rows.len())?;
        self.updates_since_check = 0;
        Ok(())
    }

    fn ensure_capacity(&mut self, needed: usize) -> Result<()> {
        if needed <= self.chol.capacity() {
            return Ok(());
        }
        let nvar = self.op.len() * (1 + self.op.dataset().dim());
        let cap = (2 * self.chol.capacity()).max(needed).min(nvar.max(needed));
        let mut bigger = GrowingChol::new(cap);
        bigger.rebuild(&self.gram_dense(), self.rows.len())?;
        self.chol = bigger;
        Ok(())
    }

    /// Append constraint row `row`, extending the factor by one row in
    /// `O(m² + mn)`. A vanishing Schur complement means the row is linearly
    /// dependent on the set; one from-scratch refactorization is attempted
    /// before giving up (the incremental test can misfire on an
    /// ill-conditioned factor).
    pub fn append(&mut self, row: usize) -> Result<()> {
        assert!(!self.member[row], "row {row} is already in the working set");
        self.ensure_capacity(self.rows.len() + 1)?;
        let cross: Vec<f64> = self.rows.iter().map(|&q| self.gram_entry(q, row)).collect();
        let diag = self.gram_entry(row, row);
        match self.chol.append(&cross, diag, APPEND_REL_TOL * diag) {
            Ok(()) => {
                self.rows.push(row);
                self.member[row] = true;
                self.updates_since_check += 1;
                Ok(())
            }
            Err(_) => {
                // The factor row was zeroed, so the old factor is intact.
                self.rows.push(row);
                self.member[row] = true;
                let gram = self.gram_dense();
                if self.chol.rebuild(&gram, self.rows.len()).is_ok() {
                    self.updates_since_check = 0;
                    return Ok(());
                }
                self.rows.pop();
                self.member[row] = false;
                Err(Error::Breakdown(format!(
                    "blocking constraint row {row} is linearly dependent on the working set"
                )))
            }
        }
    }

    /// Delete the working-set entry at insertion position `pos` (not a row
    /// id), downdating the factor in `O((m − pos)²)`.
    pub fn delete(&mut self, pos: usize) {
        let row = self.rows.remove(pos);
        self.member[row] = false;
        self.chol.delete(pos);
        self.updates_since_check += 1;
    }

    /// Drift check amortized over updates: every [`DRIFT_CHECK_EVERY`]
    /// appends/deletes, measure [`Self::factor_drift`] and rebuild when it
    /// exceeds [`DRIFT_REL_TOL`]. Returns whether a rebuild happened.
    pub fn maybe_rebuild_on_drift(&mut self) -> Result<bool> {
        if self.updates_since_check < DRIFT_CHECK_EVERY {
            return Ok(false);
        }
        let gram = self.gram_dense();
        if self.chol.drift(&gram) > DRIFT_REL_TOL {
            self.chol.rebuild(&gram, self.rows.len())?;
            self.updates_since_check = 0;
            return Ok(true);
        }
        self.updates_since_check = 0;
        Ok(false)
    }

    /// Solve the equality-constrained step at `point`: multipliers from the
    /// Gram system `(A_W G⁻¹ A_Wᵀ) θ = −A_W G⁻¹ c`, then the direction
    /// `Δη = (G⁻¹A_Wᵀθ − c) − η` toward the optimum of the face
    /// `{A_W η = 0}`. With `W = ∅` this is the move to the unconstrained
    /// minimizer: `Δy = ȳ − y`, `Δξ = −ξ`.
    ///
    /// The target is anchored to the constraint boundary rather than to the
    /// current row values: while `W` is unchanged the target is the same
    /// point every iteration, so a full step followed by a re-solve yields
    /// a zero direction and the multiplier test runs instead of the method
    /// chasing its own rounding noise. Rows of `W` that have drifted
    /// slightly off zero are pulled back onto the boundary by the step.
    pub fn kkt_direction(&self, point: &PrimalPoint) -> (PrimalPoint, Vec<f64>) {
        let data = self.op.dataset();
        let n = data.dim();
        let obs = data.observations();
        let m = self.rows.len();

        let mut theta = vec![0.0; m];
        for (j, &r) in self.rows.iter().enumerate() {
            let (l1, l2) = pair_of_row(r, self.op.len());
            theta[j] = obs[l1] - obs[l2];
        }
        self.chol.solve(&mut theta);

        // Target η₊ = G⁻¹A_Wᵀθ − c: start from (ȳ, 0) and scatter the
        // multipliers through the sparse constraint rows.
        let mut dir = PrimalPoint::zeros(data.n_points(), n);
        dir.y.copy_from_slice(obs);
        for (j, &r) in self.rows.iter().enumerate() {
            let (l1, l2) = pair_of_row(r, self.op.len());
            dir.y[l2] += theta[j];
            dir.y[l1] -= theta[j];
            let x1 = data.x(l1);
            let x2 = data.x(l2);
            let block = &mut dir.xi[l1 * n..(l1 + 1) * n];
            for d in 0..n {
                block[d] += theta[j] * (x1[d] - x2[d]) / self.gamma;
            }
        }
        for (d, p) in dir.y.iter_mut().zip(&point.y) {
            *d -= p;
        }
        for (d, p) in dir.xi.iter_mut().zip(&point.xi) {
            *d -= p;
        }
        (dir, theta)
    }

    /// Largest feasible fraction of `dir` and the blocking row: over rows
    /// outside the set with decreasing value, `t = min(1, min v_r/(−Δv_r))`.
    /// Ties pick the smallest row id (lexicographically smallest pair);
    /// results within [`FULL_STEP_SNAP`] of a full step are snapped to
    /// `t = 1` with no blocking row.
    pub fn ratio_test(&self, point: &PrimalPoint, dir: &PrimalPoint) -> (f64, Option<usize>) {
        self.ratio_test_excluding(point, dir, &[])
    }

    /// [`Self::ratio_test`] with extra rows excluded from blocking. Rows
    /// linearly dependent on the working set are forced tight by it and
    /// cannot genuinely decrease along a null-space direction; when one
    /// surfaces through rounding noise the driver bans it and retries.
    fn ratio_test_excluding(
        &self,
        point: &PrimalPoint,
        dir: &PrimalPoint,
        banned: &[usize],
    ) -> (f64, Option<usize>) {
        let mut t = 1.0;
        let mut blocking = None;
        for r in 0..self.op.rows() {
            if self.member[r] || banned.contains(&r) {
                continue;
            }
            let dv = self.op.row_value(r, &dir.y, &dir.xi);
            if dv >= -ZERO_STEP_TOL {
                continue;
            }
            let v = self.op.row_value(r, &point.y, &point.xi).max(0.0);
            let ratio = v / -dv;
            if ratio < t {
                t = ratio;
                blocking = Some(r);
            }
        }
        if t > 1.0 - FULL_STEP_SNAP {
            (1.0, None)
        } else {
            (t, blocking)
        }
    }

    /// `‖Gη + c − A_Wᵀθ‖₂`, the stationarity residual of the exit test.
    pub fn kkt_residual(&self, point: &PrimalPoint, theta: &[f64]) -> f64 {
        let data = self.op.dataset();
        let n = data.dim();
        let obs = data.observations();
        let mut res_y: Vec<f64> = point.y.iter().zip(obs).map(|(y, o)| y - o).collect();
        let mut res_xi: Vec<f64> = point.xi.iter().map(|x| self.gamma * x).collect();
        for (j, &r) in self.rows.iter().enumerate() {
            let (l1, l2) = pair_of_row(r, self.op.len());
            res_y[l2] -= theta[j];
            res_y[l1] += theta[j];
            let x1 = data.x(l1);
            let x2 = data.x(l2);
            for d in 0..n {
                res_xi[l1 * n + d] -= theta[j] * (x1[d] - x2[d]);
            }
        }
        (dot(&res_y, &res_y) + dot(&res_xi, &res_xi)).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Driver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct AsmConfig {
    pub caps: RunCaps,
    /// Record one [`AsmRecord`] per iteration.
    pub trace: bool,
    /// Multipliers above `−multiplier_tol` are accepted as nonnegative at
    /// the optimality test.
    pub multiplier_tol: f64,
    /// The face optimum is declared reached when
    /// `‖Δη‖ ≤ direction_tol·(1 + ‖η‖)`.
    pub direction_tol: f64,
}

impl Default for AsmConfig {
    fn default() -> Self {
        Self {
            caps: RunCaps::default(),
            trace: false,
            multiplier_tol: 1e-9,
            direction_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AsmOutcome {
    /// Final iterate; feasible for the pairwise constraints.
    pub point: PrimalPoint,
    /// `½‖y − ȳ‖² + (γ/2)‖ξ‖²` at the final iterate.
    pub objective: f64,
    /// Multipliers of the final working set, parallel to `working_set`;
    /// all `≥ −multiplier_tol` when converged.
    pub theta: Vec<f64>,
    /// Constraint row ids held tight at exit, in insertion order.
    pub working_set: Vec<usize>,
    pub iterations: usize,
    pub termination: Termination,
    pub records: Vec<AsmRecord>,
    /// `‖Gη + c − A_Wᵀθ‖₂` at exit.
    pub kkt_residual: f64,
    /// Worst unnormalized constraint violation seen across all iterates
    /// (feasibility is an invariant of the method; this should be ~0).
    pub max_infeasibility: f64,
    /// Seconds spent building the starting point.
    pub preprocess_s: f64,
}

/// Run the active-set method from the strictly feasible quadratic start
/// (curvature `α = 1/N`). Requires `γ > 0`.
pub fn asm_solve(data: &Dataset, gamma: f64, cfg: &AsmConfig) -> Result<AsmOutcome> {
    let started = Instant::now();
    let mut ws = WorkingSet::new(data, gamma)?;
    let alpha = 1.0 / data.n_points() as f64;
    let mut point = slater_point(data, alpha)?;
    let preprocess_s = started.elapsed().as_secs_f64();

    let op = ConstraintOperator::full(data);
    let mut records = Vec::new();
    let mut max_infeasibility = op.infeasibility_raw(&point);
    let mut consecutive_zero_steps = 0usize;
    let mut k = 0usize;

    let termination = loop {
        k += 1;
        let (dir, theta) = ws.kkt_direction(&point);
        let dir_norm = (dot(&dir.y, &dir.y) + dot(&dir.xi, &dir.xi)).sqrt();
        let point_norm = (dot(&point.y, &point.y) + dot(&point.xi, &point.xi)).sqrt();

        let mut t_step = 0.0;
        let mut converged = false;
        if dir_norm <= cfg.direction_tol * (1.0 + point_norm) {
            // At the optimum of the current face: check the multipliers.
            let at_optimum = theta.iter().all(|&th| th >= -cfg.multiplier_tol);
            if at_optimum {
                converged = true;
            } else {
                let drop_pos = if consecutive_zero_steps >= BLAND_AFTER {
                    // Anti-cycling: smallest row id among the negatives.
                    let mut best = None::<usize>;
                    for (j, &th) in theta.iter().enumerate() {
                        if th < -cfg.multiplier_tol
                            && best.is_none_or(|b| ws.rows()[j] < ws.rows()[b])
                        {
                            best = Some(j);
                        }
                    }
                    best.expect("a negative multiplier exists")
                } else {
                    // Most negative multiplier; ties pick the smallest row id.
                    let mut best = 0usize;
                    for j in 1..theta.len() {
                        if theta[j] < theta[best]
                            || (theta[j] == theta[best] && ws.rows()[j] < ws.rows()[best])
                        {
                            best = j;
                        }
                    }
                    best
                };
                ws.delete(drop_pos);
                consecutive_zero_steps += 1;
            }
        } else {
            // The blocking row is appended before stepping so that a
            // dependence rejection can fall back to the next candidate.
            let mut banned: Vec<usize> = Vec::new();
            let t = loop {
                let (t, blocking) = ws.ratio_test_excluding(&point, &dir, &banned);
                match blocking {
                    None => break t,
                    Some(row) => match ws.append(row) {
                        Ok(()) => break t,
                        Err(Error::Breakdown(_)) => banned.push(row),
                        Err(e) => return Err(e),
                    },
                }
            };
            for (p, d) in point.y.iter_mut().zip(&dir.y) {
                *p += t * d;
            }
            for (p, d) in point.xi.iter_mut().zip(&dir.xi) {
                *p += t * d;
            }
            t_step = t;
            if t <= ZERO_STEP_TOL {
                consecutive_zero_steps += 1;
            } else {
                consecutive_zero_steps = 0;
            }
            max_infeasibility = max_infeasibility.max(op.infeasibility_raw(&point));
        }

        if cfg.trace {
            records.push(AsmRecord {
                k,
                objective: primal_objective(data, gamma, &point),
                m_k: ws.len(),
                t_step,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
        if converged {
            break Termination::Converged;
        }
        ws.maybe_rebuild_on_drift()?;
        if let Some(capped) = cfg.caps.exceeded(k, started) {
            break capped;
        }
    };

    // Multipliers aligned with the final set (the loop's may predate an
    // append/delete when a cap fired mid-iteration).
    let (_, theta) = ws.kkt_direction(&point);
    let kkt_residual = ws.kkt_residual(&point, &theta);
    let objective = primal_objective(data, gamma, &point);
    Ok(AsmOutcome {
        objective,
        theta,
        working_set: ws.rows().to_vec(),
        iterations: k,
        termination,
        records,
        kkt_residual,
        max_infeasibility,
        preprocess_s,
        point,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::row_of_pair;
    use crate::oracle::{oracle_solve, OracleConfig};
    use crate::synth::{gen_instance, FunctionKind};
    use nalgebra::{DMatrix, DVector};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn line_data(obs: &[f64]) -> Dataset {
        let pts: Vec<f64> = (0..obs.len()).map(|l| l as f64).collect();
        Dataset::new(1, pts, obs.to_vec()).unwrap()
    }

    /// Dense constraint row `a_r` (length `N(1+n)`) built independently of
    /// the solver's sparse representation.
    fn dense_row(data: &Dataset, r: usize) -> Vec<f64> {
        let n = data.dim();
        let np = data.n_points();
        let (l1, l2) = pair_of_row(r, np);
        let mut a = vec![0.0; np * (1 + n)];
        a[l2] += 1.0;
        a[l1] -= 1.0;
        for d in 0..n {
            a[np + l1 * n + d] = data.x(l1)[d] - data.x(l2)[d];
        }
        a
    }

    fn flat(p: &PrimalPoint) -> Vec<f64> {
        let mut v = p.y.clone();
        v.extend_from_slice(&p.xi);
        v
    }

    #[test]
    fn constant_observations_stop_at_the_unconstrained_minimizer() {
        // With equal observations the unconstrained optimum (y = ȳ, ξ = 0)
        // already satisfies every pairwise constraint with equality, so the
        // first full step lands on it and the empty working set certifies it.
        let data = line_data(&[3.0; 5]);
        let out = asm_solve(&data, 1e-2, &AsmConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.working_set.is_empty());
        for l in 0..5 {
            assert!((out.point.y[l] - 3.0).abs() <= 1e-12);
            assert!(out.point.xi[l].abs() <= 1e-12);
        }
        assert!(out.objective <= 1e-16);
        assert!(out.max_infeasibility <= 1e-10);
        assert!(out.iterations <= 3);
    }

    #[test]
    fn first_direction_aims_at_the_unconstrained_minimizer() {
        // With an empty working set the step target is (ȳ, 0), so the
        // direction from any point is (ȳ − y, −ξ).
        let data = line_data(&[1.0, 0.5, 2.0, 4.5]);
        let ws = WorkingSet::new(&data, 0.3).unwrap();
        let start = slater_point(&data, 0.25).unwrap();
        let (dir, theta) = ws.kkt_direction(&start);
        assert!(theta.is_empty());
        for l in 0..4 {
            assert!((dir.y[l] - (data.observations()[l] - start.y[l])).abs() <= 1e-15);
            assert!((dir.xi[l] + start.xi[l]).abs() <= 1e-15);
        }
    }

    #[test]
    fn single_constraint_multiplier_matches_the_hand_solved_system() {
        // Two points x = (0, 1), observations ȳ = (1, 0), γ = 1/2. Only the
        // row (ℓ₁=0, ℓ₂=1) can be tight; on that face the Gram system is the
        // scalar (2 + 1/γ)θ = ȳ₀ − ȳ₁, giving θ = 1/4 and the fit
        //   y = (1 − θ, θ) = (3/4, 1/4),  ξ = (−θ/γ, 0) = (−1/2, 0),
        // whose single working row holds with equality.
        let data = Dataset::new(1, vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        let gamma = 0.5;
        let out = asm_solve(&data, gamma, &AsmConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert_eq!(out.working_set, vec![row_of_pair(0, 1, 2)]);
        assert_eq!(out.theta.len(), 1);
        assert!((out.theta[0] - 0.25).abs() <= 1e-12);
        assert!((out.point.y[0] - 0.75).abs() <= 1e-12);
        assert!((out.point.y[1] - 0.25).abs() <= 1e-12);
        assert!((out.point.xi[0] + 0.5).abs() <= 1e-12);
        assert!(out.point.xi[1].abs() <= 1e-12);
        assert!((out.objective - 0.125).abs() <= 1e-12);
        assert!(out.kkt_residual <= 1e-10);
    }

    #[test]
    fn kkt_direction_matches_a_dense_saddle_point_solve() {
        // Random working set on N = 8, n = 2: the sparse Gram solve must
        // agree with an explicit dense computation via nalgebra, which
        // assembles A_W and G outright.
        let (data, _) = gen_instance(FunctionKind::Quadratic, 2, 8, 11).unwrap();
        let gamma = 0.05;
        let mut ws = WorkingSet::new(&data, gamma).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let total = ConstraintOperator::full(&data).rows();
        while ws.len() < 6 {
            let r = rng.gen_range(0..total);
            if !ws.contains(r) && ws.append(r).is_ok() {}
        }

        let mut point = slater_point(&data, 0.125).unwrap();
        // Perturb so the working rows are not tight; the identities hold
        // regardless of tightness.
        for (l, y) in point.y.iter_mut().enumerate() {
            *y += 0.01 * (l as f64 - 3.0);
        }
        let (dir, theta) = ws.kkt_direction(&point);

        let np = data.n_points();
        let nvar = np * (1 + data.dim());
        let m = ws.len();
        let mut a = DMatrix::zeros(m, nvar);
        for (j, &r) in ws.rows().iter().enumerate() {
            for (i, v) in dense_row(&data, r).into_iter().enumerate() {
                a[(j, i)] = v;
            }
        }
        let mut ginv = DMatrix::identity(nvar, nvar);
        for i in np..nvar {
            ginv[(i, i)] = 1.0 / gamma;
        }
        let mut c = DVector::zeros(nvar);
        for l in 0..np {
            c[l] = -data.observations()[l];
        }
        let eta = DVector::from_vec(flat(&point));
        let gram = &a * &ginv * a.transpose();
        let rhs = &a * (&ginv * &c);
        let th = gram.clone().cholesky().unwrap().solve(&rhs);
        let target = &ginv * (a.transpose() * &th) - &c;
        let dir_dense = &target - &eta;

        let dir_flat = flat(&dir);
        for i in 0..nvar {
            assert!(
                (dir_flat[i] - dir_dense[i]).abs() <= 1e-8,
                "direction entry {i}: {} vs {}",
                dir_flat[i],
                dir_dense[i]
            );
        }
        for j in 0..m {
            assert!((theta[j] - th[j]).abs() <= 1e-8);
        }

        // The target sits on the constraint boundary of the working rows,
        // so after a full step the working rows are exactly tight.
        let on_boundary = &a * target;
        let target_norm = eta.norm() + dir_dense.norm();
        assert!(on_boundary.amax() <= 1e-9 * target_norm.max(1.0));
    }

    #[test]
    fn ratio_test_handles_full_zero_and_interior_steps() {
        // No decreasing row: from the strictly feasible start, moving
        // further along itself increases every row value, so t = 1.
        let data = line_data(&[2.0, 1.0, 0.5, 1.2, 3.0, 2.2]);
        let ws = WorkingSet::new(&data, 0.1).unwrap();
        let start = slater_point(&data, 0.5).unwrap();
        let (t, blocking) = ws.ratio_test(&start, &start);
        assert_eq!(t, 1.0);
        assert!(blocking.is_none());

        // A tight decreasing row blocks immediately: all-zero point makes
        // every row tight, and lowering y₁ decreases rows (ℓ₁=0, ℓ₂=1),
        // (2,1), ...; the lexicographically smallest is (0,1) = row 0.
        let zero = PrimalPoint::zeros(6, 1);
        let mut dir = PrimalPoint::zeros(6, 1);
        dir.y[1] = -1.0;
        let (t, blocking) = ws.ratio_test(&zero, &dir);
        assert_eq!(t, 0.0);
        assert_eq!(blocking, Some(row_of_pair(0, 1, 6)));

        // Random interior case: agree with a dense scan over all rows.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let op = ConstraintOperator::full(&data);
        let mut dir = PrimalPoint::zeros(6, 1);
        for v in dir.y.iter_mut().chain(dir.xi.iter_mut()) {
            *v = rng.gen_range(-1.0..1.0);
        }
        let (t, blocking) = ws.ratio_test(&start, &dir);
        let mut t_scan = 1.0;
        let mut block_scan = None;
        for r in 0..op.rows() {
            let dv = op.row_value(r, &dir.y, &dir.xi);
            if dv < 0.0 {
                let v = op.row_value(r, &start.y, &start.xi);
                let ratio = v / -dv;
                if ratio < t_scan {
                    t_scan = ratio;
                    block_scan = Some(r);
                }
            }
        }
        assert!((t - t_scan).abs() <= 1e-12);
        assert_eq!(blocking, block_scan);
        assert!((0.0..=1.0).contains(&t));
        // The step keeps every constraint satisfied.
        let stepped = PrimalPoint {
            y: start.y.iter().zip(&dir.y).map(|(p, d)| p + t * d).collect(),
            xi: start.xi.iter().zip(&dir.xi).map(|(p, d)| p + t * d).collect(),
        };
        assert!(op.infeasibility_raw(&stepped) <= 1e-10);
    }

    #[test]
    fn solution_matches_the_reference_solver() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 2, 20, 5).unwrap();
        let gamma = 1e-2;
        let out = asm_solve(&data, gamma, &AsmConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::Converged);

        let oracle = oracle_solve(&data, gamma, &OracleConfig::default()).unwrap();
        for l in 0..data.n_points() {
            assert!(
                (out.point.y[l] - oracle.point.y[l]).abs() <= 1e-6,
                "y[{l}]: {} vs {}",
                out.point.y[l],
                oracle.point.y[l]
            );
        }
        for (i, (a, b)) in out.point.xi.iter().zip(&oracle.point.xi).enumerate() {
            assert!((a - b).abs() <= 1e-6, "xi[{i}]: {a} vs {b}");
        }
        // The optimum is degenerate: the reference solver reports 66 tight
        // rows in a 60-dimensional variable space, so the full tight set is
        // linearly dependent and no independent working set can equal it.
        // The geometry must still agree: the working set is contained in
        // the reference tight set, and every reference-tight row is tight
        // at the active-set solution.
        let mut tight = oracle.tight.clone();
        tight.sort_unstable();
        for r in &out.working_set {
            assert!(
                tight.binary_search(r).is_ok(),
                "working row {r} is not tight in the reference solution"
            );
        }
        let op = ConstraintOperator::full(&data);
        for &r in &tight {
            let v = op.row_value(r, &out.point.y, &out.point.xi);
            assert!(v.abs() <= 1e-6, "reference-tight row {r} has slack {v} here");
        }
        assert!((out.objective - oracle.objective).abs() <= 1e-9 * (1.0 + oracle.objective));
        assert!(out.kkt_residual <= 1e-8);
        assert!(out.max_infeasibility <= 1e-10);
    }

    #[test]
    fn objective_is_nonincreasing_and_iterates_stay_feasible() {
        let (data, _) = gen_instance(FunctionKind::Exponential, 2, 12, 23).unwrap();
        let gamma = 1e-3;
        let cfg = AsmConfig { trace: true, ..AsmConfig::default() };
        let out = asm_solve(&data, gamma, &cfg).unwrap();
        assert_eq!(out.termination, Termination::Converged);
        assert!(out.max_infeasibility <= 1e-10);
        assert!(!out.records.is_empty());
        let start_obj =
            primal_objective(&data, gamma, &slater_point(&data, 1.0 / 12.0).unwrap());
        let mut prev = start_obj;
        for rec in &out.records {
            assert!(
                rec.objective <= prev + 1e-10 * (1.0 + prev.abs()),
                "objective rose at k={}: {} -> {}",
                rec.k,
                prev,
                rec.objective
            );
            if rec.t_step > 1e-6 {
                assert!(rec.objective < prev, "no strict decrease at k={}", rec.k);
            }
            prev = rec.objective;
        }
        // Exit certificate: stationarity holds with nonnegative multipliers
        // on tight rows only.
        assert!(out.kkt_residual <= 1e-8);
        let op = ConstraintOperator::full(&data);
        for (&r, &th) in out.working_set.iter().zip(&out.theta) {
            assert!(th >= -1e-9);
            let v = op.row_value(r, &out.point.y, &out.point.xi);
            assert!(v.abs() <= 1e-8, "working row {r} is not tight: {v}");
        }
    }

    #[test]
    fn append_and_delete_track_refactorization() {
        let (data, _) = gen_instance(FunctionKind::Quadratic, 2, 8, 41).unwrap();
        let mut ws = WorkingSet::new(&data, 0.02).unwrap();
        let total = ConstraintOperator::full(&data).rows();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for step in 0..40 {
            if ws.is_empty() || (ws.len() < 12 && rng.gen_bool(0.65)) {
                let r = rng.gen_range(0..total);
                if !ws.contains(r) {
                    // Dependent rows are legitimately rejected; everything
                    // else must keep the factor consistent.
                    let _ = ws.append(r);
                }
            } else {
                let pos = rng.gen_range(0..ws.len());
                ws.delete(pos);
            }
            assert!(
                ws.factor_drift() <= 1e-9,
                "factor drifted to {} after step {step}",
                ws.factor_drift()
            );
        }
    }

    #[test]
    fn appending_a_duplicate_direction_is_rejected() {
        // Rows (0,1) and (1,0) are negatives of each other in their y-parts
        // but not their ξ-parts, so use a genuinely dependent case instead:
        // appending the same row twice must fail before corrupting state.
        let data = line_data(&[1.0, 0.0, 2.0]);
        let mut ws = WorkingSet::new(&data, 0.5).unwrap();
        ws.append(0).unwrap();
        assert!(ws.contains(0));
        // A second copy of row 0 is exactly dependent. `append` refuses it
        // (the panic on `member` guards the public API, so test via the
        // factor): cross = diag makes the Schur complement zero.
        let cross = vec![ws.gram_entry(0, 0)];
        let defect = ws.chol.append(&cross, ws.gram_entry(0, 0), 1e-12).unwrap_err();
        assert!(defect.abs() <= 1e-12 * ws.gram_entry(0, 0));
        // The factor still matches the 1×1 Gram matrix.
        assert!(ws.factor_drift() <= 1e-14);
    }
}
