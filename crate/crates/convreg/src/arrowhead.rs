//! Structured Newton systems for the per-block quadratic subproblems.
//!
//! The interior-point Newton step solves `(G + AᵀDA) Δη = b` where
//! `G = diag(I, γI)` and `D` is a positive diagonal of constraint weights.
//! Because each constraint row couples the full fit-value vector `y` with
//! exactly one subgradient block `ξ_ℓ`, the matrix has arrowhead structure:
//! a dense `N×N` head on the `y` coordinates, one `n×n` diagonal block per
//! `ξ_ℓ`, and an `N×n` coupling strip per point. Nothing larger than the
//! head is ever formed, so a solve costs `O(N³ + N²n + Nn³)` instead of the
//! `O(N³(1+n)³)` a dense factorization would take.

use crate::error::{Error, Result};
use crate::la::{backward_sub_t, cholesky_in_place, chol_solve, dot, forward_sub};
use crate::ops::ConstraintOperator;

/// Assembled arrowhead matrix `G + AᵀDA` for one block of points.
///
/// Layouts are row-major throughout: `head` is `N×N`, `coupling` stores the
/// `N×n` strip for each point `ℓ` contiguously, and `diag_blocks` stores the
/// `n×n` subgradient block for each point `ℓ` contiguously.
#[derive(Debug, Clone)]
pub struct ArrowheadSystem {
    n_points: usize,
    dim: usize,
    head: Vec<f64>,
    coupling: Vec<f64>,
    diag_blocks: Vec<f64>,
}

impl ArrowheadSystem {
    /// Assembles `G + AᵀDA` from the constraint weights `d`, one weight per
    /// ordered pair row of `op`.
    ///
    /// With rows `a_r = (e_{ℓ₂} − e_{ℓ₁}, Δx_r into block ℓ₁)` and
    /// `Δx_r = x_{ℓ₁} − x_{ℓ₂}`, the blocks of `Σ_r d_r a_r a_rᵀ` work out to
    ///
    /// - head `(a,a)`: `Σ_{ℓ≠a} (d_{aℓ} + d_{ℓa})`, head `(a,b)`: `−d_{ab} − d_{ba}`,
    /// - coupling strip `ℓ`, row `a≠ℓ`: `d_{ℓa} (x_ℓ − x_a)ᵀ`, row `ℓ`: minus the
    ///   sum of the other rows,
    /// - diagonal block `ℓ`: `Σ_{j≠ℓ} d_{ℓj} (x_ℓ − x_j)(x_ℓ − x_j)ᵀ`,
    ///
    /// to which `G` adds `1` on the head diagonal and `γ` on the block diagonals.
    pub fn assemble(op: &ConstraintOperator, gamma: f64, d: &[f64]) -> Result<Self> {
        let nb = op.len();
        let n = op.dataset().dim();
        if d.len() != op.rows() {
            return Err(Error::Dimension(format!(
                "weight vector has {} entries but the block has {} constraint rows",
                d.len(),
                op.rows()
            )));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "regularization weight must be finite and nonnegative, got {gamma}"
            )));
        }
        if let Some(bad) = d.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "constraint weights must be finite and nonnegative, got {bad}"
            )));
        }

        // Gather the weights into a dense pair table; the diagonal stays zero.
        let mut dm = vec![0.0; nb * nb];
        for (r, &w) in d.iter().enumerate() {
            let (l1, l2) = crate::ops::pair_of_row(r, nb);
            dm[l1 * nb + l2] = w;
        }

        let mut head = vec![0.0; nb * nb];
        for a in 0..nb {
            let mut diag = 1.0;
            for l in 0..nb {
                if l != a {
                    diag += dm[a * nb + l] + dm[l * nb + a];
                    head[a * nb + l] = -dm[a * nb + l] - dm[l * nb + a];
                }
            }
            head[a * nb + a] = diag;
        }

        let mut coupling = vec![0.0; nb * nb * n];
        let mut diag_blocks = vec![0.0; nb * n * n];
        let mut delta = vec![0.0; n];
        for l in 0..nb {
            let strip = &mut coupling[l * nb * n..(l + 1) * nb * n];
            let block = &mut diag_blocks[l * n * n..(l + 1) * n * n];
            for t in 0..n {
                block[t * n + t] = gamma;
            }
            let xl = op.x(l);
            for a in 0..nb {
                if a == l {
                    continue;
                }
                let w = dm[l * nb + a];
                let xa = op.x(a);
                for t in 0..n {
                    delta[t] = xl[t] - xa[t];
                }
                for t in 0..n {
                    strip[a * n + t] = w * delta[t];
                    // Row ℓ of the strip accumulates minus the other rows.
                    strip[l * n + t] -= w * delta[t];
                }
                if w != 0.0 {
                    for s in 0..n {
                        for t in 0..n {
                            block[s * n + t] += w * delta[s] * delta[t];
                        }
                    }
                }
            }
        }

        Ok(ArrowheadSystem { n_points: nb, dim: n, head, coupling, diag_blocks })
    }

    /// Number of points in the block.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Covariate dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of unknowns, `N(1+n)`.
    pub fn size(&self) -> usize {
        self.n_points * (1 + self.dim)
    }

    /// Reconstructs the full dense matrix. Intended for tests and debugging.
    pub fn to_dense(&self) -> Vec<f64> {
        let (nb, n) = (self.n_points, self.dim);
        let size = self.size();
        let mut m = vec![0.0; size * size];
        for a in 0..nb {
            for b in 0..nb {
                m[a * size + b] = self.head[a * nb + b];
            }
        }
        for l in 0..nb {
            let strip = &self.coupling[l * nb * n..(l + 1) * nb * n];
            for a in 0..nb {
                for t in 0..n {
                    let col = nb + l * n + t;
                    m[a * size + col] = strip[a * n + t];
                    m[col * size + a] = strip[a * n + t];
                }
            }
            let block = &self.diag_blocks[l * n * n..(l + 1) * n * n];
            for s in 0..n {
                for t in 0..n {
                    m[(nb + l * n + s) * size + (nb + l * n + t)] = block[s * n + t];
                }
            }
        }
        m
    }

    /// Solves the system by eliminating the subgradient blocks in closed
    /// form: factor each `M_ℓℓ`, form the head's Schur complement
    /// `S = M₀₀ − Σ_ℓ M₀ℓ M_ℓℓ⁻¹ M₀ℓᵀ`, solve for `Δy`, then back out each
    /// `Δξ_ℓ = M_ℓℓ⁻¹ (b_ℓ − M₀ℓᵀ Δy)`.
    ///
    /// `b` is laid out as `[b_y; b_ξ]` with `b_ξ` row-major per point.
    pub fn solve_schur(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (nb, n) = (self.n_points, self.dim);
        self.check_rhs(b)?;
        let factors = self.factor_diag_blocks()?;

        let mut schur = self.head.clone();
        let mut rhs: Vec<f64> = b[..nb].to_vec();
        // M_ℓℓ⁻¹ b_ℓ, reused when backing out the subgradient part.
        let mut solved_b = vec![0.0; nb * n];
        let mut w = vec![0.0; nb * n];
        for l in 0..nb {
            let f = &factors[l * n * n..(l + 1) * n * n];
            let strip = &self.coupling[l * nb * n..(l + 1) * nb * n];
            // w holds M_ℓℓ⁻¹ M₀ℓᵀ, one column (= strip row) at a time.
            for a in 0..nb {
                w[a * n..(a + 1) * n].copy_from_slice(&strip[a * n..(a + 1) * n]);
                chol_solve(f, n, &mut w[a * n..(a + 1) * n]);
            }
            for a in 0..nb {
                let sa = &strip[a * n..(a + 1) * n];
                for bcol in 0..nb {
                    schur[a * nb + bcol] -= dot(sa, &w[bcol * n..(bcol + 1) * n]);
                }
            }
            let sb = &mut solved_b[l * n..(l + 1) * n];
            sb.copy_from_slice(&b[nb + l * n..nb + (l + 1) * n]);
            chol_solve(f, n, sb);
            for a in 0..nb {
                rhs[a] -= dot(&strip[a * n..(a + 1) * n], sb);
            }
        }

        cholesky_in_place(&mut schur, nb).map_err(|pivot| {
            Error::Breakdown(format!(
                "head Schur complement lost positive definiteness at pivot {pivot}"
            ))
        })?;
        chol_solve(&schur, nb, &mut rhs);

        let mut out = vec![0.0; self.size()];
        out[..nb].copy_from_slice(&rhs);
        let mut t = vec![0.0; n];
        for l in 0..nb {
            let f = &factors[l * n * n..(l + 1) * n * n];
            let strip = &self.coupling[l * nb * n..(l + 1) * nb * n];
            t.fill(0.0);
            for a in 0..nb {
                crate::la::axpy(rhs[a], &strip[a * n..(a + 1) * n], &mut t);
            }
            chol_solve(f, n, &mut t);
            for j in 0..n {
                out[nb + l * n + j] = solved_b[l * n + j] - t[j];
            }
        }
        Ok(out)
    }

    /// Solves the system via the Cholesky factorization of the permutation
    /// that orders the subgradient blocks first: `F_ℓ = chol(M_ℓℓ)`,
    /// `L_ℓ = M₀ℓ F_ℓ⁻ᵀ`, `F₀ = chol(M₀₀ − Σ L_ℓ L_ℓᵀ)`, then the usual two
    /// triangular sweeps. Algebraically identical to [`Self::solve_schur`]
    /// but with a different operation order, which makes independent
    /// agreement checks between the two paths meaningful.
    pub fn solve_permuted(&self, b: &[f64]) -> Result<Vec<f64>> {
        let (nb, n) = (self.n_points, self.dim);
        self.check_rhs(b)?;
        let factors = self.factor_diag_blocks()?;

        // lfac holds the N×n strip L_ℓ = M₀ℓ F_ℓ⁻ᵀ for each ℓ; row a solves
        // F_ℓ (L_ℓ)_aᵀ = (M₀ℓ)_aᵀ.
        let mut lfac = self.coupling.clone();
        let mut head = self.head.clone();
        for l in 0..nb {
            let f = &factors[l * n * n..(l + 1) * n * n];
            let strip = &mut lfac[l * nb * n..(l + 1) * nb * n];
            for a in 0..nb {
                forward_sub(f, n, &mut strip[a * n..(a + 1) * n]);
            }
            for a in 0..nb {
                let ra = &strip[a * n..(a + 1) * n];
                for bcol in 0..=a {
                    let v = dot(ra, &strip[bcol * n..(bcol + 1) * n]);
                    head[a * nb + bcol] -= v;
                    if bcol != a {
                        head[bcol * nb + a] -= v;
                    }
                }
            }
        }
        cholesky_in_place(&mut head, nb).map_err(|pivot| {
            Error::Breakdown(format!(
                "head Schur complement lost positive definiteness at pivot {pivot}"
            ))
        })?;

        // Forward sweep: z_ℓ = F_ℓ⁻¹ b_ℓ, z₀ = F₀⁻¹ (b₀ − Σ L_ℓ z_ℓ).
        let mut z = vec![0.0; nb * n];
        let mut z0: Vec<f64> = b[..nb].to_vec();
        for l in 0..nb {
            let f = &factors[l * n * n..(l + 1) * n * n];
            let zl = &mut z[l * n..(l + 1) * n];
            zl.copy_from_slice(&b[nb + l * n..nb + (l + 1) * n]);
            forward_sub(f, n, zl);
            let strip = &lfac[l * nb * n..(l + 1) * nb * n];
            for a in 0..nb {
                z0[a] -= dot(&strip[a * n..(a + 1) * n], zl);
            }
        }
        forward_sub(&head, nb, &mut z0);

        // Backward sweep: Δy = F₀⁻ᵀ z₀, Δξ_ℓ = F_ℓ⁻ᵀ (z_ℓ − L_ℓᵀ Δy).
        backward_sub_t(&head, nb, &mut z0);
        let mut out = vec![0.0; self.size()];
        out[..nb].copy_from_slice(&z0);
        for l in 0..nb {
            let f = &factors[l * n * n..(l + 1) * n * n];
            let strip = &lfac[l * nb * n..(l + 1) * nb * n];
            let zl = &mut z[l * n..(l + 1) * n];
            for a in 0..nb {
                crate::la::axpy(-z0[a], &strip[a * n..(a + 1) * n], zl);
            }
            backward_sub_t(f, n, zl);
            out[nb + l * n..nb + (l + 1) * n].copy_from_slice(zl);
        }
        Ok(out)
    }

    fn check_rhs(&self, b: &[f64]) -> Result<()> {
        if b.len() != self.size() {
            return Err(Error::Dimension(format!(
                "right-hand side has {} entries, system has {}",
                b.len(),
                self.size()
            )));
        }
        Ok(())
    }

    /// Cholesky factors of every `n×n` subgradient block.
    fn factor_diag_blocks(&self) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut factors = self.diag_blocks.clone();
        for l in 0..self.n_points {
            cholesky_in_place(&mut factors[l * n * n..(l + 1) * n * n], n)
                .map_err(|_| Error::SingularBlock { index: l })?;
        }
        Ok(factors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_instance(
        n_points: usize,
        dim: usize,
        seed: u64,
    ) -> (Dataset, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<f64> =
            (0..n_points * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let obs: Vec<f64> = (0..n_points).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let data = Dataset::new(dim, points, obs).unwrap();
        let d: Vec<f64> =
            (0..n_points * (n_points - 1)).map(|_| rng.gen_range(0.0..3.0)).collect();
        (data, d)
    }

    /// Dense `G + AᵀDA` built straight from the constraint-row definition,
    /// independently of the assembly formulas under test.
    fn dense_reference(op: &ConstraintOperator, gamma: f64, d: &[f64]) -> Vec<f64> {
        let nb = op.len();
        let n = op.dataset().dim();
        let size = nb * (1 + n);
        let mut m = vec![0.0; size * size];
        for i in 0..nb {
            m[i * size + i] = 1.0;
        }
        for i in nb..size {
            m[i * size + i] = gamma;
        }
        for (r, &w) in d.iter().enumerate() {
            let (l1, l2) = crate::ops::pair_of_row(r, nb);
            let mut row = vec![0.0; size];
            row[l2] = 1.0;
            row[l1] = -1.0;
            for t in 0..n {
                row[nb + l1 * n + t] = op.x(l1)[t] - op.x(l2)[t];
            }
            for a in 0..size {
                for b in 0..size {
                    m[a * size + b] += w * row[a] * row[b];
                }
            }
        }
        m
    }

    fn dense_solve(m: &[f64], b: &[f64]) -> Vec<f64> {
        let size = b.len();
        let dm = nalgebra::DMatrix::from_row_slice(size, size, m);
        let rhs = nalgebra::DVector::from_column_slice(b);
        let sol = dm.cholesky().expect("reference matrix should be positive definite")
            .solve(&rhs);
        sol.as_slice().to_vec()
    }

    #[test]
    fn assembly_matches_dense_normal_matrix() {
        for (nb, n, seed) in [(7, 2, 11), (5, 3, 12), (9, 1, 13)] {
            let (data, d) = random_instance(nb, n, seed);
            let op = ConstraintOperator::full(&data);
            let sys = ArrowheadSystem::assemble(&op, 0.3, &d).unwrap();
            let dense = dense_reference(&op, 0.3, &d);
            let assembled = sys.to_dense();
            for (a, b) in assembled.iter().zip(dense.iter()) {
                assert!((a - b).abs() <= 1e-12, "assembled {a} vs dense {b}");
            }
        }
    }

    #[test]
    fn schur_solve_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for (nb, n, seed) in [(6, 2, 31), (8, 3, 32), (4, 1, 33)] {
            let (data, d) = random_instance(nb, n, seed);
            let op = ConstraintOperator::full(&data);
            let gamma = 0.05;
            let sys = ArrowheadSystem::assemble(&op, gamma, &d).unwrap();
            let b: Vec<f64> =
                (0..sys.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let got = sys.solve_schur(&b).unwrap();
            let want = dense_solve(&dense_reference(&op, gamma, &d), &b);
            let scale = crate::la::norm2(&want).max(1.0);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() <= 1e-9 * scale, "schur {g} vs dense {w}");
            }
        }
    }

    #[test]
    fn permuted_solve_matches_schur_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for (nb, n, seed) in [(6, 2, 41), (8, 3, 42), (5, 4, 43)] {
            let (data, d) = random_instance(nb, n, seed);
            let op = ConstraintOperator::full(&data);
            let sys = ArrowheadSystem::assemble(&op, 0.02, &d).unwrap();
            let b: Vec<f64> =
                (0..sys.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let schur = sys.solve_schur(&b).unwrap();
            let perm = sys.solve_permuted(&b).unwrap();
            let scale = crate::la::norm2(&schur).max(1.0);
            for (p, s) in perm.iter().zip(schur.iter()) {
                assert!((p - s).abs() <= 1e-10 * scale, "permuted {p} vs schur {s}");
            }
        }
    }

    #[test]
    fn zero_weights_reduce_to_diagonal_scaling() {
        let (data, _) = random_instance(5, 2, 51);
        let op = ConstraintOperator::full(&data);
        let gamma = 0.25;
        let d = vec![0.0; op.rows()];
        let sys = ArrowheadSystem::assemble(&op, gamma, &d).unwrap();
        let b: Vec<f64> = (0..sys.size()).map(|i| i as f64 - 3.0).collect();
        for sol in [sys.solve_schur(&b).unwrap(), sys.solve_permuted(&b).unwrap()] {
            for i in 0..5 {
                assert!((sol[i] - b[i]).abs() <= 1e-15);
            }
            for i in 5..sys.size() {
                assert!((sol[i] - b[i] / gamma).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hand_computed_two_point_system() {
        // Two points on the line at 0 and 1, γ = 2, weights d₀₁ = 3, d₀₂ = 5.
        // The dense 4×4 system over (y₀, y₁, ξ₀, ξ₁) is
        //   [ 9 −8  3  5]
        //   [−8  9 −3 −5]
        //   [ 3 −3  5  0]
        //   [ 5 −5  0  7]
        // and solving against e₁ by hand via the 2×2 head Schur complement
        // gives (127, 92, −21, −25) / 219.
        let data = Dataset::new(1, vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let op = ConstraintOperator::full(&data);
        let sys = ArrowheadSystem::assemble(&op, 2.0, &[3.0, 5.0]).unwrap();
        let dense = sys.to_dense();
        let want_dense = [
            9.0, -8.0, 3.0, 5.0, -8.0, 9.0, -3.0, -5.0, 3.0, -3.0, 5.0, 0.0, 5.0,
            -5.0, 0.0, 7.0,
        ];
        for (a, b) in dense.iter().zip(want_dense.iter()) {
            assert!((a - b).abs() <= 1e-14);
        }
        let want = [127.0 / 219.0, 92.0 / 219.0, -21.0 / 219.0, -25.0 / 219.0];
        for sol in [
            sys.solve_schur(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
            sys.solve_permuted(&[1.0, 0.0, 0.0, 0.0]).unwrap(),
        ] {
            for (g, w) in sol.iter().zip(want.iter()) {
                assert!((g - w).abs() <= 1e-14, "got {g} want {w}");
            }
        }
    }

    #[test]
    fn singular_subgradient_block_is_reported() {
        let (data, _) = random_instance(4, 2, 61);
        let op = ConstraintOperator::full(&data);
        let d = vec![0.0; op.rows()];
        let sys = ArrowheadSystem::assemble(&op, 0.0, &d).unwrap();
        let b = vec![1.0; sys.size()];
        match sys.solve_schur(&b) {
            Err(Error::SingularBlock { index }) => assert_eq!(index, 0),
            other => panic!("expected a singular block error, got {other:?}"),
        }
    }

    #[test]
    fn assembly_validates_inputs() {
        let (data, d) = random_instance(4, 2, 71);
        let op = ConstraintOperator::full(&data);
        assert!(matches!(
            ArrowheadSystem::assemble(&op, 0.1, &d[..3]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            ArrowheadSystem::assemble(&op, -0.1, &d),
            Err(Error::InvalidArgument(_))
        ));
        let mut bad = d.clone();
        bad[2] = f64::NAN;
        assert!(matches!(
            ArrowheadSystem::assemble(&op, 0.1, &bad),
            Err(Error::InvalidArgument(_))
        ));
    }
}
