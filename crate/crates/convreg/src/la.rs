//! Small dense linear-algebra kernels over `&[f64]`.
//!
//! Matrices are row-major. Cholesky factors are lower-triangular and stored
//! in the lower triangle; the strict upper triangle is ignored. These
//! kernels back the solver hot paths; dense reference computations in tests
//! and the oracle use `nalgebra` instead, so the two code paths check each
//! other.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// In-place lower Cholesky factorization of the SPD matrix `a` (row-major,
/// `d × d`). On failure returns the pivot index where positive definiteness
/// was lost.
pub fn cholesky_in_place(a: &mut [f64], d: usize) -> std::result::Result<(), usize> {
    debug_assert_eq!(a.len(), d * d);
    for k in 0..d {
        let mut pivot = a[k * d + k];
        for j in 0..k {
            pivot -= a[k * d + j] * a[k * d + j];
        }
        if pivot <= 0.0 || !pivot.is_finite() {
            return Err(k);
        }
        let pivot = pivot.sqrt();
        a[k * d + k] = pivot;
        for i in (k + 1)..d {
            let mut v = a[i * d + k];
            for j in 0..k {
                v -= a[i * d + j] * a[k * d + j];
            }
            a[i * d + k] = v / pivot;
        }
    }
    Ok(())
}

/// Solve `L x = b` in place (forward substitution).
pub fn forward_sub(l: &[f64], d: usize, b: &mut [f64]) {
    for i in 0..d {
        let mut v = b[i];
        for j in 0..i {
            v -= l[i * d + j] * b[j];
        }
        b[i] = v / l[i * d + i];
    }
}

/// Solve `Lᵀ x = b` in place (back substitution with the stored lower
/// factor).
pub fn backward_sub_t(l: &[f64], d: usize, b: &mut [f64]) {
    for i in (0..d).rev() {
        let mut v = b[i];
        for j in (i + 1)..d {
            v -= l[j * d + i] * b[j];
        }
        b[i] = v / l[i * d + i];
    }
}

/// Solve `L Lᵀ x = b` in place.
pub fn chol_solve(l: &[f64], d: usize, b: &mut [f64]) {
    forward_sub(l, d, b);
    backward_sub_t(l, d, b);
}

/// Rank-1 Cholesky update: given the lower factor `L` of `M`, overwrite it
/// with the factor of `M + v vᵀ`. `v` is consumed as workspace. The factor
/// lives in the leading `size × size` block at `(offset, offset)` of a
/// row-major matrix with leading dimension `ld`.
pub fn chol_update(l: &mut [f64], ld: usize, offset: usize, size: usize, v: &mut [f64]) {
    debug_assert_eq!(v.len(), size);
    for k in 0..size {
        let idx = (offset + k) * ld + offset + k;
        let lkk = l[idx];
        let r = (lkk * lkk + v[k] * v[k]).sqrt();
        let c = r / lkk;
        let s = v[k] / lkk;
        l[idx] = r;
        for (i, vi) in v.iter_mut().enumerate().skip(k + 1) {
            let ik = (offset + i) * ld + offset + k;
            l[ik] = (l[ik] + s * *vi) / c;
            *vi = c * *vi - s * l[ik];
        }
    }
}

/// A growing/shrinking lower-Cholesky factor of a Gram matrix, supporting
/// append of a new row/column and deletion of an interior row/column.
///
/// Storage is a fixed `cap × cap` row-major buffer so that appends never
/// reallocate or move existing entries.
#[derive(Debug, Clone)]
pub struct GrowingChol {
    cap: usize,
    dim: usize,
    l: Vec<f64>,
}

impl GrowingChol {
    pub fn new(cap: usize) -> Self {
        Self { cap, dim: 0, l: vec![0.0; cap * cap] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    /// Append one row/column of the Gram matrix: `cross` holds the inner
    /// products against the existing rows (length `dim`), `diag` the new
    /// diagonal entry. The new factor row is `(hᵀ, d)` with `h = L⁻¹ cross`
    /// and `d = √(diag − hᵀh)`; `diag − hᵀh ≤ tol` signals linear
    /// dependence and is rejected, returning the defect value.
    pub fn append(&mut self, cross: &[f64], diag: f64, tol: f64) -> std::result::Result<(), f64> {
        assert!(self.dim < self.cap, "GrowingChol capacity exceeded");
        debug_assert_eq!(cross.len(), self.dim);
        let d = self.dim;
        let row = d * self.cap;
        self.l[row..row + d].copy_from_slice(cross);
        // h = L⁻¹ cross, written into the new row.
        for i in 0..d {
            let mut v = self.l[row + i];
            for j in 0..i {
                v -= self.l[i * self.cap + j] * self.l[row + j];
            }
            self.l[row + i] = v / self.l[i * self.cap + i];
        }
        let mut d2 = diag;
        for j in 0..d {
            d2 -= self.l[row + j] * self.l[row + j];
        }
        if d2 <= tol || !d2.is_finite() {
            self.l[row..row + d].fill(0.0);
            return Err(d2);
        }
        self.l[row + d] = d2.sqrt();
        self.dim += 1;
        Ok(())
    }

    /// Delete row/column `idx`. The rows below shift up; the trailing block
    /// absorbs the removed column by a rank-1 update (`O(s₂²)` where `s₂`
    /// is the number of trailing rows).
    pub fn delete(&mut self, idx: usize) {
        assert!(idx < self.dim);
        let cap = self.cap;
        let dim = self.dim;
        // Sub-diagonal part of the removed column.
        let h: Vec<f64> = ((idx + 1)..dim).map(|i| self.l[i * cap + idx]).collect();
        // Shift rows idx+1.. up by one, dropping column idx.
        for i in (idx + 1)..dim {
            for j in 0..idx {
                self.l[(i - 1) * cap + j] = self.l[i * cap + j];
            }
            for j in (idx + 1)..=i {
                self.l[(i - 1) * cap + j - 1] = self.l[i * cap + j];
            }
            self.l[(i - 1) * cap + i..(i - 1) * cap + dim].fill(0.0);
        }
        for j in 0..dim {
            self.l[(dim - 1) * cap + j] = 0.0;
        }
        self.dim = dim - 1;
        let mut h = h;
        if !h.is_empty() {
            chol_update(&mut self.l, cap, idx, h.len(), &mut h);
        }
    }

    /// Solve `L Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        debug_assert_eq!(b.len(), self.dim);
        let cap = self.cap;
        self.forward(b);
        for i in (0..self.dim).rev() {
            let mut v = b[i];
            for (j, &bj) in b.iter().enumerate().take(self.dim).skip(i + 1) {
                v -= self.l[j * cap + i] * bj;
            }
            b[i] = v / self.l[i * cap + i];
        }
    }

    /// Forward solve only: `L x = b` in place.
    pub fn forward(&self, b: &mut [f64]) {
        let cap = self.cap;
        for i in 0..self.dim {
            let row = &self.l[i * cap..i * cap + i];
            let mut v = b[i];
            for (&lij, &bj) in row.iter().zip(&*b) {
                v -= lij * bj;
            }
            b[i] = v / self.l[i * cap + i];
        }
    }

    /// Dense copy of the current factor (`dim × dim`, lower triangle).
    pub fn factor_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for j in 0..=i {
                out[i * self.dim + j] = self.l[i * self.cap + j];
            }
        }
        out
    }

    /// `‖L Lᵀ − Gram‖_F / ‖Gram‖_F` against an externally computed Gram
    /// matrix (row-major `dim × dim`), used for drift monitoring.
    pub fn drift(&self, gram: &[f64]) -> f64 {
        let d = self.dim;
        debug_assert_eq!(gram.len(), d * d);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..d {
            for j in 0..d {
                let mut v = 0.0;
                for k in 0..=i.min(j) {
                    v += self.l[i * self.cap + k] * self.l[j * self.cap + k];
                }
                let e = v - gram[i * d + j];
                num += e * e;
                den += gram[i * d + j] * gram[i * d + j];
            }
        }
        if den == 0.0 {
            return 0.0;
        }
        (num / den).sqrt()
    }

    /// Rebuild from a dense Gram matrix (row-major `dim × dim`).
    pub fn rebuild(&mut self, gram: &[f64], dim: usize) -> Result<()> {
        assert!(dim <= self.cap);
        let mut a = gram.to_vec();
        cholesky_in_place(&mut a, dim)
            .map_err(|k| Error::Breakdown(format!("Gram rebuild lost definiteness at pivot {k}")))?;
        self.l.fill(0.0);
        for i in 0..dim {
            for j in 0..=i {
                self.l[i * self.cap + j] = a[i * dim + j];
            }
        }
        self.dim = dim;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
        let b: Vec<f64> = (0..d * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut a = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                let mut v = if i == j { 0.5 * d as f64 } else { 0.0 };
                for k in 0..d {
                    v += b[i * d + k] * b[j * d + k];
                }
                a[i * d + j] = v;
            }
        }
        a
    }

    fn residual(a: &[f64], d: usize, x: &[f64], b: &[f64]) -> f64 {
        let mut r = 0.0f64;
        for i in 0..d {
            let mut v = -b[i];
            for j in 0..d {
                v += a[i * d + j] * x[j];
            }
            r = r.max(v.abs());
        }
        r
    }

    #[test]
    fn cholesky_solves_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 5, 17] {
            let a = random_spd(&mut rng, d);
            let mut l = a.clone();
            cholesky_in_place(&mut l, d).unwrap();
            let b: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut x = b.clone();
            chol_solve(&l, d, &mut x);
            assert!(residual(&a, d, &x, &b) <= 1e-10 * d as f64);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = vec![1.0, 2.0, 2.0, 1.0];
        assert_eq!(cholesky_in_place(&mut a, 2), Err(1));
    }

    #[test]
    fn rank_one_update_matches_refactorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in [1, 3, 8] {
            let a = random_spd(&mut rng, d);
            let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut l = a.clone();
            cholesky_in_place(&mut l, d).unwrap();
            let mut w = v.clone();
            chol_update(&mut l, d, 0, d, &mut w);
            // Reference: factor a + v vᵀ from scratch.
            let mut a2 = a.clone();
            for i in 0..d {
                for j in 0..d {
                    a2[i * d + j] += v[i] * v[j];
                }
            }
            cholesky_in_place(&mut a2, d).unwrap();
            for i in 0..d {
                for j in 0..=i {
                    assert!((l[i * d + j] - a2[i * d + j]).abs() <= 1e-10);
                }
            }
        }
    }

    #[test]
    fn growing_factor_append_delete_match_scratch() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = 10;
        let gram = random_spd(&mut rng, d);
        let mut g = GrowingChol::new(16);
        let mut live: Vec<usize> = Vec::new();
        // Append all rows one by one.
        for r in 0..d {
            let cross: Vec<f64> = live.iter().map(|&q| gram[r * d + q]).collect();
            g.append(&cross, gram[r * d + r], 1e-12).unwrap();
            live.push(r);
        }
        // Delete a few interior rows and compare with a scratch factor.
        for del in [3usize, 0, 4] {
            g.delete(del);
            live.remove(del);
            let s = live.len();
            let mut sub = vec![0.0; s * s];
            for (i, &p) in live.iter().enumerate() {
                for (j, &q) in live.iter().enumerate() {
                    sub[i * s + j] = gram[p * d + q];
                }
            }
            assert!(g.drift(&sub) <= 1e-12);
            let mut reference = sub.clone();
            cholesky_in_place(&mut reference, s).unwrap();
            let got = g.factor_dense();
            for i in 0..s {
                for j in 0..=i {
                    assert!((got[i * s + j] - reference[i * s + j]).abs() <= 1e-9);
                }
            }
        }
        // Solve through the factor.
        let s = live.len();
        let mut sub = vec![0.0; s * s];
        for (i, &p) in live.iter().enumerate() {
            for (j, &q) in live.iter().enumerate() {
                sub[i * s + j] = gram[p * d + q];
            }
        }
        let b: Vec<f64> = (0..s).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut x = b.clone();
        g.solve(&mut x);
        assert!(residual(&sub, s, &x, &b) <= 1e-9);
    }

    #[test]
    fn append_rejects_dependent_rows() {
        let mut g = GrowingChol::new(4);
        g.append(&[], 4.0, 1e-12).unwrap();
        // Same row again: cross = 4, diag = 4 → defect 4 − (4/2)² = 0.
        let err = g.append(&[4.0], 4.0, 1e-12).unwrap_err();
        assert!(err.abs() <= 1e-12);
        assert_eq!(g.dim(), 1);
        // An independent row is accepted: h = 1/2… pick cross 2, diag 5 →
        // d² = 5 − 1 = 4.
        g.append(&[2.0], 5.0, 1e-12).unwrap();
        assert_eq!(g.dim(), 2);
        let f = g.factor_dense();
        assert!((f[0] - 2.0).abs() <= 1e-15);
        assert!((f[2] - 1.0).abs() <= 1e-15);
        assert!((f[3] - 2.0).abs() <= 1e-15);
    }
}
