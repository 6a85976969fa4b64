//! Matrix-free constraint operators, feasibility metrics, the strictly
//! feasible starting point, and max-affine prediction.
//!
//! The convexity constraints are indexed by ordered pairs `(ℓ₁, ℓ₂)`,
//! `ℓ₁ ≠ ℓ₂`, sorted lexicographically. Row `(ℓ₁, ℓ₂)` of the constraint
//! system reads
//!
//! ```text
//!   y_{ℓ₂} − y_{ℓ₁} + ξ_{ℓ₁}ᵀ (x̄_{ℓ₁} − x̄_{ℓ₂}) ≥ 0.
//! ```
//!
//! The `y` part of a row is the action of a difference operator `A₁`, the
//! `ξ` part the action of a block-diagonal operator `A₂`; neither is ever
//! materialized — storing the locations is sufficient, and every
//! application costs `O(N²)` resp. `O(nN²)` with `O(1)` extra memory.
//!
//! When the points are split into `K` contiguous blocks, the rows whose two
//! points fall in *different* blocks are the relaxed (dualized) rows. They
//! form the coupling operator `C`: multipliers for those rows are ordered
//! by block pair `(i, j)`, `i ≠ j`, lexicographically, and inside one block
//! pair lexicographically by `(ℓ₁, ℓ₂)`.

use crate::dataset::{Dataset, Partition, PrimalPoint};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Row indexing (closed-form, no lookup tables)
// ---------------------------------------------------------------------------

/// Row index of the ordered pair `(l1, l2)` among all `N(N−1)` ordered
/// pairs in lexicographic order.
#[inline]
pub fn row_of_pair(l1: usize, l2: usize, n_points: usize) -> usize {
    debug_assert!(l1 != l2 && l1 < n_points && l2 < n_points);
    l1 * (n_points - 1) + l2 - usize::from(l2 > l1)
}

/// Inverse of [`row_of_pair`].
#[inline]
pub fn pair_of_row(r: usize, n_points: usize) -> (usize, usize) {
    let l1 = r / (n_points - 1);
    let t = r % (n_points - 1);
    let l2 = t + usize::from(t >= l1);
    (l1, l2)
}

// ---------------------------------------------------------------------------
// Pairwise constraint operator over a contiguous range of points
// ---------------------------------------------------------------------------

/// Matrix-free constraint operator over the ordered pairs of a contiguous
/// point range (the whole dataset, or one block of a partition).
///
/// Vectors passed to the apply methods are indexed locally: `y` has length
/// `len`, `ξ` length `len·n`, and row indices run over the `len·(len−1)`
/// ordered pairs of the range.
#[derive(Clone, Copy)]
pub struct ConstraintOperator<'a> {
    data: &'a Dataset,
    start: usize,
    len: usize,
}

impl<'a> ConstraintOperator<'a> {
    /// Operator over all `N` points.
    pub fn full(data: &'a Dataset) -> Self {
        Self { data, start: 0, len: data.n_points() }
    }

    /// Operator over block `i` of `part`.
    pub fn block(data: &'a Dataset, part: &Partition, i: usize) -> Self {
        let r = part.block_range(i);
        Self { data, start: r.start, len: r.end - r.start }
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.data
    }

    /// First global point index of the range.
    pub fn start(&self) -> usize {
        self.start
    }

    /// Number of points in the range.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of constraint rows, `len·(len−1)`.
    pub fn rows(&self) -> usize {
        self.len * (self.len - 1)
    }

    /// Global location of local point `l`.
    #[inline]
    pub fn x(&self, l: usize) -> &[f64] {
        self.data.x(self.start + l)
    }

    /// Observations restricted to the range.
    pub fn observations(&self) -> &[f64] {
        &self.data.observations()[self.start..self.start + self.len]
    }

    /// `out[(ℓ₁,ℓ₂)] = y[ℓ₂] − y[ℓ₁]`.
    pub fn apply_a1(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.len);
        debug_assert_eq!(out.len(), self.rows());
        let mut r = 0;
        for l1 in 0..self.len {
            for l2 in 0..self.len {
                if l1 != l2 {
                    out[r] = y[l2] - y[l1];
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`apply_a1`](Self::apply_a1): scatter `+z_r` to `ℓ₂`,
    /// `−z_r` to `ℓ₁`.
    pub fn apply_a1_t(&self, z: &[f64], out: &mut [f64]) {
        debug_assert_eq!(z.len(), self.rows());
        debug_assert_eq!(out.len(), self.len);
        out.fill(0.0);
        let mut r = 0;
        for l1 in 0..self.len {
            for l2 in 0..self.len {
                if l1 != l2 {
                    out[l2] += z[r];
                    out[l1] -= z[r];
                    r += 1;
                }
            }
        }
    }

    /// `out[(ℓ₁,ℓ₂)] = ξ_{ℓ₁}ᵀ (x̄_{ℓ₁} − x̄_{ℓ₂})`.
    pub fn apply_a2(&self, xi: &[f64], out: &mut [f64]) {
        let n = self.data.dim();
        debug_assert_eq!(xi.len(), self.len * n);
        debug_assert_eq!(out.len(), self.rows());
        let mut r = 0;
        for l1 in 0..self.len {
            let xi1 = &xi[l1 * n..(l1 + 1) * n];
            let x1 = self.x(l1);
            for l2 in 0..self.len {
                if l1 != l2 {
                    let x2 = self.x(l2);
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += xi1[j] * (x1[j] - x2[j]);
                    }
                    out[r] = acc;
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`apply_a2`](Self::apply_a2).
    pub fn apply_a2_t(&self, z: &[f64], out: &mut [f64]) {
        let n = self.data.dim();
        debug_assert_eq!(z.len(), self.rows());
        debug_assert_eq!(out.len(), self.len * n);
        out.fill(0.0);
        let mut r = 0;
        for l1 in 0..self.len {
            let x1 = self.x(l1);
            let acc = &mut out[l1 * n..(l1 + 1) * n];
            for l2 in 0..self.len {
                if l1 != l2 {
                    let x2 = self.x(l2);
                    for j in 0..n {
                        acc[j] += z[r] * (x1[j] - x2[j]);
                    }
                    r += 1;
                }
            }
        }
    }

    /// Full row action `A₁y + A₂ξ`.
    pub fn apply(&self, y: &[f64], xi: &[f64], out: &mut [f64]) {
        let n = self.data.dim();
        debug_assert_eq!(y.len(), self.len);
        debug_assert_eq!(xi.len(), self.len * n);
        debug_assert_eq!(out.len(), self.rows());
        let mut r = 0;
        for l1 in 0..self.len {
            let xi1 = &xi[l1 * n..(l1 + 1) * n];
            let x1 = self.x(l1);
            for l2 in 0..self.len {
                if l1 != l2 {
                    let x2 = self.x(l2);
                    let mut acc = y[l2] - y[l1];
                    for j in 0..n {
                        acc += xi1[j] * (x1[j] - x2[j]);
                    }
                    out[r] = acc;
                    r += 1;
                }
            }
        }
    }

    /// Adjoint of [`apply`](Self::apply): `(A₁ᵀz, A₂ᵀz)`.
    pub fn apply_t(&self, z: &[f64], out_y: &mut [f64], out_xi: &mut [f64]) {
        let n = self.data.dim();
        out_y.fill(0.0);
        out_xi.fill(0.0);
        let mut r = 0;
        for l1 in 0..self.len {
            let x1 = self.x(l1);
            for l2 in 0..self.len {
                if l1 != l2 {
                    let zr = z[r];
                    out_y[l2] += zr;
                    out_y[l1] -= zr;
                    let x2 = self.x(l2);
                    let acc = &mut out_xi[l1 * n..(l1 + 1) * n];
                    for j in 0..n {
                        acc[j] += zr * (x1[j] - x2[j]);
                    }
                    r += 1;
                }
            }
        }
    }

    /// Value of a single constraint row.
    pub fn row_value(&self, r: usize, y: &[f64], xi: &[f64]) -> f64 {
        let n = self.data.dim();
        let (l1, l2) = pair_of_row(r, self.len);
        let x1 = self.x(l1);
        let x2 = self.x(l2);
        let xi1 = &xi[l1 * n..(l1 + 1) * n];
        let mut acc = y[l2] - y[l1];
        for j in 0..n {
            acc += xi1[j] * (x1[j] - x2[j]);
        }
        acc
    }

    /// `‖(A₁y + A₂ξ)₋‖₂`, the unnormalized constraint-violation norm.
    pub fn infeasibility_raw(&self, p: &PrimalPoint) -> f64 {
        let n = self.data.dim();
        let mut acc = 0.0;
        for l1 in 0..self.len {
            let xi1 = &p.xi[l1 * n..(l1 + 1) * n];
            let x1 = self.x(l1);
            for l2 in 0..self.len {
                if l1 != l2 {
                    let x2 = self.x(l2);
                    let mut v = p.y[l2] - p.y[l1];
                    for j in 0..n {
                        v += xi1[j] * (x1[j] - x2[j]);
                    }
                    if v < 0.0 {
                        acc += v * v;
                    }
                }
            }
        }
        acc.sqrt()
    }

    /// Normalized infeasibility `‖(A₁y + A₂ξ)₋‖₂ / √(N²−N)`; zero exactly
    /// when the model is convexity-feasible.
    pub fn infeasibility(&self, p: &PrimalPoint) -> f64 {
        self.infeasibility_raw(p) / (self.rows() as f64).sqrt()
    }

    /// Smallest squared distance between two distinct-by-index points of
    /// the range (0.0 when duplicate locations exist inside the range).
    pub fn min_pair_dist2(&self) -> f64 {
        let mut best = f64::INFINITY;
        for l1 in 0..self.len {
            for l2 in (l1 + 1)..self.len {
                best = best.min(self.data.dist2(self.start + l1, self.start + l2));
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Cross-block coupling operator
// ---------------------------------------------------------------------------

/// Matrix-free coupling operator `C`: the constraint rows whose two points
/// lie in different blocks of a [`Partition`].
#[derive(Clone, Copy)]
pub struct CrossOperator<'a> {
    data: &'a Dataset,
    part: Partition,
}

impl<'a> CrossOperator<'a> {
    pub fn new(data: &'a Dataset, part: Partition) -> Self {
        Self { data, part }
    }

    pub fn partition(&self) -> Partition {
        self.part
    }

    /// Number of relaxed rows `N̄²·K·(K−1)`.
    pub fn rows(&self) -> usize {
        self.part.cross_rows()
    }

    /// Global point pair of relaxed row `r`.
    #[inline]
    pub fn pair_of_row(&self, r: usize) -> (usize, usize) {
        let nb = self.part.block_len();
        let k = self.part.k();
        let p = r / (nb * nb);
        let w = r % (nb * nb);
        let i = p / (k - 1);
        let jj = p % (k - 1);
        let j = jj + usize::from(jj >= i);
        (i * nb + w / nb, j * nb + w % nb)
    }

    /// Relaxed-row index of the cross-block pair `(l1, l2)`.
    #[inline]
    pub fn row_of_pair(&self, l1: usize, l2: usize) -> usize {
        let nb = self.part.block_len();
        let k = self.part.k();
        let i = l1 / nb;
        let j = l2 / nb;
        debug_assert_ne!(i, j);
        let jj = j - usize::from(j > i);
        (i * (k - 1) + jj) * nb * nb + (l1 % nb) * nb + (l2 % nb)
    }

    /// `out[r] = y_{ℓ₂} − y_{ℓ₁} + ξ_{ℓ₁}ᵀ(x̄_{ℓ₁} − x̄_{ℓ₂})` over relaxed
    /// rows.
    pub fn apply_c(&self, p: &PrimalPoint, out: &mut [f64]) {
        let n = self.data.dim();
        debug_assert_eq!(out.len(), self.rows());
        for (r, o) in out.iter_mut().enumerate() {
            let (l1, l2) = self.pair_of_row(r);
            let x1 = self.data.x(l1);
            let x2 = self.data.x(l2);
            let xi1 = &p.xi[l1 * n..(l1 + 1) * n];
            let mut acc = p.y[l2] - p.y[l1];
            for j in 0..n {
                acc += xi1[j] * (x1[j] - x2[j]);
            }
            *o = acc;
        }
    }

    /// Adjoint of [`apply_c`](Self::apply_c), returned as a global primal
    /// point.
    pub fn apply_c_t(&self, theta: &[f64]) -> PrimalPoint {
        let n = self.data.dim();
        debug_assert_eq!(theta.len(), self.rows());
        let mut out = PrimalPoint::zeros(self.data.n_points(), n);
        for (r, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let (l1, l2) = self.pair_of_row(r);
            out.y[l2] += t;
            out.y[l1] -= t;
            let x1 = self.data.x(l1);
            let x2 = self.data.x(l2);
            let acc = &mut out.xi[l1 * n..(l1 + 1) * n];
            for j in 0..n {
                acc[j] += t * (x1[j] - x2[j]);
            }
        }
        out
    }

    /// Normalized duality gap `θᵀCη / (N²−N)`. Signed: it is negative when
    /// the relaxed rows are violated strongly enough.
    pub fn duality_gap(&self, theta: &[f64], p: &PrimalPoint) -> f64 {
        let n = self.data.dim();
        let mut acc = 0.0;
        for (r, &t) in theta.iter().enumerate() {
            if t == 0.0 {
                continue;
            }
            let (l1, l2) = self.pair_of_row(r);
            let x1 = self.data.x(l1);
            let x2 = self.data.x(l2);
            let xi1 = &p.xi[l1 * n..(l1 + 1) * n];
            let mut v = p.y[l2] - p.y[l1];
            for j in 0..n {
                v += xi1[j] * (x1[j] - x2[j]);
            }
            acc += t * v;
        }
        let np = self.data.n_points() as f64;
        acc / (np * np - np)
    }

    /// Smallest squared cross-block distance `υ = min ‖x̄_{ℓ₁} − x̄_{ℓ₂}‖²`
    /// over pairs in different blocks. Returns an error when it vanishes
    /// (duplicate locations across blocks), since the dual-norm bounds
    /// divide by it.
    pub fn upsilon(&self) -> Result<f64> {
        let k = self.part.k();
        let mut best = f64::INFINITY;
        for i in 0..k {
            for j in (i + 1)..k {
                for l1 in self.part.block_range(i) {
                    for l2 in self.part.block_range(j) {
                        best = best.min(self.data.dist2(l1, l2));
                    }
                }
            }
        }
        if k == 1 {
            return Err(Error::InvalidArgument(
                "υ undefined for a single block (no cross rows)".into(),
            ));
        }
        if best <= 0.0 {
            return Err(Error::ZeroCrossDistance);
        }
        Ok(best)
    }
}

// ---------------------------------------------------------------------------
// Strictly feasible point and prediction
// ---------------------------------------------------------------------------

/// The strictly feasible starting point built from the quadratic
/// `h(x) = ŷ + (α/2)‖x − x̂‖²` through the data centroid:
/// `ỹ_ℓ = h(x̄_ℓ)`, `ξ̃_ℓ = ∇h(x̄_ℓ) = α(x̄_ℓ − x̂)`.
///
/// Because `h` is strongly convex with modulus `α`, every constraint row
/// `(ℓ₁, ℓ₂)` has slack exactly `(α/2)‖x̄_{ℓ₁} − x̄_{ℓ₂}‖²`, so the point is
/// strictly feasible whenever all locations are distinct.
pub fn slater_point(data: &Dataset, alpha: f64) -> Result<PrimalPoint> {
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!("slater_point needs α > 0, got {alpha}")));
    }
    let n = data.dim();
    let xc = data.centroid();
    let yc = data.mean_observation();
    let mut p = PrimalPoint::zeros(data.n_points(), n);
    for l in 0..data.n_points() {
        let x = data.x(l);
        let mut d2 = 0.0;
        for j in 0..n {
            let d = x[j] - xc[j];
            d2 += d * d;
            p.xi[l * n + j] = alpha * d;
        }
        p.y[l] = yc + 0.5 * alpha * d2;
    }
    Ok(p)
}

/// Max-affine evaluation of a fitted model at `x`:
/// `f̂(x) = max_ℓ { y_ℓ + ξ_ℓᵀ(x − x̄_ℓ) }`.
pub fn predict(data: &Dataset, model: &PrimalPoint, x: &[f64]) -> Result<f64> {
    let n = data.dim();
    if x.len() != n || model.y.len() != data.n_points() || model.xi.len() != data.n_points() * n {
        return Err(Error::Dimension("predict: model/point size".into()));
    }
    let mut best = f64::NEG_INFINITY;
    for l in 0..data.n_points() {
        let xl = data.x(l);
        let xil = &model.xi[l * n..(l + 1) * n];
        let mut v = model.y[l];
        for j in 0..n {
            v += xil[j] * (x[j] - xl[j]);
        }
        best = best.max(v);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Generic linear-operator view (for singular-value estimation)
// ---------------------------------------------------------------------------

/// A matrix-free linear operator with its adjoint.
pub trait LinOp {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_transpose(&self, z: &[f64], out: &mut [f64]);
}

/// `A₁` as a [`LinOp`] on `y ∈ R^len`.
pub struct A1Op<'a>(pub ConstraintOperator<'a>);

impl LinOp for A1Op<'_> {
    fn rows(&self) -> usize {
        self.0.rows()
    }
    fn cols(&self) -> usize {
        self.0.len()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.0.apply_a1(x, out);
    }
    fn apply_transpose(&self, z: &[f64], out: &mut [f64]) {
        self.0.apply_a1_t(z, out);
    }
}

/// `A₂` as a [`LinOp`] on `ξ ∈ R^{len·n}`.
pub struct A2Op<'a>(pub ConstraintOperator<'a>);

impl LinOp for A2Op<'_> {
    fn rows(&self) -> usize {
        self.0.rows()
    }
    fn cols(&self) -> usize {
        self.0.len() * self.0.dataset().dim()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.0.apply_a2(x, out);
    }
    fn apply_transpose(&self, z: &[f64], out: &mut [f64]) {
        self.0.apply_a2_t(z, out);
    }
}

/// The coupling operator `C = [A₃ A₄]` as a [`LinOp`] on stacked
/// `[y; ξ] ∈ R^{N(1+n)}`.
pub struct CrossOp<'a>(pub CrossOperator<'a>);

impl LinOp for CrossOp<'_> {
    fn rows(&self) -> usize {
        self.0.rows()
    }
    fn cols(&self) -> usize {
        let d = self.0.data;
        d.n_points() * (1 + d.dim())
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let np = self.0.data.n_points();
        let p = PrimalPoint { y: x[..np].to_vec(), xi: x[np..].to_vec() };
        self.0.apply_c(&p, out);
    }
    fn apply_transpose(&self, z: &[f64], out: &mut [f64]) {
        let p = self.0.apply_c_t(z);
        let np = self.0.data.n_points();
        out[..np].copy_from_slice(&p.y);
        out[np..].copy_from_slice(&p.xi);
    }
}
