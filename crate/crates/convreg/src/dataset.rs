//! Datasets, block partitions, and primal iterates.

use crate::error::{Error, Result};

/// An immutable regression dataset: `N` locations in `R^n` with one
/// observation each.
///
/// The uniqueness of the fitted values requires `N ≥ n + 1`, which the
/// constructor enforces.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    n_points: usize,
    /// Row-major `N × n`: `points[ℓ*n .. (ℓ+1)*n]` is `x̄_ℓ`.
    points: Vec<f64>,
    /// `ȳ_ℓ`, length `N`.
    observations: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, points: Vec<f64>, observations: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension n must be ≥ 1".into()));
        }
        if points.len() % dim != 0 {
            return Err(Error::Dimension(format!(
                "points buffer length {} is not a multiple of n={}",
                points.len(),
                dim
            )));
        }
        let n_points = points.len() / dim;
        if observations.len() != n_points {
            return Err(Error::Dimension(format!(
                "{} observations for {} points",
                observations.len(),
                n_points
            )));
        }
        if n_points < dim + 1 {
            return Err(Error::TooFewPoints { n_points, dim });
        }
        if points.iter().chain(observations.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite dataset entry".into()));
        }
        Ok(Self { dim, n_points, points, observations })
    }

    /// Ambient dimension `n`.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of observations `N`.
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Location `x̄_ℓ`.
    pub fn x(&self, l: usize) -> &[f64] {
        &self.points[l * self.dim..(l + 1) * self.dim]
    }

    /// All locations, row-major `N × n`.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// All observations `ȳ`.
    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Largest location norm `B_x = max_ℓ ‖x̄_ℓ‖₂`.
    pub fn b_x(&self) -> f64 {
        (0..self.n_points)
            .map(|l| norm2(self.x(l)))
            .fold(0.0, f64::max)
    }

    /// Location centroid `x̂`.
    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for l in 0..self.n_points {
            for (ci, xi) in c.iter_mut().zip(self.x(l)) {
                *ci += xi;
            }
        }
        for ci in &mut c {
            *ci /= self.n_points as f64;
        }
        c
    }

    /// Observation mean `ŷ`.
    pub fn mean_observation(&self) -> f64 {
        self.observations.iter().sum::<f64>() / self.n_points as f64
    }

    /// `‖x̄_{l1} − x̄_{l2}‖₂²`.
    pub fn dist2(&self, l1: usize, l2: usize) -> f64 {
        self.x(l1)
            .iter()
            .zip(self.x(l2))
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    /// A permutation that places points with identical locations next to
    /// each other (stable otherwise), so that a contiguous block partition
    /// can keep duplicates inside one block. Returns `None` when there are
    /// no duplicate locations.
    pub fn duplicate_grouping(&self) -> Option<Vec<usize>> {
        use std::collections::HashMap;
        let mut groups: HashMap<&[u8], Vec<usize>> = HashMap::new();
        for l in 0..self.n_points {
            // Bitwise location identity; only exact duplicates break the
            // cross-block distance bound, so bit equality is the right key.
            let bytes = bytemuck_bytes(self.x(l));
            groups.entry(bytes).or_default().push(l);
        }
        if groups.len() == self.n_points {
            return None;
        }
        let mut order: Vec<usize> = Vec::with_capacity(self.n_points);
        let mut seen = vec![false; self.n_points];
        for l in 0..self.n_points {
            if seen[l] {
                continue;
            }
            for &m in &groups[bytemuck_bytes(self.x(l))] {
                order.push(m);
                seen[m] = true;
            }
        }
        Some(order)
    }

    /// Reorder the dataset by `perm` (new index `i` takes old point
    /// `perm[i]`).
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n_points {
            return Err(Error::Dimension("permutation length".into()));
        }
        let mut points = Vec::with_capacity(self.points.len());
        let mut observations = Vec::with_capacity(self.n_points);
        for &old in perm {
            points.extend_from_slice(self.x(old));
            observations.push(self.observations[old]);
        }
        Dataset::new(self.dim, points, observations)
    }
}

fn bytemuck_bytes(xs: &[f64]) -> &[u8] {
    // f64 → raw bytes for exact-equality hashing of locations.
    unsafe { std::slice::from_raw_parts(xs.as_ptr() as *const u8, xs.len() * 8) }
}

fn norm2(xs: &[f64]) -> f64 {
    xs.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// A partition of the `N` points into `K` contiguous blocks of equal size
/// `N̄ = N/K`, each large enough (`N̄ > n + 1`) for its block subproblem to
/// determine its own fitted values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Partition {
    k: usize,
    block_len: usize,
}

impl Partition {
    pub fn new(data: &Dataset, k: usize) -> Result<Self> {
        let n_points = data.n_points();
        let dim = data.dim();
        if k == 0 || n_points % k != 0 {
            return Err(Error::BadPartition { n_points, k, dim });
        }
        let block_len = n_points / k;
        if k > 1 && block_len <= dim + 1 {
            return Err(Error::BadPartition { n_points, k, dim });
        }
        Ok(Self { k, block_len })
    }

    /// Number of blocks `K`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Block size `N̄`.
    pub fn block_len(&self) -> usize {
        self.block_len
    }

    /// Point-index range of block `i`.
    pub fn block_range(&self, i: usize) -> std::ops::Range<usize> {
        i * self.block_len..(i + 1) * self.block_len
    }

    /// Block containing point `l`.
    pub fn block_of(&self, l: usize) -> usize {
        l / self.block_len
    }

    /// Number of relaxed (cross-block) constraint rows, `N̄²·K·(K−1)`.
    pub fn cross_rows(&self) -> usize {
        self.block_len * self.block_len * self.k * (self.k - 1)
    }
}

/// A primal iterate: fitted values `y ∈ R^N` and subgradients
/// `ξ ∈ R^{N×n}` (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub y: Vec<f64>,
    pub xi: Vec<f64>,
}

impl PrimalPoint {
    pub fn zeros(n_points: usize, dim: usize) -> Self {
        Self { y: vec![0.0; n_points], xi: vec![0.0; n_points * dim] }
    }

    /// Subgradient `ξ_ℓ`.
    pub fn xi_at(&self, l: usize, dim: usize) -> &[f64] {
        &self.xi[l * dim..(l + 1) * dim]
    }

    /// Reorder a primal point back to the original dataset order given the
    /// permutation that produced the solver's order (inverse of
    /// [`Dataset::permuted`]).
    pub fn unpermuted(&self, perm: &[usize], dim: usize) -> PrimalPoint {
        let mut out = PrimalPoint::zeros(self.y.len(), dim);
        for (new, &old) in perm.iter().enumerate() {
            out.y[old] = self.y[new];
            out.xi[old * dim..(old + 1) * dim]
                .copy_from_slice(&self.xi[new * dim..(new + 1) * dim]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        // Four points on a line with distinct locations.
        Dataset::new(1, vec![0.0, 1.0, 2.0, 3.0], vec![0.0, 1.0, 4.0, 9.0]).unwrap()
    }

    #[test]
    fn constructor_validates_sizes() {
        assert!(matches!(
            Dataset::new(2, vec![0.0; 4], vec![0.0; 2]),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(Dataset::new(1, vec![0.0, 1.0], vec![0.0, 1.0]).is_ok());
        assert!(Dataset::new(1, vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(Dataset::new(2, vec![0.0; 5], vec![0.0; 2]).is_err());
    }

    #[test]
    fn derived_statistics() {
        let d = toy();
        assert_eq!(d.n_points(), 4);
        assert_eq!(d.dim(), 1);
        assert_eq!(d.b_x(), 3.0);
        assert_eq!(d.centroid(), vec![1.5]);
        assert_eq!(d.mean_observation(), 3.5);
        assert_eq!(d.dist2(0, 3), 9.0);
    }

    #[test]
    fn partition_shape_rules() {
        let d = Dataset::new(1, (0..12).map(|i| i as f64).collect(), vec![0.0; 12]).unwrap();
        let p = Partition::new(&d, 2).unwrap();
        assert_eq!(p.block_len(), 6);
        assert_eq!(p.block_range(1), 6..12);
        assert_eq!(p.block_of(5), 0);
        assert_eq!(p.block_of(6), 1);
        assert_eq!(p.cross_rows(), 36 * 2);
        // 12 % 5 ≠ 0.
        assert!(Partition::new(&d, 5).is_err());
        // Blocks of size 2 are too small for n=1 (need > n+1 = 2).
        assert!(Partition::new(&d, 6).is_err());
        // K=1 always allowed: no relaxed rows.
        assert_eq!(Partition::new(&d, 1).unwrap().cross_rows(), 0);
    }

    #[test]
    fn duplicate_grouping_clusters_equal_locations() {
        let d = Dataset::new(
            1,
            vec![0.0, 1.0, 0.0, 2.0, 1.0, 3.0],
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        let perm = d.duplicate_grouping().unwrap();
        assert_eq!(perm, vec![0, 2, 1, 4, 3, 5]);
        let g = d.permuted(&perm).unwrap();
        assert_eq!(g.points(), &[0.0, 0.0, 1.0, 1.0, 2.0, 3.0]);
        assert_eq!(g.observations(), &[0.0, 2.0, 1.0, 4.0, 3.0, 5.0]);
        assert!(toy().duplicate_grouping().is_none());
    }

    #[test]
    fn unpermute_round_trips() {
        let d = Dataset::new(
            1,
            vec![0.0, 1.0, 0.0, 2.0, 1.0, 3.0],
            vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
        )
        .unwrap();
        let perm = d.duplicate_grouping().unwrap();
        let g = d.permuted(&perm).unwrap();
        let fitted = PrimalPoint {
            y: g.observations().to_vec(),
            xi: g.points().to_vec(),
        };
        let back = fitted.unpermuted(&perm, 1);
        assert_eq!(back.y, d.observations());
        assert_eq!(back.xi, d.points());
    }
}
