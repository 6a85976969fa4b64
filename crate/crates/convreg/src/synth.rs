//! Synthetic regression instances with a known convex ground truth.
//!
//! Generation is fully deterministic in the seed: four independent RNG
//! streams of one ChaCha8 generator cover locations, noise, the perturbed
//! index choice, and the ground-truth function parameters, so changing how
//! many draws one stage consumes can never shift another stage's values.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Standard deviation of each covariate coordinate.
pub const LOCATION_SD: f64 = 2.0;
/// Standard deviation of the additive observation noise.
pub const NOISE_SD: f64 = 10.0;
/// Multiplicative factor applied to the perturbed observations.
pub const PERTURB_FACTOR: f64 = 1.3;
/// Share of observations that get perturbed (rounded down).
pub const PERTURB_SHARE: f64 = 0.3;
/// Condition number imposed on the quadratic ground truth (for `n ≥ 2`).
pub const QUAD_COND: f64 = 15.0;

const STREAM_LOCATIONS: u64 = 0;
const STREAM_NOISE: u64 = 1;
const STREAM_PERTURBATION: u64 = 2;
const STREAM_FUNCTION: u64 = 3;

/// Family of the convex ground-truth function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionKind {
    /// `f₀(x) = ½ xᵀQx` with `Q ≻ 0` conditioned to [`QUAD_COND`].
    Quadratic,
    /// `f₀(x) = exp(pᵀx)` with `p` uniform in `[0, 0.2]ⁿ`.
    Exponential,
}

impl FunctionKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FunctionKind::Quadratic => "quadratic",
            FunctionKind::Exponential => "exponential",
        }
    }
}

impl std::str::FromStr for FunctionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quadratic" => Ok(FunctionKind::Quadratic),
            "exponential" => Ok(FunctionKind::Exponential),
            other => Err(Error::InvalidArgument(format!(
                "unknown function kind {other:?}, expected \"quadratic\" or \"exponential\""
            ))),
        }
    }
}

/// The generator's view of an instance: everything needed to reproduce it
/// and to evaluate the noiseless ground truth.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub kind: FunctionKind,
    pub dim: usize,
    pub n_points: usize,
    pub seed: u64,
    /// Condition number of the quadratic form; `0` when not applicable.
    pub cond: f64,
    /// Sorted indices whose observations were scaled by [`PERTURB_FACTOR`].
    pub perturbed: Vec<usize>,
    quad: Option<Vec<f64>>,
    expo: Option<Vec<f64>>,
}

impl GroundTruth {
    /// Noiseless ground-truth value at `x`.
    pub fn f0(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "query point has the wrong dimension");
        match self.kind {
            FunctionKind::Quadratic => {
                let q = self.quad.as_ref().expect("quadratic form present");
                let n = self.dim;
                let mut v = 0.0;
                for (i, xi) in x.iter().enumerate() {
                    for (j, xj) in x.iter().enumerate() {
                        v += xi * q[i * n + j] * xj;
                    }
                }
                0.5 * v
            }
            FunctionKind::Exponential => {
                let p = self.expo.as_ref().expect("exponent present");
                crate::la::dot(p, x).exp()
            }
        }
    }

    /// Row-major quadratic form, when the kind is quadratic.
    pub fn quad_matrix(&self) -> Option<&[f64]> {
        self.quad.as_deref()
    }

    /// Exponent vector, when the kind is exponential.
    pub fn expo_params(&self) -> Option<&[f64]> {
        self.expo.as_deref()
    }
}

/// Generates a reproducible instance: covariates `x̄_ℓ ~ N(0, 2²I)`,
/// observations `ȳ_ℓ = f₀(x̄_ℓ) + ε_ℓ` with `ε_ℓ ~ N(0, 10²)`, and finally
/// `⌊0.3N⌋` randomly chosen observations scaled by `1.3`.
pub fn gen_instance(
    kind: FunctionKind,
    dim: usize,
    n_points: usize,
    seed: u64,
) -> Result<(Dataset, GroundTruth)> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if n_points < dim + 1 {
        return Err(Error::TooFewPoints { n_points, dim });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_LOCATIONS);
    let loc = Normal::new(0.0, LOCATION_SD).expect("valid distribution");
    let points: Vec<f64> = (0..n_points * dim).map(|_| loc.sample(&mut rng)).collect();

    let (quad, expo, cond) = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_FUNCTION);
        match kind {
            FunctionKind::Quadratic => {
                let (q, cond) = conditioned_quadratic(dim, &mut rng)?;
                (Some(q), None, cond)
            }
            FunctionKind::Exponential => {
                let p: Vec<f64> =
                    (0..dim).map(|_| rng.gen_range(0.0..=0.2)).collect();
                (None, Some(p), 0.0)
            }
        }
    };
    let truth = GroundTruth {
        kind,
        dim,
        n_points,
        seed,
        cond,
        perturbed: Vec::new(),
        quad,
        expo,
    };

    let mut rng_noise = ChaCha8Rng::seed_from_u64(seed);
    rng_noise.set_stream(STREAM_NOISE);
    let noise = Normal::new(0.0, NOISE_SD).expect("valid distribution");
    let mut obs: Vec<f64> = (0..n_points)
        .map(|l| truth.f0(&points[l * dim..(l + 1) * dim]) + noise.sample(&mut rng_noise))
        .collect();

    let mut rng_perturb = ChaCha8Rng::seed_from_u64(seed);
    rng_perturb.set_stream(STREAM_PERTURBATION);
    let count = (PERTURB_SHARE * n_points as f64).floor() as usize;
    let mut perturbed =
        rand::seq::index::sample(&mut rng_perturb, n_points, count).into_vec();
    perturbed.sort_unstable();
    for &i in &perturbed {
        obs[i] *= PERTURB_FACTOR;
    }

    let data = Dataset::new(dim, points, obs)?;
    Ok((data, GroundTruth { perturbed, ..truth }))
}

/// Draws `Λ` with standard normal entries, then remaps the eigenvalues of
/// `ΛᵀΛ` affinely onto `[λ_max/QUAD_COND, λ_max]` so the condition number is
/// exactly [`QUAD_COND`] (for `n = 1` the scalar is kept as drawn).
fn conditioned_quadratic(dim: usize, rng: &mut ChaCha8Rng) -> Result<(Vec<f64>, f64)> {
    let std = Normal::new(0.0, 1.0).expect("valid distribution");
    let lambda: Vec<f64> = (0..dim * dim).map(|_| std.sample(rng)).collect();
    let lam = nalgebra::DMatrix::from_row_slice(dim, dim, &lambda);
    let gram = lam.transpose() * &lam;
    if dim == 1 {
        let v = gram[(0, 0)];
        if v <= 0.0 {
            return Err(Error::Breakdown("degenerate quadratic draw".into()));
        }
        return Ok((vec![v], 1.0));
    }
    let eigen = nalgebra::SymmetricEigen::new(gram);
    let max = eigen.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if max.is_nan() || max <= 0.0 || !(max - min).is_finite() {
        return Err(Error::Breakdown("degenerate quadratic draw".into()));
    }
    let target_min = max / QUAD_COND;
    let mapped = if max - min <= f64::EPSILON * max {
        eigen.eigenvalues.clone()
    } else {
        eigen
            .eigenvalues
            .map(|t| target_min + (t - min) * (max - target_min) / (max - min))
    };
    let q = &eigen.eigenvectors
        * nalgebra::DMatrix::from_diagonal(&mapped)
        * eigen.eigenvectors.transpose();
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            // Exact symmetry, averaging away factorization roundoff.
            out[i * dim + j] = 0.5 * (q[(i, j)] + q[(j, i)]);
        }
    }
    Ok((out, QUAD_COND))
}
