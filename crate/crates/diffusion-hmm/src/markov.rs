//! Finite-state Markov transition models, beliefs on the hypothesis
//! simplex, and the Chapman-Kolmogorov evolution operator shared by all
//! filters.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// Finite hypothesis set `{0, .., H-1}` with `H >= 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HypothesisSet {
    count: usize,
}

impl HypothesisSet {
    pub fn new(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::InvalidParameter(format!(
                "hypothesis count must be at least 2, got {count}"
            )));
        }
        Ok(Self { count })
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Probability vector over the hypothesis set.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
}

impl Belief {
    /// Validates non-negativity and unit mass (within 1e-12).
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidProbability(format!(
                "belief needs at least 2 entries, got {}",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(0.0..=1.0 + SIMPLEX_TOL).contains(&p) || p.is_nan()) {
            return Err(Error::InvalidProbability(
                "entries must lie in [0, 1]".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidProbability(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Strictly positive belief, as required for initial priors.
    pub fn new_strictly_positive(probs: Vec<f64>) -> Result<Self> {
        let b = Self::new(probs)?;
        if b.probs.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidProbability(
                "initial belief must be strictly positive at every hypothesis".into(),
            ));
        }
        Ok(b)
    }

    pub fn uniform(len: usize) -> Self {
        Self {
            probs: vec![1.0 / len as f64; len],
        }
    }

    /// Normalizes a non-negative weight vector.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::InvalidProbability(
                "weights must be non-negative with positive sum".into(),
            ));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }
}

/// `H x H` column-stochastic transition kernel; `kernel[(next, prev)]`
/// is the probability of moving from hypothesis `prev` to `next`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    kernel: DMatrix<f64>,
}

impl TransitionModel {
    /// Builds from a column-stochastic matrix stored row-major, i.e.
    /// `columns[prev][next]` would be the transpose; here `rows[next][prev]`.
    pub fn from_column_stochastic(rows: Vec<Vec<f64>>) -> Result<Self> {
        let h = rows.len();
        if h < 2 || rows.iter().any(|r| r.len() != h) {
            return Err(Error::InvalidTransition(
                "kernel must be square with H >= 2".into(),
            ));
        }
        let kernel = DMatrix::from_fn(h, h, |i, j| rows[i][j]);
        Self::from_matrix(kernel)
    }

    /// Accepts a row-stochastic matrix `rows[prev][next]` and transposes it.
    pub fn from_row_stochastic(rows: Vec<Vec<f64>>) -> Result<Self> {
        let h = rows.len();
        if h < 2 || rows.iter().any(|r| r.len() != h) {
            return Err(Error::InvalidTransition(
                "kernel must be square with H >= 2".into(),
            ));
        }
        let kernel = DMatrix::from_fn(h, h, |i, j| rows[j][i]);
        Self::from_matrix(kernel)
    }

    fn from_matrix(kernel: DMatrix<f64>) -> Result<Self> {
        for j in 0..kernel.ncols() {
            let mut sum = 0.0;
            for i in 0..kernel.nrows() {
                let v = kernel[(i, j)];
                if !(0.0..=1.0 + SIMPLEX_TOL).contains(&v) || v.is_nan() {
                    return Err(Error::InvalidTransition(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::InvalidTransition(format!(
                    "column {j} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { kernel })
    }

    /// Binary symmetric channel: stays with probability `1 - alpha`.
    pub fn bsc(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "BSC flip probability must lie in [0, 1], got {alpha}"
            )));
        }
        Self::from_column_stochastic(vec![vec![1.0 - alpha, alpha], vec![alpha, 1.0 - alpha]])
    }

    /// Identity kernel (fixed hypothesis).
    pub fn identity(h: usize) -> Result<Self> {
        if h < 2 {
            return Err(Error::InvalidParameter("H must be at least 2".into()));
        }
        Self::from_matrix(DMatrix::identity(h, h))
    }

    pub fn hypothesis_count(&self) -> usize {
        self.kernel.nrows()
    }

    /// `T(next | prev)`.
    pub fn prob(&self, next: usize, prev: usize) -> f64 {
        self.kernel[(next, prev)]
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    /// True if some power `T^n` with `n <= H^2` has all-positive entries.
    pub fn is_primitive(&self) -> bool {
        let h = self.kernel.nrows();
        let mut power = self.kernel.clone();
        for _ in 0..h * h {
            if power.iter().all(|&v| v > 0.0) {
                return true;
            }
            power = &power * &self.kernel;
        }
        false
    }
}

/// Chapman-Kolmogorov evolution: `out[next] = sum_prev T(next|prev) * belief[prev]`.
pub fn evolve(belief: &Belief, model: &TransitionModel) -> Result<Belief> {
    let h = model.hypothesis_count();
    if belief.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "belief has {} entries, kernel expects {h}",
            belief.len()
        )));
    }
    let mut out = vec![0.0; h];
    for prev in 0..h {
        let mass = belief.probs[prev];
        if mass == 0.0 {
            continue;
        }
        for next in 0..h {
            out[next] += model.kernel[(next, prev)] * mass;
        }
    }
    // Renormalize away accumulated rounding so downstream simplex checks hold.
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    Belief::new(out)
}

/// Dobrushin contraction coefficient: worst-case total-variation distance
/// between two columns of the kernel.
pub fn dobrushin_coefficient(model: &TransitionModel) -> f64 {
    let h = model.hypothesis_count();
    let mut worst: f64 = 0.0;
    for a in 0..h {
        for b in (a + 1)..h {
            let mut tv = 0.0;
            for next in 0..h {
                tv += (model.kernel[(next, a)] - model.kernel[(next, b)]).abs();
            }
            worst = worst.max(0.5 * tv);
        }
    }
    worst.min(1.0)
}

const PERRON_RESIDUAL: f64 = 1e-12;
const PERRON_MAX_ITERS: usize = 1_000_000;

/// Stationary distribution of the chain via power iteration.
pub fn perron_vector(model: &TransitionModel) -> Result<Belief> {
    if !model.is_primitive() {
        return Err(Error::NonErgodic(
            "kernel is not irreducible and aperiodic (no power up to H^2 is all-positive)".into(),
        ));
    }
    let h = model.hypothesis_count();
    let mut current = Belief::uniform(h);
    for _ in 0..PERRON_MAX_ITERS {
        let next = evolve(&current, model)?;
        let residual = current
            .probs
            .iter()
            .zip(next.probs.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if residual < PERRON_RESIDUAL {
            return Ok(next);
        }
        current = next;
    }
    Err(Error::NonErgodic(format!(
        "power iteration did not reach residual {PERRON_RESIDUAL} within {PERRON_MAX_ITERS} iterations"
    )))
}

/// Samples `theta_0 ~ initial`, then `theta_i ~ T(. | theta_{i-1})` for
/// `horizon` steps total.
pub fn sample_trajectory<R: Rng>(
    model: &TransitionModel,
    initial: &Belief,
    horizon: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    let h = model.hypothesis_count();
    if initial.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "initial belief has {} entries, kernel expects {h}",
            initial.len()
        )));
    }
    let mut out = Vec::with_capacity(horizon + 1);
    let mut state = sample_index(initial.probs(), rng);
    out.push(state);
    for _ in 0..horizon {
        let column: Vec<f64> = (0..h).map(|next| model.kernel[(next, state)]).collect();
        state = sample_index(&column, rng);
        out.push(state);
    }
    Ok(out)
}

fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// KL divergence `sum_theta p log(p/q)` in nats, with the `0 log 0 = 0`
/// convention. Returns `f64::INFINITY` when `q` has zero mass where `p`
/// has positive mass.
pub fn kl_divergence(p: &Belief, q: &Belief) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "beliefs have lengths {} and {}",
            p.len(),
            q.len()
        )));
    }
    let mut sum = 0.0;
    for (&pv, &qv) in p.probs.iter().zip(q.probs.iter()) {
        if pv == 0.0 {
            continue;
        }
        if qv == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += pv * (pv / qv).ln();
    }
    // Rounding can push a tiny divergence below zero.
    Ok(sum.max(0.0))
}
