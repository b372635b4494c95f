//! Invariant checkers shared by the property suite and the acceptance
//! suite. Each checker returns `Err(description)` on violation so it can
//! run under both proptest and plain loops.

#![allow(dead_code)]

use diffusion_hmm::filters::{dhs_step, FilterState};
use diffusion_hmm::likelihood::{LikelihoodModel, NetworkLikelihoods};
use diffusion_hmm::markov::{dobrushin_coefficient, Belief, TransitionModel};
use diffusion_hmm::network::{lowrank_factor, CombinationMatrix};

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

fn apply_transition(t: &TransitionModel, mu: &[f64]) -> Vec<f64> {
    let h = t.hypothesis_count();
    (0..h)
        .map(|next| (0..h).map(|prev| t.prob(next, prev) * mu[prev]).sum())
        .collect()
}

/// One filtering step maps every agent belief back onto the simplex.
pub fn check_simplex_preservation(
    transition: &TransitionModel,
    combine: &CombinationMatrix,
    priors: &[Vec<f64>],
    observations: &[f64],
    gamma: f64,
) -> Result<(), String> {
    let beliefs: Vec<Belief> = priors
        .iter()
        .map(|p| Belief::from_weights(p).map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    let models = NetworkLikelihoods::homogeneous(
        LikelihoodModel::gaussian(vec![-1.0, 1.0], 1.0).map_err(|e| e.to_string())?,
        combine.agent_count(),
    )
    .map_err(|e| e.to_string())?;
    let state = FilterState::new(&beliefs).map_err(|e| e.to_string())?;
    let next = dhs_step(&state, observations, &models, transition, combine, gamma)
        .map_err(|e| e.to_string())?;
    for k in 0..combine.agent_count() {
        let probs = next.belief(k);
        let probs = probs.probs();
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(format!("agent {k} belief sums to {sum}"));
        }
        if probs.iter().any(|&p| p < 0.0 || p.is_nan()) {
            return Err(format!("agent {k} belief leaves the simplex: {probs:?}"));
        }
    }
    Ok(())
}

/// Strong data-processing: one Markov step contracts total variation by
/// at least the Dobrushin coefficient.
pub fn check_sdpi(
    transition: &TransitionModel,
    mu: &[f64],
    nu: &[f64],
) -> Result<(), String> {
    let kappa = dobrushin_coefficient(transition);
    let before = total_variation(mu, nu);
    let after = total_variation(
        &apply_transition(transition, mu),
        &apply_transition(transition, nu),
    );
    if after > kappa * before + 1e-12 {
        return Err(format!(
            "TV after one step {after} exceeds kappa*before = {}",
            kappa * before
        ));
    }
    Ok(())
}

/// Pinsker: TV(p, q) <= sqrt(KL(p||q) / 2).
pub fn check_pinsker(p: &[f64], q: &[f64]) -> Result<(), String> {
    let tv = total_variation(p, q);
    let kl = kl_divergence(p, q);
    if tv > (kl / 2.0).sqrt() + 1e-12 {
        return Err(format!("TV {tv} exceeds sqrt(KL/2) = {}", (kl / 2.0).sqrt()));
    }
    Ok(())
}

/// The low-rank factorization reproduces `A^T diag(sigma) A` exactly.
pub fn check_lowrank_factorization(
    combine: &CombinationMatrix,
    sigma_diag: &[f64],
) -> Result<(), String> {
    let factor = lowrank_factor(combine, sigma_diag).map_err(|e| e.to_string())?;
    let k = combine.agent_count();
    let a = combine.matrix();
    let sigma = nalgebra::DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(
        sigma_diag,
    ));
    let target = a.transpose() * sigma * a;
    let recon = factor.q().transpose() * factor.q();
    for i in 0..k {
        for j in 0..k {
            let d = (target[(i, j)] - recon[(i, j)]).abs();
            if d > 1e-9 {
                return Err(format!(
                    "factorization mismatch at ({i},{j}): |{} - {}| = {d}",
                    target[(i, j)],
                    recon[(i, j)]
                ));
            }
        }
    }
    Ok(())
}

/// Normalizing scaled weights gives the same belief as the originals.
pub fn check_scaling_invariance(weights: &[f64], scale: f64) -> Result<(), String> {
    let base = Belief::from_weights(weights).map_err(|e| e.to_string())?;
    let scaled_weights: Vec<f64> = weights.iter().map(|w| w * scale).collect();
    let scaled = Belief::from_weights(&scaled_weights).map_err(|e| e.to_string())?;
    for (a, b) in base.probs().iter().zip(scaled.probs()) {
        if (a - b).abs() > 1e-12 {
            return Err(format!("scaling by {scale} moved {a} to {b}"));
        }
    }
    Ok(())
}
