//! Per-agent observation likelihood families: sampling, log-likelihood
//! evaluation, log-likelihood ratios, and the uniform log-likelihood
//! bound used by the asymptotic risk bounds.

use rand::Rng;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Observation distribution family for one agent, indexed by hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub enum LikelihoodModel {
    /// Unbounded Gaussian with per-hypothesis means and shared variance.
    Gaussian { means: Vec<f64>, sigma: f64 },
    /// Gaussian restricted to `[lower, upper]` and renormalized. The
    /// per-hypothesis normalizers are computed at construction.
    TruncatedGaussian {
        means: Vec<f64>,
        sigma: f64,
        lower: f64,
        upper: f64,
        normalizers: Vec<f64>,
    },
    /// Finite symbol alphabet with one pmf row per hypothesis.
    Categorical { rows: Vec<Vec<f64>> },
}

impl LikelihoodModel {
    pub fn gaussian(means: Vec<f64>, sigma: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidLikelihood(
                "need a mean per hypothesis (H >= 2)".into(),
            ));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidLikelihood(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self::Gaussian { means, sigma })
    }

    pub fn truncated_gaussian(means: Vec<f64>, sigma: f64, lower: f64, upper: f64) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidLikelihood(
                "need a mean per hypothesis (H >= 2)".into(),
            ));
        }
        if !(sigma > 0.0) {
            return Err(Error::InvalidLikelihood(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(upper > lower) {
            return Err(Error::InvalidLikelihood(format!(
                "empty support [{lower}, {upper}]"
            )));
        }
        let normalizers: Vec<f64> = means
            .iter()
            .map(|&m| {
                adaptive_simpson(
                    |x| gaussian_density(x, m, sigma),
                    lower,
                    upper,
                    1e-12,
                )
            })
            .collect();
        if normalizers.iter().any(|&z| !(z > 0.0)) {
            return Err(Error::InvalidLikelihood(
                "truncation interval carries no mass for some hypothesis".into(),
            ));
        }
        Ok(Self::TruncatedGaussian {
            means,
            sigma,
            lower,
            upper,
            normalizers,
        })
    }

    pub fn categorical(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidLikelihood(
                "need a pmf row per hypothesis (H >= 2)".into(),
            ));
        }
        let symbols = rows[0].len();
        if symbols == 0 || rows.iter().any(|r| r.len() != symbols) {
            return Err(Error::InvalidLikelihood(
                "pmf rows must be non-empty with equal lengths".into(),
            ));
        }
        for (h, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidLikelihood(format!(
                    "pmf row {h} is not a probability vector (sum {sum})"
                )));
            }
        }
        // Shared support: a symbol with zero mass under one hypothesis and
        // positive mass under another makes the pairwise KL infinite.
        for s in 0..symbols {
            let zero = rows.iter().filter(|r| r[s] == 0.0).count();
            if zero != 0 && zero != rows.len() {
                return Err(Error::InvalidLikelihood(format!(
                    "symbol {s} is supported under some hypotheses but not others"
                )));
            }
        }
        Ok(Self::Categorical { rows })
    }

    /// Reference truncated-Gaussian family for the bounded-likelihood experiments:
    /// unit-variance Gaussians with mean `1.5 * theta` on `[-1, 2]`.
    pub fn reference_truncated(h: usize) -> Result<Self> {
        let means = (0..h).map(|t| 1.5 * t as f64).collect();
        Self::truncated_gaussian(means, 1.0, -1.0, 2.0)
    }

    pub fn hypothesis_count(&self) -> usize {
        match self {
            Self::Gaussian { means, .. } => means.len(),
            Self::TruncatedGaussian { means, .. } => means.len(),
            Self::Categorical { rows } => rows.len(),
        }
    }

    /// Observation support; `None` bound means unbounded.
    pub fn support(&self) -> (Option<f64>, Option<f64>) {
        match self {
            Self::Gaussian { .. } => (None, None),
            Self::TruncatedGaussian { lower, upper, .. } => (Some(*lower), Some(*upper)),
            Self::Categorical { rows } => (Some(0.0), Some((rows[0].len() - 1) as f64)),
        }
    }

    pub fn sample<R: Rng>(&self, hypothesis: usize, rng: &mut R) -> Result<f64> {
        let h = self.hypothesis_count();
        if hypothesis >= h {
            return Err(Error::InvalidParameter(format!(
                "hypothesis {hypothesis} out of range 0..{h}"
            )));
        }
        match self {
            Self::Gaussian { means, sigma } => {
                Ok(means[hypothesis] + sigma * standard_normal(rng))
            }
            Self::TruncatedGaussian {
                means,
                sigma,
                lower,
                upper,
                ..
            } => {
                // Rejection from the base Gaussian.
                let mean = means[hypothesis];
                loop {
                    let x = mean + sigma * standard_normal(rng);
                    if x >= *lower && x <= *upper {
                        return Ok(x);
                    }
                }
            }
            Self::Categorical { rows } => {
                let u: f64 = rng.gen();
                let row = &rows[hypothesis];
                let mut acc = 0.0;
                for (i, &p) in row.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Ok(i as f64);
                    }
                }
                Ok((row.len() - 1) as f64)
            }
        }
    }

    /// Natural-log density (or pmf) of `observation` under `hypothesis`.
    pub fn log_likelihood(&self, observation: f64, hypothesis: usize) -> Result<f64> {
        let h = self.hypothesis_count();
        if hypothesis >= h {
            return Err(Error::InvalidParameter(format!(
                "hypothesis {hypothesis} out of range 0..{h}"
            )));
        }
        match self {
            Self::Gaussian { means, sigma } => {
                let z = (observation - means[hypothesis]) / sigma;
                Ok(-0.5 * z * z - sigma.ln() - 0.5 * LN_2PI)
            }
            Self::TruncatedGaussian {
                means,
                sigma,
                lower,
                upper,
                normalizers,
            } => {
                if observation < *lower || observation > *upper {
                    return Err(Error::OutOfSupport(format!(
                        "observation {observation} outside [{lower}, {upper}]"
                    )));
                }
                let z = (observation - means[hypothesis]) / sigma;
                Ok(-0.5 * z * z - sigma.ln() - 0.5 * LN_2PI - normalizers[hypothesis].ln())
            }
            Self::Categorical { rows } => {
                let symbol = observation as usize;
                if observation.fract() != 0.0 || observation < 0.0 || symbol >= rows[0].len() {
                    return Err(Error::OutOfSupport(format!(
                        "observation {observation} is not a symbol index < {}",
                        rows[0].len()
                    )));
                }
                let p = rows[hypothesis][symbol];
                if p == 0.0 {
                    return Err(Error::OutOfSupport(format!(
                        "symbol {symbol} has zero mass under every hypothesis"
                    )));
                }
                Ok(p.ln())
            }
        }
    }

    /// Binary log-likelihood ratio `log L(obs | 1) - log L(obs | 0)`.
    pub fn log_likelihood_ratio(&self, observation: f64) -> Result<f64> {
        if self.hypothesis_count() != 2 {
            return Err(Error::InvalidParameter(format!(
                "log-likelihood ratio requires H = 2, got H = {}",
                self.hypothesis_count()
            )));
        }
        Ok(self.log_likelihood(observation, 1)? - self.log_likelihood(observation, 0)?)
    }

    /// Maximum of `|log L|` over the support, or an error for families with
    /// unbounded support. The log-density is monotone on each side of the
    /// mean, so only the interval endpoints and the mean can be extremal.
    pub fn log_likelihood_bound(&self) -> Result<f64> {
        match self {
            Self::Gaussian { .. } => Err(Error::UnboundedLikelihood(
                "Gaussian likelihoods have unbounded support".into(),
            )),
            Self::TruncatedGaussian {
                means,
                lower,
                upper,
                ..
            } => {
                let mut bound: f64 = 0.0;
                for (h, &mean) in means.iter().enumerate() {
                    let mut candidates = vec![*lower, *upper];
                    if mean > *lower && mean < *upper {
                        candidates.push(mean);
                    }
                    for x in candidates {
                        bound = bound.max(self.log_likelihood(x, h)?.abs());
                    }
                }
                Ok(bound)
            }
            Self::Categorical { rows } => {
                let mut bound: f64 = 0.0;
                for row in rows {
                    for &p in row.iter().filter(|&&p| p > 0.0) {
                        bound = bound.max(p.ln().abs());
                    }
                }
                Ok(bound)
            }
        }
    }
}

/// One likelihood model per agent, all over the same hypothesis set.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkLikelihoods {
    models: Vec<LikelihoodModel>,
}

impl NetworkLikelihoods {
    pub fn new(models: Vec<LikelihoodModel>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidLikelihood("need at least one agent".into()));
        }
        let h = models[0].hypothesis_count();
        if models.iter().any(|m| m.hypothesis_count() != h) {
            return Err(Error::InvalidLikelihood(
                "all agents must share the same hypothesis set".into(),
            ));
        }
        Ok(Self { models })
    }

    /// Same model replicated across `agents`.
    pub fn homogeneous(model: LikelihoodModel, agents: usize) -> Result<Self> {
        Self::new(vec![model; agents])
    }

    pub fn agent_count(&self) -> usize {
        self.models.len()
    }

    pub fn hypothesis_count(&self) -> usize {
        self.models[0].hypothesis_count()
    }

    pub fn agent(&self, k: usize) -> &LikelihoodModel {
        &self.models[k]
    }

    pub fn models(&self) -> &[LikelihoodModel] {
        &self.models
    }

    /// Network-wide `C_L`: the largest `|log L|` across agents, hypotheses,
    /// and the observation support.
    pub fn log_likelihood_bound(&self) -> Result<f64> {
        let mut bound: f64 = 0.0;
        for model in &self.models {
            bound = bound.max(model.log_likelihood_bound()?);
        }
        Ok(bound)
    }
}

fn gaussian_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; one draw discarded to keep per-call state out of the model.
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn categorical_degenerate_row_always_samples_support() {
        let model =
            LikelihoodModel::categorical(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(model.sample(0, &mut rng).unwrap(), 0.0);
        }
    }

    #[test]
    fn truncated_samples_stay_in_support() {
        let model = LikelihoodModel::reference_truncated(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100_000 {
            let x = model.sample(1, &mut rng).unwrap();
            assert!((-1.0..=2.0).contains(&x));
        }
    }

    #[test]
    fn gaussian_sample_mean_lln() {
        let model = LikelihoodModel::gaussian(vec![0.0, 1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| model.sample(1, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "sample mean {mean}");
    }

    #[test]
    fn gaussian_log_likelihood_closed_form() {
        let model = LikelihoodModel::gaussian(vec![0.0, 1.0], 1.0).unwrap();
        let got = model.log_likelihood(0.0, 0).unwrap();
        assert!((got + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn truncated_log_likelihood_matches_quadrature_normalizer() {
        let model = LikelihoodModel::reference_truncated(2).unwrap();
        // Independent normalizer: plain Simpson on a dense fixed grid.
        let n = 200_000;
        let (a, b) = (-1.0f64, 2.0f64);
        let h = (b - a) / n as f64;
        let mut z0 = gaussian_density(a, 0.0, 1.0) + gaussian_density(b, 0.0, 1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            z0 += w * gaussian_density(a + i as f64 * h, 0.0, 1.0);
        }
        z0 *= h / 3.0;
        let got = model.log_likelihood(0.0, 0).unwrap();
        let expected = -0.5 * LN_2PI - z0.ln();
        assert!((got - expected).abs() < 1e-10, "got {got}, expected {expected}");
    }

    #[test]
    fn categorical_log_likelihood() {
        let model =
            LikelihoodModel::categorical(vec![vec![0.25, 0.75], vec![0.75, 0.25]]).unwrap();
        assert!((model.log_likelihood(1.0, 0).unwrap() - 0.75f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn llr_gaussian_closed_form() {
        // means zeta(0) = -1, zeta(1) = +1, so zeta = -1 and LLR = 2 xi.
        let model = LikelihoodModel::gaussian(vec![-1.0, 1.0], 1.0).unwrap();
        assert!((model.log_likelihood_ratio(0.7).unwrap() - 1.4).abs() < 1e-12);
        assert!(model.log_likelihood_ratio(0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn llr_equals_difference_of_logs() {
        let model = LikelihoodModel::reference_truncated(2).unwrap();
        let direct = model.log_likelihood_ratio(1.0).unwrap();
        let diff =
            model.log_likelihood(1.0, 1).unwrap() - model.log_likelihood(1.0, 0).unwrap();
        assert_eq!(direct, diff);
    }

    #[test]
    fn llr_rejects_non_binary() {
        let model = LikelihoodModel::gaussian(vec![0.0, 1.0, 2.0], 1.0).unwrap();
        assert!(model.log_likelihood_ratio(0.0).is_err());
    }

    #[test]
    fn bound_categorical_min_entry() {
        let model =
            LikelihoodModel::categorical(vec![vec![0.1, 0.9], vec![0.9, 0.1]]).unwrap();
        assert!((model.log_likelihood_bound().unwrap() - 0.1f64.ln().abs()).abs() < 1e-15);
    }

    #[test]
    fn bound_degenerate_categorical_is_zero() {
        let model = LikelihoodModel::categorical(vec![vec![1.0], vec![1.0]]).unwrap();
        assert_eq!(model.log_likelihood_bound().unwrap(), 0.0);
    }

    #[test]
    fn bound_truncated_matches_grid_search() {
        let model = LikelihoodModel::reference_truncated(2).unwrap();
        let bound = model.log_likelihood_bound().unwrap();
        let mut grid_max: f64 = 0.0;
        let n = 100_000;
        for i in 0..=n {
            let x = -1.0 + 3.0 * i as f64 / n as f64;
            for h in 0..2 {
                grid_max = grid_max.max(model.log_likelihood(x, h).unwrap().abs());
            }
        }
        assert!(bound >= grid_max - 1e-9);
        assert!((bound - grid_max).abs() < 1e-6, "bound {bound}, grid {grid_max}");
    }

    #[test]
    fn bound_rejects_unbounded_gaussian() {
        let models = NetworkLikelihoods::homogeneous(
            LikelihoodModel::gaussian(vec![-1.0, 1.0], 1.0).unwrap(),
            3,
        )
        .unwrap();
        assert!(matches!(
            models.log_likelihood_bound(),
            Err(Error::UnboundedLikelihood(_))
        ));
    }

    #[test]
    fn truncated_density_integrates_to_one() {
        let model = LikelihoodModel::reference_truncated(2).unwrap();
        for h in 0..2 {
            let integral = adaptive_simpson(
                |x| model.log_likelihood(x, h).unwrap().exp(),
                -1.0,
                2.0,
                1e-12,
            );
            assert!((integral - 1.0).abs() < 1e-9, "integral {integral}");
        }
    }

    #[test]
    fn samples_respect_log_likelihood_bound() {
        let model = LikelihoodModel::reference_truncated(2).unwrap();
        let bound = model.log_likelihood_bound().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1_000_000 {
            let x = model.sample(0, &mut rng).unwrap();
            let ll = model.log_likelihood(x, 0).unwrap();
            assert!(ll.abs() <= bound + 1e-12);
        }
    }

    #[test]
    fn independent_streams_are_uncorrelated() {
        // Two agents sampling under a fixed hypothesis from separate
        // streams: empirical cross-correlation should vanish.
        let model = LikelihoodModel::gaussian(vec![-1.0, 1.0], 1.0).unwrap();
        let n = 100_000;
        let mut rng_a = ChaCha8Rng::seed_from_u64(100);
        let mut rng_b = ChaCha8Rng::seed_from_u64(200);
        let xs: Vec<f64> = (0..n).map(|_| model.sample(1, &mut rng_a).unwrap()).collect();
        let ys: Vec<f64> = (0..n).map(|_| model.sample(1, &mut rng_b).unwrap()).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let cov: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (x - mx) * (y - my))
            .sum::<f64>()
            / n as f64;
        let sx = (xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sy = (ys.iter().map(|y| (y - my).powi(2)).sum::<f64>() / n as f64).sqrt();
        let corr = cov / (sx * sy);
        assert!(corr.abs() < 3.0 / (n as f64).sqrt(), "correlation {corr}");
    }

    #[test]
    fn categorical_rejects_mismatched_support() {
        assert!(LikelihoodModel::categorical(vec![vec![1.0, 0.0], vec![0.5, 0.5]]).is_err());
    }
}
