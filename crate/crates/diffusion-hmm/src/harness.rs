//! Experiment harness: JSON configuration, scenario construction, CSV
//! and summary emission for the CLI front-end.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    disagreement_counterexample, density_evolution_consensus, density_evolution_diffusion,
    diffusion_factor, estimate_error_prob, estimate_risks, pilot_grid, simulate_ratio_mc,
    simulate_trace, steady_state, asymptotic_risk_bounds, CounterexampleReport, Scenario,
};
use crate::error::{Error, Result};
use crate::filters::{Algorithm, RatioVariant};
use crate::likelihood::{LikelihoodModel, NetworkLikelihoods};
use crate::markov::TransitionModel;
use crate::network::{
    connectivity_check, metropolis_weights, spectral_stats, CombinationMatrix, Graph,
};

/// Fixed column order of the per-run CSV records.
pub const CSV_HEADER: &str = "run,step,agent,theta_true,map,err,kl_cent";

/// Steady-state defaults: window length and tolerances for error
/// probabilities and risks.
pub const STEADY_WINDOW: usize = 50;
pub const STEADY_TOL_ERROR: f64 = 0.01;
pub const STEADY_TOL_RISK: f64 = 0.05;

// ---- configuration schema ----

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Schema version; currently always 1.
    #[serde(default = "default_version")]
    pub version: u32,
    pub network: NetworkSpec,
    pub transition: TransitionSpec,
    pub likelihoods: LikelihoodSpec,
    pub algorithm: AlgorithmSection,
    pub run: RunSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub agents: usize,
    /// `complete` or `ring`; alternative to `edge_list` / `matrix`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    /// Path to an edge-list file, resolved relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_list: Option<String>,
    /// Explicit combination matrix (rows); bypasses the weight rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// `metropolis` (default) or `uniform` (complete topology only).
    #[serde(default = "default_weights")]
    pub weights: String,
}

fn default_version() -> u32 {
    1
}

fn default_weights() -> String {
    "metropolis".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionSpec {
    /// Binary symmetric channel flip probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bsc: Option<f64>,
    /// Row-stochastic matrix: `matrix[prev][next]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Gaussian {
        means: Vec<f64>,
        sigma: f64,
    },
    TruncatedGaussian {
        means: Vec<f64>,
        sigma: f64,
        lower: f64,
        upper: f64,
    },
    Categorical {
        rows: Vec<Vec<f64>>,
    },
}

impl ModelSpec {
    fn build(&self) -> Result<LikelihoodModel> {
        match self {
            ModelSpec::Gaussian { means, sigma } => {
                LikelihoodModel::gaussian(means.clone(), *sigma)
            }
            ModelSpec::TruncatedGaussian {
                means,
                sigma,
                lower,
                upper,
            } => LikelihoodModel::truncated_gaussian(means.clone(), *sigma, *lower, *upper),
            ModelSpec::Categorical { rows } => LikelihoodModel::categorical(rows.clone()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LikelihoodSpec {
    /// One model shared by every agent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared: Option<ModelSpec>,
    /// One model per agent; mutually exclusive with `shared`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_agent: Option<Vec<ModelSpec>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Centralized,
    Dhs { gamma: f64 },
    DiffusionAa { gamma: f64 },
    ConsensusGa { gamma: f64 },
    Asl { delta: f64 },
}

impl AlgorithmSpec {
    pub fn to_algorithm(&self) -> Algorithm {
        match *self {
            AlgorithmSpec::Centralized => Algorithm::Centralized,
            AlgorithmSpec::Dhs { gamma } => Algorithm::Dhs { gamma },
            AlgorithmSpec::DiffusionAa { gamma } => Algorithm::DiffusionAa { gamma },
            AlgorithmSpec::ConsensusGa { gamma } => Algorithm::ConsensusGa { gamma },
            AlgorithmSpec::Asl { delta } => Algorithm::Asl { delta },
        }
    }
}

/// Either a single algorithm or a list sharing the same streams.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlgorithmSection {
    One(AlgorithmSpec),
    Many(Vec<AlgorithmSpec>),
}

impl AlgorithmSection {
    pub fn specs(&self) -> Vec<AlgorithmSpec> {
        match self {
            AlgorithmSection::One(spec) => vec![spec.clone()],
            AlgorithmSection::Many(list) => list.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    #[serde(default)]
    pub emit_beliefs: bool,
}

/// CLI-level overrides applied after the file is parsed.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub runs: Option<usize>,
    pub horizon: Option<usize>,
    pub emit_beliefs: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    /// Loads a config file; relative resource paths inside it resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(path)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((Self::from_json(&text)?, base))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.run.seed = seed;
        }
        if let Some(runs) = overrides.runs {
            self.run.runs = runs;
        }
        if let Some(horizon) = overrides.horizon {
            self.run.horizon = horizon;
        }
        if overrides.emit_beliefs {
            self.run.emit_beliefs = true;
        }
    }
}

/// A fully validated experiment ready to execute.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub scenario: Scenario,
    pub algorithms: Vec<(String, Algorithm)>,
    pub run: RunSpec,
}

fn validator<T>(section: &str, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Config(format!("{section}: {e}")))
}

/// Builds and cross-validates every section of the configuration.
pub fn build_experiment(cfg: &ExperimentConfig, base: &Path) -> Result<Experiment> {
    if cfg.version != 1 {
        return Err(Error::Config(format!(
            "unsupported config version {}",
            cfg.version
        )));
    }
    if cfg.run.runs == 0 {
        return Err(Error::Config("run: runs must be at least 1".into()));
    }
    if cfg.run.horizon == 0 {
        return Err(Error::Config("run: horizon must be at least 1".into()));
    }
    let combine = validator("network", build_network(&cfg.network, base))?;
    let transition = validator("transition", build_transition(&cfg.transition))?;
    let likelihoods = validator(
        "likelihoods",
        build_likelihoods(&cfg.likelihoods, cfg.network.agents),
    )?;
    let mut algorithms = Vec::new();
    for spec in cfg.algorithm.specs() {
        let algorithm = spec.to_algorithm();
        validator("algorithm", algorithm.validate())?;
        let name = algorithm.name().to_string();
        if algorithms.iter().any(|(n, _)| *n == name) {
            return Err(Error::Config(format!(
                "algorithm: duplicate variant `{name}`"
            )));
        }
        algorithms.push((name, algorithm));
    }
    if algorithms.is_empty() {
        return Err(Error::Config("algorithm: empty algorithm list".into()));
    }
    let scenario = validator(
        "scenario",
        Scenario::uniform_priors(transition, likelihoods, combine),
    )?;
    Ok(Experiment {
        scenario,
        algorithms,
        run: cfg.run.clone(),
    })
}

fn build_network(spec: &NetworkSpec, base: &Path) -> Result<CombinationMatrix> {
    if spec.agents == 0 {
        return Err(Error::InvalidGraph("agents must be at least 1".into()));
    }
    if let Some(matrix) = &spec.matrix {
        if spec.topology.is_some() || spec.edge_list.is_some() {
            return Err(Error::Config(
                "give either an explicit matrix or a topology, not both".into(),
            ));
        }
        let a = CombinationMatrix::from_rows(matrix.clone())?;
        if a.agent_count() != spec.agents {
            return Err(Error::DimensionMismatch(format!(
                "matrix is {}x{} but agents = {}",
                a.agent_count(),
                a.agent_count(),
                spec.agents
            )));
        }
        return Ok(a);
    }
    let graph = match (&spec.topology, &spec.edge_list) {
        (Some(t), None) => match t.as_str() {
            "complete" => Graph::complete(spec.agents)?,
            "ring" => Graph::ring(spec.agents)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown topology `{other}` (expected `complete` or `ring`)"
                )))
            }
        },
        (None, Some(path)) => {
            let resolved = base.join(path);
            let text = fs::read_to_string(&resolved).map_err(|e| {
                Error::Config(format!("edge list {}: {e}", resolved.display()))
            })?;
            let graph = Graph::from_edge_list(&text)?;
            if graph.agent_count() > spec.agents {
                return Err(Error::DimensionMismatch(format!(
                    "edge list references {} agents but agents = {}",
                    graph.agent_count(),
                    spec.agents
                )));
            }
            // Pad isolated trailing agents (they will fail connectivity).
            let mut padded = Graph::new(spec.agents)?;
            for (u, v) in graph.edges() {
                padded.add_edge(u, v)?;
            }
            padded
        }
        (None, None) => {
            return Err(Error::Config(
                "network needs a topology, edge_list, or matrix".into(),
            ))
        }
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "give either a topology or an edge list, not both".into(),
            ))
        }
    };
    let report = connectivity_check(&graph);
    if !report.connected {
        return Err(Error::InvalidGraph(format!(
            "graph is not connected ({} components)",
            report.components.len()
        )));
    }
    match spec.weights.as_str() {
        "metropolis" => metropolis_weights(&graph),
        "uniform" => {
            if spec.topology.as_deref() != Some("complete") {
                return Err(Error::Config(
                    "uniform weights require the complete topology".into(),
                ));
            }
            CombinationMatrix::uniform(spec.agents)
        }
        other => Err(Error::Config(format!(
            "unknown weight rule `{other}` (expected `metropolis` or `uniform`)"
        ))),
    }
}

fn build_transition(spec: &TransitionSpec) -> Result<TransitionModel> {
    match (&spec.bsc, &spec.matrix) {
        (Some(alpha), None) => TransitionModel::bsc(*alpha),
        (None, Some(rows)) => TransitionModel::from_row_stochastic(rows.clone()),
        _ => Err(Error::Config(
            "transition needs exactly one of `bsc` or `matrix`".into(),
        )),
    }
}

fn build_likelihoods(spec: &LikelihoodSpec, agents: usize) -> Result<NetworkLikelihoods> {
    match (&spec.shared, &spec.per_agent) {
        (Some(model), None) => NetworkLikelihoods::homogeneous(model.build()?, agents),
        (None, Some(models)) => {
            if models.len() != agents {
                return Err(Error::DimensionMismatch(format!(
                    "{} likelihood models for {agents} agents",
                    models.len()
                )));
            }
            NetworkLikelihoods::new(
                models.iter().map(ModelSpec::build).collect::<Result<_>>()?,
            )
        }
        _ => Err(Error::Config(
            "likelihoods need exactly one of `shared` or `per_agent`".into(),
        )),
    }
}

// ---- command implementations ----

/// Files written plus the JSON summary a command produced.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
    /// Set by assertion-style commands (`oracle`, `counterexample`).
    pub passed: Option<bool>,
}

fn write_summary(out_dir: &Path, summary: &serde_json::Value) -> Result<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let path = out_dir.join("summary.json");
    let mut file = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut file, summary)?;
    file.write_all(b"\n")?;
    Ok(path)
}

/// Runs every configured algorithm on shared observation streams and
/// writes one per-run CSV per algorithm (fixed schema), plus optional
/// belief traces and a summary.
pub fn cmd_simulate(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<CommandOutput> {
    let exp = build_experiment(cfg, base)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut algo_summaries = serde_json::Map::new();
    for (name, algorithm) in &exp.algorithms {
        let path = out_dir.join(format!("{name}.csv"));
        let mut csv = String::from(CSV_HEADER);
        csv.push('\n');
        let mut beliefs_csv = exp
            .run
            .emit_beliefs
            .then(|| String::from("run,step,agent,hypothesis,belief\n"));
        let mut final_err = 0u64;
        let mut final_kl = 0.0f64;
        for run in 0..exp.run.runs {
            let trace = simulate_trace(
                &exp.scenario,
                *algorithm,
                exp.run.horizon,
                exp.run.seed,
                run as u64,
                exp.run.emit_beliefs,
            )?;
            for step in 0..exp.run.horizon {
                for agent in 0..exp.scenario.agent_count() {
                    csv.push_str(&format!(
                        "{run},{s},{agent},{theta},{map},{err},{kl:.10e}\n",
                        s = step + 1,
                        theta = trace.theta[step + 1],
                        map = trace.maps[step][agent],
                        err = u8::from(trace.errors[step][agent]),
                        kl = trace.kl_posterior[step][agent],
                    ));
                }
            }
            if let (Some(buf), Some(beliefs)) = (beliefs_csv.as_mut(), &trace.beliefs) {
                for step in 0..exp.run.horizon {
                    for agent in 0..exp.scenario.agent_count() {
                        for (h, b) in beliefs[step][agent].iter().enumerate() {
                            buf.push_str(&format!(
                                "{run},{s},{agent},{h},{b:.10e}\n",
                                s = step + 1,
                            ));
                        }
                    }
                }
            }
            let last = exp.run.horizon - 1;
            final_err += trace.errors[last].iter().filter(|&&e| e).count() as u64;
            final_kl += trace.kl_posterior[last].iter().sum::<f64>();
        }
        fs::write(&path, &csv)?;
        files.push(path);
        if let Some(buf) = beliefs_csv {
            let path = out_dir.join(format!("{name}-beliefs.csv"));
            fs::write(&path, buf)?;
            files.push(path);
        }
        let denom = (exp.run.runs * exp.scenario.agent_count()) as f64;
        algo_summaries.insert(
            name.clone(),
            json!({
                "final_step_error_rate": final_err as f64 / denom,
                "final_step_avg_kl_cent": final_kl / denom,
            }),
        );
    }
    let summary = json!({
        "command": "simulate",
        "runs": exp.run.runs,
        "horizon": exp.run.horizon,
        "seed": exp.run.seed,
        "agents": exp.scenario.agent_count(),
        "algorithms": serde_json::Value::Object(algo_summaries),
    });
    files.push(write_summary(out_dir, &summary)?);
    Ok(CommandOutput {
        summary,
        files,
        passed: None,
    })
}

fn steady_json(series: &[f64], tol: f64) -> serde_json::Value {
    if series.len() >= 2 * STEADY_WINDOW {
        match steady_state(series, STEADY_WINDOW, tol) {
            Ok(s) => json!({ "limit": s.limit, "converged": s.converged }),
            Err(_) => serde_json::Value::Null,
        }
    } else {
        serde_json::Value::Null
    }
}

/// Estimates posterior and prior risks for every configured algorithm,
/// reports the asymptotic bound when the likelihoods are bounded.
pub fn cmd_risk(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<CommandOutput> {
    let exp = build_experiment(cfg, base)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut algo_summaries = serde_json::Map::new();
    for (name, algorithm) in &exp.algorithms {
        let risks = estimate_risks(
            &exp.scenario,
            *algorithm,
            exp.run.runs,
            exp.run.horizon,
            exp.run.seed,
        )?;
        let path = out_dir.join(format!("risk-{name}.csv"));
        let mut csv =
            String::from("step,agent,j_posterior,j_posterior_se,j_prior,j_prior_se\n");
        for step in 0..risks.horizon {
            for agent in 0..risks.agents {
                csv.push_str(&format!(
                    "{s},{agent},{a:.10e},{b:.10e},{c:.10e},{d:.10e}\n",
                    s = step + 1,
                    a = risks.posterior[step][agent],
                    b = risks.posterior_se[step][agent],
                    c = risks.prior[step][agent],
                    d = risks.prior_se[step][agent],
                ));
            }
        }
        fs::write(&path, &csv)?;
        files.push(path);
        let avg = risks.network_average();
        let avg_prior = risks.network_average_prior();
        let bounds = gamma_of(*algorithm)
            .and_then(|gamma| {
                let c_l = exp.scenario.likelihoods.log_likelihood_bound().ok()?;
                asymptotic_risk_bounds(&exp.scenario.transition, &exp.scenario.combine, gamma, c_l)
                    .ok()
            })
            .map(|b| {
                json!({
                    "kappa": b.kappa,
                    "rho2": b.rho2,
                    "lambda": b.lambda,
                    "c_l": b.c_l,
                    "posterior_bound": b.posterior_bound,
                    "prior_bound": b.prior_bound,
                })
            })
            .unwrap_or(serde_json::Value::Null);
        algo_summaries.insert(
            name.clone(),
            json!({
                "steady_state_network_avg": steady_json(&avg, STEADY_TOL_RISK),
                "steady_state_network_avg_prior": steady_json(&avg_prior, STEADY_TOL_RISK),
                "bounds": bounds,
            }),
        );
    }
    let stats = spectral_stats(&exp.scenario.combine, 1.0)?;
    let summary = json!({
        "command": "risk",
        "runs": exp.run.runs,
        "horizon": exp.run.horizon,
        "seed": exp.run.seed,
        "agents": exp.scenario.agent_count(),
        "rho2": stats.rho2,
        "algorithms": serde_json::Value::Object(algo_summaries),
    });
    files.push(write_summary(out_dir, &summary)?);
    Ok(CommandOutput {
        summary,
        files,
        passed: None,
    })
}

fn gamma_of(algorithm: Algorithm) -> Option<f64> {
    match algorithm {
        Algorithm::Dhs { gamma }
        | Algorithm::DiffusionAa { gamma }
        | Algorithm::ConsensusGa { gamma } => Some(gamma),
        _ => None,
    }
}

/// Estimates per-agent error probabilities with Wilson intervals and
/// steady-state flags for every configured algorithm.
pub fn cmd_error(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<CommandOutput> {
    let exp = build_experiment(cfg, base)?;
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let mut algo_summaries = serde_json::Map::new();
    for (name, algorithm) in &exp.algorithms {
        let errors = estimate_error_prob(
            &exp.scenario,
            *algorithm,
            exp.run.runs,
            exp.run.horizon,
            exp.run.seed,
        )?;
        let path = out_dir.join(format!("error-{name}.csv"));
        let mut csv = String::from("step,agent,p,ci_lo,ci_hi\n");
        for step in 0..errors.horizon {
            for agent in 0..errors.agents {
                let (lo, hi) = errors.wilson(step, agent, 1.96);
                csv.push_str(&format!(
                    "{s},{agent},{p:.10e},{lo:.10e},{hi:.10e}\n",
                    s = step + 1,
                    p = errors.probability(step, agent),
                ));
            }
        }
        fs::write(&path, &csv)?;
        files.push(path);
        let per_agent: Vec<serde_json::Value> = (0..errors.agents)
            .map(|agent| steady_json(&errors.agent_series(agent), STEADY_TOL_ERROR))
            .collect();
        algo_summaries.insert(
            name.clone(),
            json!({
                "steady_state_network_avg":
                    steady_json(&errors.network_average(), STEADY_TOL_ERROR),
                "steady_state_per_agent": per_agent,
            }),
        );
    }
    let summary = json!({
        "command": "error",
        "runs": exp.run.runs,
        "horizon": exp.run.horizon,
        "seed": exp.run.seed,
        "agents": exp.scenario.agent_count(),
        "algorithms": serde_json::Value::Object(algo_summaries),
    });
    files.push(write_summary(out_dir, &summary)?);
    Ok(CommandOutput {
        summary,
        files,
        passed: None,
    })
}

/// Oracle tolerances: total-variation agreement for one-dimensional
/// grids and per-agent error-probability agreement.
pub const ORACLE_TV_TOL: f64 = 0.05;
pub const ORACLE_DELTA_P_TOL: f64 = 0.01;

/// Compares the grid density evolution against a paired Monte Carlo run
/// of the same ratio recursion. The variant comes from the configured
/// algorithm: `dhs` uses the diffusion recursion, `consensus-ga` the
/// consensus one.
pub fn cmd_oracle(cfg: &ExperimentConfig, base: &Path, out_dir: &Path) -> Result<CommandOutput> {
    let exp = build_experiment(cfg, base)?;
    if exp.algorithms.len() != 1 {
        return Err(Error::Config(
            "oracle comparison requires exactly one algorithm".into(),
        ));
    }
    let (variant, gamma) = match exp.algorithms[0].1 {
        Algorithm::Dhs { gamma } => (RatioVariant::Diffusion, gamma),
        Algorithm::ConsensusGa { gamma } => (RatioVariant::Consensus, gamma),
        _ => {
            return Err(Error::Config(
                "oracle comparison supports `dhs` or `consensus-ga` only".into(),
            ))
        }
    };
    let steps = exp.run.horizon;
    let scenario = &exp.scenario;
    let grid_points = 201;
    let (spec, de) = match variant {
        RatioVariant::Consensus => {
            let spec = pilot_grid(scenario, gamma, variant, None, grid_points, exp.run.seed)?;
            let de = density_evolution_consensus(scenario, gamma, &spec, steps)?;
            (spec, de)
        }
        RatioVariant::Diffusion => {
            let factor = diffusion_factor(scenario, gamma)?;
            let spec =
                pilot_grid(scenario, gamma, variant, Some(&factor), grid_points, exp.run.seed)?;
            let de = density_evolution_diffusion(scenario, gamma, &spec, steps)?;
            (spec, de)
        }
    };
    let mc = simulate_ratio_mc(scenario, gamma, variant, exp.run.runs, steps, exp.run.seed)?;
    // Per-agent error-probability agreement at the final step.
    let grid_p = &de.error_probs[steps - 1];
    let mut delta_p = Vec::with_capacity(scenario.agent_count());
    for agent in 0..scenario.agent_count() {
        let p_mc = mc.error_counts[steps - 1][agent] as f64 / mc.runs as f64;
        delta_p.push((grid_p[agent] - p_mc).abs());
    }
    // Total-variation distance against the Monte Carlo histogram, for
    // one-dimensional grids.
    let tv = if spec.dim() == 1 {
        let n = spec.points();
        let (lo, _) = spec.bounds(0);
        let h = spec.step(0);
        let mut hist = vec![0.0; n];
        match variant {
            RatioVariant::Consensus => {
                for w in &mc.w_final {
                    let j = (((w[0] - lo) / h).round().max(0.0) as usize).min(n - 1);
                    hist[j] += 1.0 / mc.runs as f64;
                }
            }
            RatioVariant::Diffusion => {
                let factor = diffusion_factor(scenario, gamma)?;
                for w in &mc.w_final {
                    let wq =
                        factor.project(&nalgebra::DVector::from_column_slice(w))[0];
                    let j = (((wq - lo) / h).round().max(0.0) as usize).min(n - 1);
                    hist[j] += 1.0 / mc.runs as f64;
                }
            }
        }
        let grid_mass = de.density.mass_per_node();
        Some(
            0.5 * grid_mass
                .iter()
                .zip(&hist)
                .map(|(g, m)| (g - m).abs())
                .sum::<f64>(),
        )
    } else {
        None
    };
    let max_delta = delta_p.iter().cloned().fold(0.0f64, f64::max);
    let passed =
        max_delta < ORACLE_DELTA_P_TOL && tv.map(|t| t < ORACLE_TV_TOL).unwrap_or(true);
    let summary = json!({
        "command": "oracle",
        "variant": match variant {
            RatioVariant::Diffusion => "diffusion",
            RatioVariant::Consensus => "consensus",
        },
        "runs": exp.run.runs,
        "steps": steps,
        "grid_dim": spec.dim(),
        "grid_points": spec.points(),
        "tv_distance": tv,
        "delta_p": delta_p,
        "max_delta_p": max_delta,
        "tolerances": { "tv": ORACLE_TV_TOL, "delta_p": ORACLE_DELTA_P_TOL },
        "passed": passed,
    });
    let files = vec![write_summary(out_dir, &summary)?];
    Ok(CommandOutput {
        summary,
        files,
        passed: Some(passed),
    })
}

/// Runs the three-agent disagreement counter-example and writes a
/// summary comparing analytic and Monte Carlo values.
pub fn cmd_counterexample(runs: usize, seed: u64, out_dir: &Path) -> Result<CommandOutput> {
    let report = disagreement_counterexample(runs, seed)?;
    let summary = counterexample_summary(&report);
    let files = vec![write_summary(out_dir, &summary)?];
    Ok(CommandOutput {
        summary,
        files,
        passed: Some(report.passes),
    })
}

pub fn counterexample_summary(report: &CounterexampleReport) -> serde_json::Value {
    json!({
        "command": "counterexample",
        "runs": report.runs,
        "var_nu": report.var_nu,
        "analytic_var": report.analytic_var,
        "analytic_ratio": report.analytic_ratio,
        "mc_var": report.mc_var,
        "mc_mean": report.mc_mean,
        "analytic_error": report.analytic_error,
        "mc_error": report.mc_error,
        "mc_error_ci": report
            .mc_error_ci
            .iter()
            .map(|(lo, hi)| json!([lo, hi]))
            .collect::<Vec<_>>(),
        "ks_peripheral_central": report.ks_peripheral_central,
        "passed": report.passes,
    })
}

/// Maps library errors to the CLI exit-code contract: 1 for validation
/// problems, 2 for runtime or tractability failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::DimensionMismatch(_)
        | Error::InvalidProbability(_)
        | Error::InvalidTransition(_)
        | Error::InvalidLikelihood(_)
        | Error::InvalidGraph(_)
        | Error::InvalidCombination(_)
        | Error::InvalidParameter(_)
        | Error::Config(_)
        | Error::Json(_) => 1,
        Error::NonErgodic(_)
        | Error::OutOfSupport(_)
        | Error::UnboundedLikelihood(_)
        | Error::DegeneratePosterior
        | Error::GridLeakage(_)
        | Error::Intractable(_)
        | Error::Io(_) => 2,
    }
}
