//! Evolution Strategies over flat parameter vectors.
//!
//! Each generation draws Gaussian perturbations `v_i` of scale `sigma`,
//! evaluates `theta + v_i`, and moves along
//! `alpha / (N sigma^2) * sum_i v_i r_i`. Noise is a pure function of
//! `(seed, generation, index)`, so a run is fully determined by its config.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{run_lifespan, Environment, HorizonPolicy};
use crate::genome::{decode_network, Genome, GenomeError, Layout};
use crate::network::NetworkSpec;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EsError {
    #[error("invalid es config: {0}")]
    Config(String),
    #[error("{noises} noise vectors for {rewards} rewards")]
    Length { noises: usize, rewards: usize },
    #[error("noise vector of length {found}, parameters have length {expected}")]
    Dimension { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitnessShaping {
    /// Rewards enter the update unchanged.
    Raw,
    /// Rewards replaced by centered ranks in `[-0.5, 0.5]`.
    #[default]
    Rank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EsConfig {
    #[serde(default = "defaults::population")]
    pub population: usize,
    #[serde(default = "defaults::sigma")]
    pub sigma: f64,
    #[serde(default = "defaults::learning_rate")]
    pub learning_rate: f64,
    pub generations: usize,
    pub seed: u64,
    #[serde(default)]
    pub fitness_shaping: FitnessShaping,
    #[serde(default = "defaults::antithetic")]
    pub antithetic: bool,
    /// Standard deviation of the initial parameters; 0 starts from zero.
    #[serde(default)]
    pub init_std: f64,
    /// Stop early once the population mean reward reaches this value.
    #[serde(default)]
    pub stop_at_fitness: Option<f64>,
    /// Checkpoint period in generations; 0 disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: usize,
}

mod defaults {
    pub fn population() -> usize {
        128
    }
    pub fn sigma() -> f64 {
        0.1
    }
    pub fn learning_rate() -> f64 {
        0.03
    }
    pub fn antithetic() -> bool {
        true
    }
}

impl Default for EsConfig {
    fn default() -> Self {
        Self {
            population: defaults::population(),
            sigma: defaults::sigma(),
            learning_rate: defaults::learning_rate(),
            generations: 300,
            seed: 0,
            fitness_shaping: FitnessShaping::Rank,
            antithetic: defaults::antithetic(),
            init_std: 0.0,
            stop_at_fitness: None,
            checkpoint_every: 0,
        }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<(), EsError> {
        if self.population == 0 {
            return Err(EsError::Config("population must be positive".into()));
        }
        if self.antithetic && self.population % 2 != 0 {
            return Err(EsError::Config(format!(
                "antithetic sampling needs an even population, got {}",
                self.population
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(EsError::Config("sigma must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(EsError::Config("learning_rate must be positive".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(EsError::Config("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic seed derived from a base seed and a path of indices.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

const NOISE_STREAM: u64 = 0x6e6f697365;
const ENV_STREAM: u64 = 0x656e76;
const INIT_STREAM: u64 = 0x696e6974;

fn gaussian(seed: u64, dim: usize, scale: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            scale * z
        })
        .collect::<Vec<f64>>()
}

/// Perturbation of individual `index` in generation `generation`. In
/// antithetic mode individuals `2k` and `2k + 1` share one draw with opposite signs.
pub fn noise(cfg: &EsConfig, generation: usize, index: usize, dim: usize) -> Vec<f64> {
    let (draw, sign) = if cfg.antithetic {
        (index / 2, if index % 2 == 0 { 1.0 } else { -1.0 })
    } else {
        (index, 1.0)
    };
    let seed = derive_seed(cfg.seed, &[NOISE_STREAM, generation as u64, draw as u64]);
    gaussian(seed, dim, sign * cfg.sigma)
}

/// Environment seed shared by the whole population in one generation.
pub fn generation_env_seed(cfg: &EsConfig, generation: usize) -> u64 {
    derive_seed(cfg.seed, &[ENV_STREAM, generation as u64])
}

pub fn initial_theta(cfg: &EsConfig, dim: usize) -> Vec<f64> {
    if cfg.init_std == 0.0 {
        vec![0.0; dim]
    } else {
        gaussian(derive_seed(cfg.seed, &[INIT_STREAM]), dim, cfg.init_std)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub noise: Vec<f64>,
    pub params: Vec<f64>,
}

/// `p_i = theta + v_i` for the whole population.
pub fn sample_population(theta: &[f64], cfg: &EsConfig, generation: usize) -> Vec<Individual> {
    (0..cfg.population)
        .map(|i| {
            let v = noise(cfg, generation, i, theta.len());
            let params = theta.iter().zip(&v).map(|(t, n)| t + n).collect();
            Individual { noise: v, params }
        })
        .collect()
}

/// Centered ranks in `[-0.5, 0.5]`; tied rewards share their average rank.
pub fn centered_ranks(rewards: &[f64]) -> Vec<f64> {
    let n = rewards.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rewards[a].total_cmp(&rewards[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && rewards[order[j + 1]] == rewards[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    let denom = (n - 1) as f64;
    ranks.iter().map(|r| r / denom - 0.5).collect()
}

fn is_mirrored(noises: &[Vec<f64>]) -> bool {
    noises.len() % 2 == 0
        && noises
            .chunks(2)
            .all(|p| p[0].iter().zip(&p[1]).all(|(a, b)| *a == -*b))
}

/// `theta + alpha / (N sigma^2) * sum_i v_i r_i`, after reward shaping.
///
/// When the noises come in mirrored pairs the sum is accumulated pairwise as
/// `v (r_+ - r_-)`, so equal rewards within a pair cancel exactly.
pub fn es_update(
    theta: &[f64],
    noises: &[Vec<f64>],
    rewards: &[f64],
    cfg: &EsConfig,
) -> Result<Vec<f64>, EsError> {
    if noises.len() != rewards.len() || noises.is_empty() {
        return Err(EsError::Length {
            noises: noises.len(),
            rewards: rewards.len(),
        });
    }
    if let Some(v) = noises.iter().find(|v| v.len() != theta.len()) {
        return Err(EsError::Dimension {
            expected: theta.len(),
            found: v.len(),
        });
    }
    let shaped = match cfg.fitness_shaping {
        FitnessShaping::Raw => rewards.to_vec(),
        FitnessShaping::Rank => centered_ranks(rewards),
    };
    let n = noises.len() as f64;
    let scale = cfg.learning_rate / (n * cfg.sigma * cfg.sigma);
    let mut step = vec![0.0; theta.len()];
    if cfg.antithetic && is_mirrored(noises) {
        for (pair, r) in noises.chunks(2).zip(shaped.chunks(2)) {
            let diff = r[0] - r[1];
            for (s, v) in step.iter_mut().zip(&pair[0]) {
                *s += v * diff;
            }
        }
    } else {
        for (v, r) in noises.iter().zip(&shaped) {
            for (s, x) in step.iter_mut().zip(v) {
                *s += x * r;
            }
        }
    }
    Ok(theta.iter().zip(&step).map(|(t, s)| t + scale * s).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub reward: f64,
    pub length: u64,
    pub blowup: bool,
}

/// Fitness function over raw parameter vectors; higher is better.
pub trait Objective: Sync {
    fn dimension(&self) -> usize;
    fn evaluate(&self, params: &[f64], seed: u64) -> Evaluation;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessRecord {
    pub index: usize,
    pub reward: f64,
    pub length: u64,
    pub seed: u64,
    pub blowup: bool,
}

/// Horizon-capped rollouts of networks decoded from parameter vectors.
pub struct RolloutObjective<F> {
    pub spec: NetworkSpec,
    pub layout: Layout,
    pub make_env: F,
    pub horizon: u64,
}

impl<F, E> RolloutObjective<F>
where
    F: Fn() -> E + Sync,
    E: Environment,
{
    pub fn new(spec: NetworkSpec, make_env: F, horizon: u64) -> Self {
        let layout = Layout::for_network(&spec);
        Self {
            spec,
            layout,
            make_env,
            horizon,
        }
    }
}

impl<F, E> Objective for RolloutObjective<F>
where
    F: Fn() -> E + Sync,
    E: Environment,
{
    fn dimension(&self) -> usize {
        self.layout.len()
    }

    fn evaluate(&self, params: &[f64], seed: u64) -> Evaluation {
        let genome = Genome {
            theta: params.to_vec(),
            layout: self.layout.clone(),
        };
        let record = evaluate_individual(&genome, &self.spec, &self.make_env, self.horizon, seed, 0)
            .expect("rollout objective genomes share the objective layout");
        Evaluation {
            reward: record.reward,
            length: record.length,
            blowup: record.blowup,
        }
    }
}

/// Builds the network, runs one episode of at most `horizon` steps, and reports
/// the cumulative reward. A blown-up episode scores the environment minimum.
pub fn evaluate_individual<F, E>(
    genome: &Genome,
    spec: &NetworkSpec,
    make_env: &F,
    horizon: u64,
    seed: u64,
    index: usize,
) -> Result<FitnessRecord, GenomeError>
where
    F: Fn() -> E,
    E: Environment,
{
    assert!(horizon >= 1, "horizon must be at least one step");
    let mut net = decode_network(spec, genome)?;
    let mut env = make_env();
    let summary = run_lifespan(&mut net, &mut env, HorizonPolicy::Capped(horizon), seed);
    let blowup = summary.blowup();
    Ok(FitnessRecord {
        index,
        reward: if blowup { env.min_return() } else { summary.total_reward },
        length: summary.length,
        seed,
        blowup,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl GenerationStats {
    fn from_rewards(generation: usize, rewards: &[f64]) -> Self {
        let n = rewards.len() as f64;
        Self {
            generation,
            mean: rewards.iter().sum::<f64>() / n,
            max: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: rewards.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

/// Resumable optimizer state. The next generation index is the only RNG state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EsState {
    pub generation: usize,
    pub theta: Vec<f64>,
    pub history: Vec<GenerationStats>,
}

#[derive(Debug, Clone)]
pub struct EvolutionStrategy {
    cfg: EsConfig,
    state: EsState,
    last_records: Vec<FitnessRecord>,
}

impl EvolutionStrategy {
    pub fn new(cfg: EsConfig, theta: Vec<f64>) -> Result<Self, EsError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state: EsState {
                generation: 0,
                theta,
                history: Vec::new(),
            },
            last_records: Vec::new(),
        })
    }

    pub fn resume(cfg: EsConfig, state: EsState) -> Result<Self, EsError> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            state,
            last_records: Vec::new(),
        })
    }

    pub fn config(&self) -> &EsConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EsState {
        &self.state
    }

    pub fn theta(&self) -> &[f64] {
        &self.state.theta
    }

    pub fn generation(&self) -> usize {
        self.state.generation
    }

    pub fn history(&self) -> &[GenerationStats] {
        &self.state.history
    }

    /// One record per individual of the most recent generation, in index order.
    pub fn last_records(&self) -> &[FitnessRecord] {
        &self.last_records
    }

    fn reached_target(&self) -> bool {
        match (self.cfg.stop_at_fitness, self.state.history.last()) {
            (Some(target), Some(last)) => last.mean >= target,
            _ => false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.state.generation >= self.cfg.generations || self.reached_target()
    }

    /// Sample, evaluate in parallel, update. Results are indexed by
    /// individual, never by completion order.
    pub fn step<O: Objective + ?Sized>(&mut self, objective: &O) -> GenerationStats {
        let generation = self.state.generation;
        let seed = generation_env_seed(&self.cfg, generation);
        let theta = &self.state.theta;
        let cfg = &self.cfg;
        let evaluated: Vec<(Vec<f64>, Evaluation)> = (0..cfg.population)
            .into_par_iter()
            .map(|i| {
                let v = noise(cfg, generation, i, theta.len());
                let params: Vec<f64> = theta.iter().zip(&v).map(|(t, n)| t + n).collect();
                let eval = objective.evaluate(&params, seed);
                (v, eval)
            })
            .collect();
        let rewards: Vec<f64> = evaluated.iter().map(|(_, e)| e.reward).collect();
        self.last_records = evaluated
            .iter()
            .enumerate()
            .map(|(index, (_, e))| FitnessRecord {
                index,
                reward: e.reward,
                length: e.length,
                seed,
                blowup: e.blowup,
            })
            .collect();
        let noises: Vec<Vec<f64>> = evaluated.into_iter().map(|(v, _)| v).collect();
        self.state.theta = es_update(theta, &noises, &rewards, cfg)
            .expect("population noises and rewards have matching lengths");
        let stats = GenerationStats::from_rewards(generation, &rewards);
        self.state.history.push(stats);
        self.state.generation += 1;
        stats
    }

    /// Runs until the generation budget or the fitness target, calling
    /// `after_generation` once per generation.
    pub fn run<O: Objective + ?Sized>(
        &mut self,
        objective: &O,
        mut after_generation: impl FnMut(&Self),
    ) {
        while !self.is_done() {
            self.step(objective);
            after_generation(self);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    pub history: Vec<GenerationStats>,
}

/// Trains from `initial_theta(cfg)` and returns the final mean parameters.
pub fn train<O: Objective + ?Sized>(cfg: &EsConfig, objective: &O) -> Result<TrainOutcome, EsError> {
    let mut es = EvolutionStrategy::new(cfg.clone(), initial_theta(cfg, objective.dimension()))?;
    es.run(objective, |_| {});
    Ok(TrainOutcome {
        theta: es.state.theta,
        history: es.state.history,
    })
}

/// Trains a genome for `spec` on horizon-capped rollouts.
pub fn train_genome<F, E>(
    cfg: &EsConfig,
    spec: &NetworkSpec,
    make_env: F,
    horizon: u64,
) -> Result<(Genome, Vec<GenerationStats>), EsError>
where
    F: Fn() -> E + Sync,
    E: Environment,
{
    let objective = RolloutObjective::new(spec.clone(), make_env, horizon);
    let out = train(cfg, &objective)?;
    Ok((
        Genome {
            theta: out.theta,
            layout: objective.layout,
        },
        out.history,
    ))
}

/// History as CSV with columns `generation,mean,max,min`.
pub fn write_history_csv<W: std::io::Write>(
    history: &[GenerationStats],
    out: W,
    header: &[String],
) -> std::io::Result<()> {
    let mut out = out;
    for line in header {
        writeln!(out, "# {line}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["generation", "mean", "max", "min"])?;
    for h in history {
        w.write_record([
            h.generation.to_string(),
            h.mean.to_string(),
            h.max.to_string(),
            h.min.to_string(),
        ])?;
    }
    w.flush()
}
