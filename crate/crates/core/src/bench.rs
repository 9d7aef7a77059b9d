//! Time-horizon experiments: train at several horizons, evaluate without a
//! cap, regress lifespan on horizon, and trace reward accumulation.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{
    run_episode, run_lifespan, Environment, HorizonPolicy, Policy, StopReason, MAX_SAFETY_LIMIT,
};
use crate::evolution::{derive_seed, train, EsConfig, RolloutObjective};
use crate::genome::{decode_network, Genome, GenomeError};
use crate::network::{Backend, NetworkSpec};
use crate::plasticity::RuleKind;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid sweep: {0}")]
    Spec(String),
    #[error("linear fit needs at least two distinct x values")]
    DegenerateFit,
    #[error("eval length {eval_length} is shorter than the horizon marker {marker}")]
    CurveLength { eval_length: u64, marker: u64 },
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("raw table: {0}")]
    Table(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Feedforward,
    Recurrent,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Feedforward => "feedforward",
            Topology::Recurrent => "recurrent",
        }
    }

    pub fn of(spec: &NetworkSpec) -> Self {
        if spec.is_recurrent() {
            Topology::Recurrent
        } else {
            Topology::Feedforward
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub rule: RuleKind,
    pub topology: Topology,
    pub backend: Backend,
    pub horizons: Vec<u64>,
    pub repeats: usize,
    pub eval_episodes: usize,
    pub safety_limit: u64,
    /// Ends a cell's training once mean fitness reaches this fraction of its horizon.
    #[serde(default)]
    pub stop_at_fraction: Option<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.horizons.is_empty() {
            return Err(BenchError::Spec("horizons must not be empty".into()));
        }
        if self.horizons.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BenchError::Spec("horizons must be strictly increasing".into()));
        }
        if self.horizons[0] == 0 {
            return Err(BenchError::Spec("horizons must be positive".into()));
        }
        if self.repeats == 0 || self.eval_episodes == 0 {
            return Err(BenchError::Spec("repeats and eval_episodes must be at least 1".into()));
        }
        if self.safety_limit == 0 || self.safety_limit > MAX_SAFETY_LIMIT {
            return Err(BenchError::Spec(format!(
                "safety_limit must be in 1..={MAX_SAFETY_LIMIT}"
            )));
        }
        if let Some(f) = self.stop_at_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return Err(BenchError::Spec(format!("stop_at_fraction must be in (0, 1], got {f}")));
            }
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<CellKey> {
        self.horizons
            .iter()
            .flat_map(|&horizon| (0..self.repeats).map(move |repeat| CellKey { horizon, repeat }))
            .collect()
    }
}

/// One training run: a horizon and a repeat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub horizon: u64,
    pub repeat: usize,
}

impl CellKey {
    pub fn id(&self) -> String {
        format!("h{}_r{}", self.horizon, self.repeat)
    }

    pub fn train_seed(&self, base: u64) -> u64 {
        derive_seed(base, &[0x63656c6c, self.horizon, self.repeat as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub lifespan: u64,
    pub censored: bool,
    pub blowup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub train_seed: u64,
    /// `None` on success, otherwise why training produced nothing usable.
    pub failure: Option<String>,
    pub generations: usize,
    pub final_mean_fitness: Option<f64>,
    pub theta: Vec<f64>,
    pub evals: Vec<EvalOutcome>,
}

/// Storage for finished cells, so an interrupted sweep can resume.
pub trait CellStore: Sync {
    fn load(&self, key: &CellKey) -> Option<CellResult>;
    fn save(&self, result: &CellResult) -> std::io::Result<()>;
}

pub struct NoStore;

impl CellStore for NoStore {
    fn load(&self, _: &CellKey) -> Option<CellResult> {
        None
    }
    fn save(&self, _: &CellResult) -> std::io::Result<()> {
        Ok(())
    }
}

/// Runs `episodes` uncapped rollouts of `genome`, in parallel, ordered by episode.
pub fn evaluate_lifespans<F, E>(
    genome: &Genome,
    spec: &NetworkSpec,
    make_env: &F,
    episodes: usize,
    safety_limit: u64,
    base_seed: u64,
) -> Result<Vec<EvalOutcome>, GenomeError>
where
    F: Fn() -> E + Sync,
    E: Environment,
{
    let proto = decode_network(spec, genome)?;
    Ok((0..episodes)
        .into_par_iter()
        .map(|k| {
            let mut net = proto.clone();
            let mut env = make_env();
            let seed = derive_seed(base_seed, &[0x6576616c, k as u64]);
            let s = run_lifespan(&mut net, &mut env, HorizonPolicy::Uncapped { safety_limit }, seed);
            EvalOutcome {
                lifespan: s.length,
                censored: s.stop == StopReason::SafetyLimit,
                blowup: s.blowup(),
            }
        })
        .collect())
}

/// Trains and evaluates one cell. Failures are recorded in the result.
pub fn run_cell<F, E>(
    key: CellKey,
    sweep: &SweepSpec,
    es: &EsConfig,
    spec: &NetworkSpec,
    make_env: &F,
) -> CellResult
where
    F: Fn() -> E + Sync,
    E: Environment,
{
    let train_seed = key.train_seed(es.seed);
    let cfg = EsConfig {
        seed: train_seed,
        stop_at_fitness: sweep
            .stop_at_fraction
            .map(|f| f * key.horizon as f64)
            .or(es.stop_at_fitness),
        ..es.clone()
    };
    let objective = RolloutObjective::new(spec.clone(), make_env, key.horizon);
    let mut result = CellResult {
        key,
        train_seed,
        failure: None,
        generations: 0,
        final_mean_fitness: None,
        theta: Vec::new(),
        evals: Vec::new(),
    };
    let outcome = match train(&cfg, &objective) {
        Ok(o) => o,
        Err(e) => {
            result.failure = Some(e.to_string());
            return result;
        }
    };
    result.generations = outcome.history.len();
    result.final_mean_fitness = outcome.history.last().map(|h| h.mean);
    if !outcome.history.is_empty() && outcome.history.iter().all(|h| h.max == h.min) {
        result.failure = Some("fitness plateau: no reward variation in any generation".into());
        return result;
    }
    let genome = Genome {
        theta: outcome.theta,
        layout: objective.layout,
    };
    match evaluate_lifespans(
        &genome,
        spec,
        make_env,
        sweep.eval_episodes,
        sweep.safety_limit,
        train_seed,
    ) {
        Ok(evals) => result.evals = evals,
        Err(e) => result.failure = Some(e.to_string()),
    }
    result.theta = genome.theta;
    result
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub rule: RuleKind,
    pub backend: Backend,
    pub topology: Topology,
    pub horizon: u64,
    pub repeat: usize,
    pub eval_index: usize,
    pub lifespan: u64,
    pub censored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedCell {
    pub horizon: u64,
    pub repeat: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonAggregate {
    pub horizon: u64,
    pub evaluations: usize,
    /// Evaluations that reached the safety limit.
    pub censored: usize,
    pub indefinite_fraction: f64,
    /// Mean and sample standard deviation over uncensored lifespans.
    pub mean_lifespan: Option<f64>,
    pub std_lifespan: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Regression {
    Fit {
        slope: f64,
        intercept: f64,
        points: Vec<(f64, f64)>,
    },
    NotApplicable {
        reason: String,
    },
}

impl Regression {
    pub fn slope(&self) -> Option<f64> {
        match self {
            Regression::Fit { slope, .. } => Some(*slope),
            Regression::NotApplicable { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    pub config_hash: String,
    pub rule: RuleKind,
    pub backend: Backend,
    pub topology: Topology,
    pub safety_limit: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    #[serde(flatten)]
    pub meta: ReportMeta,
    pub horizons: Vec<HorizonAggregate>,
    pub regression: Regression,
    pub failed_cells: Vec<FailedCell>,
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn fit_linear(points: &[(f64, f64)]) -> Result<LinearFit, BenchError> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(BenchError::DegenerateFit);
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(BenchError::DegenerateFit);
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
    })
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = if xs.len() > 1 {
        (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

impl SweepReport {
    /// Aggregates a raw table. Every row is either a lifespan sample or a
    /// censored hit; horizons with no uncensored sample stay out of the fit.
    pub fn from_rows(meta: ReportMeta, rows: &[RawRow], failed: &[FailedCell]) -> Self {
        let mut by_horizon: BTreeMap<u64, (Vec<f64>, usize)> = BTreeMap::new();
        for f in failed {
            by_horizon.entry(f.horizon).or_default();
        }
        for r in rows {
            let e = by_horizon.entry(r.horizon).or_default();
            if r.censored {
                e.1 += 1;
            } else {
                e.0.push(r.lifespan as f64);
            }
        }
        let horizons: Vec<HorizonAggregate> = by_horizon
            .into_iter()
            .map(|(horizon, (samples, censored))| {
                let evaluations = samples.len() + censored;
                let (mean_lifespan, std_lifespan) = mean_std(&samples);
                HorizonAggregate {
                    horizon,
                    evaluations,
                    censored,
                    indefinite_fraction: if evaluations == 0 {
                        0.0
                    } else {
                        censored as f64 / evaluations as f64
                    },
                    mean_lifespan,
                    std_lifespan,
                }
            })
            .collect();
        let points: Vec<(f64, f64)> = horizons
            .iter()
            .filter_map(|h| h.mean_lifespan.map(|m| (h.horizon as f64, m)))
            .collect();
        let regression = match fit_linear(&points) {
            Ok(fit) => Regression::Fit {
                slope: fit.slope,
                intercept: fit.intercept,
                points,
            },
            Err(_) => Regression::NotApplicable {
                reason: format!(
                    "{} horizon(s) with uncensored lifespans; a fit needs two",
                    points.len()
                ),
            },
        };
        Self {
            meta,
            horizons,
            regression,
            failed_cells: failed.to_vec(),
        }
    }
}

pub fn rows_for_cell(result: &CellResult, sweep: &SweepSpec) -> Vec<RawRow> {
    result
        .evals
        .iter()
        .enumerate()
        .map(|(eval_index, e)| RawRow {
            rule: sweep.rule,
            backend: sweep.backend,
            topology: sweep.topology,
            horizon: result.key.horizon,
            repeat: result.key.repeat,
            eval_index,
            lifespan: e.lifespan,
            censored: e.censored,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub report: SweepReport,
    pub rows: Vec<RawRow>,
    pub cells: Vec<CellResult>,
}

impl SweepOutcome {
    pub fn failed(&self) -> usize {
        self.report.failed_cells.len()
    }
}

/// Runs every (horizon, repeat) cell as an independent job, reusing cells
/// already present in `store`, then builds the report sequentially.
pub fn run_sweep<F, E>(
    sweep: &SweepSpec,
    es: &EsConfig,
    spec: &NetworkSpec,
    make_env: &F,
    store: &dyn CellStore,
    meta: ReportMeta,
) -> Result<SweepOutcome, BenchError>
where
    F: Fn() -> E + Sync,
    E: Environment,
{
    sweep.validate()?;
    es.validate().map_err(|e| BenchError::Spec(e.to_string()))?;
    let cells: Vec<CellResult> = sweep
        .cells()
        .into_par_iter()
        .map(|key| -> Result<CellResult, BenchError> {
            if let Some(done) = store.load(&key) {
                return Ok(done);
            }
            let r = run_cell(key, sweep, es, spec, make_env);
            store.save(&r)?;
            Ok(r)
        })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    let mut failed = Vec::new();
    for c in &cells {
        match &c.failure {
            None => rows.extend(rows_for_cell(c, sweep)),
            Some(reason) => failed.push(FailedCell {
                horizon: c.key.horizon,
                repeat: c.key.repeat,
                reason: reason.clone(),
            }),
        }
    }
    let report = SweepReport::from_rows(meta, &rows, &failed);
    Ok(SweepOutcome {
        report,
        rows,
        cells,
    })
}

fn write_comments<W: Write>(out: &mut W, header: &[(String, String)]) -> std::io::Result<()> {
    for (k, v) in header {
        writeln!(out, "# {k}={v}")?;
    }
    Ok(())
}

/// Header lines `# key=value` preceding a CSV table.
pub fn read_comments<R: BufRead>(input: R) -> std::io::Result<(BTreeMap<String, String>, String)> {
    let mut meta = BTreeMap::new();
    let mut body = String::new();
    for line in input.lines() {
        let line = line?;
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some((k, v)) = rest.split_once('=') {
                meta.insert(k.to_string(), v.to_string());
            }
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((meta, body))
}

pub fn meta_header(meta: &ReportMeta) -> Vec<(String, String)> {
    vec![
        ("tool".into(), meta.tool_version.clone()),
        ("config_hash".into(), meta.config_hash.clone()),
        ("rule".into(), meta.rule.name().into()),
        ("backend".into(), meta.backend.name().into()),
        ("topology".into(), meta.topology.name().into()),
        ("safety_limit".into(), meta.safety_limit.to_string()),
    ]
}

fn parse_meta(map: &BTreeMap<String, String>) -> Result<ReportMeta, BenchError> {
    let get = |k: &str| {
        map.get(k)
            .cloned()
            .ok_or_else(|| BenchError::Table(format!("missing header line `# {k}=...`")))
    };
    let quoted = |k: &str| -> Result<String, BenchError> { Ok(format!("\"{}\"", get(k)?)) };
    let de = |k: &str| -> Result<serde_json::Value, BenchError> {
        serde_json::from_str(&quoted(k)?).map_err(|e| BenchError::Table(e.to_string()))
    };
    Ok(ReportMeta {
        tool_version: get("tool")?,
        config_hash: get("config_hash")?,
        rule: serde_json::from_value(de("rule")?).map_err(|e| BenchError::Table(e.to_string()))?,
        backend: serde_json::from_value(de("backend")?)
            .map_err(|e| BenchError::Table(e.to_string()))?,
        topology: serde_json::from_value(de("topology")?)
            .map_err(|e| BenchError::Table(e.to_string()))?,
        safety_limit: get("safety_limit")?
            .parse()
            .map_err(|e: std::num::ParseIntError| BenchError::Table(e.to_string()))?,
    })
}

/// `rule,backend,topology,horizon,repeat,eval_index,lifespan,censored`.
pub fn write_raw_csv<W: Write>(rows: &[RawRow], meta: &ReportMeta, mut out: W) -> Result<(), BenchError> {
    write_comments(&mut out, &meta_header(meta))?;
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "rule", "backend", "topology", "horizon", "repeat", "eval_index", "lifespan", "censored",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw_csv<R: BufRead>(input: R) -> Result<(ReportMeta, Vec<RawRow>), BenchError> {
    let (map, body) = read_comments(input)?;
    let meta = parse_meta(&map)?;
    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let rows = rd.deserialize().collect::<Result<Vec<RawRow>, _>>()?;
    Ok((meta, rows))
}

/// `horizon,repeat,reason`.
pub fn write_failed_csv<W: Write>(failed: &[FailedCell], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["horizon", "repeat", "reason"])?;
    for f in failed {
        w.write_record([f.horizon.to_string(), f.repeat.to_string(), f.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_failed_csv<R: std::io::Read>(input: R) -> Result<Vec<FailedCell>, BenchError> {
    let mut rd = csv::Reader::from_reader(input);
    Ok(rd.deserialize().collect::<Result<Vec<FailedCell>, _>>()?)
}

/// Plot-ready `horizon,mean_lifespan,std_lifespan,indefinite_fraction,fitted`.
pub fn write_series_csv<W: Write>(report: &SweepReport, mut out: W) -> Result<(), BenchError> {
    write_comments(&mut out, &meta_header(&report.meta))?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "horizon",
        "mean_lifespan",
        "std_lifespan",
        "indefinite_fraction",
        "fitted",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for h in &report.horizons {
        let fitted = match &report.regression {
            Regression::Fit {
                slope, intercept, ..
            } => Some(slope * h.horizon as f64 + intercept),
            Regression::NotApplicable { .. } => None,
        };
        w.write_record([
            h.horizon.to_string(),
            fmt(h.mean_lifespan),
            fmt(h.std_lifespan),
            h.indefinite_fraction.to_string(),
            fmt(fitted),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCurve {
    /// Cumulative reward after each step.
    pub cumulative: Vec<f64>,
    pub horizon_marker: u64,
    pub eval_length: u64,
    /// The episode ended before reaching the marker.
    pub truncated_before_marker: bool,
}

impl RewardCurve {
    /// `step,cumulative_reward` with the marker in a header line.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# horizon_marker={}", self.horizon_marker)?;
        writeln!(out, "# eval_length={}", self.eval_length)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "cumulative_reward"])?;
        for (i, c) in self.cumulative.iter().enumerate() {
            w.write_record([(i + 1).to_string(), c.to_string()])?;
        }
        w.flush()
    }
}

/// Cumulative reward of one fixed-length rollout, annotated with the training horizon.
pub fn reward_accumulation<P: Policy + ?Sized, E: Environment + ?Sized>(
    policy: &mut P,
    env: &mut E,
    horizon_marker: u64,
    eval_length: u64,
    seed: u64,
) -> Result<RewardCurve, BenchError> {
    if eval_length < horizon_marker {
        return Err(BenchError::CurveLength {
            eval_length,
            marker: horizon_marker,
        });
    }
    let trace = run_episode(policy, env, HorizonPolicy::Capped(eval_length), seed);
    let cumulative = trace.cumulative();
    Ok(RewardCurve {
        truncated_before_marker: (cumulative.len() as u64) < horizon_marker,
        cumulative,
        horizon_marker,
        eval_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            tool_version: "t".into(),
            config_hash: "abc".into(),
            rule: RuleKind::Oja,
            backend: Backend::Ann,
            topology: Topology::Feedforward,
            safety_limit: 1000,
        }
    }

    fn row(horizon: u64, repeat: usize, eval_index: usize, lifespan: u64, censored: bool) -> RawRow {
        RawRow {
            rule: RuleKind::Oja,
            backend: Backend::Ann,
            topology: Topology::Feedforward,
            horizon,
            repeat,
            eval_index,
            lifespan,
            censored,
        }
    }

    #[test]
    fn fit_examples() {
        let f = fit_linear(&[(0.0, 1.0), (1.0, 1.0)]).unwrap();
        assert_eq!((f.slope, f.intercept), (0.0, 1.0));
        let f = fit_linear(&[(100.0, 144.0), (200.0, 288.0), (300.0, 432.0)]).unwrap();
        assert!((f.slope - 1.44).abs() < 1e-9 && f.intercept.abs() < 1e-9);
        assert!(matches!(fit_linear(&[(2.0, 1.0), (2.0, 5.0)]), Err(BenchError::DegenerateFit)));
        assert!(matches!(fit_linear(&[(2.0, 1.0)]), Err(BenchError::DegenerateFit)));
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_x(pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30)) {
            prop_assume!(pts.iter().any(|p| (p.0 - pts[0].0).abs() > 1e-3));
            let f = fit_linear(&pts).unwrap();
            let res: Vec<f64> = pts.iter().map(|p| p.1 - (f.slope * p.0 + f.intercept)).collect();
            let sum: f64 = res.iter().sum();
            let dot: f64 = res.iter().zip(&pts).map(|(r, p)| r * p.0).sum();
            prop_assert!(sum.abs() < 1e-9 * pts.len() as f64 * 100.0);
            prop_assert!(dot.abs() < 1e-9 * pts.len() as f64 * 1e4);
        }
    }

    #[test]
    fn aggregation_and_censoring() {
        let rows = vec![
            row(100, 0, 0, 150, false),
            row(100, 0, 1, 130, false),
            row(200, 0, 0, 1000, true),
            row(200, 0, 1, 300, false),
            row(400, 0, 0, 1000, true),
        ];
        let r = SweepReport::from_rows(meta(), &rows, &[]);
        assert_eq!(r.horizons.len(), 3);
        let h = &r.horizons[0];
        assert_eq!(h.mean_lifespan, Some(140.0));
        assert!((h.std_lifespan.unwrap() - 200f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.horizons[1].indefinite_fraction, 0.5);
        assert_eq!(r.horizons[2].indefinite_fraction, 1.0);
        assert_eq!(r.horizons[2].mean_lifespan, None);
        let counted: usize = r.horizons.iter().map(|h| h.evaluations).sum();
        assert_eq!(counted, rows.len());
        match &r.regression {
            Regression::Fit { slope, points, .. } => {
                assert_eq!(points.len(), 2);
                assert!((slope - 1.6).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_censored_means_no_fit() {
        let rows = vec![row(100, 0, 0, 1000, true), row(200, 0, 0, 1000, true)];
        let r = SweepReport::from_rows(meta(), &rows, &[]);
        assert!(r.horizons.iter().all(|h| h.indefinite_fraction == 1.0));
        assert!(matches!(r.regression, Regression::NotApplicable { .. }));
    }

    #[test]
    fn synthetic_collinear_lifespans() {
        let rows: Vec<RawRow> = [100u64, 200, 300, 400]
            .iter()
            .flat_map(|&h| (0..3).map(move |k| row(h, 0, k, h * 144 / 100, false)))
            .collect();
        let r = SweepReport::from_rows(meta(), &rows, &[]);
        let (a, b) = match r.regression {
            Regression::Fit {
                slope, intercept, ..
            } => (slope, intercept),
            _ => unreachable!(),
        };
        assert!((a - 1.44).abs() < 1e-9 && b.abs() < 1e-9);
    }

    #[test]
    fn raw_csv_round_trip() {
        let rows = vec![row(100, 0, 0, 150, false), row(200, 1, 3, 1000, true)];
        let failed = vec![FailedCell {
            horizon: 400,
            repeat: 2,
            reason: "fitness plateau, no signal".into(),
        }];
        let mut buf = Vec::new();
        write_raw_csv(&rows, &meta(), &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("rule,backend,topology,horizon,repeat,eval_index,lifespan,censored"));
        let (m, back) = read_raw_csv(buf.as_slice()).unwrap();
        assert_eq!(m, meta());
        assert_eq!(back, rows);
        let mut fbuf = Vec::new();
        write_failed_csv(&failed, &mut fbuf).unwrap();
        assert_eq!(read_failed_csv(fbuf.as_slice()).unwrap(), failed);
        let a = SweepReport::from_rows(meta(), &rows, &failed);
        assert_eq!(a.horizons.len(), 3);
        assert_eq!(a.horizons[2].evaluations, 0);
    }

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec {
            rule: RuleKind::Oja,
            topology: Topology::Feedforward,
            backend: Backend::Ann,
            horizons: vec![100, 200],
            repeats: 1,
            eval_episodes: 1,
            safety_limit: 1000,
            stop_at_fraction: None,
        };
        assert!(s.validate().is_ok());
        assert_eq!(s.cells().len(), 2);
        s.horizons = vec![200, 100];
        assert!(s.validate().is_err());
        s.horizons = vec![];
        assert!(s.validate().is_err());
        s.horizons = vec![100];
        s.repeats = 0;
        assert!(s.validate().is_err());
    }
}
