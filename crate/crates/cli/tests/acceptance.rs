//! End-to-end acceptance run. Prints one line per criterion to stderr and
//! fails if any criterion fails.
//!
//! The training criteria (1-3) dominate the run time; the rest finish in
//! well under a second.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use plasticlab::bench::{evaluate_lifespans, fit_linear, Regression, SweepReport};
use plasticlab::config::RunConfig;
use plasticlab::environment::{cartpole_step, CartPoleParams, CartPoleState};
use plasticlab::evolution::{
    es_update, initial_theta, noise, EsConfig, EvolutionStrategy, Evaluation, FitnessShaping, Objective,
    RolloutObjective,
};
use plasticlab::genome::{decode_network, Genome, Layout, ParamTarget};
use plasticlab::network::{Backend, ClipBounds, NetworkSpec, WeightMatrix};
use plasticlab::neuron::{Integration, LifParams, MembraneState};
use plasticlab::plasticity::{
    abcd_update, stdp_bruteforce, stdp_online_update, AbcdParams, RuleKind, StdpKernel, StdpParams, TraceDecay,
    TraceState, WeightDependence,
};
use plasticlab::ndarray::Array2;

const TRAIN_SEEDS: [u64; 3] = [1, 2, 3];
const C1_TARGET: f64 = 195.0;
const C1_GENERATIONS: usize = 300;
const C1_WALL: Duration = Duration::from_secs(600);
const C2_SAFETY_LIMIT: u64 = 100_000;
const C2_EPISODES: usize = 10;
const C2_REQUIRED: usize = 8;
const C3_WALL: Duration = Duration::from_secs(3600);
const C4_TOL: f64 = 1e-9;
const C5_EULER_TOL: f64 = 0.05;
const C5_EXACT_TOL: f64 = 1e-9;
const C6_REDUCTION: f64 = 0.9;
const C7_TOL: f64 = 1e-9;
const C8_TOL: f64 = 1e-12;
const C10_TOL: f64 = 1e-6;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(n: usize, name: &str, v: &Verdict) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n:>2} [{tag}] {name}: {}", v.detail);
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&configs().join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn trainability() -> Verdict {
    let base = load("ann-oja.toml");
    let spec = base.network_spec();
    let objective = RolloutObjective::new(spec, base.make_env(), base.train.horizon);
    let mut passed = 0;
    let mut notes = Vec::new();
    for seed in TRAIN_SEEDS {
        let cfg = EsConfig {
            seed,
            generations: C1_GENERATIONS,
            stop_at_fitness: Some(C1_TARGET),
            ..base.es.clone()
        };
        let start = Instant::now();
        let mut es = EvolutionStrategy::new(cfg.clone(), initial_theta(&cfg, objective.dimension())).unwrap();
        es.run(&objective, |_| {});
        let took = start.elapsed();
        let reached = es.history().iter().find(|h| h.mean >= C1_TARGET).map(|h| h.generation);
        let ok = reached.is_some() && took <= C1_WALL;
        passed += usize::from(ok);
        notes.push(match reached {
            Some(g) => format!("seed {seed}: gen {g}, {:.1}s", took.as_secs_f64()),
            None => format!(
                "seed {seed}: best mean {:.1}, {:.1}s",
                es.history().iter().map(|h| h.mean).fold(f64::MIN, f64::max),
                took.as_secs_f64()
            ),
        });
        if passed == 2 {
            break;
        }
    }
    Verdict::new(
        passed >= 2,
        format!("{passed} seeds reached mean >= {C1_TARGET} within {C1_GENERATIONS} gens ({})", notes.join("; ")),
    )
}

fn snn_generalization() -> Verdict {
    let base = load("snn-stdp.toml");
    let spec = base.network_spec();
    let make_env = base.make_env();
    let mut notes = Vec::new();
    let mut best = 0;
    for seed in TRAIN_SEEDS {
        let cfg = EsConfig {
            seed,
            ..base.es.clone()
        };
        let start = Instant::now();
        let objective = RolloutObjective::new(spec.clone(), make_env.clone(), base.train.horizon);
        let mut es = EvolutionStrategy::new(cfg.clone(), initial_theta(&cfg, objective.dimension())).unwrap();
        es.run(&objective, |_| {});
        let genome = Genome {
            theta: es.theta().to_vec(),
            layout: objective.layout.clone(),
        };
        let evals = evaluate_lifespans(
            &genome,
            &spec,
            &make_env,
            C2_EPISODES,
            C2_SAFETY_LIMIT,
            base.environment.seed,
        )
        .unwrap();
        let censored = evals.iter().filter(|e| e.censored).count();
        let lifespans: Vec<String> = evals.iter().map(|e| e.lifespan.to_string()).collect();
        notes.push(format!(
            "seed {seed}: {censored}/{C2_EPISODES} [{}] {:.0}s",
            lifespans.join(" "),
            start.elapsed().as_secs_f64()
        ));
        best = best.max(censored);
        if censored >= C2_REQUIRED {
            break;
        }
    }
    Verdict::new(
        best >= C2_REQUIRED,
        format!("need {C2_REQUIRED}/{C2_EPISODES} at L={C2_SAFETY_LIMIT}; {}", notes.join("; ")),
    )
}

fn ann_fragility() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("ann-oja-sweep.toml")).unwrap();
    let text: String = text
        .lines()
        .map(|l| if l.starts_with("output_dir") { "output_dir = \"out\"" } else { l })
        .collect::<Vec<_>>()
        .join("\n");
    let cfg = dir.path().join("sweep.toml");
    std::fs::write(&cfg, text).unwrap();
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_plasticlab"))
        .args(["sweep", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    let took = start.elapsed();
    if !out.status.success() {
        return Verdict::new(
            false,
            format!("sweep exited with {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
        );
    }
    let report: SweepReport =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    let per_horizon: Vec<String> = report
        .horizons
        .iter()
        .map(|h| {
            format!(
                "h{}: censored {}/{} mean {}",
                h.horizon,
                h.censored,
                h.evaluations,
                h.mean_lifespan.map_or("-".into(), |m| format!("{m:.0}"))
            )
        })
        .collect();
    let finite = report.horizons.len() == 3
        && report
            .horizons
            .iter()
            .all(|h| h.indefinite_fraction < 0.5 && h.mean_lifespan.is_some());
    let slope = match &report.regression {
        Regression::Fit { slope, intercept, .. } => format!("A={slope:.3} B={intercept:.1}"),
        Regression::NotApplicable { reason } => format!("no fit ({reason})"),
    };
    Verdict::new(
        finite && report.regression.slope().is_some() && report.failed_cells.is_empty() && took <= C3_WALL,
        format!("{}; {slope}; {:.0}s", per_horizon.join(", "), took.as_secs_f64()),
    )
}

fn stdp_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(1..=50usize);
        let k = StdpKernel {
            a_plus: rng.random_range(0.01..1.0),
            a_minus: rng.random_range(0.01..1.0),
            tau_plus: rng.random_range(2.0..20.0),
            tau_minus: rng.random_range(2.0..20.0),
        };
        let (p_pre, p_post): (f64, f64) = (rng.random_range(0.05..0.5), rng.random_range(0.05..0.5));
        let pre: Vec<bool> = (0..len).map(|_| rng.random_bool(p_pre)).collect();
        let post: Vec<bool> = (0..len).map(|_| rng.random_bool(p_post)).collect();
        let params = StdpParams {
            a_plus: Array2::from_elem((1, 1), k.a_plus),
            a_minus: Array2::from_elem((1, 1), k.a_minus),
            tau_plus: k.tau_plus,
            tau_minus: k.tau_minus,
            weight_dependence: WeightDependence::None,
            trace_decay: TraceDecay::Exponential,
        };
        let mut w = WeightMatrix::new(Array2::zeros((1, 1)), ClipBounds::unbounded());
        let mut tr = TraceState::new(1, 1);
        for t in 0..len {
            let s = |b: bool| [f64::from(u8::from(b))];
            stdp_online_update(&mut w, &params, &mut tr, &s(pre[t]), &s(post[t])).unwrap();
        }
        let times = |v: &[bool]| -> Vec<i64> { (0..v.len() as i64).filter(|&t| v[t as usize]).collect() };
        worst = worst.max((w.values()[(0, 0)] - stdp_bruteforce(&times(&pre), &times(&post), &k)).abs());
    }
    Verdict::new(worst <= C4_TOL, format!("max |online - pairwise| = {worst:.3e} over 100 trains"))
}

fn lif_decay() -> Verdict {
    let tau = 10.0;
    let mut worst = [0.0f64; 2];
    for (k, integration) in [Integration::Euler, Integration::ExactExponential].into_iter().enumerate() {
        let p = LifParams {
            tau_m: tau,
            integration,
            ..LifParams::default()
        };
        let mut m = MembraneState::new(1, &p);
        m.potentials_mut()[0] = 1.0;
        let mut spike = [0.0];
        for t in 1..=tau as usize {
            m.step(&p, &[0.0], &mut spike).unwrap();
            let err = (m.potentials()[0] - (-(t as f64) / tau).exp()).abs();
            worst[k] = worst[k].max(err);
        }
    }
    Verdict::new(
        worst[0] <= C5_EULER_TOL && worst[1] <= C5_EXACT_TOL,
        format!(
            "v0=1, tau=10, t<=tau: euler max err {:.4} (tol {C5_EULER_TOL}), exact max err {:.1e} (tol {C5_EXACT_TOL:e})",
            worst[0], worst[1]
        ),
    )
}

struct Quadratic(Vec<f64>);

impl Objective for Quadratic {
    fn dimension(&self) -> usize {
        self.0.len()
    }
    fn evaluate(&self, p: &[f64], _: u64) -> Evaluation {
        Evaluation {
            reward: -p.iter().zip(&self.0).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            length: 1,
            blowup: false,
        }
    }
}

fn es_sanity() -> Verdict {
    let target: Vec<f64> = (0..20).map(|i| ((i as f64) * 1.3).cos()).collect();
    let mut notes = Vec::new();
    let mut ok = true;
    for shaping in [FitnessShaping::Raw, FitnessShaping::Rank] {
        let cfg = EsConfig {
            population: 100,
            sigma: 0.1,
            learning_rate: 0.05,
            generations: 200,
            seed: 3,
            fitness_shaping: shaping,
            ..EsConfig::default()
        };
        let q = Quadratic(target.clone());
        let dist = |th: &[f64]| th.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let theta0 = initial_theta(&cfg, 20);
        let d0 = dist(&theta0);
        let mut es = EvolutionStrategy::new(cfg.clone(), theta0).unwrap();
        es.run(&q, |_| {});
        let reduction = 1.0 - dist(es.theta()) / d0;
        ok &= reduction >= C6_REDUCTION;

        let theta: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let noises: Vec<_> = (0..cfg.population).map(|i| noise(&cfg, 0, i, 20)).collect();
        let constant = es_update(&theta, &noises, &vec![42.5; cfg.population], &cfg).unwrap();
        let zero = es_update(&theta, &noises, &vec![0.0; cfg.population], &cfg).unwrap();
        let exact = constant == theta && zero == theta;
        ok &= exact;
        notes.push(format!(
            "{shaping:?}: distance reduced {:.1}%, constant/zero rewards exact no-op: {exact}",
            100.0 * reduction
        ));
    }
    Verdict::new(ok, notes.join("; "))
}

fn regression_exactness() -> Verdict {
    let paper = fit_linear(&[(100.0, 144.0), (200.0, 288.0), (300.0, 432.0)]).unwrap();
    let mut worst = (paper.slope - 1.44).abs().max(paper.intercept.abs());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (a, b) = (rng.random_range(-20.0..20.0), rng.random_range(-500.0..500.0));
        let pts: Vec<(f64, f64)> = (0..rng.random_range(2..12))
            .map(|k| {
                let x = 100.0 * (k + 1) as f64;
                (x, a * x + b)
            })
            .collect();
        let f = fit_linear(&pts).unwrap();
        worst = worst.max((f.slope - a).abs()).max((f.intercept - b).abs());
    }
    Verdict::new(
        worst <= C7_TOL,
        format!("A={:.12} on (100,144),(200,288),(300,432); max coefficient error {worst:.2e}", paper.slope),
    )
}

fn rule_degeneracy() -> Verdict {
    let cases = [
        (Backend::Ann, RuleKind::Hebbian),
        (Backend::Ann, RuleKind::Oja),
        (Backend::Ann, RuleKind::Abcd),
        (Backend::Snn, RuleKind::Hebbian),
        (Backend::Snn, RuleKind::Oja),
        (Backend::Snn, RuleKind::Abcd),
        (Backend::Snn, RuleKind::Stdp),
    ];
    let bits = |net: &plasticlab::network::PlasticNetwork| -> Vec<u64> {
        net.synapses().flat_map(|s| s.weights.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()).collect()
    };
    let mut moved = Vec::new();
    for (backend, rule) in cases {
        for recurrent in [false, true] {
            let spec = NetworkSpec::layered(backend, 4, &[8, 8], 2, recurrent, rule);
            let layout = Layout::for_network(&spec);
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let theta = layout
                .segments
                .iter()
                .flat_map(|s| {
                    let zero = matches!(s.target, ParamTarget::Alpha | ParamTarget::APlus | ParamTarget::AMinus);
                    (0..s.size()).map(|_| if zero { 0.0 } else { rng.random_range(-1.5..1.5) }).collect::<Vec<_>>()
                })
                .collect();
            let mut net = decode_network(&spec, &Genome::new(layout, theta).unwrap()).unwrap();
            let before = bits(&net);
            for _ in 0..1000 {
                let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
                net.step(&obs).unwrap();
            }
            if bits(&net) != before {
                moved.push(format!("{backend:?}/{rule:?}/recurrent={recurrent}"));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = |lo: f64, hi: f64| Array2::from_shape_fn((5, 7), |_| rng.random_range(lo..hi));
    let start = m(-1.0, 1.0);
    let p = AbcdParams {
        a: m(-1.0, 1.0),
        b: Array2::zeros((5, 7)),
        c: Array2::zeros((5, 7)),
        d: Array2::zeros((5, 7)),
        alpha: m(0.0, 0.05),
    };
    let mut w = WeightMatrix::new(start.clone(), ClipBounds::new(-1e6, 1e6).unwrap());
    let mut reference = start;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let pre: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let post: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        abcd_update(&mut w, &p, &pre, &post).unwrap();
        for ((i, j), r) in reference.indexed_iter_mut() {
            *r += p.alpha[(i, j)] * p.a[(i, j)] * post[i] * pre[j];
        }
        worst = worst.max((w.values() - &reference).iter().fold(0.0, |acc: f64, v| acc.max(v.abs())));
    }
    Verdict::new(
        moved.is_empty() && worst <= C8_TOL,
        format!(
            "{} of {} zero-rate networks moved over 1000 steps; ABCD(B=C=D=0) vs Hebbian max err {worst:.1e}",
            moved.len(),
            2 * cases.len()
        ) + &if moved.is_empty() { String::new() } else { format!(" ({})", moved.join(", ")) },
    )
}

fn run_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_plasticlab"))
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

const SMALL: &str = r#"
output_dir = "out"

[network]
backend = "snn"
hidden = [6]

[plasticity]
rule = "stdp"

[es]
population = 8
generations = 3
seed = 5
init_std = 0.3

[train]
horizon = 40

[bench]
horizons = [20, 40]
repeats = 2
eval_episodes = 2
safety_limit = 400
"#;

fn determinism() -> Verdict {
    let runs: Vec<tempfile::TempDir> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &runs {
        let cfg = d.path().join("run.toml");
        std::fs::write(&cfg, SMALL).unwrap();
        let cfg = cfg.to_str().unwrap();
        if !(run_cli(&["train", cfg]) && run_cli(&["sweep", cfg])) {
            return Verdict::new(false, "train or sweep exited with an error");
        }
    }
    let same = |rel: &str| {
        std::fs::read(runs[0].path().join(rel)).unwrap() == std::fs::read(runs[1].path().join(rel)).unwrap()
    };
    let files = ["out/genome.json", "out/history.csv", "out/raw.csv", "out/report.json"];
    let mismatched: Vec<&str> = files.iter().copied().filter(|f| !same(f)).collect();
    Verdict::new(
        mismatched.is_empty(),
        if mismatched.is_empty() {
            format!("byte-identical across reruns: {}", files.join(", "))
        } else {
            format!("differs: {}", mismatched.join(", "))
        },
    )
}

fn cartpole_dynamics() -> Verdict {
    let p = CartPoleParams::default();
    let (s, _) = cartpole_step(&p, &CartPoleState::default(), 1);
    let err = (s.x_dot - 0.195_121_951_219_512_2).abs().max((s.theta_dot + 0.292_682_926_829_268_3).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut mirrored = true;
    for _ in 0..20 {
        let start = CartPoleState {
            x: rng.random_range(-0.05..0.05),
            x_dot: rng.random_range(-0.05..0.05),
            theta: rng.random_range(-0.05..0.05),
            theta_dot: rng.random_range(-0.05..0.05),
        };
        let (mut a, mut b) = (start, start.mirrored());
        for _ in 0..100 {
            let act = usize::from(rng.random_bool(0.5));
            a = cartpole_step(&p, &a, act).0;
            b = cartpole_step(&p, &b, 1 - act).0;
            mirrored &= a == b.mirrored();
        }
    }
    Verdict::new(
        err <= C10_TOL && mirrored,
        format!(
            "x_dot={:.5} theta_dot={:.5} (err {err:.1e}); 20 random 100-step sequences mirror exactly: {mirrored}",
            s.x_dot, s.theta_dot
        ),
    )
}

#[test]
fn acceptance() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("trainability (ANN + Oja, horizon 200)", trainability),
        ("SNN + STDP horizon generalization", snn_generalization),
        ("ANN + Oja horizon fragility sweep", ann_fragility),
        ("STDP online vs pairwise oracle", stdp_oracle),
        ("LIF analytic decay", lif_decay),
        ("ES sanity", es_sanity),
        ("regression exactness", regression_exactness),
        ("rule degeneracy", rule_degeneracy),
        ("train/sweep determinism", determinism),
        ("cart-pole dynamics", cartpole_dynamics),
    ];
    let order = [4, 5, 6, 7, 8, 10, 9, 1, 3, 2];
    let mut failed = Vec::new();
    for n in order {
        let (name, run) = criteria[n - 1];
        let v = run();
        report(n, name, &v);
        if !v.pass {
            failed.push(n);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
