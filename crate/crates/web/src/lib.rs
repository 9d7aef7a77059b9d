//! wasm-bindgen bindings for the browser demo in `www/`.
//!
//! Three operations: a LIF membrane trace, the STDP window measured from the
//! online trace rule, and a cart-pole training lab stepped one ES generation
//! at a time.

use plasticlab::environment::{run_episode, CartPole, CartPoleParams, HorizonPolicy};
use plasticlab::evolution::{initial_theta, EsConfig, EvolutionStrategy, RolloutObjective};
use plasticlab::genome::{decode_network, Genome};
use plasticlab::ndarray::arr2;
use plasticlab::network::{Backend, ClipBounds, NetworkSpec, WeightMatrix};
use plasticlab::neuron::{Integration, LifParams, MembraneState};
use plasticlab::plasticity::{stdp_online_update, RuleKind, StdpParams, TraceDecay, TraceState, WeightDependence};
use wasm_bindgen::prelude::*;

/// Membrane potential and spike flag after each of `steps` internal steps
/// under a constant current, interleaved as `[v0, s0, v1, s1, ...]`.
#[wasm_bindgen]
pub fn lif_trace(current: f64, steps: usize, tau_m: f64, v_th: f64, exact: bool) -> Result<Vec<f64>, JsError> {
    let params = LifParams {
        tau_m,
        v_th,
        integration: if exact {
            Integration::ExactExponential
        } else {
            Integration::Euler
        },
        ..LifParams::default()
    };
    params.validate().map_err(|e| JsError::new(&e.to_string()))?;
    let mut m = MembraneState::new(1, &params);
    let mut spike = [0.0];
    let mut out = Vec::with_capacity(2 * steps);
    for _ in 0..steps {
        m.step(&params, &[current], &mut spike)
            .map_err(|e| JsError::new(&e.to_string()))?;
        out.push(m.potentials()[0]);
        out.push(spike[0]);
    }
    Ok(out)
}

/// Weight change of one synapse after a single pre/post pair, for every
/// `dt = t_post - t_pre` in `-span..=span`, produced by the online rule.
#[wasm_bindgen]
pub fn stdp_window(a_plus: f64, a_minus: f64, tau_plus: f64, tau_minus: f64, span: u32) -> Vec<f64> {
    let span = span as i64;
    let params = StdpParams {
        a_plus: arr2(&[[a_plus]]),
        a_minus: arr2(&[[a_minus]]),
        tau_plus,
        tau_minus,
        weight_dependence: WeightDependence::None,
        trace_decay: TraceDecay::Exponential,
    };
    (-span..=span)
        .map(|dt| {
            let mut w = WeightMatrix::new(arr2(&[[0.0]]), ClipBounds::unbounded());
            let mut tr = TraceState::new(1, 1);
            let (t_pre, t_post) = if dt >= 0 { (0, dt) } else { (-dt, 0) };
            for t in 0..=t_pre.max(t_post) {
                let pre = [f64::from(u8::from(t == t_pre))];
                let post = [f64::from(u8::from(t == t_post))];
                stdp_online_update(&mut w, &params, &mut tr, &pre, &post)
                    .expect("1x1 binary inputs are valid");
            }
            w.values()[(0, 0)]
        })
        .collect()
}

fn parse_backend(s: &str) -> Result<Backend, JsError> {
    match s {
        "ann" => Ok(Backend::Ann),
        "snn" => Ok(Backend::Snn),
        _ => Err(JsError::new(&format!("unknown backend `{s}`"))),
    }
}

fn parse_rule(s: &str) -> Result<RuleKind, JsError> {
    match s {
        "none" => Ok(RuleKind::None),
        "hebbian" => Ok(RuleKind::Hebbian),
        "oja" => Ok(RuleKind::Oja),
        "abcd" => Ok(RuleKind::Abcd),
        "stdp" => Ok(RuleKind::Stdp),
        _ => Err(JsError::new(&format!("unknown rule `{s}`"))),
    }
}

type MakeEnv = fn() -> CartPole;

fn cartpole() -> CartPole {
    CartPole::new(CartPoleParams::default())
}

/// ES training on cart-pole, one generation per call.
#[wasm_bindgen]
pub struct CartPoleLab {
    spec: NetworkSpec,
    objective: RolloutObjective<MakeEnv>,
    es: EvolutionStrategy,
}

#[wasm_bindgen]
impl CartPoleLab {
    #[wasm_bindgen(constructor)]
    pub fn new(
        backend: &str,
        rule: &str,
        hidden: usize,
        horizon: u32,
        population: usize,
        seed: u32,
    ) -> Result<CartPoleLab, JsError> {
        let backend = parse_backend(backend)?;
        let spec = NetworkSpec::layered(backend, 4, &[hidden, hidden], 2, false, parse_rule(rule)?);
        spec.validate().map_err(|e| JsError::new(&e.to_string()))?;
        let cfg = EsConfig {
            population,
            generations: usize::MAX,
            seed: u64::from(seed),
            init_std: if backend == Backend::Snn { 0.3 } else { 0.0 },
            ..EsConfig::default()
        };
        let objective = RolloutObjective::new(spec.clone(), cartpole as MakeEnv, u64::from(horizon.max(1)));
        let theta = initial_theta(&cfg, objective.layout.len());
        let es = EvolutionStrategy::new(cfg, theta).map_err(|e| JsError::new(&e.to_string()))?;
        Ok(Self { spec, objective, es })
    }

    /// Runs one generation; returns `{"generation", "mean", "max", "min"}` as JSON.
    pub fn step_generation(&mut self) -> String {
        let s = self.es.step(&self.objective);
        serde_json::json!({
            "generation": s.generation,
            "mean": s.mean,
            "max": s.max,
            "min": s.min,
        })
        .to_string()
    }

    pub fn generation(&self) -> usize {
        self.es.generation()
    }

    pub fn parameter_count(&self) -> usize {
        self.objective.layout.len()
    }

    /// Rolls out the current mean parameters for at most `max_steps` steps and
    /// returns `[x, theta]` per step, flattened.
    pub fn rollout(&self, max_steps: u32, seed: u32) -> Vec<f64> {
        let genome = Genome {
            theta: self.es.theta().to_vec(),
            layout: self.objective.layout.clone(),
        };
        let mut net = decode_network(&self.spec, &genome).expect("lab genomes match their layout");
        let mut env = cartpole();
        let trace = run_episode(&mut net, &mut env, HorizonPolicy::Capped(u64::from(max_steps)), u64::from(seed));
        trace
            .steps
            .iter()
            .flat_map(|s| [s.observation[0], s.observation[2]])
            .collect()
    }
}
