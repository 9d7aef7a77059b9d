//! Control environments and the episode runner.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::NetworkError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("step called on a terminal environment; reset first")]
    SteppedTerminal,
    #[error("action {0:?} is not valid for this environment")]
    InvalidAction(Action),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

impl ActionSpace {
    /// Output-layer width needed to drive this action space.
    pub fn outputs(self) -> usize {
        match self {
            ActionSpace::Discrete(n) | ActionSpace::Continuous(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// Anything with an observation vector, an action space and a scalar reward.
/// Continuous-control tasks (e.g. a physics-engine quadruped) plug in here.
pub trait Environment: Send {
    fn observation_size(&self) -> usize;
    fn action_space(&self) -> ActionSpace;
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    fn step(&mut self, action: &Action) -> Result<EnvStep, EnvError>;
    fn is_terminal(&self) -> bool;
    /// Fitness assigned to an episode aborted by numeric blowup.
    fn min_return(&self) -> f64 {
        0.0
    }
}

/// An agent driven step by step.
pub trait Policy {
    fn reset(&mut self);
    fn act(&mut self, observation: &[f64]) -> Result<Action, NetworkError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Half the pole length.
    pub half_length: f64,
    pub force: f64,
    pub dt: f64,
    pub theta_limit_deg: f64,
    pub x_limit: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            theta_limit_deg: 12.0,
            x_limit: 2.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPoleState {
    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn mirrored(self) -> Self {
        Self {
            x: -self.x,
            x_dot: -self.x_dot,
            theta: -self.theta,
            theta_dot: -self.theta_dot,
        }
    }
}

impl CartPoleParams {
    pub fn theta_limit(&self) -> f64 {
        self.theta_limit_deg.to_radians()
    }

    pub fn is_terminal(&self, s: &CartPoleState) -> bool {
        s.theta.abs() > self.theta_limit() || s.x.abs() > self.x_limit
    }

    /// `(x_acc, theta_acc)` for an applied horizontal force.
    pub fn accelerations(&self, s: &CartPoleState, force: f64) -> (f64, f64) {
        let total = self.mass_cart + self.mass_pole;
        let pml = self.mass_pole * self.half_length;
        let (sin, cos) = s.theta.sin_cos();
        let temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.half_length * (4.0 / 3.0 - self.mass_pole * cos * cos / total));
        let x_acc = temp - pml * theta_acc * cos / total;
        (x_acc, theta_acc)
    }

    /// One explicit Euler step of length `dt` under `force`.
    pub fn integrate(&self, s: &CartPoleState, force: f64, dt: f64) -> CartPoleState {
        let (x_acc, theta_acc) = self.accelerations(s, force);
        CartPoleState {
            x: s.x + dt * s.x_dot,
            x_dot: s.x_dot + dt * x_acc,
            theta: s.theta + dt * s.theta_dot,
            theta_dot: s.theta_dot + dt * theta_acc,
        }
    }

    /// Mechanical energy (cart plus uniform rod), zero potential at the pivot height.
    pub fn energy(&self, s: &CartPoleState) -> f64 {
        let (m, l) = (self.mass_pole, self.half_length);
        let total = self.mass_cart + m;
        0.5 * total * s.x_dot * s.x_dot
            + m * l * s.x_dot * s.theta_dot * s.theta.cos()
            + 0.5 * (4.0 / 3.0) * m * l * l * s.theta_dot * s.theta_dot
            + m * self.gravity * l * s.theta.cos()
    }
}

/// Pure transition: action 0 pushes left, 1 pushes right. Non-terminal
/// successor states earn +1; the terminating step earns 0.
pub fn cartpole_step(
    params: &CartPoleParams,
    state: &CartPoleState,
    action: usize,
) -> (CartPoleState, EnvStep) {
    let force = if action == 1 { params.force } else { -params.force };
    let next = params.integrate(state, force, params.dt);
    let terminal = params.is_terminal(&next);
    let step = EnvStep {
        observation: next.to_vec(),
        reward: if terminal { 0.0 } else { 1.0 },
        terminal,
    };
    (next, step)
}

/// Initial state with each component uniform in `[-0.05, 0.05]`.
pub fn reset_state(seed: u64) -> CartPoleState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = || rng.random_range(-0.05..=0.05);
    CartPoleState {
        x: u(),
        x_dot: u(),
        theta: u(),
        theta_dot: u(),
    }
}

#[derive(Debug, Clone)]
pub struct CartPole {
    pub params: CartPoleParams,
    state: CartPoleState,
    terminal: bool,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        Self {
            params,
            state: CartPoleState::default(),
            terminal: false,
        }
    }

    pub fn state(&self) -> CartPoleState {
        self.state
    }

    /// Places the system in `state`; a state past the limits is terminal at once.
    pub fn set_state(&mut self, state: CartPoleState) {
        self.state = state;
        self.terminal = self.params.is_terminal(&state);
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new(CartPoleParams::default())
    }
}

impl Environment for CartPole {
    fn observation_size(&self) -> usize {
        4
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(2)
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.set_state(reset_state(seed));
        self.state.to_vec()
    }

    fn step(&mut self, action: &Action) -> Result<EnvStep, EnvError> {
        if self.terminal {
            return Err(EnvError::SteppedTerminal);
        }
        let a = match action {
            Action::Discrete(a @ (0 | 1)) => *a,
            other => return Err(EnvError::InvalidAction(other.clone())),
        };
        let (next, step) = cartpole_step(&self.params, &self.state, a);
        self.state = next;
        self.terminal = step.terminal;
        Ok(step)
    }

    fn is_terminal(&self) -> bool {
        self.terminal
    }
}

/// Episode length limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonPolicy {
    /// Training time horizon.
    Capped(u64),
    /// Runs until failure, or until the safety limit is hit.
    Uncapped { safety_limit: u64 },
}

pub const DEFAULT_SAFETY_LIMIT: u64 = 100_000;
pub const MAX_SAFETY_LIMIT: u64 = 10_000_000;

impl HorizonPolicy {
    pub fn uncapped() -> Self {
        HorizonPolicy::Uncapped {
            safety_limit: DEFAULT_SAFETY_LIMIT,
        }
    }

    pub fn limit(self) -> u64 {
        match self {
            HorizonPolicy::Capped(t) => t,
            HorizonPolicy::Uncapped { safety_limit } => safety_limit,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Terminal,
    /// Reached the training horizon.
    Horizon,
    /// Reached the safety limit of an uncapped run.
    SafetyLimit,
    /// Activity or weights stopped being finite.
    Blowup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub observation: Vec<f64>,
    pub action: Action,
    pub reward: f64,
    pub cumulative_reward: f64,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub length: u64,
    pub total_reward: f64,
    pub stop: StopReason,
    /// Diagnostic when `stop` is `Blowup`.
    pub error: Option<String>,
}

impl EpisodeSummary {
    pub fn blowup(&self) -> bool {
        self.stop == StopReason::Blowup
    }

    pub fn censored(&self) -> bool {
        self.stop == StopReason::SafetyLimit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub steps: Vec<TraceStep>,
    pub summary: EpisodeSummary,
}

impl EpisodeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn cumulative(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cumulative_reward).collect()
    }

    /// CSV with columns `step,reward,cumulative_reward,terminal`, preceded by
    /// any `# ` comment lines given in `header`.
    pub fn write_csv<W: Write>(&self, out: W, header: &[String]) -> std::io::Result<()> {
        let mut out = out;
        for line in header {
            writeln!(out, "# {line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "reward", "cumulative_reward", "terminal"])?;
        for (i, s) in self.steps.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                s.reward.to_string(),
                s.cumulative_reward.to_string(),
                s.terminal.to_string(),
            ])?;
        }
        w.flush()
    }
}

fn run_loop<P: Policy + ?Sized, E: Environment + ?Sized>(
    policy: &mut P,
    env: &mut E,
    horizon: HorizonPolicy,
    seed: u64,
    mut record: impl FnMut(&[f64], &Action, &EnvStep, f64),
) -> EpisodeSummary {
    policy.reset();
    let mut obs = env.reset(seed);
    let limit = horizon.limit();
    let mut length = 0;
    let mut total = 0.0;
    let finish = |stop, length, total, error| EpisodeSummary {
        length,
        total_reward: total,
        stop,
        error,
    };
    if env.is_terminal() {
        return finish(StopReason::Terminal, 0, 0.0, None);
    }
    while length < limit {
        let action = match policy.act(&obs) {
            Ok(a) => a,
            Err(e) => return finish(StopReason::Blowup, length, total, Some(e.to_string())),
        };
        let step = match env.step(&action) {
            Ok(s) => s,
            Err(e) => return finish(StopReason::Blowup, length, total, Some(e.to_string())),
        };
        length += 1;
        total += step.reward;
        record(&obs, &action, &step, total);
        if step.terminal {
            return finish(StopReason::Terminal, length, total, None);
        }
        obs = step.observation;
    }
    let stop = match horizon {
        HorizonPolicy::Capped(_) => StopReason::Horizon,
        HorizonPolicy::Uncapped { .. } => StopReason::SafetyLimit,
    };
    finish(stop, length, total, None)
}

/// Resets policy and environment, then alternates act/step until a terminal
/// state or the horizon, recording every step.
pub fn run_episode<P: Policy + ?Sized, E: Environment + ?Sized>(
    policy: &mut P,
    env: &mut E,
    horizon: HorizonPolicy,
    seed: u64,
) -> EpisodeTrace {
    let mut steps = Vec::new();
    let summary = run_loop(policy, env, horizon, seed, |obs, action, step, total| {
        steps.push(TraceStep {
            observation: obs.to_vec(),
            action: action.clone(),
            reward: step.reward,
            cumulative_reward: total,
            terminal: step.terminal,
        })
    });
    EpisodeTrace { steps, summary }
}

/// Same loop as [`run_episode`] without keeping per-step records.
pub fn run_lifespan<P: Policy + ?Sized, E: Environment + ?Sized>(
    policy: &mut P,
    env: &mut E,
    horizon: HorizonPolicy,
    seed: u64,
) -> EpisodeSummary {
    run_loop(policy, env, horizon, seed, |_, _, _, _| {})
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(usize);

    impl Policy for Fixed {
        fn reset(&mut self) {}
        fn act(&mut self, _: &[f64]) -> Result<Action, NetworkError> {
            Ok(Action::Discrete(self.0))
        }
    }

    /// Never terminates; +1 per step; ends after `end` steps if given.
    struct Stub {
        end: Option<u64>,
        t: u64,
    }

    impl Environment for Stub {
        fn observation_size(&self) -> usize {
            1
        }
        fn action_space(&self) -> ActionSpace {
            ActionSpace::Discrete(2)
        }
        fn reset(&mut self, _: u64) -> Vec<f64> {
            self.t = 0;
            vec![0.0]
        }
        fn step(&mut self, _: &Action) -> Result<EnvStep, EnvError> {
            self.t += 1;
            Ok(EnvStep {
                observation: vec![self.t as f64],
                reward: 1.0,
                terminal: Some(self.t) == self.end,
            })
        }
        fn is_terminal(&self) -> bool {
            Some(self.t) == self.end
        }
    }

    #[test]
    fn one_step_from_rest() {
        let p = CartPoleParams::default();
        let (s, step) = cartpole_step(&p, &CartPoleState::default(), 1);
        assert!((s.x_dot - 0.195_121_951_2).abs() < 1e-6);
        assert!((s.theta_dot + 0.292_682_926_8).abs() < 1e-6);
        assert_eq!(s.x, 0.0);
        assert_eq!(s.theta, 0.0);
        assert_eq!(step.reward, 1.0);
        assert!(!step.terminal);
    }

    #[test]
    fn mirrored_actions_mirror_trajectory() {
        let p = CartPoleParams::default();
        let (mut a, mut b) = (CartPoleState::default(), CartPoleState::default());
        for _ in 0..50 {
            a = cartpole_step(&p, &a, 1).0;
            b = cartpole_step(&p, &b, 0).0;
            assert_eq!(a, b.mirrored());
        }
    }

    #[test]
    fn past_limit_is_terminal_at_entry() {
        let mut env = CartPole::default();
        env.set_state(CartPoleState {
            theta: 13f64.to_radians(),
            ..Default::default()
        });
        assert!(env.is_terminal());
        assert_eq!(env.step(&Action::Discrete(1)), Err(EnvError::SteppedTerminal));
        env.set_state(CartPoleState {
            x: 2.5,
            ..Default::default()
        });
        assert!(env.is_terminal());
    }

    #[test]
    fn invalid_action() {
        let mut env = CartPole::default();
        env.reset(0);
        assert!(env.step(&Action::Discrete(2)).is_err());
        assert!(env.step(&Action::Continuous(vec![1.0])).is_err());
    }

    #[test]
    fn reset_distribution() {
        assert_eq!(reset_state(17), reset_state(17));
        let mut mean = [0.0; 4];
        for seed in 0..1000 {
            let s = reset_state(seed).to_vec();
            for (m, v) in mean.iter_mut().zip(&s) {
                assert!(v.abs() <= 0.05);
                *m += v / 1000.0;
            }
        }
        assert!(mean.iter().all(|m| m.abs() < 0.01), "{mean:?}");
    }

    #[test]
    fn capped_and_terminal_lengths() {
        let mut env = Stub { end: None, t: 0 };
        let tr = run_episode(&mut Fixed(0), &mut env, HorizonPolicy::Capped(100), 0);
        assert_eq!(tr.len(), 100);
        assert_eq!(tr.summary.stop, StopReason::Horizon);
        assert_eq!(tr.cumulative(), (1..=100).map(f64::from).collect::<Vec<_>>());

        let mut env = Stub { end: Some(7), t: 0 };
        let tr = run_episode(&mut Fixed(0), &mut env, HorizonPolicy::Capped(100), 0);
        assert_eq!(tr.len(), 7);
        assert_eq!(tr.summary.stop, StopReason::Terminal);

        let mut env = Stub { end: None, t: 0 };
        let s = run_lifespan(
            &mut Fixed(0),
            &mut env,
            HorizonPolicy::Uncapped { safety_limit: 250 },
            0,
        );
        assert_eq!(s.length, 250);
        assert!(s.censored());
    }

    #[test]
    fn horizon_one() {
        let mut env = CartPole::default();
        let tr = run_episode(&mut Fixed(0), &mut env, HorizonPolicy::Capped(1), 3);
        assert_eq!(tr.len(), 1);
    }

    #[test]
    fn trace_csv_layout() {
        let mut env = Stub { end: Some(2), t: 0 };
        let tr = run_episode(&mut Fixed(1), &mut env, HorizonPolicy::Capped(5), 0);
        let mut buf = Vec::new();
        tr.write_csv(&mut buf, &["tool x".into()]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "# tool x\nstep,reward,cumulative_reward,terminal\n1,1,1,false\n2,1,2,true\n"
        );
    }
}
