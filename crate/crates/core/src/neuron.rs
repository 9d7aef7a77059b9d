//! Integrate-and-fire neuron backends, observation encoding, and rate decoding.
//!
//! Time is discrete with a unit internal step. The leaky membrane follows
//! `tau_m dV/dt = R_m I - (V - v_rest)`, the perfect integrator drops the leak
//! term. A neuron whose potential reaches `v_th` emits a spike and restarts
//! from `v_rest` on the next step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::Action;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuronError {
    #[error("non-finite input current {value} at neuron {neuron}")]
    NonFiniteCurrent { neuron: usize, value: f64 },
    #[error("current length {found} does not match neuron count {expected}")]
    Length { expected: usize, found: usize },
    #[error("rate window holds {filled} of {len} steps")]
    WindowNotFull { filled: usize, len: usize },
    #[error("invalid neuron parameters: {0}")]
    InvalidParams(String),
}

/// How a membrane step is discretised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Integration {
    /// Forward Euler with unit step.
    #[default]
    Euler,
    /// Exact solution of the leak ODE for a current held constant over the step.
    ExactExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    pub tau_m: f64,
    pub r_m: f64,
    pub v_rest: f64,
    pub v_th: f64,
    /// `false` gives the perfect (non-leaky) integrate-and-fire neuron.
    pub leaky: bool,
    pub integration: Integration,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            tau_m: 10.0,
            r_m: 10.0,
            v_rest: 0.0,
            v_th: 1.0,
            leaky: true,
            integration: Integration::Euler,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<(), NeuronError> {
        if !(self.tau_m > 0.0 && self.tau_m.is_finite()) {
            return Err(NeuronError::InvalidParams(format!(
                "tau_m must be positive, got {}",
                self.tau_m
            )));
        }
        if !(self.v_th > self.v_rest) {
            return Err(NeuronError::InvalidParams(format!(
                "v_th ({}) must exceed v_rest ({})",
                self.v_th, self.v_rest
            )));
        }
        if !self.r_m.is_finite() {
            return Err(NeuronError::InvalidParams("r_m must be finite".into()));
        }
        Ok(())
    }

    /// Sub-threshold potential after one step from `v` under current `i`.
    #[inline]
    pub fn integrate(&self, v: f64, i: f64) -> f64 {
        let drive = self.r_m * i;
        match (self.leaky, self.integration) {
            (false, _) => v + drive / self.tau_m,
            (true, Integration::Euler) => v + (drive - (v - self.v_rest)) / self.tau_m,
            (true, Integration::ExactExponential) => {
                let v_inf = self.v_rest + drive;
                v_inf + (v - v_inf) * (-1.0 / self.tau_m).exp()
            }
        }
    }
}

/// Membrane potentials of one population of neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneState {
    v: Vec<f64>,
    last_spike: Vec<Option<u64>>,
    step: u64,
}

impl MembraneState {
    pub fn new(size: usize, params: &LifParams) -> Self {
        Self {
            v: vec![params.v_rest; size],
            last_spike: vec![None; size],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn potentials(&self) -> &[f64] {
        &self.v
    }

    pub fn potentials_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    /// Most recent spike step per neuron; `None` if it never fired.
    pub fn last_spikes(&self) -> &[Option<u64>] {
        &self.last_spike
    }

    /// Number of steps taken since construction or the last reset.
    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn reset(&mut self, params: &LifParams) {
        self.v.fill(params.v_rest);
        self.last_spike.fill(None);
        self.step = 0;
    }

    /// Advances every neuron by one internal step. `spikes` receives exactly
    /// 0.0 or 1.0 per neuron; the return value is the spike count.
    pub fn step(
        &mut self,
        params: &LifParams,
        current: &[f64],
        spikes: &mut [f64],
    ) -> Result<usize, NeuronError> {
        if current.len() != self.v.len() {
            return Err(NeuronError::Length {
                expected: self.v.len(),
                found: current.len(),
            });
        }
        debug_assert_eq!(spikes.len(), self.v.len());
        let mut count = 0;
        for (n, ((v, &i), s)) in self.v.iter_mut().zip(current).zip(spikes.iter_mut()).enumerate() {
            if !i.is_finite() {
                return Err(NeuronError::NonFiniteCurrent { neuron: n, value: i });
            }
            let next = params.integrate(*v, i);
            if next >= params.v_th {
                *v = params.v_rest;
                *s = 1.0;
                self.last_spike[n] = Some(self.step);
                count += 1;
            } else {
                *v = next;
                *s = 0.0;
            }
        }
        self.step += 1;
        Ok(count)
    }
}

/// Scales an observation into an injected current. The same current is held
/// for every internal step of an environment step.
pub fn encode_observation(obs: &[f64], gain: f64) -> Vec<f64> {
    obs.iter().map(|o| gain * o).collect()
}

/// How encoded currents map onto input neurons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InputCoding {
    /// One input neuron per observation component, driven by the signed current.
    Direct,
    /// Two input neurons per component: the first receives the positive part of
    /// the current, the second the magnitude of the negative part.
    #[default]
    OnOff,
}

impl InputCoding {
    pub fn channels(self, observation_size: usize) -> usize {
        match self {
            InputCoding::Direct => observation_size,
            InputCoding::OnOff => 2 * observation_size,
        }
    }

    /// Writes the input-neuron currents for `obs` into `out`.
    pub fn currents_into(self, obs: &[f64], gain: f64, out: &mut [f64]) {
        let n = obs.len();
        match self {
            InputCoding::Direct => {
                for (o, &x) in out.iter_mut().zip(obs) {
                    *o = gain * x;
                }
            }
            InputCoding::OnOff => {
                for (k, &x) in obs.iter().enumerate() {
                    let c = gain * x;
                    out[k] = c.max(0.0);
                    out[n + k] = (-c).max(0.0);
                }
            }
        }
    }
}

/// Spike counts for a tumbling window of `len` internal steps.
#[derive(Debug, Clone, PartialEq)]
pub struct RateWindow {
    len: usize,
    filled: usize,
    counts: Vec<u32>,
}

impl RateWindow {
    pub fn new(len: usize, size: usize) -> Self {
        assert!(len >= 1, "rate window length must be positive");
        Self {
            len,
            filled: 0,
            counts: vec![0; size],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.len
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn clear(&mut self) {
        self.filled = 0;
        self.counts.fill(0);
    }

    /// Records one binary spike vector. Pushing into a full window starts a new one.
    pub fn push(&mut self, spikes: &[f64]) {
        debug_assert_eq!(spikes.len(), self.counts.len());
        if self.is_full() {
            self.clear();
        }
        for (c, &s) in self.counts.iter_mut().zip(spikes) {
            if s != 0.0 {
                *c += 1;
            }
        }
        self.filled += 1;
    }

    /// Mean firing rate per neuron over the window, in `[0, 1]`.
    pub fn rates(&self) -> Result<Vec<f64>, NeuronError> {
        if !self.is_full() {
            return Err(NeuronError::WindowNotFull {
                filled: self.filled,
                len: self.len,
            });
        }
        let n = self.len as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    #[default]
    ArgmaxDiscrete,
    AffineContinuous,
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn decode_rates(rates: &[f64], mode: DecodeMode) -> Action {
    match mode {
        DecodeMode::ArgmaxDiscrete => Action::Discrete(argmax(rates)),
        DecodeMode::AffineContinuous => {
            Action::Continuous(rates.iter().map(|r| 2.0 * r - 1.0).collect())
        }
    }
}

pub fn decode_action(window: &RateWindow, mode: DecodeMode) -> Result<Action, NeuronError> {
    Ok(decode_rates(&window.rates()?, mode))
}
