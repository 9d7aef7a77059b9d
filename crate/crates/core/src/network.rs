//! Layered plastic networks with a real-valued (tanh) and a spiking backend.
//!
//! Layer `l` receives `W[l] x[l-1]` and, for recurrent layers, `R[l] x[l](t-1)`
//! where `x[l](t-1)` is the layer's own activity from the previous step. There
//! are no bias terms.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Action, Policy};
use crate::neuron::{
    argmax, decode_rates, DecodeMode, InputCoding, LifParams, MembraneState, NeuronError,
    RateWindow,
};
use crate::plasticity::{stdp_online_update, PlasticityError, RuleKind, SynapseRule, TraceState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network configuration: {0}")]
    Config(String),
    #[error("{what}: expected length {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Plasticity(#[from] PlasticityError),
    #[error(transparent)]
    Neuron(#[from] NeuronError),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

/// Closed weight interval enforced after every update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipBounds {
    min: f64,
    max: f64,
}

impl Default for ClipBounds {
    fn default() -> Self {
        Self { min: -3.0, max: 3.0 }
    }
}

impl ClipBounds {
    pub fn new(min: f64, max: f64) -> Result<Self, NetworkError> {
        if min < max && !min.is_nan() && !max.is_nan() {
            Ok(Self { min, max })
        } else {
            Err(NetworkError::Config(format!(
                "clip bounds need min < max, got [{min}, {max}]"
            )))
        }
    }

    pub fn unbounded() -> Self {
        Self {
            min: f64::NEG_INFINITY,
            max: f64::INFINITY,
        }
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn is_finite(&self) -> bool {
        self.min.is_finite() && self.max.is_finite()
    }

    #[inline]
    pub fn clip(&self, x: f64) -> f64 {
        x.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    values: Array2<f64>,
    bounds: ClipBounds,
}

impl WeightMatrix {
    /// Builds the matrix and clips it into `bounds`.
    pub fn new(values: Array2<f64>, bounds: ClipBounds) -> Self {
        let mut w = Self { values, bounds };
        w.clip();
        w
    }

    /// `(rows, cols)` = `(post, pre)`.
    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn bounds(&self) -> ClipBounds {
        self.bounds
    }

    pub fn clip(&mut self) {
        let b = self.bounds;
        self.values.mapv_inplace(|x| b.clip(x));
    }

    /// Overwrites the entries, keeping shape and bounds.
    pub fn assign(&mut self, values: &Array2<f64>) -> Result<(), NetworkError> {
        if values.dim() != self.values.dim() {
            return Err(NetworkError::Config(format!(
                "cannot assign {:?} values to a {:?} matrix",
                values.dim(),
                self.values.dim()
            )));
        }
        self.values.assign(values);
        self.clip();
        Ok(())
    }

    /// `out = W x` (or `out += W x` when `accumulate`).
    #[inline]
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64], accumulate: bool) {
        for (o, row) in out.iter_mut().zip(self.values.rows()) {
            let s: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            if accumulate {
                *o += s;
            } else {
                *o = s;
            }
        }
    }
}

/// Returns a copy of `w` with every entry moved into its bounds.
pub fn clip_weights(w: &WeightMatrix) -> WeightMatrix {
    let mut out = w.clone();
    out.clip();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    /// Layer of spiking neurons; its activity is the spike vector (or window rate).
    SpikingPassthrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Ann,
    Snn,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Ann => "ann",
            Backend::Snn => "snn",
        }
    }

    pub fn activation(self) -> Activation {
        match self {
            Backend::Ann => Activation::Tanh,
            Backend::Snn => Activation::SpikingPassthrough,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub size: usize,
    pub recurrent: bool,
    pub activation: Activation,
}

/// Spiking-backend settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SnnSettings {
    /// Internal membrane steps per environment step (the rate-window length).
    pub internal_steps: usize,
    pub input_gain: f64,
    pub input_coding: InputCoding,
}

impl Default for SnnSettings {
    fn default() -> Self {
        Self {
            internal_steps: 10,
            input_gain: 20.0,
            input_coding: InputCoding::OnOff,
        }
    }
}

/// Constants shared by every STDP synapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StdpConstants {
    pub tau_plus: f64,
    pub tau_minus: f64,
    /// Evolved amplitudes are `amplitude_scale * |gene|`.
    pub amplitude_scale: f64,
    pub weight_dependence: crate::plasticity::WeightDependence,
    pub trace_decay: crate::plasticity::TraceDecay,
}

impl Default for StdpConstants {
    fn default() -> Self {
        Self {
            tau_plus: 10.0,
            tau_minus: 10.0,
            amplitude_scale: 0.01,
            weight_dependence: Default::default(),
            trace_decay: Default::default(),
        }
    }
}

/// Fully resolved network description: topology plus everything needed to
/// decode a genome into a runnable network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub backend: Backend,
    /// Observation length.
    pub observation_size: usize,
    /// Hidden layers followed by the output layer.
    pub layers: Vec<LayerSpec>,
    pub rule: RuleKind,
    pub stdp: StdpConstants,
    pub clip: ClipBounds,
    pub neuron: LifParams,
    pub snn: SnnSettings,
    pub decode: DecodeMode,
}

impl NetworkSpec {
    /// `observation -> hidden... -> outputs`, every layer sharing the recurrence flag.
    pub fn layered(
        backend: Backend,
        observation_size: usize,
        hidden: &[usize],
        outputs: usize,
        recurrent: bool,
        rule: RuleKind,
    ) -> Self {
        let activation = backend.activation();
        let layers = hidden
            .iter()
            .chain(std::iter::once(&outputs))
            .map(|&size| LayerSpec {
                size,
                recurrent,
                activation,
            })
            .collect();
        Self {
            backend,
            observation_size,
            layers,
            rule,
            stdp: StdpConstants::default(),
            clip: ClipBounds::default(),
            neuron: LifParams::default(),
            snn: SnnSettings::default(),
            decode: DecodeMode::ArgmaxDiscrete,
        }
    }

    /// Width of layer 0: the observation itself for the ANN, the input neurons for the SNN.
    pub fn input_width(&self) -> usize {
        match self.backend {
            Backend::Ann => self.observation_size,
            Backend::Snn => self.snn.input_coding.channels(self.observation_size),
        }
    }

    /// Sizes of layer 0 through the output layer.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(|l| l.size))
            .collect()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.size)
    }

    pub fn is_recurrent(&self) -> bool {
        self.layers.iter().any(|l| l.recurrent)
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        if self.observation_size == 0 {
            return Err(NetworkError::Config("observation size must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(NetworkError::Config("network needs an output layer".into()));
        }
        let expected = self.backend.activation();
        for (i, l) in self.layers.iter().enumerate() {
            if l.size == 0 {
                return Err(NetworkError::Config(format!("layer {} has size 0", i + 1)));
            }
            if l.activation != expected {
                return Err(NetworkError::Config(format!(
                    "layer {} uses {:?}, the {} backend needs {:?}",
                    i + 1,
                    l.activation,
                    self.backend.name(),
                    expected
                )));
            }
        }
        if self.rule == RuleKind::Stdp && self.backend == Backend::Ann {
            return Err(NetworkError::Config(
                "stdp needs spike trains; use the snn backend".into(),
            ));
        }
        if self.rule == RuleKind::Stdp {
            if !(self.stdp.tau_plus > 0.0 && self.stdp.tau_minus > 0.0) {
                return Err(NetworkError::Config("stdp time constants must be positive".into()));
            }
            if self.stdp.weight_dependence == crate::plasticity::WeightDependence::SoftBounds
                && !self.clip.is_finite()
            {
                return Err(NetworkError::Config(
                    "soft-bounds stdp needs finite clip bounds".into(),
                ));
            }
        }
        if self.backend == Backend::Snn {
            self.neuron.validate()?;
            if self.snn.internal_steps == 0 {
                return Err(NetworkError::Config("internal_steps must be positive".into()));
            }
            if !(self.snn.input_gain > 0.0) {
                return Err(NetworkError::Config("input_gain must be positive".into()));
            }
        }
        Ok(())
    }
}

/// One synapse matrix with its rule, traces, and initial values for reset.
#[derive(Debug, Clone, PartialEq)]
pub struct Synapses {
    pub weights: WeightMatrix,
    pub rule: SynapseRule,
    initial: Array2<f64>,
    traces: TraceState,
}

impl Synapses {
    pub fn new(initial: Array2<f64>, bounds: ClipBounds, rule: SynapseRule) -> Self {
        let weights = WeightMatrix::new(initial, bounds);
        let (rows, cols) = weights.shape();
        Self {
            initial: weights.values().clone(),
            weights,
            rule,
            traces: TraceState::new(cols, rows),
        }
    }

    pub fn initial(&self) -> &Array2<f64> {
        &self.initial
    }

    pub fn traces(&self) -> &TraceState {
        &self.traces
    }

    fn reset(&mut self) {
        self.weights.values_mut().assign(&self.initial);
        self.traces.reset();
    }
}

/// Decoded parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub feedforward: (Array2<f64>, SynapseRule),
    pub recurrent: Option<(Array2<f64>, SynapseRule)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub feedforward: Synapses,
    pub recurrent: Option<Synapses>,
}

/// A recorded spike for raster dumps. Layer 0 is the input population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub step: u64,
    pub layer: usize,
    pub neuron: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct SpikingState {
    input_current: Vec<f64>,
    membranes: Vec<MembraneState>,
    spikes: Vec<Vec<f64>>,
    prev_spikes: Vec<Vec<f64>>,
    currents: Vec<Vec<f64>>,
    windows: Vec<RateWindow>,
    step: u64,
    raster: Option<Vec<SpikeEvent>>,
}

impl SpikingState {
    fn new(spec: &NetworkSpec) -> Self {
        let widths = spec.widths();
        let n = spec.snn.internal_steps;
        Self {
            input_current: vec![0.0; widths[0]],
            membranes: widths.iter().map(|&w| MembraneState::new(w, &spec.neuron)).collect(),
            spikes: widths.iter().map(|&w| vec![0.0; w]).collect(),
            prev_spikes: widths.iter().map(|&w| vec![0.0; w]).collect(),
            currents: widths.iter().map(|&w| vec![0.0; w]).collect(),
            windows: widths.iter().map(|&w| RateWindow::new(n, w)).collect(),
            step: 0,
            raster: None,
        }
    }

    fn reset(&mut self, p: &LifParams) {
        for m in &mut self.membranes {
            m.reset(p);
        }
        for v in self
            .spikes
            .iter_mut()
            .chain(self.prev_spikes.iter_mut())
            .chain(self.currents.iter_mut())
        {
            v.fill(0.0);
        }
        self.input_current.fill(0.0);
        for w in &mut self.windows {
            w.clear();
        }
        self.step = 0;
        if let Some(r) = &mut self.raster {
            r.clear();
        }
    }
}

/// Per-step activity of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// `activity[0]` is the network input, `activity[l]` the output of layer `l`.
    /// For the SNN these are window firing rates.
    pub activity: Vec<Vec<f64>>,
    /// Previous-step activity, read by recurrent matrices.
    pub carry: Vec<Vec<f64>>,
    spiking: Option<SpikingState>,
}

impl NetworkState {
    fn new(spec: &NetworkSpec) -> Self {
        let widths = spec.widths();
        Self {
            activity: widths.iter().map(|&w| vec![0.0; w]).collect(),
            carry: widths.iter().map(|&w| vec![0.0; w]).collect(),
            spiking: (spec.backend == Backend::Snn).then(|| SpikingState::new(spec)),
        }
    }

    fn reset(&mut self, spec: &NetworkSpec) {
        for v in self.activity.iter_mut().chain(self.carry.iter_mut()) {
            v.fill(0.0);
        }
        if let Some(s) = &mut self.spiking {
            s.reset(&spec.neuron);
        }
    }

    /// Membrane potentials per population (input first); empty for the ANN.
    pub fn membranes(&self) -> Vec<&[f64]> {
        self.spiking
            .as_ref()
            .map(|s| s.membranes.iter().map(|m| m.potentials()).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlasticNetwork {
    spec: NetworkSpec,
    layers: Vec<Layer>,
    state: NetworkState,
}

impl PlasticNetwork {
    pub fn new(spec: NetworkSpec, params: Vec<LayerParams>) -> Result<Self, NetworkError> {
        spec.validate()?;
        if params.len() != spec.layers.len() {
            return Err(NetworkError::Config(format!(
                "{} layer parameter sets for {} layers",
                params.len(),
                spec.layers.len()
            )));
        }
        let widths = spec.widths();
        let mut layers = Vec::with_capacity(params.len());
        for (l, (lspec, p)) in spec.layers.iter().zip(params).enumerate() {
            let (pre, post) = (widths[l], widths[l + 1]);
            let ff = p.feedforward;
            if ff.0.dim() != (post, pre) {
                return Err(NetworkError::Config(format!(
                    "layer {} feedforward weights {:?}, expected {:?}",
                    l + 1,
                    ff.0.dim(),
                    (post, pre)
                )));
            }
            let recurrent = match (lspec.recurrent, p.recurrent) {
                (true, Some((r, rule))) => {
                    if r.dim() != (post, post) {
                        return Err(NetworkError::Config(format!(
                            "layer {} recurrent weights {:?}, expected {:?}",
                            l + 1,
                            r.dim(),
                            (post, post)
                        )));
                    }
                    Some(Synapses::new(r, spec.clip, rule))
                }
                (false, None) => None,
                (true, None) => {
                    return Err(NetworkError::Config(format!(
                        "layer {} is recurrent but has no recurrent weights",
                        l + 1
                    )))
                }
                (false, Some(_)) => {
                    return Err(NetworkError::Config(format!(
                        "layer {} is feedforward but got recurrent weights",
                        l + 1
                    )))
                }
            };
            layers.push(Layer {
                spec: *lspec,
                feedforward: Synapses::new(ff.0, spec.clip, ff.1),
                recurrent,
            });
        }
        let state = NetworkState::new(&spec);
        Ok(Self { spec, layers, state })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    /// Every synapse matrix, feedforward before recurrent within a layer.
    pub fn synapses(&self) -> impl Iterator<Item = &Synapses> {
        self.layers
            .iter()
            .flat_map(|l| std::iter::once(&l.feedforward).chain(l.recurrent.iter()))
    }

    /// Output-layer activity from the most recent step.
    pub fn outputs(&self) -> &[f64] {
        self.state.activity.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Clears activity, carryover, membranes and traces, and restores initial weights.
    pub fn reset(&mut self) {
        for l in &mut self.layers {
            l.feedforward.reset();
            if let Some(r) = &mut l.recurrent {
                r.reset();
            }
        }
        self.state.reset(&self.spec);
    }

    /// Turns spike recording on or off (SNN only). Recording clears the buffer.
    pub fn record_spikes(&mut self, on: bool) {
        if let Some(s) = &mut self.state.spiking {
            s.raster = on.then(Vec::new);
        }
    }

    pub fn take_spikes(&mut self) -> Vec<SpikeEvent> {
        self.state
            .spiking
            .as_mut()
            .and_then(|s| s.raster.as_mut().map(std::mem::take))
            .unwrap_or_default()
    }

    fn check_observation(&self, obs: &[f64]) -> Result<(), NetworkError> {
        if obs.len() != self.spec.observation_size {
            return Err(NetworkError::Dimension {
                what: "observation",
                expected: self.spec.observation_size,
                found: obs.len(),
            });
        }
        Ok(())
    }

    /// Real-valued forward pass. Stores every layer's activity for the
    /// subsequent plasticity update and returns the output layer.
    pub fn forward_ann(&mut self, obs: &[f64]) -> Result<&[f64], NetworkError> {
        if self.spec.backend != Backend::Ann {
            return Err(NetworkError::Config("forward_ann on a spiking network".into()));
        }
        self.check_observation(obs)?;
        let NetworkState { activity, carry, .. } = &mut self.state;
        activity[0].copy_from_slice(obs);
        for (l, layer) in self.layers.iter().enumerate() {
            let (before, after) = activity.split_at_mut(l + 1);
            let out = &mut after[0];
            layer.feedforward.weights.matvec_into(&before[l], out, false);
            if let Some(r) = &layer.recurrent {
                r.weights.matvec_into(&carry[l + 1], out, true);
            }
            for v in out.iter_mut() {
                *v = v.tanh();
            }
        }
        Ok(self.outputs())
    }

    /// Applies each matrix's rule to the activity of the last forward pass.
    pub fn apply_plasticity(&mut self) -> Result<(), NetworkError> {
        let NetworkState { activity, carry, .. } = &self.state;
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let ff = &mut layer.feedforward;
            ff.rule.apply_activity(&mut ff.weights, &activity[l], &activity[l + 1])?;
            if let Some(r) = &mut layer.recurrent {
                r.rule.apply_activity(&mut r.weights, &carry[l + 1], &activity[l + 1])?;
            }
        }
        Ok(())
    }

    fn roll_carry(&mut self) {
        let NetworkState { activity, carry, .. } = &mut self.state;
        for (c, a) in carry.iter_mut().zip(activity.iter()) {
            c.copy_from_slice(a);
        }
    }

    /// One environment step of the spiking backend: `internal_steps` membrane
    /// updates with STDP after each, then window rates become the layer
    /// activity and rate-based rules fire once. Returns output rates.
    pub fn forward_snn(&mut self, obs: &[f64]) -> Result<&[f64], NetworkError> {
        if self.spec.backend != Backend::Snn {
            return Err(NetworkError::Config("forward_snn on a real-valued network".into()));
        }
        self.check_observation(obs)?;
        let spec = &self.spec;
        let st = self
            .state
            .spiking
            .as_mut()
            .expect("spiking state exists for the snn backend");
        spec.snn
            .input_coding
            .currents_into(obs, spec.snn.input_gain, &mut st.input_current);
        for w in &mut st.windows {
            w.clear();
        }
        let stdp = spec.rule == RuleKind::Stdp;
        for _ in 0..spec.snn.internal_steps {
            std::mem::swap(&mut st.spikes, &mut st.prev_spikes);
            st.membranes[0].step(&spec.neuron, &st.input_current, &mut st.spikes[0])?;
            for (l, layer) in self.layers.iter().enumerate() {
                let cur = &mut st.currents[l + 1];
                layer.feedforward.weights.matvec_into(&st.spikes[l], cur, false);
                if let Some(r) = &layer.recurrent {
                    r.weights.matvec_into(&st.prev_spikes[l + 1], cur, true);
                }
                st.membranes[l + 1].step(&spec.neuron, cur, &mut st.spikes[l + 1])?;
            }
            if stdp {
                for (l, layer) in self.layers.iter_mut().enumerate() {
                    let ff = &mut layer.feedforward;
                    if let SynapseRule::Stdp(p) = &ff.rule {
                        stdp_online_update(
                            &mut ff.weights,
                            p,
                            &mut ff.traces,
                            &st.spikes[l],
                            &st.spikes[l + 1],
                        )?;
                    }
                    if let Some(r) = &mut layer.recurrent {
                        if let SynapseRule::Stdp(p) = &r.rule {
                            stdp_online_update(
                                &mut r.weights,
                                p,
                                &mut r.traces,
                                &st.prev_spikes[l + 1],
                                &st.spikes[l + 1],
                            )?;
                        }
                    }
                }
            }
            for (w, s) in st.windows.iter_mut().zip(&st.spikes) {
                w.push(s);
            }
            if let Some(raster) = &mut st.raster {
                for (layer, s) in st.spikes.iter().enumerate() {
                    for (neuron, _) in s.iter().enumerate().filter(|(_, &v)| v == 1.0) {
                        raster.push(SpikeEvent {
                            step: st.step,
                            layer,
                            neuron,
                        });
                    }
                }
            }
            st.step += 1;
        }
        for (a, w) in self.state.activity.iter_mut().zip(&st.windows) {
            a.copy_from_slice(&w.rates()?);
        }
        if !stdp {
            self.apply_plasticity()?;
        }
        Ok(self.outputs())
    }

    /// Output activity of one full step (forward, plasticity, carryover).
    pub fn step(&mut self, obs: &[f64]) -> Result<&[f64], NetworkError> {
        match self.spec.backend {
            Backend::Ann => {
                self.forward_ann(obs)?;
                self.apply_plasticity()?;
            }
            Backend::Snn => {
                self.forward_snn(obs)?;
            }
        }
        self.roll_carry();
        if !self.outputs().iter().all(|v| v.is_finite()) {
            return Err(NetworkError::NonFinite("network output"));
        }
        Ok(self.outputs())
    }

    pub fn decode(&self, outputs: &[f64]) -> Action {
        match (self.spec.backend, self.spec.decode) {
            (_, DecodeMode::ArgmaxDiscrete) => Action::Discrete(argmax(outputs)),
            (Backend::Ann, DecodeMode::AffineContinuous) => Action::Continuous(outputs.to_vec()),
            (Backend::Snn, mode) => decode_rates(outputs, mode),
        }
    }

    /// `true` when every weight and membrane potential is finite.
    pub fn is_finite(&self) -> bool {
        self.synapses()
            .all(|s| s.weights.values().iter().all(|v| v.is_finite()))
            && self
                .state
                .membranes()
                .iter()
                .all(|m| m.iter().all(|v| v.is_finite()))
    }
}

impl Policy for PlasticNetwork {
    fn reset(&mut self) {
        PlasticNetwork::reset(self);
    }

    fn act(&mut self, observation: &[f64]) -> Result<Action, NetworkError> {
        self.step(observation)?;
        Ok(self.decode(self.outputs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plasticity::HebbParams;
    use ndarray::array;

    fn single_layer(w: Array2<f64>, rule: SynapseRule) -> PlasticNetwork {
        let (out, inp) = w.dim();
        let spec = NetworkSpec::layered(Backend::Ann, inp, &[], out, false, rule.kind());
        PlasticNetwork::new(
            spec,
            vec![LayerParams {
                feedforward: (w, rule),
                recurrent: None,
            }],
        )
        .unwrap()
    }

    #[test]
    fn forward_examples() {
        let mut net = single_layer(Array2::eye(2), SynapseRule::Static);
        assert_eq!(net.forward_ann(&[0.0, 0.0]).unwrap(), &[0.0, 0.0]);
        let out = net.forward_ann(&[10.0, -10.0]).unwrap().to_vec();
        assert!((out[0] - 1.0).abs() < 1e-4 && (out[1] + 1.0).abs() < 1e-4);

        let mut net = single_layer(array![[0.5, 0.5]], SynapseRule::Static);
        let out = net.forward_ann(&[1.0, 1.0]).unwrap()[0];
        assert!((out - 0.761_594_155_955_764_9).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let mut net = single_layer(Array2::eye(2), SynapseRule::Static);
        assert!(matches!(
            net.forward_ann(&[1.0]),
            Err(NetworkError::Dimension { expected: 2, found: 1, .. })
        ));
        assert!(net.forward_snn(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn clip_examples() {
        let w = WeightMatrix {
            values: array![[5.0, 1.5], [-7.0, -3.0]],
            bounds: ClipBounds::default(),
        };
        let c = clip_weights(&w);
        assert_eq!(c.values(), &array![[3.0, 1.5], [-3.0, -3.0]]);
        assert_eq!(clip_weights(&c), c);
        assert!(ClipBounds::new(1.0, 1.0).is_err());
        assert!(ClipBounds::new(2.0, 1.0).is_err());
    }

    #[test]
    fn reset_restores_initial_weights() {
        let rule = SynapseRule::Hebbian(HebbParams {
            alpha: Array2::from_elem((2, 2), 0.3),
        });
        let w0 = array![[0.2, -0.1], [0.4, 0.9]];
        let mut net = single_layer(w0.clone(), rule);
        for k in 0..20 {
            net.step(&[k as f64 * 0.1, 1.0]).unwrap();
        }
        assert_ne!(net.layers()[0].feedforward.weights.values(), &w0);
        net.reset();
        assert_eq!(net.layers()[0].feedforward.weights.values(), &w0);
        assert_eq!(net.forward_ann(&[0.0, 0.0]).unwrap(), &[0.0, 0.0]);
        let once = net.clone();
        net.reset();
        net.reset();
        let mut once = once;
        once.reset();
        assert_eq!(net, once);
    }

    #[test]
    fn recurrent_carryover_feeds_next_step() {
        let spec = NetworkSpec::layered(Backend::Ann, 1, &[], 1, true, RuleKind::None);
        let mut net = PlasticNetwork::new(
            spec,
            vec![LayerParams {
                feedforward: (array![[1.0]], SynapseRule::Static),
                recurrent: Some((array![[2.0]], SynapseRule::Static)),
            }],
        )
        .unwrap();
        let first = net.step(&[0.5]).unwrap()[0];
        assert_eq!(first, 0.5f64.tanh());
        let second = net.step(&[0.5]).unwrap()[0];
        assert_eq!(second, (0.5 + 2.0 * first).tanh());
    }

    #[test]
    fn spec_validation() {
        let spec = NetworkSpec::layered(Backend::Ann, 4, &[3], 2, false, RuleKind::Stdp);
        assert!(spec.validate().is_err());
        let mut spec = NetworkSpec::layered(Backend::Snn, 4, &[3], 2, false, RuleKind::Stdp);
        assert!(spec.validate().is_ok());
        assert_eq!(spec.widths(), vec![8, 3, 2]);
        spec.layers[0].activation = Activation::Tanh;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn snn_rates_and_raster() {
        let mut spec = NetworkSpec::layered(Backend::Snn, 1, &[], 2, false, RuleKind::None);
        spec.snn.input_gain = 1.0;
        let mut net = PlasticNetwork::new(
            spec,
            vec![LayerParams {
                feedforward: (array![[3.0, 0.0], [0.0, 3.0]], SynapseRule::Static),
                recurrent: None,
            }],
        )
        .unwrap();
        net.record_spikes(true);
        let rates = net.step(&[50.0]).unwrap().to_vec();
        assert!(rates[0] > 0.0);
        assert_eq!(rates[1], 0.0);
        assert_eq!(net.decode(&rates), Action::Discrete(0));
        let raster = net.take_spikes();
        assert!(raster.iter().any(|e| e.layer == 0 && e.neuron == 0));
        assert!(raster.iter().all(|e| !(e.layer == 0 && e.neuron == 1)));
        let rates = net.step(&[-50.0]).unwrap().to_vec();
        assert!(rates[1] > 0.0);
    }
}
