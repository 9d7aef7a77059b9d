//! Local synaptic update rules.
//!
//! All rules update a [`WeightMatrix`] in place and clip it to its bounds
//! afterwards. Rows index post-synaptic neurons, columns pre-synaptic ones.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::WeightMatrix;
use crate::neuron::{NeuronError, RateWindow};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlasticityError {
    #[error("{what}: expected shape {expected:?}, found {found:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("spike vector entry {value} at index {index} is not binary")]
    NonBinarySpike { index: usize, value: f64 },
    #[error(transparent)]
    Window(#[from] NeuronError),
    #[error("rule {0} needs spike trains and cannot run on real-valued activity")]
    NeedsSpikes(&'static str),
}

/// Which rule a network uses; serialized in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleKind {
    None,
    Hebbian,
    Oja,
    Abcd,
    Stdp,
}

impl RuleKind {
    pub fn name(self) -> &'static str {
        match self {
            RuleKind::None => "none",
            RuleKind::Hebbian => "hebbian",
            RuleKind::Oja => "oja",
            RuleKind::Abcd => "abcd",
            RuleKind::Stdp => "stdp",
        }
    }
}

impl std::fmt::Display for RuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-synapse learning rates for the Hebbian and Oja rules.
#[derive(Debug, Clone, PartialEq)]
pub struct HebbParams {
    pub alpha: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbcdParams {
    pub a: Array2<f64>,
    pub b: Array2<f64>,
    pub c: Array2<f64>,
    pub d: Array2<f64>,
    pub alpha: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightDependence {
    /// Amplitudes independent of the current weight.
    None,
    /// Potentiation scales with `w_max - w`, depression with `w - w_min`.
    #[default]
    SoftBounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TraceDecay {
    /// `x <- x (1 - 1/tau)` per step.
    #[default]
    Euler,
    /// `x <- x exp(-1/tau)` per step; reproduces the pairwise exponential kernel exactly.
    Exponential,
}

impl TraceDecay {
    pub fn factor(self, tau: f64) -> f64 {
        match self {
            TraceDecay::Euler => 1.0 - 1.0 / tau,
            TraceDecay::Exponential => (-1.0 / tau).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StdpParams {
    pub a_plus: Array2<f64>,
    pub a_minus: Array2<f64>,
    pub tau_plus: f64,
    pub tau_minus: f64,
    pub weight_dependence: WeightDependence,
    pub trace_decay: TraceDecay,
}

/// Pre- and post-synaptic traces of one synapse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceState {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl TraceState {
    pub fn new(pre: usize, post: usize) -> Self {
        Self {
            pre: vec![0.0; pre],
            post: vec![0.0; post],
        }
    }

    pub fn reset(&mut self) {
        self.pre.fill(0.0);
        self.post.fill(0.0);
    }
}

/// The rule bound to one synapse matrix, with its evolved coefficients.
#[derive(Debug, Clone, PartialEq)]
pub enum SynapseRule {
    Static,
    Hebbian(HebbParams),
    Oja(HebbParams),
    Abcd(AbcdParams),
    Stdp(StdpParams),
}

impl SynapseRule {
    pub fn kind(&self) -> RuleKind {
        match self {
            SynapseRule::Static => RuleKind::None,
            SynapseRule::Hebbian(_) => RuleKind::Hebbian,
            SynapseRule::Oja(_) => RuleKind::Oja,
            SynapseRule::Abcd(_) => RuleKind::Abcd,
            SynapseRule::Stdp(_) => RuleKind::Stdp,
        }
    }

    /// Applies an activity-based rule given real-valued (or rate) pre and post vectors.
    pub fn apply_activity(
        &self,
        w: &mut WeightMatrix,
        pre: &[f64],
        post: &[f64],
    ) -> Result<(), PlasticityError> {
        match self {
            SynapseRule::Static => Ok(()),
            SynapseRule::Hebbian(p) => hebb_update(w, &p.alpha, pre, post),
            SynapseRule::Oja(p) => oja_update(w, &p.alpha, pre, post),
            SynapseRule::Abcd(p) => abcd_update(w, p, pre, post),
            SynapseRule::Stdp(_) => Err(PlasticityError::NeedsSpikes("stdp")),
        }
    }
}

fn check_shapes(
    w: &WeightMatrix,
    param: &Array2<f64>,
    what: &'static str,
    pre: usize,
    post: usize,
) -> Result<(), PlasticityError> {
    let shape = w.shape();
    if param.dim() != shape {
        return Err(PlasticityError::Shape {
            what,
            expected: shape,
            found: param.dim(),
        });
    }
    if (post, pre) != shape {
        return Err(PlasticityError::Shape {
            what: "activity (post, pre)",
            expected: shape,
            found: (post, pre),
        });
    }
    Ok(())
}

/// Linear Hebbian rule: `W <- (1 - alpha) W + alpha (post pre^T)`.
pub fn hebb_update(
    w: &mut WeightMatrix,
    alpha: &Array2<f64>,
    pre: &[f64],
    post: &[f64],
) -> Result<(), PlasticityError> {
    check_shapes(w, alpha, "alpha", pre.len(), post.len())?;
    let bounds = w.bounds();
    Zip::indexed(w.values_mut()).and(alpha).for_each(|(i, j), wij, &a| {
        *wij = bounds.clip((1.0 - a) * *wij + a * post[i] * pre[j]);
    });
    Ok(())
}

/// Oja's rule in matrix form, `W <- (1 - a) W + a (post (pre - W^T post)^T)`:
/// each presynaptic input is compared against its reconstruction from every
/// postsynaptic neuron, using the weights from before the update.
pub fn oja_update(
    w: &mut WeightMatrix,
    alpha: &Array2<f64>,
    pre: &[f64],
    post: &[f64],
) -> Result<(), PlasticityError> {
    check_shapes(w, alpha, "alpha", pre.len(), post.len())?;
    let bounds = w.bounds();
    let residual: Vec<f64> = w
        .values()
        .columns()
        .into_iter()
        .zip(pre)
        .map(|(col, &x)| x - col.iter().zip(post).map(|(wk, yk)| wk * yk).sum::<f64>())
        .collect();
    Zip::indexed(w.values_mut()).and(alpha).for_each(|(i, j), wij, &a| {
        *wij = bounds.clip((1.0 - a) * *wij + a * post[i] * residual[j]);
    });
    Ok(())
}

/// Oja's rule on the mean firing rates of two full spike windows.
pub fn oja_update_snn(
    w: &mut WeightMatrix,
    eta: &Array2<f64>,
    pre: &RateWindow,
    post: &RateWindow,
) -> Result<(), PlasticityError> {
    let pre_rates = pre.rates()?;
    let post_rates = post.rates()?;
    oja_update(w, eta, &pre_rates, &post_rates)
}

/// ABCD rule: `W <- W + alpha (A post pre^T + B post 1^T + C 1 pre^T + D)`.
pub fn abcd_update(
    w: &mut WeightMatrix,
    p: &AbcdParams,
    pre: &[f64],
    post: &[f64],
) -> Result<(), PlasticityError> {
    for (m, what) in [(&p.a, "A"), (&p.b, "B"), (&p.c, "C"), (&p.d, "D")] {
        check_shapes(w, m, what, pre.len(), post.len())?;
    }
    check_shapes(w, &p.alpha, "alpha", pre.len(), post.len())?;
    let bounds = w.bounds();
    Zip::indexed(w.values_mut())
        .and(&p.a)
        .and(&p.b)
        .and(&p.c)
        .and(&p.d)
        .for_each(|(i, j), wij, &a, &b, &c, &d| {
            let delta = a * post[i] * pre[j] + b * post[i] + c * pre[j] + d;
            *wij = bounds.clip(*wij + p.alpha[(i, j)] * delta);
        });
    Ok(())
}

fn check_binary(spikes: &[f64]) -> Result<(), PlasticityError> {
    match spikes.iter().position(|&s| s != 0.0 && s != 1.0) {
        Some(index) => Err(PlasticityError::NonBinarySpike {
            index,
            value: spikes[index],
        }),
        None => Ok(()),
    }
}

/// One internal step of trace-based STDP with all-to-all pairing.
///
/// Traces decay, pre traces jump by one on pre spikes, spiking post neurons
/// potentiate by their pre traces, spiking pre neurons depress by the post
/// traces of earlier post spikes, and finally post traces jump by one.
/// Coincident pre/post spikes therefore count as potentiation only.
pub fn stdp_online_update(
    w: &mut WeightMatrix,
    p: &StdpParams,
    tr: &mut TraceState,
    pre_spikes: &[f64],
    post_spikes: &[f64],
) -> Result<(), PlasticityError> {
    check_shapes(w, &p.a_plus, "a_plus", pre_spikes.len(), post_spikes.len())?;
    check_shapes(w, &p.a_minus, "a_minus", pre_spikes.len(), post_spikes.len())?;
    check_binary(pre_spikes)?;
    check_binary(post_spikes)?;
    debug_assert_eq!(tr.pre.len(), pre_spikes.len());
    debug_assert_eq!(tr.post.len(), post_spikes.len());

    let dp = p.trace_decay.factor(p.tau_plus);
    let dm = p.trace_decay.factor(p.tau_minus);
    for (x, &s) in tr.pre.iter_mut().zip(pre_spikes) {
        *x = *x * dp + s;
    }
    for y in tr.post.iter_mut() {
        *y *= dm;
    }

    let bounds = w.bounds();
    let (lo, hi) = (bounds.min(), bounds.max());
    let soft = p.weight_dependence == WeightDependence::SoftBounds;
    let values = w.values_mut();
    let cols = values.ncols();

    for (i, _) in post_spikes.iter().enumerate().filter(|(_, &s)| s == 1.0) {
        for j in 0..cols {
            let x = tr.pre[j];
            if x == 0.0 {
                continue;
            }
            let wij = &mut values[(i, j)];
            let amp = p.a_plus[(i, j)];
            *wij += if soft {
                (amp * x).min(1.0) * (hi - *wij)
            } else {
                amp * x
            };
        }
    }
    for (j, _) in pre_spikes.iter().enumerate().filter(|(_, &s)| s == 1.0) {
        for (i, &y) in tr.post.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            let wij = &mut values[(i, j)];
            let amp = p.a_minus[(i, j)];
            *wij -= if soft {
                (amp * y).min(1.0) * (*wij - lo)
            } else {
                amp * y
            };
        }
    }
    for (y, &s) in tr.post.iter_mut().zip(post_spikes) {
        *y += s;
    }
    w.clip();
    Ok(())
}

/// Scalar pairwise STDP window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdpKernel {
    pub a_plus: f64,
    pub a_minus: f64,
    pub tau_plus: f64,
    pub tau_minus: f64,
}

impl StdpKernel {
    /// `P(x)` for `x = t_post - t_pre`.
    pub fn eval(&self, x: f64) -> f64 {
        if x >= 0.0 {
            self.a_plus * (-x / self.tau_plus).exp()
        } else {
            -self.a_minus * (x / self.tau_minus).exp()
        }
    }
}

/// Total weight change of one synapse summed over every pre/post spike pair.
pub fn stdp_bruteforce(pre_times: &[i64], post_times: &[i64], kernel: &StdpKernel) -> f64 {
    let mut total = 0.0;
    for &tp in pre_times {
        for &tq in post_times {
            total += kernel.eval((tq - tp) as f64);
        }
    }
    total
}
