//! Flat evolvable parameter vectors and their mapping onto network matrices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{LayerParams, NetworkError, NetworkSpec, PlasticNetwork};
use crate::plasticity::{AbcdParams, HebbParams, RuleKind, StdpParams, SynapseRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenomeError {
    #[error("genome has {found} parameters, layout needs {expected}")]
    Length { expected: usize, found: usize },
    #[error("layout mismatch at segment {index}: expected {expected}, found {found}")]
    SegmentMismatch {
        index: usize,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Feedforward,
    Recurrent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamTarget {
    Weight,
    Alpha,
    A,
    B,
    C,
    D,
    APlus,
    AMinus,
}

impl ParamTarget {
    fn tag(self) -> &'static str {
        match self {
            ParamTarget::Weight => "weight",
            ParamTarget::Alpha => "alpha",
            ParamTarget::A => "a",
            ParamTarget::B => "b",
            ParamTarget::C => "c",
            ParamTarget::D => "d",
            ParamTarget::APlus => "a_plus",
            ParamTarget::AMinus => "a_minus",
        }
    }

    /// Evolved parameters per synapse, the initial weight first.
    pub fn for_rule(rule: RuleKind) -> &'static [ParamTarget] {
        use ParamTarget::*;
        match rule {
            RuleKind::None => &[Weight],
            RuleKind::Hebbian | RuleKind::Oja => &[Weight, Alpha],
            RuleKind::Abcd => &[Weight, A, B, C, D, Alpha],
            RuleKind::Stdp => &[Weight, APlus, AMinus],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    /// 1-based layer index.
    pub layer: usize,
    pub matrix: MatrixKind,
    pub target: ParamTarget,
    pub rows: usize,
    pub cols: usize,
}

impl Segment {
    pub fn size(&self) -> usize {
        self.rows * self.cols
    }

    fn describe(&self) -> String {
        format!("{} [{}x{}]", self.name, self.rows, self.cols)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub segments: Vec<Segment>,
}

impl Layout {
    pub fn for_network(spec: &NetworkSpec) -> Self {
        let widths = spec.widths();
        let targets = ParamTarget::for_rule(spec.rule);
        let mut segments = Vec::new();
        for (l, layer) in spec.layers.iter().enumerate() {
            let (pre, post) = (widths[l], widths[l + 1]);
            let mut matrices = vec![(MatrixKind::Feedforward, "ff", pre)];
            if layer.recurrent {
                matrices.push((MatrixKind::Recurrent, "rec", post));
            }
            for (matrix, tag, cols) in matrices {
                for &target in targets {
                    segments.push(Segment {
                        name: format!("l{}.{}.{}", l + 1, tag, target.tag()),
                        layer: l + 1,
                        matrix,
                        target,
                        rows: post,
                        cols,
                    });
                }
            }
        }
        Self { segments }
    }

    pub fn len(&self) -> usize {
        self.segments.iter().map(Segment::size).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Names the first segment that differs from `expected`.
    pub fn check_matches(&self, expected: &Layout) -> Result<(), GenomeError> {
        let n = self.segments.len().max(expected.segments.len());
        for index in 0..n {
            let (a, b) = (expected.segments.get(index), self.segments.get(index));
            if a != b {
                let show = |s: Option<&Segment>| s.map_or("<none>".to_string(), Segment::describe);
                return Err(GenomeError::SegmentMismatch {
                    index,
                    expected: show(a),
                    found: show(b),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub theta: Vec<f64>,
    pub layout: Layout,
}

impl Genome {
    pub fn new(layout: Layout, theta: Vec<f64>) -> Result<Self, GenomeError> {
        if theta.len() != layout.len() {
            return Err(GenomeError::Length {
                expected: layout.len(),
                found: theta.len(),
            });
        }
        Ok(Self { theta, layout })
    }

    pub fn zeros(layout: Layout) -> Self {
        let theta = vec![0.0; layout.len()];
        Self { theta, layout }
    }

    /// Splits `theta` into one row-major matrix per segment.
    pub fn unflatten(&self) -> Vec<Array2<f64>> {
        let mut offset = 0;
        self.layout
            .segments
            .iter()
            .map(|s| {
                let m = Array2::from_shape_vec(
                    (s.rows, s.cols),
                    self.theta[offset..offset + s.size()].to_vec(),
                )
                .expect("segment sizes sum to theta length");
                offset += s.size();
                m
            })
            .collect()
    }

    pub fn flatten(layout: Layout, matrices: &[Array2<f64>]) -> Result<Self, GenomeError> {
        if matrices.len() != layout.segments.len() {
            return Err(GenomeError::Length {
                expected: layout.segments.len(),
                found: matrices.len(),
            });
        }
        let mut theta = Vec::with_capacity(layout.len());
        for (index, (s, m)) in layout.segments.iter().zip(matrices).enumerate() {
            if m.dim() != (s.rows, s.cols) {
                return Err(GenomeError::SegmentMismatch {
                    index,
                    expected: s.describe(),
                    found: format!("{:?}", m.dim()),
                });
            }
            theta.extend(m.iter());
        }
        Self::new(layout, theta)
    }
}

fn build_rule(rule: RuleKind, spec: &NetworkSpec, mut params: Vec<Array2<f64>>) -> SynapseRule {
    // `params` follows ParamTarget::for_rule order without the leading weight.
    let mut take = || params.remove(0);
    match rule {
        RuleKind::None => SynapseRule::Static,
        RuleKind::Hebbian => SynapseRule::Hebbian(HebbParams { alpha: take() }),
        RuleKind::Oja => SynapseRule::Oja(HebbParams { alpha: take() }),
        RuleKind::Abcd => SynapseRule::Abcd(AbcdParams {
            a: take(),
            b: take(),
            c: take(),
            d: take(),
            alpha: take(),
        }),
        RuleKind::Stdp => SynapseRule::Stdp(StdpParams {
            a_plus: take().mapv(|a| spec.stdp.amplitude_scale * a.abs()),
            a_minus: take().mapv(|a| spec.stdp.amplitude_scale * a.abs()),
            tau_plus: spec.stdp.tau_plus,
            tau_minus: spec.stdp.tau_minus,
            weight_dependence: spec.stdp.weight_dependence,
            trace_decay: spec.stdp.trace_decay,
        }),
    }
}

/// Builds a fresh network from a genome laid out for `spec`.
///
/// STDP amplitudes are scaled magnitudes; every other rule coefficient is
/// used as evolved.
pub fn decode_network(spec: &NetworkSpec, genome: &Genome) -> Result<PlasticNetwork, GenomeError> {
    genome.layout.check_matches(&Layout::for_network(spec))?;
    let per_matrix = ParamTarget::for_rule(spec.rule).len();
    let mut mats = genome.unflatten().into_iter();
    let mut next_matrix = || -> (Array2<f64>, SynapseRule) {
        let mut group: Vec<Array2<f64>> = mats.by_ref().take(per_matrix).collect();
        let w = group.remove(0);
        (w, build_rule(spec.rule, spec, group))
    };
    let params = spec
        .layers
        .iter()
        .map(|l| {
            let feedforward = next_matrix();
            let recurrent = l.recurrent.then(&mut next_matrix);
            LayerParams {
                feedforward,
                recurrent,
            }
        })
        .collect();
    Ok(PlasticNetwork::new(spec.clone(), params)?)
}
