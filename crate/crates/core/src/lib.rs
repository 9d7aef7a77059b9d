//! Plastic artificial and spiking neural networks trained with evolution
//! strategies, plus benchmarks for how their behavior holds up beyond the
//! episode length they were trained on.
//!
//! - [`network`]: layered networks with tanh and spiking backends
//! - [`neuron`]: integrate-and-fire membranes, input encoding, rate decoding
//! - [`plasticity`]: Hebbian, Oja, ABCD and trace-based STDP rules
//! - [`genome`]: flat parameter vectors and their layout
//! - [`evolution`]: the ES optimizer and rollout fitness
//! - [`environment`]: cart-pole and the episode runner
//! - [`bench`]: horizon sweeps, lifespan regression, reward curves
//! - [`config`], [`persist`]: run configs and on-disk formats

pub mod bench;
pub mod config;
pub mod environment;
pub mod evolution;
pub mod genome;
pub mod network;
pub mod neuron;
pub mod persist;
pub mod plasticity;

pub use ndarray;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
