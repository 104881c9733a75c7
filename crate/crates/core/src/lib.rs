//! Driving-event characterization from 3-axis accelerometer windows.
//!
//! The pipeline slices labeled sessions into overlapping windows, trains a
//! denoising LSTM auto-encoder to synthesize a ten-fold augmented corpus,
//! classifies events with an MLP or a ConvLSTM, and refines the classifier
//! output with a prior-knowledge-input (PKI) network that sees both the
//! features and the base prediction.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which the pipeline uses throughout.

pub mod autoencoder;
pub mod checkpoint;
pub mod classifiers;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod pki;
pub mod scalar;
pub mod seed;
pub mod signal;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = nn::Tensor<f64>;
pub type ParameterSet = nn::ParameterSet<f64>;
pub type Gradients = nn::Gradients<f64>;
pub type CategoryDistribution = classifiers::CategoryDistribution<f64>;
pub type MlpClassifier = classifiers::MlpClassifier<f64>;
pub type ConvLstmClassifier = classifiers::ConvLstmClassifier<f64>;
pub type Autoencoder = autoencoder::Autoencoder<f64>;
pub type EncoderStack = autoencoder::EncoderStack<f64>;
pub type DecoderStack = autoencoder::DecoderStack<f64>;
pub type PkiNetwork = pki::PkiNetwork<f64>;
pub type Model = checkpoint::Model<f64>;
