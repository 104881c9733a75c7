//! Dense numerical core: tensors, layers with hand-written backward passes,
//! losses and the Adam optimizer.

pub mod adam;
pub mod conv;
pub mod dense;
pub mod lstm;
pub mod ops;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig};
pub use conv::{conv1d_forward, Conv1d};
pub use dense::{dense_forward, Dense};
pub use lstm::{lstm_step, LstmLayer, LstmTrace};
pub use ops::{
    cross_entropy, mean_absolute_error, reconstruction_loss, softmax, OneHotTarget,
};
pub use params::{Gradients, ParamId, Parameter, ParameterSet};
pub use tensor::Tensor;
