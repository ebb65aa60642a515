//! Dense 2-D tensors, a reverse-mode tape, the layers the model is built
//! from, Adam, and a finite-difference gradient checker.

mod gradcheck;
mod layers;
mod optim;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, check_gradients, relative_error, relative_error_with_floor, GradCheckReport, REL_ERR_FLOOR};
pub use layers::{
    bilstm_forward, gcn_layer, normalized_propagation, Activation, BiLstm, BiLstmOutput, Linear, Lstm, Mlp,
    TransformerLayer,
};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ParamId, ParamStore, Parameter, Tensor};
