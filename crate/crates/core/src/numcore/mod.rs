//! Dense `f64` tensors, trainable parameters and a reverse-mode tape with
//! exactly the primitives the reasoning network needs.

mod gradcheck;
mod gru;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, ParamCheck};
pub use gru::{gru_step, GruCell, GruGates};
pub use param::{
    init_uniform, init_unit_rows_gaussian, init_unit_rows_uniform, normalize_row, normalize_rows,
    Gradients, ParamGrad, ParamId, ParamStore, Parameter,
};
pub use tape::{MapFn, NodeId, Tape};
pub use tensor::{
    cosine_sim, dot, l1_distance, l2_norm, log_sigmoid, sigmoid, stable_softmax, Tensor, COSINE_EPS,
};
