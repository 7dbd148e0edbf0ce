//! Tensors, reverse-mode autodiff and the layers used by the models.

pub mod conv;
pub mod gradcheck;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use conv::{conv2d_direct, window_output, ConvGeometry, PoolGeometry};
pub use gradcheck::{finite_diff_gradcheck, relative_error, GradCheckReport, GRADCHECK_FLOOR};
pub use optim::{adam_step, AdamConfig};
pub use params::{ParamEntry, ParamGrads, ParamRole, ParamStore, StatUpdate, SNCK_MAGIC, SNCK_VERSION};
pub use tape::{log_softmax_rows, softmax_rows, Gradients, Mode, Tape, Var, BN_EPSILON, BN_MOMENTUM};
pub use tensor::{gemm, Float, Tensor};
