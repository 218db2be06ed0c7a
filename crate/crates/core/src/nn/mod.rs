//! Small neural-network kernel with hand-written backward passes.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod recurrent;
pub mod seq;
pub mod tensor;

pub use layers::{BatchNorm2d, Conv2d, Dense, Flatten, Layer, MaxPool2d, Mode, Relu, Sequential, SpatialAttention};
pub use optim::{train, OptimizerConfig, OptimizerKind, Target, TrainConfig, TrainHistory};
pub use recurrent::{gru_step, lstm_step, Gru, GruCell, Lstm, LstmCell};
pub use seq::{ConcatSkip, Conv1d, DepthwiseConv1d, OddSymmetric, Residual};
pub use tensor::{sigmoid, Param, Tensor};
