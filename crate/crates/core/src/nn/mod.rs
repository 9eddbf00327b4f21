//! Deterministic neural-network kernel.

pub mod checkpoint;
pub mod gradcheck;
pub mod network;
pub mod spec;
pub mod train;

pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use network::{Forward, LayerParams, Loss, Network, Targets};
pub use spec::{Branch, ConvAxis, ConvSpec, Geometry, LayerSpec, NetworkSpec};
pub use train::{sgd_train, train_network, Dataset, DatasetTargets, TrainConfig, TrainLog};

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

/// Scalar type of network parameters: `f32` for training, `f64` for checks.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}
