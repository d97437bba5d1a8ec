//! Minimal neural-network kernel in double precision: tensors, layers with
//! analytic gradients, losses, optimizers, finite-difference checking and a
//! portable checkpoint container.

pub mod checkpoint;
pub mod convert;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod net;
pub mod optim;
pub mod tensor;

pub use convert::{images_to_tensor, masks_to_tensor, tensor_to_image};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use layers::{Layer, LayerKind};
pub use loss::{loss_bce, loss_dice, loss_l1, loss_mse, wasserstein_gap, LossGrad};
pub use net::{Model, Sequential, UNet, UNetConfig};
pub use optim::{OptimKind, OptimState};
pub use tensor::{Param, Tensor};
