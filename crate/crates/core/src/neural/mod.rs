//! Small differentiable building blocks with hand-written gradients.
//!
//! Everything runs in `f64`. Models own their [`ParamTensor`]s; a forward
//! pass returns a cache that the matching backward pass consumes, and any
//! parameter mutation in between invalidates the cache.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod lstm;
pub mod mlp;
pub mod tensor;

pub use adam::{clip_grad_norm, Adam};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, grad_check_vec, GradCheckReport};
pub use lstm::{Lstm, LstmStepCache, RecurrentState};
pub use mlp::{Mlp, MlpCache};
pub use tensor::{zero_grads, ParamTensor};
