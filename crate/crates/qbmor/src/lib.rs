pub mod error;
pub mod lowrank;
pub mod lyapunov;
pub mod system;
pub mod tensor;
mod schur;
mod svd;
pub mod gramians;
pub mod registry;
pub mod models;
pub mod balancing;
pub mod simulate;

pub use balancing::{balance_and_reduce, hankel_values, ReducedModel};
pub use error::{QbError, Result};
pub use gramians::{iterate_gramians, truncated_gramians, GramianPair, IterOptions};
pub use models::{build_model, Family, ModelSpec};
pub use simulate::{integrate, InputSignal, Method, Trajectory};
pub use system::QbSystem;
pub use tensor::HessianTensor;
