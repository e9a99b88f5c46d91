//! Minimal dense numeric core: tensors, a reverse-mode tape with the
//! layers the parser needs, Adam, finite-difference checking and a
//! checkpoint container.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod param;
pub mod tensor;

pub use adam::Adam;
pub use checkpoint::{scalar_width, Checkpoint};
pub use gradcheck::{compare_gradients, finite_difference_check, GradCheckOptions, GradCheckReport};
pub use graph::{Graph, NodeId, PROB_FLOOR};
pub use layers::{BiLstm, Linear, Lstm};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
