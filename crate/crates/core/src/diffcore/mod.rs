//! Small dense-tensor engine with reverse-mode gradients and explicit
//! stop-gradient barriers. Sized for the two MLP-family networks in
//! [`crate::models`]; no broadcasting beyond bias add.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{
    grad_check, numerical_gradient, relative_error, GradCheckReport, SegmentReport, DEFAULT_FD_EPS,
    RELATIVE_FLOOR,
};
pub use graph::{Gradients, Graph, NodeId, ParamHandle};
pub use params::{ParamVector, Segment};
pub use tensor::Tensor;
