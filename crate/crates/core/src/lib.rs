//! Compiler and analysis toolkit for generating photonic graph states with
//! quantum emitters.
//!
//! The pipeline runs from a target [`graphstate::GraphState`] through the
//! time-reversed [`primitives`] and the [`compiler`] algorithms to a forward
//! gate list, which the [`scheduler`] turns into CNOT depth and emission
//! times. The [`rgs`] and [`repeater`] modules evaluate repeater graph
//! states built this way in a repeater chain.

pub mod error;
pub mod graphstate;
pub mod compiler;
pub mod primitives;
pub mod repeater;
pub mod rgs;
pub mod scheduler;
pub mod tableau;

pub use error::{Error, Result};
