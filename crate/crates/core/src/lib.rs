//! Exact construction and evaluation of shift-free ReLU networks whose
//! weights lie in `{0, ±1/2, ±1, 2}`, with the approximation blocks built
//! on top of them.

pub mod analysis;
pub mod atoms;
pub mod constants;
pub mod dyadic;
pub mod error;
pub mod net;
pub mod taylor;

pub use dyadic::{dy, Dyadic};
pub use error::{Error, Result};
pub use net::{NetDocument, NetStats, QuintNet, QuintWeight, StageBuilder, WeightMatrix};
