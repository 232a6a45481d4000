//! Round-synchronous simulation of token-based random walks on graphs,
//! used to estimate mixing times under per-edge bandwidth constraints,
//! together with an exact rational-arithmetic Markov-chain oracle that
//! verifies every estimate.

pub mod cli;
pub mod congest;
pub mod graph;
pub mod mixing;
pub mod numeric;
pub mod oracle;

pub use graph::{DistVector, Graph, GraphError, GraphFamily};
pub use mixing::{MixingEstimate, MixingError, WalkConfig};
pub use oracle::{SpectralReport, TransitionOperator};
