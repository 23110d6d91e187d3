//! Weight-space symmetry toolkit.
//!
//! MLP weight spaces with feature channels, the hidden-neuron permutation
//! group, canonization, graph encodings with 1-WL refinement, reference
//! equivariant weight-space architectures and executable witnesses for the
//! separation results between them.

pub mod error;
pub mod space;
pub mod io;
pub mod mlp;
pub mod canonize;
pub mod graph;
pub mod arch;
pub mod equiv;
pub mod simulate;
pub mod regions;
pub mod acceptance;

pub use error::{Error, Result};
pub use space::{
    act, flatten, is_general_position, random_weights, realize, unflatten, validate,
    Activation, Architecture, FlatVector, GroupElement, LayerParams, WeightDist, WeightElement,
};
