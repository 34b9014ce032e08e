//! Expression graphs over fields and scalars with forward and reverse mode.
//!
//! A [`Graph`] is an arena of nodes. Leaves are bound to values with
//! [`Graph::bind`]; [`Graph::evaluate`] returns root values together with a
//! [`Tape`] recording every intermediate value. [`Graph::jvp`] pushes tangents
//! forward through a tape and [`Graph::vjp`] pulls cotangents back to the
//! leaves, summing contributions in reverse tape order.
//!
//! Gradients follow the complex-analytic convention: for a holomorphic scalar
//! output `J`, pulling back the cotangent `1` yields `G` with
//! `dJ = <G, dp> = sum conj(G_i) dp_i`.

mod graph;
mod value;

pub use graph::{Graph, LeafCotangents, NodeId, Shape, Tape};
pub use value::{CotValue, Value};
