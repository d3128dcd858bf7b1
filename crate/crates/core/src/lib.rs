//! Building instance segmentation of multi-view-stereo urban meshes.
//!
//! Per-image roof masks are lifted onto the mesh, clustered across views into
//! global roof instances, voted onto vertices and triangles, and each roof is
//! grown into a whole building by a binary MRF solved with max-flow.

pub mod building;
pub mod camera;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod masks;
pub mod mesh;
pub mod numeric;
pub mod par;
pub mod pipeline;
pub mod roof;
pub mod synth;

pub use error::{Error, Result};
