//! File formats: BVH motion, OBJ meshes, JSON weight sidecars and run
//! configuration, plus writers for synthetic scenes.

pub mod bvh;
pub mod config;
pub mod obj;
pub mod sidecar;

pub use bvh::{parse_bvh, write_bvh};
pub use config::{parse_config, RunConfig};
pub use obj::{parse_obj, write_obj, ObjMesh};
pub use sidecar::{parse_weights, write_weights, WeightsSidecar};
