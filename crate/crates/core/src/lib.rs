//! Automatic transfer of spinal-ligament attachment landmarks from an
//! annotated atlas vertebra onto patient-specific vertebra meshes.
//!
//! The pipeline runs in five stages:
//!
//! 1. [`frame`]: anatomical coordinate frame of each mesh and its sagittal
//!    and frontal cutting planes;
//! 2. [`poi`]: named outermost extrema (points of interest) on the two plane
//!    cross-sections;
//! 3. [`registration`]: closed-form least-squares similarity alignment of
//!    the atlas points of interest onto the patient's, applied to the atlas
//!    landmarks;
//! 4. [`edges`]: per-vertex edge values from local neighbourhood asymmetry;
//! 5. [`projection`]: snapping each registered landmark to the highest-edge
//!    point of a plane cross-section near it.
//!
//! [`pipeline`] wires the stages together and adds evaluation metrics, a
//! synthetic vertebra generator and configuration handling.

pub mod edges;
pub mod frame;
pub mod landmarks;
pub mod linalg;
pub mod mesh;
pub mod pipeline;
pub mod poi;
pub mod projection;
pub mod registration;
pub mod shapes;

pub use nalgebra::{Point3, Vector3};
