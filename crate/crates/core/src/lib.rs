//! Adaptive image slicing for small-object detection.
//!
//! This crate holds the allocation-only core of the toolkit: box geometry and
//! overlap metrics, the adaptive and fixed-size slice planners, redundant-area
//! accounting, the suppression family (greedy NMS, Soft-NMS, WBF and the
//! matrix cluster formulation used by Cluster-DIoU-NMS), coordinate remapping
//! for sliced inference, a ground-truth driven oracle detector, COCO-style
//! evaluation, synthetic scene generation and fine-tuning dataset planning.
//!
//! Everything here is `no_std` + `alloc`. File formats, process spawning,
//! threading and the command-line front end live in the `asahi` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

mod math;

pub mod detector;
pub mod eval;
pub mod fusion;
pub mod geom;
pub mod nms;
pub mod raster;
pub mod redundancy;
pub mod saf;
pub mod scenegen;
pub mod slicing;

pub use geom::{Annotation, BBox, GeomError, ImageDims, OverlapMetric};
pub use nms::{Detection, Origin, SuppressionConfig};
pub use raster::Raster;
pub use slicing::{AsahiConfig, SlicePlan, SliceWindow, Slicer, Strategy};
