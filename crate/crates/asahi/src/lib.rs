//! File formats, detector adapters, the threaded pipeline driver and the
//! command-line front end built on `asahi-core`.

pub mod bench;
pub mod cli;
pub mod coco;
pub mod config;
pub mod detector;
pub mod interchange;
pub mod pipeline;
pub mod ppm;
pub mod report;
pub mod saf_io;

pub use asahi_core as core;
