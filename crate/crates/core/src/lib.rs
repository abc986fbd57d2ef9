//! Relative pose estimation for rolling-shutter cameras aided by gyroscope
//! readings.

pub mod experiment;
pub mod geometry;
pub mod gs;
pub mod linalg;
pub mod minimal;
pub mod pipeline;
pub mod poly;
pub mod refine;
pub mod robust;
pub mod synth;
