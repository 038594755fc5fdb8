//! Dynamic-scene Gaussian splatting on the CPU.
//!
//! The crate reconstructs deforming tissue from calibrated video: per-frame
//! depth maps are back-projected into a dense initial cloud of 3D Gaussians,
//! a HexPlane feature field with small MLP decoders moves those Gaussians over
//! time, and everything is optimized through a differentiable tile-based
//! rasterizer against color, depth and smoothness objectives.

pub mod deform;
pub mod error;
pub mod frame;
pub mod image;
pub mod init;
pub mod math;
pub mod model;
pub mod objectives;
pub mod raster;
pub mod real;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use frame::FrameRecord;
pub use real::Real;
