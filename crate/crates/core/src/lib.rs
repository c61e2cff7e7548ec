pub mod codec;
pub mod compress;
pub mod config;
pub mod error;
pub mod grid;
pub mod model;
pub mod tensor;
pub mod train;
pub mod video;

pub use error::{Error, Result};
pub use grid::PatchCoord;
pub use model::{HiNeRV, ModelConfig};
pub use video::VideoClip;
