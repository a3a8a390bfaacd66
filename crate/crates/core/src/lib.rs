pub mod error;
pub mod features;
pub mod flowfield;
pub mod geometry;
pub mod image;
pub mod matching;
pub mod transfer;

pub use error::{Error, Result};
pub use image::{ImageGrid, Mask};
