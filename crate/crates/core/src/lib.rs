pub mod analysis;
pub mod assignment;
pub mod audio;
pub mod codec;
pub mod error;
pub mod extractor;
pub mod fixtures;
pub mod io;
pub mod numerics;
pub mod pipeline;
pub mod rvq;
pub mod stream;

pub use audio::AudioBuffer;
pub use error::{Error, Result};
