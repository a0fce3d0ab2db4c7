pub mod classifier;
pub mod cli;
pub mod coattention;
pub mod data;
pub mod encoder;
pub mod gradcheck;
pub mod model;
pub mod params;
pub mod tensor;
pub mod training;
pub mod wordnet;

pub use model::{ForwardCtx, ModelConfig, WnDuma};
