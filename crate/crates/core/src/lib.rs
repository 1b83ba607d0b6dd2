pub mod codebook;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod hash;
pub mod linalg;
pub mod lle;
pub mod model_file;
pub mod pca;
pub mod pdv;
pub mod pipeline;
pub mod selftest;
pub mod volume;

pub use config::PipelineConfig;
pub use corpus::{Dataset, LabeledVideo};
pub use error::{Error, Result};
pub use eval::{EvalReport, LabeledFeatureSet, Protocol};
pub use pipeline::PipelineModel;
pub use volume::VideoVolume;
