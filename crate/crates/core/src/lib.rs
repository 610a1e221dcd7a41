pub mod assembler;
pub mod bubdb;
pub mod ccarender;
pub mod error;
pub mod features;
pub mod gan;
pub mod imgproc;
pub mod patchpipe;
pub mod record;
pub mod scalar;

pub use error::{Error, Result};
pub use features::FeatureVector;
pub use record::BubbleRecord;
pub use scalar::Scalar;

/// Training-precision model.
pub type GanModel = gan::GanModel<f32>;
/// Double-precision model, used for gradient checks.
pub type GanModel64 = gan::GanModel<f64>;
