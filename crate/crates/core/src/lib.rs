//! Monte Carlo laboratory for the Hausdorff and packing dimensions of images
//! of self-similar random fields.

pub mod error;
pub mod estimators;
pub mod fields;
pub mod geometry;
pub mod harness;
pub mod probes;
pub mod profile;
pub mod sampling;
pub mod scalar;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Real;

pub type PointCloud64 = geometry::PointCloud<f64>;
pub type PointCloud32 = geometry::PointCloud<f32>;
pub type DiscreteMeasure64 = geometry::DiscreteMeasure<f64>;
pub type DiscreteMeasure32 = geometry::DiscreteMeasure<f32>;
pub type FractalSet64 = geometry::FractalSet<f64>;
pub type FractalSet32 = geometry::FractalSet<f32>;
pub type FieldSpec64 = fields::FieldSpec<f64>;
pub type FieldSpec32 = fields::FieldSpec<f32>;
pub type SamplePath64 = fields::SamplePath<f64>;
pub type SamplePath32 = fields::SamplePath<f32>;
pub type Simulator64 = fields::Simulator<f64>;
pub type Simulator32 = fields::Simulator<f32>;
