//! Floating-point scalar abstraction.
//!
//! Geometry, similarity scores, and evaluation metrics are generic over the
//! scalar type; histograms and label maps stay integer. The shipped binaries
//! use `f64` (see the aliases at the crate root).

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive};

/// Scalar trait for everything real-valued in the pipeline.
pub trait Real: Float + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

impl Real for f32 {}
impl Real for f64 {}
