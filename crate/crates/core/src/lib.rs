// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod error;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod pipeline;
pub mod pruning;
pub mod qsm;
pub mod seed;
pub mod spatial;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{Point3, PointCloud};
