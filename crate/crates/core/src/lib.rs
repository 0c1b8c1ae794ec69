//! Lesion segmentation from RECIST diameter annotations.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Index loops over
// parallel arrays read better than zipped iterators here.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod error;
pub mod gmm;
pub mod grabcut;
pub mod imaging;
pub mod learner;
pub mod maxflow;
pub mod metrics;
pub mod phantom;
pub mod raster;
pub mod recist;
pub mod seedgen;
pub mod wsss;

pub use error::{Error, Result};
