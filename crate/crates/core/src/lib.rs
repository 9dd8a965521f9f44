// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops read better than zipped iterators in the numeric kernels.
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod bench;
pub mod error;
pub mod landing;
pub mod linalg;
pub mod manifold;
pub mod merit;
pub mod objectives;
pub mod report;

pub use error::{Error, Result};
