//! Feature-based models of HEVC decoding energy.
//!
//! A bitstream is summarized by counts of decoder features (coding units by
//! depth, prediction modes, transforms, in-loop filters). A model assigns a
//! nonnegative energy to each feature and estimates decoding energy as the
//! count-weighted sum. The crate loads count/energy datasets, trains models,
//! validates them across coding setups and bit depths, and fits the
//! bit-depth scaling extension.

// Negated comparisons below reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bitdepth;
pub mod catalog;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod measurement;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod trainer;

pub use catalog::{CatalogVariant, FeatureCatalog};
pub use dataset::{EnergyDataset, FeatureVector};
pub use energy::EnergyModel;
pub use error::{Error, Result};
