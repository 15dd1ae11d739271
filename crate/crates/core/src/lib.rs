//! Convolutional autoencoder features and fuzzy c-means class maps for
//! brightfield whole-slide images.

pub mod cli;
pub mod config;
pub mod error;
pub mod fcm;
pub mod image;
pub mod masking;
pub mod model;
pub mod nn;
pub mod optim;
pub mod pipeline;
pub mod render;
pub mod synthetic;
pub mod tiling;

pub use error::{Error, Result};
