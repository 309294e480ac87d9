//! Fractional-Brownian-motion texture segmentation of 3-D + time volumes.
//!
//! The pipeline turns each frame into a per-voxel fractal-dimension map
//! ([`fractal_map`]), describes local patches of that map with five texture
//! statistics ([`features`]), labels voxels as blood pool or myocardium with a
//! Gaussian naive-Bayes model ([`bayes`]), cleans the labels up, and refines
//! the cavity and outer wall slice by slice with moment-equivalent ellipses
//! ([`moments`], [`pipeline`]). [`phantom`] generates speckled synthetic
//! sequences with ground truth and [`metrics`] scores the result.

pub mod bayes;
pub mod distance;
pub mod error;
pub mod fbm;
pub mod features;
pub mod fractal_map;
pub mod grid;
pub mod hurst;
pub mod metrics;
pub mod moments;
pub mod morphology;
pub mod parallel;
pub mod phantom;
pub mod pipeline;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{load_mask, load_volume, save_mask, save_volume, Dims4, Geometry, Label, Mask4, Volume4};
