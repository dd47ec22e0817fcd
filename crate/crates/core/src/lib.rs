//! Simulation and analysis toolkit for spectroscopic photoacoustic (sPA)
//! oximetry: tissue phantoms, Monte Carlo light transport, sPA image
//! formation, linear unmixing, evaluation metrics and the dataset format.

// `!(x > 0.0)` guards are written that way so they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chromophores;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod grid;
pub mod kv;
pub mod mc;
pub mod metrics;
pub mod phantom;
pub mod rng;
pub mod spa_image;
pub mod unmix;

pub use error::{Error, Result};
pub use grid::{Grid2, Grid3, Image, Mask};
