//! Wasserstein 1D-DCGAN anomaly detection for hourly energy series.
//!
//! The pipeline: [`series`] cleans and windows the data, [`train`] fits the
//! generator and critic in [`net`], [`invert`] reconstructs query windows by
//! gradient descent in latent space using the [`sdtw`] loss, [`detect`] turns
//! window scores into point predictions and [`evalr`] scores them against
//! labels with a time tolerance.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod evalr;
pub mod invert;
pub mod net;
pub mod sdtw;
pub mod series;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::Tensor3;
