//! Dual-polarization coherent fiber link simulation and a biLSTM
//! equalizer trained on it with single- and multi-task regimes.
//!
//! The pipeline runs [`signal`] (16-QAM, RRC shaping) through [`channel`]
//! (Manakov split-step, EDFA) and [`dsp`] (CDC, normalization) to
//! [`dataset`], where windows of received symbols become training examples
//! for [`nn`]. [`eval`] turns bit errors into Q-factors and runs sweeps.
//!
//! The guide in `book/` walks through each stage; its snippets run as
//! doc-tests of this crate.

mod binio;
pub mod channel;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod fft;
pub mod nn;
pub mod rng;
pub mod signal;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/signal.md")]
    mod signal {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/dsp.md")]
    mod dsp {}
    #[doc = include_str!("../../../book/src/datasets.md")]
    mod datasets {}
    #[doc = include_str!("../../../book/src/equalizer.md")]
    mod equalizer {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/scales.md")]
    mod scales {}
}
