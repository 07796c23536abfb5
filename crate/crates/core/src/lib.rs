//! SSVEP frequency recognition by spatial filtering.
//!
//! Implements CCA, TRCA, and adaptive TRCA (TRCA on trials temporally
//! filtered by a multitask sparse-Bayesian projection), with ensemble
//! variants, a leave-one-block-out benchmark harness, a synthetic SSVEP
//! generator, and dataset/model persistence.
//!
//! Recognition methods live behind the [`recognizer::Recognizer`] trait
//! and are selected by name (`cca`, `trca`, `trca-ensemble`, `adtrca`,
//! `adtrca-ensemble`) through [`recognizer::create`].
//!
//! ```
//! use ssvep_core::{eval, recognizer, synth};
//!
//! let dataset = synth::generate(&synth::SynthConfig {
//!     duration_s: 1.0,
//!     n_blocks: 3,
//!     snr_db: 20.0,
//!     ..Default::default()
//! })
//! .unwrap()
//! .centralized();
//!
//! let method = recognizer::create("trca").unwrap();
//! let model = method.fit(&dataset, &recognizer::FitContext::default()).unwrap();
//! let out = model.classify(dataset.trial(0, 2).unwrap()).unwrap();
//! assert_eq!(out.predicted, 2);
//!
//! let splits = eval::leave_one_block_out(&dataset).unwrap();
//! assert_eq!(splits.len(), 3);
//! ```

pub mod adtrca;
pub mod cca;
pub mod data;
pub mod dataio;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod mtl_ard;
pub mod recognizer;
pub mod reference;
pub mod synth;
pub mod trca;

pub use data::{Dataset, Trial};
pub use error::{Error, Result};
