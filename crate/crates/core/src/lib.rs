//! Structural-convergence analysis for segmented document corpora.
//!
//! Documents are split into segments, each segment is described by surface
//! features (part-of-speech, dependency-label, stopword and affect profiles),
//! and k-means turns every document into a sequence of functional-block labels.
//! Block sequences are then compared across ten evaluation groups along two
//! axes:
//!
//! * **order**: run-length-compressed label sequences, PAM medoids per group,
//!   and Levenshtein distances between group medoids;
//! * **position**: normalized locations of block transitions, compared with
//!   the 1-D Wasserstein distance and summarized by kernel density curves.
//!
//! [`convergence::classify_regime`] reads the resulting group matrices as
//! ordered, AKP, reverse-AKP or noisy.

pub mod clustering;
pub mod convergence;
pub mod corpus;
pub mod error;
pub mod features;
pub mod pipeline;
pub mod segmentation;
pub mod sequence;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
