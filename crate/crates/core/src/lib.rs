//! Estimation of Distribution Algorithms that learn and sample discrete
//! Bayesian networks every generation.
//!
//! The crate is organised bottom-up:
//!
//! * [`genome`]: individuals, populations, objectives and truncation selection.
//! * [`benchmarks`]: OneMax, Checkerboard, SixPeaks and EqualProducts.
//! * [`bayesnet`]: DAGs, sufficient statistics, parameter estimation and
//!   probabilistic logic sampling.
//! * [`scores`]: the decomposable BIC and K2+penalty metrics and the
//!   per-variable parent bound for K2+penalty search.
//! * [`search`]: greedy arc addition, add/delete local search and the PC
//!   algorithm.
//! * [`eda`]: the generational loop with UMDA, MIMIC and the three EBNA
//!   model builders.
//! * [`ga`]: a GENITOR-style steady-state genetic algorithm baseline.
//! * [`rank_stats`]: Kruskal-Wallis testing and adjacent-pair rank grouping.
//! * [`harness`]: experiment configuration, seeded run scheduling, the
//!   results file format and report rendering used by the `ebna` binary.

pub mod bayesnet;
pub mod benchmarks;
pub mod eda;
mod error;
pub mod ga;
pub mod genome;
pub mod harness;
pub mod rank_stats;
pub mod record;
pub mod scores;
pub mod search;

pub use error::{Error, Result};
