//! Label-synchronous beam search with approximative hypothesis
//! recombination.
//!
//! Hypotheses whose last `k` tokens agree are merged during the search: the
//! best-scoring one survives and absorbs the probability mass of the others.
//! The merged search space is a lattice whose paths vastly outnumber the
//! beam, and whose total mass approximates the normalizer of a globally
//! renormalized sequence model. Brute-force oracles in [`oracle`] make every
//! quantity checkable exactly on small vocabularies.
//!
//! ```
//! use latbeam::models::{CombinedScorer, InputFeatures, ScorerSpec};
//! use latbeam::rng::seeded_rng;
//! use latbeam::search::{search, HistoryLimit, SearchConfig};
//!
//! let am = ScorerSpec::recurrent(5, 3, 42).build()?;
//! let model = CombinedScorer::am_only(am);
//! let x = InputFeatures::random(&mut seeded_rng(42, 0), 4, 3)?;
//! let result = search(&model, &x, &SearchConfig::new(8, HistoryLimit::Finite(2), 8))?;
//! assert!(result.stats()?.log_score_mass <= 0.0);
//! # Ok::<(), latbeam::Error>(())
//! ```

pub mod demo;
pub mod error;
pub mod experiment;
pub mod lattice;
pub mod logmath;
pub mod models;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod search;
pub mod sequence;
pub mod training;

pub use error::{Error, Result};
pub use logmath::{log_add, log_sum, LogMass};
pub use sequence::{edit_distance, TokenSequence, Vocabulary};
