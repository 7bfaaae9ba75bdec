//! Family-disjoint malware benchmark splits of controllable difficulty.
//!
//! Start from a family-level cross-generalization matrix ([`matrix`]), search
//! for train/test family sets whose cross recall clusters around a target
//! ([`search`]), turn the family sets into concrete sample lists
//! ([`manifest`]), then score models on them ([`eval`]) and compare models
//! across splits ([`stats`]). [`ablation`] holds the two naive ranking
//! baselines, and [`cli`] wires everything into the `famsplit` binary.
//!
//! ```
//! use famsplit::matrix::{synth_matrix, SynthParams};
//! use famsplit::search::{generate_benchmark, Difficulty, SearchConfig};
//!
//! let m = synth_matrix(&SynthParams::with_seed(60, 1)).unwrap();
//! let cfg = SearchConfig { set_size: 5, ..SearchConfig::standard(Difficulty::Medium, 3) };
//! let bench = generate_benchmark(&m, &cfg, 2, "Medium").unwrap();
//! for split in &bench.splits {
//!     assert!(split.max_deviation(&m).unwrap() <= split.epsilon_final);
//! }
//! ```

pub mod ablation;
pub mod cli;
pub mod eval;
pub mod manifest;
pub mod matrix;
pub mod report;
pub mod rng;
pub mod search;
pub mod stats;

use thiserror::Error;

/// Any error the library can produce.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Matrix(#[from] matrix::MatrixError),
    #[error(transparent)]
    Search(#[from] search::SearchError),
    #[error(transparent)]
    Ablation(#[from] ablation::AblationError),
    #[error(transparent)]
    Manifest(#[from] manifest::ManifestError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Stats(#[from] stats::StatsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

// The guide's code listings compile and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/matrix.md")]
    mod matrix {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/ablation.md")]
    mod ablation {}
    #[doc = include_str!("../../../book/src/materialize.md")]
    mod materialize {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/statistics.md")]
    mod statistics {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
