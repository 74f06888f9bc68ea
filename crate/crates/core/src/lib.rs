//! Exact edge posteriors for Bayesian networks over discrete data.
//!
//! The order-modular forward-backward dynamic program computes
//! `P(u -> v | D)` for all `n(n-1)` directed edges at once. It runs either in
//! one address space or on a `2^k`-worker hypercube where each worker holds
//! `2^(n-k)` sets of the subset lattice and talks only to its `k` neighbors.
//!
//! ```no_run
//! use edgewise::prelude::*;
//!
//! let data = load_csv("survey.csv")?;
//! let mut fabric = HypercubeFabric::spawn(2, Backend::Simulated)?;
//! let post = edge_posteriors(&mut fabric, &data, &PriorSpec::default(), 3)?;
//! println!("P(0 -> 1 | D) = {}", post.get(0, 1));
//! # Ok::<(), edgewise::Error>(())
//! ```

pub mod cli;
pub mod lattice;
pub mod logspace;
pub mod oracle;
pub mod posterior;
pub mod runtime;
pub mod scoring;
pub mod synth;
pub mod varset;
pub mod zeta;

use thiserror::Error;

pub use lattice::AllocationError;
pub use runtime::FabricError;
pub use scoring::{DataError, ScoreError};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Allocation(#[from] AllocationError),
    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("estimated {required} bytes per worker exceed the limit of {limit} bytes")]
    Memory { required: u64, limit: u64 },
    #[error("{0}")]
    InvalidInput(String),
}

impl Error {
    /// Attach the name of the pipeline stage that failed.
    pub fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| match e {
            // A deadlock report already names the stage of every stuck receive.
            e @ (Error::Stage { .. } | Error::Fabric(FabricError::Deadlock(_))) => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }
}

pub mod prelude {
    pub use crate::logspace::{log_add, LogScore, LOG_ZERO};
    pub use crate::posterior::{
        edge_posteriors, edge_posteriors_serial, EdgePosteriorMatrix, PosteriorRun,
    };
    pub use crate::runtime::{Backend, CostModel, HypercubeFabric};
    pub use crate::scoring::{load_csv, DataMatrix, Feature, PriorSpec, ScoreKind};
    pub use crate::varset::{Layout, VarSet};
    pub use crate::Error;
}
