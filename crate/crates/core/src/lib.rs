//! Journey-level speeding analytics for connected-vehicle GPS trajectories.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod explain;
pub mod features;
pub mod geo;
pub mod hotspot;
pub mod ingest;
pub mod kinematics;
pub mod learn;
pub mod matrix;
pub mod pipeline;
pub mod roadnet;
pub mod synth;

pub use error::{Error, Result};

/// Guide chapters, compiled so their examples stay current.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/quickstart.md")]
    struct Quickstart;
    #[doc = include_str!("../../../book/src/inputs.md")]
    struct Inputs;
    #[doc = include_str!("../../../book/src/features.md")]
    struct Features;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/explain.md")]
    struct Explain;
    #[doc = include_str!("../../../book/src/hotspots.md")]
    struct Hotspots;
    #[doc = include_str!("../../../book/src/pipeline.md")]
    struct Pipeline;
    #[doc = include_str!("../../../book/src/acceptance.md")]
    struct Acceptance;
}
