pub mod error;
pub mod dataio;
pub mod flightsim;
pub mod geometry;
pub mod kalman;
pub mod kv;
pub mod model;
pub mod nn;
pub mod plot;

pub use error::{Error, Result};

/// The guide's chapters, compiled so their examples run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/geometry.md")]
    mod geometry {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/euroc.md")]
    mod euroc {}
    #[doc = include_str!("../../../book/src/autodiff.md")]
    mod autodiff {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/kalman.md")]
    mod kalman {}
    #[doc = include_str!("../../../book/src/flight.md")]
    mod flight {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
