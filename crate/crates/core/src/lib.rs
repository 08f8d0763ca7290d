pub mod config;
pub mod crawler;
pub mod dataset;
pub mod error;
pub mod estimator;
pub mod extract;
pub mod html;
pub mod kg;
#[cfg(feature = "net")]
pub mod kg_live;
pub mod linker;
#[cfg(feature = "net")]
pub mod pipeline;
pub mod proposals;
#[cfg(feature = "net")]
pub mod server;
pub mod util;

pub use error::{Error, Result};
