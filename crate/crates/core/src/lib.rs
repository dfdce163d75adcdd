pub mod cli;
pub mod credits;
pub mod curation;
pub mod engine;
pub mod error;
pub mod eval;
pub mod json;
pub mod query;
pub mod ranking;
pub mod review;
pub mod selection;
pub mod table;
pub mod text;
pub mod tree;

pub use engine::{Engine, ResourcePaths};
pub use error::{Error, Result};
pub use json::Strictness;
