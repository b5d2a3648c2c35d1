//! Command-line front end: configuration, file formats and figure recipes.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;
pub mod recipes;
