//! Stage-aware emotional-support dialogue engine.

pub mod cli;
pub mod clock;
pub mod config;
pub mod detector;
pub mod engine;
pub mod eval;
pub mod gateway;
pub mod prompt;
pub mod service;
pub mod session;
pub mod stage;
pub mod text;
