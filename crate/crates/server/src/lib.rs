//! REST API and operator CLI for the news discovery engine.
//!
//! The CLI runs the researcher-side pipeline (ingest, features, train,
//! score, embed, angles, evaluation); `cnd serve` exposes the journalist
//! read path and on-demand angle generation over HTTP.

pub mod api;
pub mod cli;
pub mod config;
pub mod disclosure;
pub mod pipeline;
pub mod providers;
