//! Experiment driver for the gradient-leakage laboratory: config files,
//! synthetic data, the attack / sweep / utility / gallery commands, and
//! their CSV and SVG artifacts.

pub mod commands;
pub mod config;
pub mod csvio;
pub mod svg;
pub mod synthetic;
