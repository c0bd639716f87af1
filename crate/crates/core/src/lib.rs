//! Learning minimum-action-distance (MAD) quasimetric embeddings from
//! state-only trajectories.
//!
//! The crate covers the whole pipeline: reference environments with exact
//! distance oracles, random-policy trajectory collection, the direct
//! (`MadDist`) and bootstrapped (`TdMadDist`) training objectives on a small
//! reverse-mode MLP, correlation metrics against ground truth, and a
//! random-shooting planner that uses the learned distance as its heuristic.

pub mod dataset;
pub mod diffnet;
pub mod env;
pub mod evaluation;
pub mod planner;
pub mod quasimetric;
pub mod training;
