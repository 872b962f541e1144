//! Sleep-coaching engine: context featurization, a LinUCB activity
//! recommender, wearable analytics, a multi-agent chat pipeline, an offline
//! simulation and statistics harness, and an HTTP service around them.

pub mod bandit;
pub mod behavior;
pub mod context;
pub mod datastore;
pub mod domain;
pub mod orchestrator;
pub mod service;
pub mod simkit;
