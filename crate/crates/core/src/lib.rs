//! Exploration engine for NS-2 wireless trace files.
//!
//! The pipeline: [`index`] scans a trace once into byte-offset and event
//! indexes, [`parser`] turns lines into [`model::TraceEvent`]s, [`state`]
//! applies events to a whole-network [`state::NetworkState`], and
//! [`snapshot`] answers "state at event k" through an LRU cache of deep
//! copies. [`partition`] computes radio-range components, [`render`] draws
//! frames to PNG, and [`ext`] hosts protocol extensions such as AODV.

pub mod explorer;
pub mod ext;
pub mod index;
pub mod model;
pub mod panel;
pub mod parser;
pub mod partition;
pub mod prefs;
pub mod render;
pub mod snapshot;
pub mod state;
pub mod style;
