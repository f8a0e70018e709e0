//! Desk-scale laboratory for language-model learning trajectories.
//!
//! Trains tiny decoder-only transformers on a synthetic agreement language,
//! scores every checkpoint on grammatical/ungrammatical minimal pairs and
//! analyses when and in which order each probe is acquired.

pub mod childcmp;
pub mod config;
pub mod corpus;
pub mod manifest;
pub mod model;
pub mod pipeline;
pub mod probes;
pub mod report;
pub mod tokenizer;
pub mod trajectory;
