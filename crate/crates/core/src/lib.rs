//! Financial statements networks built from general-ledger journal entries.
//!
//! The pipeline runs [`ingest`] → [`fsn`] → [`graph`], then scores nodes with
//! [`centrality`] and tests degree distributions with [`tailfit`]. [`cohort`]
//! drives the pipeline over many companies and [`synth`] produces seeded test
//! data in the ingest format.

pub mod fsn;
pub mod graph;
pub mod ingest;
pub mod centrality;
pub mod tailfit;
pub mod synth;
pub mod cohort;
