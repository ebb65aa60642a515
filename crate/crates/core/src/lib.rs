//! Core of the HIENet cascade-popularity pipeline.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds with `alloc` only: the cascade data model and line grammar,
//! degree-biased walk sampling, correlation paths on the global social
//! graph, sub-cascade snapshots with temporal encodings, a small
//! reverse-mode autodiff engine and the multi-modal model built on it.
//! File IO, the synthetic generator, training loops and the CLI live in
//! the `hienet` companion crate.

#![no_std]
#![warn(rust_2018_idioms, unused_qualifications)]

extern crate alloc;

pub mod cascade;
pub mod error;
pub mod model;
pub mod nn;
pub mod snapshot;
pub mod social;
pub mod walk;

pub use cascade::{
    build_cascade_graph, build_global_graph, compute_label, parse_cascade_line, CascadeEvent,
    CascadeGraph, CascadeRecord, GlobalSocialGraph, UserId,
};
pub use error::{Error, Result};

/// 64-bit FNV-1a. Used wherever a stable, platform-independent hash of a
/// message id is needed (RNG stream seeding, dataset splits).
pub fn stable_hash(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}
