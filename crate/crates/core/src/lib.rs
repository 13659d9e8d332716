//! Core library for real-time streaming video-diffusion serving analysis.
//!
//! Everything in this crate is pure computation over plain data: closed-form
//! cost and roofline models, an SLO-aware batch selector, a min-max DiT block
//! partitioner, a deterministic discrete-event simulator of the
//! pipeline-parallel stream-batch architecture, the motion/sink/RoPE/KV
//! quality controllers, and small exact reference kernels that verify the
//! streaming cache mechanisms against full-sequence oracles.
//!
//! The crate is `no_std`-compatible (with `alloc`); file formats, configs,
//! and the CLI live in the companion `streamsim-cli` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod balance;
pub mod context;
pub mod costmodel;
pub mod kernels;
pub mod motion;
pub mod rng;
pub mod sim;
pub mod slo;

mod fmath;
