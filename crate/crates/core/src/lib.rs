//! Soft real-time network emulation.
//!
//! A discrete-event kernel whose clock is synchronized to the wall clock, fed
//! by packets captured from UDP sockets and emitting packets back out once
//! they have crossed an emulated topology.

pub mod bench;
pub mod capture;
pub mod cli;
pub mod config;
pub mod emulator;
pub mod frame;
pub mod kernel;
pub mod netmodel;
pub mod sched;
pub mod time;
