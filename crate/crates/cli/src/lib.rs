//! Scenario runner, canned experiments, calibrated regression fixtures,
//! and file formats around the core streaming pipeline simulator.

pub mod calibrate;
pub mod presets;
pub mod runner;
pub mod scenario;
pub mod synth;
pub mod tensor_io;
pub mod trace;
