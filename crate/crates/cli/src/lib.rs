//! Library surface of the CLI: preset bundles and command implementations,
//! shared by the binary and the acceptance suite.

pub mod commands;
pub mod presets;
