//! Command-line and HTTP front ends for the netting workbench. Both are thin
//! layers over `netting-core`; no domain logic lives here.

pub mod commands;
pub mod service;
