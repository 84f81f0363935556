//! Shared-workspace safety model for human-robot collaboration.
//!
//! A ceiling depth camera observes the cell. The stored depth image of the
//! workspace is split into robot, danger and human zones derived from the
//! robot's control points; each new frame is differenced against the model,
//! clustered and classified by zone to halt the robot, absorb its own
//! changes, or record human changes for later confirmation.

pub mod geometry;
pub mod monitor;
pub mod session;
pub mod simcell;
pub mod zones;
