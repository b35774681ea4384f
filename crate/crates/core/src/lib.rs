//! Hierarchical any-angle path planning on multi-resolution 3D occupancy grids.

pub mod baselines;
pub mod bench;
pub mod cost_field;
pub mod geometry;
pub mod map;
pub mod planner;
