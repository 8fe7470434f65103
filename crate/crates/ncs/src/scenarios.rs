//! Bundled scenarios.

use crate::pipeline::{AppError, Pipeline};

/// Full-resolution surveillance robot (delay worksheet only).
pub const VEHICLE_FULL: &str = include_str!("../configs/vehicle_full.toml");
/// Surveillance robot on the reduced grid.
pub const VEHICLE: &str = include_str!("../configs/vehicle.toml");
pub const VEHICLE_SPEC: &str = include_str!("../configs/vehicle_spec.toml");
/// Surveillance robot on a 21-point grid.
pub const VEHICLE_GRID21: &str = include_str!("../configs/vehicle_grid21.toml");
/// Contracting waypoint plant on the same network.
pub const WAYPOINTS: &str = include_str!("../configs/waypoints.toml");
pub const WAYPOINTS_SPEC: &str = include_str!("../configs/waypoints_spec.toml");

pub fn vehicle_full() -> Result<Pipeline, AppError> {
    Pipeline::from_texts(VEHICLE_FULL, None)
}

pub fn vehicle() -> Result<Pipeline, AppError> {
    Pipeline::from_texts(VEHICLE, Some(VEHICLE_SPEC))
}

pub fn vehicle_grid21() -> Result<Pipeline, AppError> {
    Pipeline::from_texts(VEHICLE_GRID21, None)
}

pub fn waypoints() -> Result<Pipeline, AppError> {
    Pipeline::from_texts(WAYPOINTS, Some(WAYPOINTS_SPEC))
}
