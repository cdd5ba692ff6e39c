//! Configuration files and run artifacts.

pub mod config;
pub mod csv;
pub mod manifest;
pub mod vtk;
