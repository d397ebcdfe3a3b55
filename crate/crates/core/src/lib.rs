//! Composable multiphase incompressible flow on block-structured staggered
//! grids, with unit-tree composition, parameter tooling, checkpointing and a
//! regression-test harness.

pub mod bodies;
pub mod composer;
pub mod driver;
pub mod flashtest;
pub mod grid;
pub mod heatad;
pub mod incompns;
pub mod io;
pub mod multiphase;
pub mod params;
pub mod sourceterms;
pub mod stencils;
