pub mod connection_model;
pub mod error;
pub mod isomonodromy_flows;
pub mod matcore;
pub mod monodromy_numeric;
pub mod orbit_geometry;
pub mod sampling;
pub(crate) mod series;
pub mod stokes_data;
