//! Simulation of diffusions on a star graph through a process that
//! jumps from the vertex to a small distance `delta` into a randomly chosen
//! edge, with estimators for the vertex local time and Itô-formula checks.

pub mod config;
pub mod engine;
pub mod experiments;
pub mod io;
pub mod ito;
pub mod junction;
pub mod local_time;
pub mod path;
pub mod rng;
pub mod stats;
pub mod validation;

pub use junction::{
    junction_distance, CoefficientField, EdgeSpec, FieldBounds, Junction, JunctionError, JunctionPoint,
    VertexWeights,
};
pub use path::{PathError, PathRecord};
