pub mod conditioning;
pub mod dataset;
pub mod diffusion;
pub mod graph;
pub mod kinematics;
pub mod mesh;
pub mod pipeline;
pub mod metrics;
pub mod retrieval;
pub mod service;
