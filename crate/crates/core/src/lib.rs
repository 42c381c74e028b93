//! High-order adiabatic elimination of weakly coupled, strongly dissipative
//! environments, with reduced dynamics in Lindblad form and Kraus-form
//! embeddings.

pub mod instances;
pub mod lindblad;
pub mod qops;
pub mod reduce;
pub mod tlsbath;
pub mod verify;
