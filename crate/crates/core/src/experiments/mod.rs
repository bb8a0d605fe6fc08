//! Closed-loop studies built on the walking model.

pub mod scalar;
pub mod sensitivity;
pub mod simplex;
pub mod simulate;
pub mod viability;
