//! Reduction calculus for tuples of commuting transformations with polynomial
//! iterates, and an exact averaging engine on finite measure-preserving systems.

pub mod averages;
pub mod family;
pub mod finsys;
pub mod parallel;
pub mod polyalg;
pub mod reduction;
