pub mod fixtures;
pub mod naive;
