#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod gradcheck;
pub mod tensor;
pub mod nn;
pub mod params;
pub mod data;
pub mod sim;
pub mod config;
pub mod encoder;
pub mod decoder;
pub mod objective;
pub mod model;
pub mod train;
pub mod eval;
