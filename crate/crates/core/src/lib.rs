pub mod error;
pub mod extract;
pub mod model;
pub mod tensor;
pub mod network;
pub mod objective;
pub mod autocomplete;
pub mod eval;
pub mod train;
pub mod tasks;
pub mod service;
