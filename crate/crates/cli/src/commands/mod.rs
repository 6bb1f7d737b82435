pub mod common;
pub mod eval;
pub mod gen;
pub mod recover;
pub mod serialize;
pub mod train;
