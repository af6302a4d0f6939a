pub mod eval_mcs;
pub mod gen;
pub mod locate;
pub mod report;
pub mod train;
