pub mod bench;
pub mod eval;
pub mod predict;
pub mod select;
pub mod synth;
