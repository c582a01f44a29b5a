pub mod eval;
pub mod infer;
pub mod ransac;
pub mod synth;
pub mod weights;
