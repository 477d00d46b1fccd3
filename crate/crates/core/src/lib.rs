pub mod cli;
pub mod encoders;
pub mod evaluation;
pub mod knowledge;
pub mod ksgn;
pub mod numeric;
pub mod scene;
pub mod training;
