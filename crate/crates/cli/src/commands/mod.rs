pub mod experiment;
pub mod score;
pub mod train;
