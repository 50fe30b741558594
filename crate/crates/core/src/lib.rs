pub mod aos;
pub mod camera;
pub mod cli;
pub mod deteval;
pub mod fusion;
pub mod imgcore;
pub mod scenegen;
