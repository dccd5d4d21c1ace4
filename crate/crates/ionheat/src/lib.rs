pub mod cli;
pub mod crystal;
pub mod network;
pub mod oracle;
pub mod qep;
pub mod transport;
pub mod error;
pub mod seeding;

pub use error::{Error, Result};
