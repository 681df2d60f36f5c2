pub mod cli;
pub mod fieldio;
pub mod harness;
pub mod instrument;
pub mod keyname;
pub mod listing;
pub mod memory;
pub mod metrics;
pub mod object;
pub mod posix;
pub mod record;
pub mod report;
pub mod segments;
pub mod sweep;
pub mod verify;
