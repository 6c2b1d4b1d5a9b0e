pub mod cli;
pub mod formats;
pub mod gen;
pub mod report;
pub mod suites;
