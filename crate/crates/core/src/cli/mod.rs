//! Command-line front end. `run` maps every failure to an exit code (1 for
//! validation problems, 2 for I/O) and never panics on user input.

mod commands;

pub use commands::run;
