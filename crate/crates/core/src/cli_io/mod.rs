//! Configuration files, CSV/VTK output and the `chcross` command line.

mod app;
pub mod config;
pub mod expr;
pub mod output;
pub mod selftest;

pub use app::{main, EXIT_FAILURE, EXIT_OK, EXIT_USAGE, EXIT_WARNINGS};
pub use config::{parse_config, RunConfig};
pub use output::{write_energy_csv, write_field_vtk, write_rate_csv};
