//! Command-line front end for `flowtex`: argument and config-file parsing,
//! PNG I/O, run manifests and debug artifacts.

pub mod args;
pub mod manifest;
pub mod png;
pub mod run;

pub use args::{parse_args, resolve, Args, ExtractorChoice, Invocation, StylePaths};
pub use manifest::RunManifest;
pub use png::{load_png, save_png};
pub use run::{execute, RunOutputs};
