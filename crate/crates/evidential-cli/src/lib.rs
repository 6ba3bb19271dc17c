//! Command implementations behind the `evidential` binary. Each command is
//! a library function so tests can drive the exact code paths the CLI
//! runs.

pub mod aux_cmd;
pub mod config;
pub mod eval_cmd;
pub mod repro;
pub mod score;
pub mod synth_gen;
pub mod train_cmd;

use evidential::Error;

/// Process exit codes: 0 ok, 1 usage/config error, 2 numeric failure,
/// 3 acceptance-tolerance failure.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 2,
        _ => 1,
    }
}

pub const TOLERANCE_EXIT_CODE: i32 = 3;
