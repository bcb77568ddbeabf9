//! Command-line front end and HTTP session service for `stimkit-core`.

pub mod args;
pub mod commands;
pub mod error;
pub mod server;

use std::io::Write;

use args::{Cli, Cmd};
use error::CliResult;

/// Runs a subcommand. Tables go to `out`, side reports to `err`.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Cmd::Synth(a) => commands::synth(a, out),
        Cmd::Profiles(a) => commands::profiles(a, out),
        Cmd::Predict(a) => commands::predict(a, out),
        Cmd::Simulate(a) => commands::simulate(a, out),
        Cmd::Summarize(a) => commands::summarize(a, out, err),
        Cmd::Frame(a) => commands::frame(a, out),
        Cmd::Replay(a) => commands::replay_frames(a, out),
        Cmd::DacCheck(a) => commands::dac_check(a, out),
        Cmd::Serve(a) => server::serve_blocking(a),
    }
}
