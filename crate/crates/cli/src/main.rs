//! `nbrpred` command-line tool.

mod commands;

use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::Cli;

fn error_kind(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|c| c.downcast_ref::<nbrpred::Error>())
        .map(nbrpred::Error::kind)
        .or_else(|| {
            err.chain()
                .find_map(|c| c.downcast_ref::<std::io::Error>())
                .map(|_| "io")
        })
        .unwrap_or("usage")
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!(
        "{}",
        json!({ "error": { "kind": kind, "message": message } })
    );
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim().to_owned(), 2),
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(error_kind(&e), format!("{e:#}"), 1),
    }
}
