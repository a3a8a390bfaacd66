use std::process::ExitCode;

use clap::Parser;
use flowtex_cli::{execute, resolve, Args};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let result = resolve(args).context_stage("configuration").and_then(|inv| execute(&inv));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

trait ContextStage<T> {
    fn context_stage(self, stage: &'static str) -> anyhow::Result<T>;
}

impl<T> ContextStage<T> for anyhow::Result<T> {
    fn context_stage(self, stage: &'static str) -> anyhow::Result<T> {
        self.map_err(|e| e.context(stage))
    }
}
