use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use dualtail_cli::{error_json, run, Cli, ErrorReport};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = ErrorReport {
                kind: "usage".into(),
                message: e.to_string().trim().to_string(),
            };
            eprintln!("{}", error_json(&report));
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", error_json(&ErrorReport { kind: "cli".into(), message: e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(out) => {
            println!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&ErrorReport::from_anyhow(&e)));
            ExitCode::FAILURE
        }
    }
}
