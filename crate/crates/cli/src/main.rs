mod cli;
mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::Cli;
use commands::{Ctx, Failure};
use output::Output;

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let merged = match config::merge(argv.clone()) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(&merged) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(1);
        }
    }
    let name = cli.cmd.name();
    let mut out = Output::resolve(cli.out_dir.as_deref());
    let result = commands::run(&cli.cmd, &mut Ctx { out: &mut out, format: cli.format });
    let threads = rayon::current_num_threads();
    let failure_note = match &result {
        Ok(done) => {
            println!("{name}: {}", done.summary);
            if done.failed.is_empty() {
                None
            } else {
                for f in &done.failed {
                    eprintln!("criterion failed: {f}");
                }
                Some(format!("{name}: failed criteria\n{}", done.failed.join("\n")))
            }
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(2);
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            Some(format!("{name}: numerical failure\n{m}"))
        }
    };
    if let Some(note) = &failure_note {
        let conf = config::render(name, &cli.cmd.args_json(), note);
        match out.write_text(&format!("{name}.failure.conf"), &conf) {
            Ok(p) => eprintln!("replay case written to {}", p.display()),
            Err(e) => eprintln!("could not write replay case: {e:#}"),
        }
    }
    if let Err(e) = out.write_meta(name, &argv, threads) {
        eprintln!("could not write metadata: {e:#}");
        return ExitCode::from(1);
    }
    for p in out.written() {
        println!("wrote {}", p.display());
    }
    if failure_note.is_some() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
