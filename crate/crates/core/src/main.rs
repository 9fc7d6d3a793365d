use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;

use forkbench::bench::{
    emit_csv, parse_args, parse_csv, run_experiments, summarize, BenchError, Invocation,
};

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn run() -> Result<bool, BenchError> {
    match parse_args(std::env::args_os())? {
        Invocation::Run { specs, out } => {
            let table = run_experiments(&specs)?;
            match &out {
                Some(path) => {
                    let file = File::create(path).map_err(io_err(path))?;
                    let mut w = BufWriter::new(file);
                    emit_csv(&table, &mut w)?;
                    w.flush().map_err(io_err(path))?;
                }
                None => emit_csv(&table, io::stdout().lock())?,
            }
            for r in table.unverified() {
                eprintln!(
                    "unverified: kernel={} model={} policy={} chunk={} workers={} trial={} checksum={}",
                    r.kernel,
                    r.model,
                    r.policy,
                    r.chunk.map(|c| c.to_string()).unwrap_or_default(),
                    r.workers,
                    r.trial,
                    r.checksum
                );
            }
            Ok(table.all_verified())
        }
        Invocation::Report { input } => {
            let file = File::open(&input).map_err(io_err(&input))?;
            let table = parse_csv(file)?;
            print!("{}", summarize(&table)?);
            Ok(table.all_verified())
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(BenchError::Cli(e)) => e.exit(),
        Err(e) => {
            eprintln!("forkbench: {e}");
            ExitCode::FAILURE
        }
    }
}
