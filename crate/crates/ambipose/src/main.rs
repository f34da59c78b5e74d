use std::process::ExitCode;

use ambipose::cli::Args;
use ambipose::run_pipeline;
use clap::Parser;

fn main() -> ExitCode {
    let args = Args::parse();
    let result = args.resolve().and_then(|cfg| run_pipeline(&cfg));
    match result {
        Ok(summary) => {
            for w in &summary.warnings {
                eprintln!("warning: {w:?}");
            }
            let ev = &summary.evaluation;
            eprintln!(
                "{} frames, {} proposals, {} valid axes; AR raw {:.4}, optimized {:.4}; solver {:?} after {} iterations",
                summary.set.frames.len(),
                summary.accepted(),
                summary.valid_axes(),
                ev.ar_raw.ar_in_scope,
                ev.ar_optimized.ar_in_scope,
                summary.result.report.termination,
                summary.result.report.iterations,
            );
            for p in &summary.written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
