//! `casloop problems list`: dump the embedded problem registry.

use std::process::ExitCode;

use casloop_core::context::problems;

pub fn list(full: bool) -> anyhow::Result<ExitCode> {
    for problem in problems() {
        if full {
            println!("--- {} ({:?}, {:?})", problem.id, problem.background, problem.sector);
            println!("{}", problem.statement);
        } else {
            println!(
                "{:<8} background={:<12} sector={:?}",
                problem.id,
                format!("{:?}", problem.background).to_lowercase(),
                problem.sector
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}
