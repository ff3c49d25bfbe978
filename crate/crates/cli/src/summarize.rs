//! `abc summarize`: merge the summary.csv files of several runs.

use std::fs;
use std::path::{Path, PathBuf};

use abc_core::pipeline::write_atomic;
use abc_core::Error;

use crate::{exit_code, EXIT_OK};

const HEADER: &str = "generation,updated_agent,n_episodes,mean,sd,ci95_low,ci95_high";

/// Rows of one run's summary.csv, header checked.
pub fn read_summary(run: &Path) -> Result<Vec<Vec<String>>, Error> {
    let path = run.join("summary.csv");
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(Error::Config(format!("{} does not start with the summary header", path.display())));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let fields: Vec<String> = l.split(',').map(str::to_string).collect();
            if fields.len() != 7 {
                return Err(Error::Config(format!("{}:{}: expected 7 fields", path.display(), i + 2)));
            }
            Ok(fields)
        })
        .collect()
}

pub fn merge(runs: &[PathBuf], out: &Path) -> Result<(), Error> {
    let mut tables = Vec::with_capacity(runs.len());
    for run in runs {
        tables.push((run.display().to_string(), read_summary(run)?));
    }
    write_atomic(out, |w| {
        writeln!(w, "run,{HEADER}")?;
        for (name, rows) in &tables {
            for row in rows {
                writeln!(w, "{name},{}", row.join(","))?;
            }
        }
        Ok(())
    })?;
    for (name, rows) in &tables {
        eprintln!("{name}");
        for r in rows {
            eprintln!("  gen {:>2}  mean {:>8}  ci [{}, {}]  n={}", r[0], r[3], r[5], r[6], r[2]);
        }
    }
    Ok(())
}

pub fn execute(runs: &[PathBuf], out: &Path) -> i32 {
    match merge(runs, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("abc summarize: {e}");
            exit_code(&e)
        }
    }
}
