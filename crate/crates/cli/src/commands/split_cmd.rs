//! `xrpipe split`: deterministic 70/10/20 corpus partition.

use xrpipe_core::corpus::{load_corpus, split};

use super::{to_json_line, write_output};
use crate::{Cli, CliError, Command};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Command::Split { corpus } = &cli.command else {
        unreachable!("dispatched on variant");
    };
    let records = load_corpus(corpus)?;
    if records.is_empty() {
        return Err(CliError::Input("empty corpus".into()));
    }
    let seed = cli.seed.unwrap_or(0);
    let assignment = split(&records, seed);
    if cli.verbose {
        eprintln!(
            "split {} record(s) into {}/{}/{} with seed {seed}",
            records.len(),
            assignment.train.len(),
            assignment.val.len(),
            assignment.test.len()
        );
    }
    write_output(&cli.out, &to_json_line(&assignment))
}
