//! `xrpipe prompt`: render instruction prompts for one split partition.

use xrpipe_core::corpus::{
    load_corpus, write_prompts, SplitAssignment, CONDITION_LABELS,
};

use super::read_to_string;
use crate::{Cli, CliError, Command};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Command::Prompt {
        corpus,
        manifest,
        partition,
        mode,
    } = &cli.command
    else {
        unreachable!("dispatched on variant");
    };

    let records = load_corpus(corpus)?;
    let manifest_text = read_to_string(manifest)?;
    let assignment: SplitAssignment = serde_json::from_str(&manifest_text)
        .map_err(|e| CliError::Input(format!("{}: {e}", manifest.display())))?;

    let partition = (*partition).into();
    let mode = (*mode).into();
    let count = match &cli.out {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            let mut writer = std::io::BufWriter::new(file);
            let count = write_prompts(
                &records,
                &assignment,
                partition,
                mode,
                &CONDITION_LABELS,
                &mut writer,
            )?;
            std::io::Write::flush(&mut writer)?;
            // Prompts went to the file, so the count can use stdout.
            println!("{count} prompt(s) written");
            count
        }
        None => {
            let stdout = std::io::stdout();
            let count = write_prompts(
                &records,
                &assignment,
                partition,
                mode,
                &CONDITION_LABELS,
                stdout.lock(),
            )?;
            eprintln!("{count} prompt(s) written");
            count
        }
    };
    if cli.verbose {
        eprintln!("partition {partition}, {count} of {} record(s)", records.len());
    }
    Ok(())
}
