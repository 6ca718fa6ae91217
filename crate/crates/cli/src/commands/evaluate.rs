//! `xrpipe evaluate`: score candidate reports against references by id.

use std::collections::HashMap;

use serde::Deserialize;
use xrpipe_core::metrics::{
    evaluate_corpus, tokenize, Aggregation, EvalPair, MeteorParams, MetricParams, RougeParams,
};

use super::{read_to_string, to_json_line, write_output};
use crate::{Cli, CliError, Command};

/// Minimal shape of one evaluation line; full study records parse too,
/// their extra fields are ignored.
#[derive(Debug, Deserialize)]
struct ReportLine {
    id: String,
    report: String,
}

fn read_lines(path: &std::path::Path) -> Result<Vec<ReportLine>, CliError> {
    let text = read_to_string(path)?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ReportLine = serde_json::from_str(line).map_err(|e| {
            CliError::Input(format!("{}:{}: malformed record: {e}", path.display(), idx + 1))
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Command::Evaluate {
        candidates,
        references,
        smoothing,
        sentence_level,
        alpha,
        gamma,
        frag_beta,
        rouge_beta,
    } = &cli.command
    else {
        unreachable!("dispatched on variant");
    };

    let candidate_lines = read_lines(candidates)?;
    let reference_lines = read_lines(references)?;

    let mut reference_by_id: HashMap<String, String> = HashMap::new();
    for line in reference_lines {
        if reference_by_id.insert(line.id.clone(), line.report).is_some() {
            return Err(CliError::Contract(format!(
                "duplicate reference id {:?}",
                line.id
            )));
        }
    }

    let mut pairs = Vec::with_capacity(candidate_lines.len());
    for line in &candidate_lines {
        let reference = reference_by_id.get(&line.id).ok_or_else(|| {
            CliError::Contract(format!("no reference for candidate id {:?}", line.id))
        })?;
        pairs.push(EvalPair {
            id: Some(line.id.clone()),
            candidate: tokenize(&line.report),
            references: vec![tokenize(reference)],
        });
    }

    let params = MetricParams {
        smoothing: (*smoothing).into(),
        rouge: RougeParams { beta: *rouge_beta },
        meteor: MeteorParams {
            alpha: *alpha,
            gamma: *gamma,
            frag_beta: *frag_beta,
        },
    };
    let mode = if *sentence_level {
        Aggregation::SentenceAverage
    } else {
        Aggregation::Corpus
    };
    let report = evaluate_corpus(&pairs, &params, mode)?;
    if cli.verbose {
        eprintln!(
            "evaluated {} pair(s): bleu4 {:.4}, rouge_l {:.4}, meteor {:.4}",
            report.pair_count, report.bleu4, report.rouge_l, report.meteor
        );
    }
    write_output(&cli.out, &to_json_line(&report))
}
