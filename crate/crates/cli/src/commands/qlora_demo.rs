//! `xrpipe qlora-demo`: end-to-end adapter fine-tuning on the synthetic
//! copy task, with trainable-parameter and storage accounting.

use serde::{Deserialize, Serialize};
use xrpipe_core::adapter::AdapterTargetSpec;
use xrpipe_core::quantize::{footprint, MemoryFootprint};
use xrpipe_core::trainer::{copy_task, train, ToyModel, TrainConfig, TrainReport};

use super::{read_to_string, to_json_line, write_output};
use crate::{Cli, CliError, Command};

/// Demo configuration: the toy model shape, the synthetic dataset size,
/// and the training recipe. The default training recipe keeps the
/// realistic batching and decay settings but raises the peak rate to a
/// desk-scale value; a config file or flags can override any field.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DemoConfig {
    pub vocab: usize,
    pub hidden: usize,
    pub rank: usize,
    pub block_size: usize,
    pub model_seed: u64,
    pub data_seed: u64,
    pub examples: usize,
    pub train: TrainConfig,
}

impl Default for DemoConfig {
    fn default() -> Self {
        DemoConfig {
            vocab: 8,
            hidden: 32,
            rank: 8,
            block_size: 64,
            model_seed: 11,
            data_seed: 12,
            examples: 512,
            train: TrainConfig {
                lr_max: 0.1,
                warmup_steps: 5,
                ..Default::default()
            },
        }
    }
}

/// Primary JSON output of a demo run.
#[derive(Debug, Serialize)]
struct DemoReport {
    trainable_parameters: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_spec_parameters: Option<u64>,
    effective_batch: usize,
    memory_footprint: MemoryFootprint,
    frozen_hashes: Vec<(String, String)>,
    report: TrainReport,
}

fn load_config(cli: &Cli) -> Result<DemoConfig, CliError> {
    let mut config = match &cli.config {
        None => DemoConfig::default(),
        Some(path) => {
            let text = read_to_string(path)?;
            let is_toml = path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
            if is_toml {
                toml::from_str(&text)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            } else {
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
            }
        }
    };
    if let Some(seed) = cli.seed {
        config.train.seed = seed;
    }
    Ok(config)
}

fn resolve_target_spec(arg: &str) -> Result<AdapterTargetSpec, CliError> {
    if arg == "llama31-8b" {
        return Ok(AdapterTargetSpec::llama31_8b(16));
    }
    let text = read_to_string(std::path::Path::new(arg))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{arg}: {e}")))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Command::QloraDemo {
        target_spec,
        params_only,
        checkpoint,
        epochs,
        batch_size,
        grad_accum_steps,
        lr_max,
        warmup_steps,
        eight_bit_state,
    } = &cli.command
    else {
        unreachable!("dispatched on variant");
    };

    let mut config = load_config(cli)?;
    if let Some(epochs) = epochs {
        config.train.epochs = *epochs;
    }
    if let Some(batch_size) = batch_size {
        config.train.batch_size = *batch_size;
    }
    if let Some(steps) = grad_accum_steps {
        config.train.grad_accum_steps = *steps;
    }
    if let Some(lr) = lr_max {
        config.train.lr_max = *lr;
    }
    if let Some(warmup) = warmup_steps {
        config.train.warmup_steps = *warmup;
    }
    if *eight_bit_state {
        config.train.eight_bit_state = true;
    }
    let spec = target_spec.as_deref().map(resolve_target_spec).transpose()?;
    let target_spec_parameters = spec.as_ref().map(AdapterTargetSpec::count_trainable);

    if *params_only {
        let count = match target_spec_parameters {
            Some(count) => count,
            None => {
                let model =
                    ToyModel::new(config.vocab, config.hidden, config.rank, config.model_seed)?;
                model.trainable_parameter_count()
            }
        };
        println!("trainable_parameters: {count}");
        return Ok(());
    }

    let mut model = ToyModel::new(config.vocab, config.hidden, config.rank, config.model_seed)?;
    let dataset = copy_task(config.examples, config.vocab, config.data_seed);
    let hashes_before = model.frozen_hashes();
    let fp = footprint(model.layer().base(), Some(config.rank), 4);

    eprintln!(
        "trainable parameters: {} (adapter rank {} on a {}x{} base)",
        model.trainable_parameter_count(),
        config.rank,
        config.hidden,
        config.hidden
    );
    if let Some(count) = target_spec_parameters {
        eprintln!("target-spec trainable parameters: {count}");
    }

    let report = train(&mut model, &dataset, &config.train)?;

    if model.frozen_hashes() != hashes_before {
        return Err(CliError::Numeric(
            "frozen tensor hash changed during training".into(),
        ));
    }
    eprintln!(
        "loss {:.4} -> {:.4} ({:.1}% of initial), {} step(s), stopped_early={}, {:.2}s",
        report.initial_train_loss,
        report.final_train_loss,
        100.0 * report.final_train_loss / report.initial_train_loss,
        report.step_losses.len(),
        report.stopped_early,
        report.wall_time_secs
    );
    eprintln!("frozen hashes verified: {} tensor(s) unchanged", hashes_before.len());

    if let Some(path) = checkpoint {
        model
            .layer()
            .save_checkpoint(Some(config.train.seed), path)?;
        eprintln!("checkpoint written to {}", path.display());
    }

    let demo = DemoReport {
        trainable_parameters: model.trainable_parameter_count(),
        target_spec_parameters,
        effective_batch: config.train.effective_batch(),
        memory_footprint: fp,
        frozen_hashes: hashes_before,
        report,
    };
    write_output(&cli.out, &to_json_line(&demo))
}
