pub mod evaluate;
pub mod prompt;
pub mod qlora_demo;
pub mod quantize_cmd;
pub mod split_cmd;

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// Writes `text` to the path when given, otherwise to standard output.
pub fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            Ok(())
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Pretty JSON with a trailing newline, for stable primary outputs.
pub fn to_json_line<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports always serialize");
    s.push('\n');
    s
}

pub fn read_to_string(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
