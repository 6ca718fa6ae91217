//! `xrpipe quantize`: dense matrix (CSV or XRDM binary) to XRQ4 container,
//! with reconstruction-error statistics.

use std::path::Path;

use ndarray::Array2;
use serde::Serialize;
use xrpipe_core::quantize::{
    dequantize_matrix, footprint, quantize_matrix, write_xrq4, MemoryFootprint,
};

use super::{to_json_line, write_output};
use crate::{Cli, CliError, Command};

/// Magic prefix of the dense-matrix binary format: `XRDM`, version u16 LE,
/// rows u32 LE, cols u32 LE, then rows*cols little-endian f64, row-major.
pub const XRDM_MAGIC: [u8; 4] = *b"XRDM";

#[derive(Debug, Serialize)]
struct QuantizeStats {
    rows: usize,
    cols: usize,
    block_size: usize,
    max_abs_error: f64,
    mean_abs_error: f64,
    quantized_bytes: u64,
    dense_fp16_bytes: u64,
    storage_ratio_vs_fp16: f64,
}

fn read_csv_matrix(text: &str, path: &Path) -> Result<Array2<f64>, CliError> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Result<Vec<f64>, _> = line
            .split(',')
            .map(|cell| cell.trim().parse::<f64>())
            .collect();
        let row = row.map_err(|e| {
            CliError::Input(format!("{}:{}: bad cell: {e}", path.display(), idx + 1))
        })?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(CliError::Input(format!(
                    "{}:{}: ragged row: {} cells, expected {}",
                    path.display(),
                    idx + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!(
            "{}: empty matrix",
            path.display()
        )));
    }
    let cols = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = data.len() / cols;
    Ok(Array2::from_shape_vec((nrows, cols), data).expect("rectangular by construction"))
}

fn read_xrdm_matrix(bytes: &[u8], path: &Path) -> Result<Array2<f64>, CliError> {
    let bad = |msg: &str| CliError::Input(format!("{}: {msg}", path.display()));
    if bytes.len() < 14 {
        return Err(bad("truncated XRDM header"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != 1 {
        return Err(bad(&format!("unsupported XRDM version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let expected = 14 + rows * cols * 8;
    if bytes.len() != expected {
        return Err(bad(&format!(
            "XRDM payload is {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[14..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Array2::from_shape_vec((rows, cols), data).expect("length checked"))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let Command::Quantize {
        input,
        block_size,
        scale_width,
        stats_out,
    } = &cli.command
    else {
        unreachable!("dispatched on variant");
    };
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| CliError::Contract("quantize requires --out <container path>".into()))?;

    let bytes = std::fs::read(input)
        .map_err(|e| CliError::Input(format!("{}: {e}", input.display())))?;
    let matrix = if bytes.starts_with(&XRDM_MAGIC) {
        read_xrdm_matrix(&bytes, input)?
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| CliError::Input(format!("{}: not UTF-8 CSV", input.display())))?;
        read_csv_matrix(&text, input)?
    };

    let q = quantize_matrix(&matrix, *block_size)?;
    {
        let file = std::fs::File::create(out)?;
        let mut writer = std::io::BufWriter::new(file);
        write_xrq4(&q, *scale_width, &mut writer)?;
        std::io::Write::flush(&mut writer)?;
    }

    let reconstructed = dequantize_matrix(&q);
    let mut max_abs = 0.0f64;
    let mut sum_abs = 0.0f64;
    for (orig, rec) in matrix.iter().zip(reconstructed.iter()) {
        let err = (orig - rec).abs();
        max_abs = max_abs.max(err);
        sum_abs += err;
    }
    let fp = footprint(&q, None, *scale_width as usize);
    let dense16 = MemoryFootprint::dense_bytes(q.rows(), q.cols(), 2);
    let stats = QuantizeStats {
        rows: q.rows(),
        cols: q.cols(),
        block_size: *block_size,
        max_abs_error: max_abs,
        mean_abs_error: sum_abs / matrix.len() as f64,
        quantized_bytes: fp.total_bytes,
        dense_fp16_bytes: dense16,
        storage_ratio_vs_fp16: fp.total_bytes as f64 / dense16 as f64,
    };
    if cli.verbose {
        eprintln!(
            "quantized {}x{} (block {}), max error {:.6}, ratio {:.4}",
            stats.rows, stats.cols, stats.block_size, stats.max_abs_error,
            stats.storage_ratio_vs_fp16
        );
    }
    write_output(stats_out, &to_json_line(&stats))
}
