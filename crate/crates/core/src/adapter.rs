//! Low-rank adapter algebra over a frozen quantized base.
//!
//! A [`LoraLayer`] holds a frozen 4-bit base matrix `W0` (d x k) and two
//! trainable full-precision factors `A` (d x r) and `B` (r x k). The forward
//! pass computes `h = W0 x + A (B x)` without ever materializing the dense
//! update `A B`; [`LoraLayer::merge`] produces the combined dense matrix
//! `W0 + A B` for inference-style use. No scaling factor is applied to the
//! update; [`LoraLayer::set_update_scale`] exists as a hook and defaults
//! to 1.
//!
//! Checkpoint format: one line of JSON (`rows`, `cols`, `rank`, `seed`)
//! terminated by a newline, followed by the raw little-endian 64-bit floats
//! of `A` then `B`, row-major.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::quantize::{dequantize_matrix, xrq4_bytes, QuantizedMatrix, QuantizeError};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("rank {rank} exceeds min({rows}, {cols})")]
    RankTooLarge {
        rank: usize,
        rows: usize,
        cols: usize,
    },
    #[error("malformed checkpoint: {0}")]
    MalformedCheckpoint(String),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Frozen quantized base plus trainable low-rank factors.
#[derive(Debug, Clone)]
pub struct LoraLayer {
    base: QuantizedMatrix,
    /// Dequantized copy of the frozen base, kept for fast matvecs. The
    /// quantized form stays the source of truth for hashing and storage.
    base_dense: Array2<f64>,
    a: Array2<f64>,
    b: Array2<f64>,
    rank: usize,
    update_scale: f64,
}

impl LoraLayer {
    /// Wraps a frozen base with explicit factors.
    pub fn new(
        base: QuantizedMatrix,
        a: Array2<f64>,
        b: Array2<f64>,
    ) -> Result<Self, AdapterError> {
        let (d, k) = (base.rows(), base.cols());
        let rank = a.ncols();
        if a.nrows() != d || b.ncols() != k || b.nrows() != rank {
            return Err(AdapterError::DimensionMismatch(format!(
                "base {d}x{k} with A {}x{} and B {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        if rank > d.min(k) {
            return Err(AdapterError::RankTooLarge { rank, rows: d, cols: k });
        }
        let base_dense = dequantize_matrix(&base);
        Ok(LoraLayer {
            base,
            base_dense,
            a,
            b,
            rank,
            update_scale: 1.0,
        })
    }

    /// Wraps a frozen base with freshly initialized factors: `B` exactly
    /// zero, `A` seeded Gaussian. The layer starts as an exact drop-in for
    /// the base.
    pub fn with_init(base: QuantizedMatrix, rank: usize, seed: u64) -> Result<Self, AdapterError> {
        let (a, b) = init_adapters(base.rows(), base.cols(), rank, seed);
        LoraLayer::new(base, a, b)
    }

    pub fn rows(&self) -> usize {
        self.base.rows()
    }

    pub fn cols(&self) -> usize {
        self.base.cols()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn base(&self) -> &QuantizedMatrix {
        &self.base
    }

    /// Dequantized view of the frozen base.
    pub fn base_dense(&self) -> &Array2<f64> {
        &self.base_dense
    }

    pub fn factors(&self) -> (&Array2<f64>, &Array2<f64>) {
        (&self.a, &self.b)
    }

    /// Mutable access to the trainable factors. The base stays frozen.
    pub fn factors_mut(&mut self) -> (&mut Array2<f64>, &mut Array2<f64>) {
        (&mut self.a, &mut self.b)
    }

    /// Replaces both factors, validating shapes.
    pub fn set_factors(&mut self, a: Array2<f64>, b: Array2<f64>) -> Result<(), AdapterError> {
        if a.dim() != self.a.dim() || b.dim() != self.b.dim() {
            return Err(AdapterError::DimensionMismatch(format!(
                "expected A {:?} and B {:?}, got A {:?} and B {:?}",
                self.a.dim(),
                self.b.dim(),
                a.dim(),
                b.dim()
            )));
        }
        self.a = a;
        self.b = b;
        Ok(())
    }

    /// Multiplier applied to the low-rank update; defaults to 1.
    pub fn set_update_scale(&mut self, scale: f64) {
        self.update_scale = scale;
    }

    pub fn update_scale(&self) -> f64 {
        self.update_scale
    }

    /// `h = W0 x + A (B x)`, computing the r-dimensional product first.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>, AdapterError> {
        if x.len() != self.cols() {
            return Err(AdapterError::DimensionMismatch(format!(
                "input length {} does not match {} columns",
                x.len(),
                self.cols()
            )));
        }
        let mut h = self.base_dense.dot(&x);
        if self.rank > 0 {
            let bx = self.b.dot(&x);
            let delta = self.a.dot(&bx);
            if self.update_scale == 1.0 {
                h += &delta;
            } else {
                h.scaled_add(self.update_scale, &delta);
            }
        }
        Ok(h)
    }

    /// Dense combined matrix `W0 + A B`. The layer itself is unchanged.
    pub fn merge(&self) -> Array2<f64> {
        if self.rank == 0 {
            return self.base_dense.clone();
        }
        let mut merged = self.base_dense.clone();
        let delta = self.a.dot(&self.b);
        if self.update_scale == 1.0 {
            merged += &delta;
        } else {
            merged.scaled_add(self.update_scale, &delta);
        }
        merged
    }

    /// SHA-256 of the base's serialized container bytes, hex encoded.
    /// Stable across the layer's lifetime; adapter updates cannot move it.
    pub fn base_hash(&self) -> String {
        hash_quantized(&self.base)
    }

    /// Writes the factors as a checkpoint. `seed` records the init seed for
    /// provenance and is not otherwise interpreted.
    pub fn save_checkpoint(&self, seed: Option<u64>, path: &Path) -> Result<(), AdapterError> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        write_checkpoint(&self.a, &self.b, seed, &mut out)?;
        Ok(())
    }

    /// Loads factors from a checkpoint, rejecting mismatched dimensions.
    pub fn load_checkpoint(&mut self, path: &Path) -> Result<(), AdapterError> {
        let (header, a, b) = read_checkpoint_file(path)?;
        if header.rows != self.rows() || header.cols != self.cols() || header.rank != self.rank {
            return Err(AdapterError::DimensionMismatch(format!(
                "checkpoint is {}x{} rank {}, layer is {}x{} rank {}",
                header.rows,
                header.cols,
                header.rank,
                self.rows(),
                self.cols(),
                self.rank
            )));
        }
        self.a = a;
        self.b = b;
        Ok(())
    }
}

/// SHA-256 hex digest of a quantized matrix's container image.
pub fn hash_quantized(q: &QuantizedMatrix) -> String {
    let bytes = xrq4_bytes(q, 4).expect("serializing a well-formed matrix cannot fail");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Fresh factors: `A` is zero-mean Gaussian with standard deviation
/// `1/sqrt(r)`, sampled row-major from a ChaCha stream seeded by `seed`;
/// `B` is exactly zero so the initial update vanishes.
pub fn init_adapters(d: usize, k: usize, r: usize, seed: u64) -> (Array2<f64>, Array2<f64>) {
    if r == 0 {
        return (Array2::zeros((d, 0)), Array2::zeros((0, k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0 / (r as f64).sqrt()).expect("positive std");
    let a = Array2::from_shape_fn((d, r), |_| normal.sample(&mut rng));
    (a, Array2::zeros((r, k)))
}

/// One matrix slated for adaptation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterTarget {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

/// The set of matrices adapted at a common rank.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterTargetSpec {
    pub rank: usize,
    pub targets: Vec<AdapterTarget>,
}

impl AdapterTargetSpec {
    /// Total trainable parameters: `sum(r * (rows + cols))` over targets.
    /// The frozen bases contribute nothing.
    pub fn count_trainable(&self) -> u64 {
        self.targets
            .iter()
            .map(|t| self.rank as u64 * (t.rows as u64 + t.cols as u64))
            .sum()
    }

    /// Adapter roster for an 8B-class LLaMA 3.1 decoder: 32 layers, each
    /// adapting the four attention projections and the three MLP
    /// projections at hidden size 4096, KV width 1024, and MLP width 14336.
    pub fn llama31_8b(rank: usize) -> Self {
        const LAYERS: usize = 32;
        const PROJECTIONS: [(&str, usize, usize); 7] = [
            ("q_proj", 4096, 4096),
            ("k_proj", 4096, 1024),
            ("v_proj", 4096, 1024),
            ("o_proj", 4096, 4096),
            ("gate_proj", 4096, 14336),
            ("up_proj", 4096, 14336),
            ("down_proj", 14336, 4096),
        ];
        let mut targets = Vec::with_capacity(LAYERS * PROJECTIONS.len());
        for layer in 0..LAYERS {
            for (name, rows, cols) in PROJECTIONS {
                targets.push(AdapterTarget {
                    name: format!("layers.{layer}.{name}"),
                    rows,
                    cols,
                });
            }
        }
        AdapterTargetSpec { rank, targets }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    rows: usize,
    cols: usize,
    rank: usize,
    seed: Option<u64>,
}

fn write_checkpoint<W: Write>(
    a: &Array2<f64>,
    b: &Array2<f64>,
    seed: Option<u64>,
    out: &mut W,
) -> Result<(), AdapterError> {
    let header = CheckpointHeader {
        rows: a.nrows(),
        cols: b.ncols(),
        rank: a.ncols(),
        seed,
    };
    let mut line = serde_json::to_string(&header)
        .map_err(|e| AdapterError::MalformedCheckpoint(e.to_string()))?;
    line.push('\n');
    out.write_all(line.as_bytes())?;
    for &v in a.iter().chain(b.iter()) {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_checkpoint_file(
    path: &Path,
) -> Result<(CheckpointHeader, Array2<f64>, Array2<f64>), AdapterError> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())
        .map_err(|e| AdapterError::MalformedCheckpoint(format!("header: {e}")))?;

    let a = read_matrix(&mut reader, header.rows, header.rank)?;
    let b = read_matrix(&mut reader, header.rank, header.cols)?;
    let mut rest = [0u8; 1];
    if reader.read(&mut rest)? != 0 {
        return Err(AdapterError::MalformedCheckpoint(
            "trailing bytes after factors".into(),
        ));
    }
    Ok((header, a, b))
}

fn read_matrix<R: Read>(
    reader: &mut R,
    rows: usize,
    cols: usize,
) -> Result<Array2<f64>, AdapterError> {
    let mut data = Vec::with_capacity(rows * cols);
    let mut buf = [0u8; 8];
    for _ in 0..rows * cols {
        reader.read_exact(&mut buf).map_err(|e| {
            AdapterError::MalformedCheckpoint(format!("truncated factor data: {e}"))
        })?;
        data.push(f64::from_le_bytes(buf));
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| AdapterError::MalformedCheckpoint(e.to_string()))
}
