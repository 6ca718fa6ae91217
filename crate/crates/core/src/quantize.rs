//! Blockwise absmax quantization and storage accounting.
//!
//! Weight matrices are quantized to signed 4-bit levels in [-7, 7] and
//! optimizer state vectors to signed 8-bit levels in [-127, 127]. Elements
//! are processed in row-major order in blocks of `block_size`; each block
//! stores one scale equal to its largest absolute value divided by the top
//! level, so the extreme element always maps to the extreme level exactly
//! and every element reconstructs within half a scale.
//!
//! The `XRQ4` binary container serializes a [`QuantizedMatrix`] bit-exactly:
//! a little-endian header (magic `XRQ4`, version u16, rows u32, cols u32,
//! block_size u32, scale_width u8), the per-block scales at the declared
//! width, then the codes packed two per byte, low nibble first, row-major.

use std::io::{self, Read, Write};

use ndarray::Array2;
use thiserror::Error;

/// Default quantization block length.
pub const DEFAULT_BLOCK_SIZE: usize = 64;

/// Container magic for quantized matrices.
pub const XRQ4_MAGIC: [u8; 4] = *b"XRQ4";

/// Current container format version.
pub const XRQ4_VERSION: u16 = 1;

const MATRIX_LEVELS: i32 = 7;
const STATE_LEVELS: i32 = 127;

#[derive(Debug, Error)]
pub enum QuantizeError {
    #[error("non-finite weight at flat index {0}")]
    NonFinite(usize),
    #[error("block size must be at least 1")]
    InvalidBlockSize,
    #[error("block absmax {0} is outside the representable scale range")]
    ScaleRange(f64),
    #[error("unsupported scale width {0}, expected 4 or 8")]
    ScaleWidth(u8),
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Blockwise 4-bit representation of a dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMatrix {
    rows: usize,
    cols: usize,
    block_size: usize,
    /// One signed level in [-7, 7] per element, row-major.
    codes: Vec<i8>,
    /// One scale per block; 0 only for all-zero blocks.
    scales: Vec<f32>,
}

impl QuantizedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn block_count(&self) -> usize {
        self.scales.len()
    }
}

/// Blockwise 8-bit representation of a state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedStateVector {
    len: usize,
    block_size: usize,
    codes: Vec<i8>,
    scales: Vec<f32>,
}

impl QuantizedStateVector {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn codes(&self) -> &[i8] {
        &self.codes
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }
}

/// Quantizes one block against `levels` and appends codes in place.
fn quantize_block(
    block: &[f64],
    levels: i32,
    codes: &mut Vec<i8>,
) -> Result<f32, QuantizeError> {
    let absmax = block.iter().fold(0.0f64, |acc, w| acc.max(w.abs()));
    if absmax == 0.0 {
        codes.extend(std::iter::repeat(0).take(block.len()));
        return Ok(0.0);
    }
    let scale = (absmax / levels as f64) as f32;
    if !scale.is_finite() || scale == 0.0 {
        return Err(QuantizeError::ScaleRange(absmax));
    }
    let scale64 = scale as f64;
    for &w in block {
        // round() rounds half away from zero, so the absmax element lands
        // exactly on +/-levels.
        let code = (w / scale64).round().clamp(-(levels as f64), levels as f64);
        codes.push(code as i8);
    }
    Ok(scale)
}

fn quantize_flat(
    values: &[f64],
    block_size: usize,
    levels: i32,
) -> Result<(Vec<i8>, Vec<f32>), QuantizeError> {
    if block_size == 0 {
        return Err(QuantizeError::InvalidBlockSize);
    }
    if let Some(idx) = values.iter().position(|w| !w.is_finite()) {
        return Err(QuantizeError::NonFinite(idx));
    }
    let mut codes = Vec::with_capacity(values.len());
    let mut scales = Vec::with_capacity(values.len().div_ceil(block_size));
    for block in values.chunks(block_size) {
        scales.push(quantize_block(block, levels, &mut codes)?);
    }
    Ok((codes, scales))
}

/// Quantizes a dense matrix to 4-bit blockwise codes.
pub fn quantize_matrix(
    w: &Array2<f64>,
    block_size: usize,
) -> Result<QuantizedMatrix, QuantizeError> {
    let flat: Vec<f64> = w.iter().copied().collect();
    let (codes, scales) = quantize_flat(&flat, block_size, MATRIX_LEVELS)?;
    Ok(QuantizedMatrix {
        rows: w.nrows(),
        cols: w.ncols(),
        block_size,
        codes,
        scales,
    })
}

/// Reconstructs the dense matrix; every element is `code * block_scale`.
pub fn dequantize_matrix(q: &QuantizedMatrix) -> Array2<f64> {
    let data = dequantize_flat(&q.codes, &q.scales, q.block_size);
    Array2::from_shape_vec((q.rows, q.cols), data).expect("codes length matches dims")
}

/// Quantizes a state vector to 8-bit blockwise codes.
pub fn quantize_state(
    values: &[f64],
    block_size: usize,
) -> Result<QuantizedStateVector, QuantizeError> {
    let (codes, scales) = quantize_flat(values, block_size, STATE_LEVELS)?;
    Ok(QuantizedStateVector {
        len: values.len(),
        block_size,
        codes,
        scales,
    })
}

pub fn dequantize_state(q: &QuantizedStateVector) -> Vec<f64> {
    dequantize_flat(&q.codes, &q.scales, q.block_size)
}

fn dequantize_flat(codes: &[i8], scales: &[f32], block_size: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(codes.len());
    for (block, &scale) in codes.chunks(block_size).zip(scales) {
        let s = scale as f64;
        out.extend(block.iter().map(|&c| c as f64 * s));
    }
    out
}

/// Byte accounting for a quantized matrix plus optional adapters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MemoryFootprint {
    /// Packed 4-bit codes: two per byte.
    pub weight_bytes: u64,
    /// One scale per block at the declared width.
    pub scale_bytes: u64,
    /// Full-precision 32-bit adapter factors: `r * (rows + cols) * 4`.
    pub adapter_bytes: u64,
    pub total_bytes: u64,
}

impl MemoryFootprint {
    /// Bytes for the same matrix stored densely at `bytes_per_element`.
    pub fn dense_bytes(rows: usize, cols: usize, bytes_per_element: usize) -> u64 {
        rows as u64 * cols as u64 * bytes_per_element as u64
    }
}

/// Storage accounting for `q`, with adapters of rank `adapter_rank` sized
/// for the same matrix.
pub fn footprint(
    q: &QuantizedMatrix,
    adapter_rank: Option<usize>,
    scale_width_bytes: usize,
) -> MemoryFootprint {
    let elements = q.rows as u64 * q.cols as u64;
    let weight_bytes = elements.div_ceil(2);
    let scale_bytes = q.block_count() as u64 * scale_width_bytes as u64;
    let adapter_bytes =
        adapter_rank.unwrap_or(0) as u64 * (q.rows as u64 + q.cols as u64) * 4;
    MemoryFootprint {
        weight_bytes,
        scale_bytes,
        adapter_bytes,
        total_bytes: weight_bytes + scale_bytes + adapter_bytes,
    }
}

fn pack_nibbles(codes: &[i8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(codes.len().div_ceil(2));
    for pair in codes.chunks(2) {
        let low = (pair[0] as u8) & 0x0F;
        let high = if pair.len() == 2 {
            (pair[1] as u8) & 0x0F
        } else {
            0
        };
        out.push(low | (high << 4));
    }
    out
}

fn unpack_nibble(nibble: u8) -> i8 {
    // Sign-extend a two's complement nibble.
    if nibble & 0x8 != 0 {
        (nibble as i8) - 16
    } else {
        nibble as i8
    }
}

/// Serializes `q` into the XRQ4 container.
pub fn write_xrq4<W: Write>(
    q: &QuantizedMatrix,
    scale_width: u8,
    mut out: W,
) -> Result<(), QuantizeError> {
    if scale_width != 4 && scale_width != 8 {
        return Err(QuantizeError::ScaleWidth(scale_width));
    }
    out.write_all(&XRQ4_MAGIC)?;
    out.write_all(&XRQ4_VERSION.to_le_bytes())?;
    out.write_all(&(q.rows as u32).to_le_bytes())?;
    out.write_all(&(q.cols as u32).to_le_bytes())?;
    out.write_all(&(q.block_size as u32).to_le_bytes())?;
    out.write_all(&[scale_width])?;
    for &s in &q.scales {
        match scale_width {
            4 => out.write_all(&s.to_le_bytes())?,
            _ => out.write_all(&(s as f64).to_le_bytes())?,
        }
    }
    out.write_all(&pack_nibbles(&q.codes))?;
    Ok(())
}

/// In-memory XRQ4 image of `q`, as written by [`write_xrq4`].
pub fn xrq4_bytes(q: &QuantizedMatrix, scale_width: u8) -> Result<Vec<u8>, QuantizeError> {
    let mut buf = Vec::new();
    write_xrq4(q, scale_width, &mut buf)?;
    Ok(buf)
}

/// Deserializes an XRQ4 container.
pub fn read_xrq4<R: Read>(mut input: R) -> Result<QuantizedMatrix, QuantizeError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if magic != XRQ4_MAGIC {
        return Err(QuantizeError::Malformed(format!(
            "bad magic {magic:?}, expected \"XRQ4\""
        )));
    }
    let version = u16::from_le_bytes(read_array(&mut input)?);
    if version != XRQ4_VERSION {
        return Err(QuantizeError::Malformed(format!(
            "unsupported version {version}"
        )));
    }
    let rows = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let cols = u32::from_le_bytes(read_array(&mut input)?) as usize;
    let block_size = u32::from_le_bytes(read_array(&mut input)?) as usize;
    if block_size == 0 {
        return Err(QuantizeError::Malformed("zero block size".into()));
    }
    let scale_width = read_array::<_, 1>(&mut input)?[0];
    if scale_width != 4 && scale_width != 8 {
        return Err(QuantizeError::ScaleWidth(scale_width));
    }

    let elements = rows * cols;
    let block_count = elements.div_ceil(block_size);
    let mut scales = Vec::with_capacity(block_count);
    for _ in 0..block_count {
        let s = match scale_width {
            4 => f32::from_le_bytes(read_array(&mut input)?),
            _ => f64::from_le_bytes(read_array(&mut input)?) as f32,
        };
        scales.push(s);
    }

    let mut packed = vec![0u8; elements.div_ceil(2)];
    input.read_exact(&mut packed)?;
    let mut codes = Vec::with_capacity(elements);
    for (i, &byte) in packed.iter().enumerate() {
        codes.push(unpack_nibble(byte & 0x0F));
        if 2 * i + 1 < elements {
            codes.push(unpack_nibble(byte >> 4));
        }
    }

    for (block, &scale) in codes.chunks(block_size).zip(&scales) {
        if block.iter().any(|&c| c.abs() > MATRIX_LEVELS as i8) {
            return Err(QuantizeError::Malformed("code outside [-7, 7]".into()));
        }
        if scale == 0.0 && block.iter().any(|&c| c != 0) {
            return Err(QuantizeError::Malformed(
                "zero scale with nonzero codes".into(),
            ));
        }
    }

    Ok(QuantizedMatrix {
        rows,
        cols,
        block_size,
        codes,
        scales,
    })
}

fn read_array<R: Read, const N: usize>(input: &mut R) -> Result<[u8; N], QuantizeError> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_matrix_quantizes_to_zero() {
        let w = Array2::<f64>::zeros((4, 4));
        let q = quantize_matrix(&w, 4).unwrap();
        assert!(q.codes().iter().all(|&c| c == 0));
        assert!(q.scales().iter().all(|&s| s == 0.0));
        assert_eq!(dequantize_matrix(&q), w);
    }

    #[test]
    fn half_levels_round_away_from_zero() {
        let w = array![[7.0, -7.0, 3.5, 0.0]];
        let q = quantize_matrix(&w, 4).unwrap();
        assert_eq!(q.scales(), &[1.0]);
        assert_eq!(q.codes(), &[7, -7, 4, 0]);
    }

    #[test]
    fn single_code_definition() {
        let q = QuantizedMatrix {
            rows: 1,
            cols: 1,
            block_size: 1,
            codes: vec![7],
            scales: vec![0.5],
        };
        assert_eq!(dequantize_matrix(&q)[[0, 0]], 3.5);
    }

    #[test]
    fn absmax_maps_to_extreme_level() {
        let w = array![[0.013, -2.75, 0.4, 1.1]];
        let q = quantize_matrix(&w, 4).unwrap();
        assert_eq!(q.codes()[1], -7);
    }

    #[test]
    fn round_trip_error_within_half_scale() {
        let w = array![[0.3, -1.2, 0.07, 2.4], [-0.9, 0.0, 1.7, -2.2]];
        let q = quantize_matrix(&w, 3).unwrap();
        let back = dequantize_matrix(&q);
        for (idx, (&orig, &rec)) in w.iter().zip(back.iter()).enumerate() {
            let scale = q.scales()[idx / 3] as f64;
            assert!(
                (orig - rec).abs() <= scale / 2.0 + 1e-15,
                "element {idx}: |{orig} - {rec}| > {scale}/2"
            );
        }
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let w = array![[1.0, f64::NAN]];
        match quantize_matrix(&w, 2) {
            Err(QuantizeError::NonFinite(1)) => {}
            other => panic!("expected NonFinite(1), got {other:?}"),
        }
    }

    #[test]
    fn state_vector_single_element() {
        let q = quantize_state(&[1.0], 64).unwrap();
        assert_eq!(q.codes(), &[127]);
        assert_eq!(q.scales()[0], (1.0 / 127.0) as f32);
        let back = dequantize_state(&q);
        assert!((back[0] - 1.0).abs() <= q.scales()[0] as f64 / 2.0);
    }

    #[test]
    fn state_zero_vector() {
        let q = quantize_state(&[0.0; 10], 4).unwrap();
        assert!(q.codes().iter().all(|&c| c == 0));
        assert_eq!(dequantize_state(&q), vec![0.0; 10]);
    }

    #[test]
    fn footprint_reference_shape() {
        let q = QuantizedMatrix {
            rows: 4096,
            cols: 4096,
            block_size: 64,
            codes: vec![],
            scales: vec![0.0; (4096 * 4096usize).div_ceil(64)],
        };
        let fp = footprint(&q, None, 4);
        assert_eq!(fp.weight_bytes, 8_388_608);
        assert_eq!(fp.scale_bytes, 1_048_576);
        assert_eq!(fp.adapter_bytes, 0);
        assert_eq!(fp.total_bytes, 9_437_184);

        let dense16 = MemoryFootprint::dense_bytes(4096, 4096, 2);
        assert_eq!(dense16, 33_554_432);
        assert!((fp.total_bytes as f64) <= 0.30 * dense16 as f64);
    }

    #[test]
    fn footprint_with_adapters() {
        let q = QuantizedMatrix {
            rows: 100,
            cols: 60,
            block_size: 64,
            codes: vec![],
            scales: vec![0.0; 94],
        };
        let fp = footprint(&q, Some(8), 4);
        assert_eq!(fp.adapter_bytes, 8 * 160 * 4);
        assert_eq!(footprint(&q, Some(0), 4).adapter_bytes, 0);
    }

    #[test]
    fn container_round_trips_bit_exactly() {
        let w = array![
            [0.25, -1.5, 0.0, 3.25, 0.875],
            [-0.125, 2.0, -3.5, 0.5, 1.25],
            [0.1, 0.2, 0.3, -0.4, 0.0]
        ];
        for scale_width in [4u8, 8u8] {
            let q = quantize_matrix(&w, 4).unwrap();
            let bytes = xrq4_bytes(&q, scale_width).unwrap();
            let back = read_xrq4(bytes.as_slice()).unwrap();
            assert_eq!(back, q);
            let bytes2 = xrq4_bytes(&back, scale_width).unwrap();
            assert_eq!(bytes, bytes2);
        }
    }

    #[test]
    fn container_layout_is_pinned() {
        // 1x3 matrix, block 2: one full block and one tail block.
        let q = QuantizedMatrix {
            rows: 1,
            cols: 3,
            block_size: 2,
            codes: vec![7, -7, 1],
            scales: vec![1.0, 0.5],
        };
        let bytes = xrq4_bytes(&q, 4).unwrap();
        let mut expected = Vec::new();
        expected.extend_from_slice(b"XRQ4");
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&3u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.push(4);
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&0.5f32.to_le_bytes());
        // codes 7, -7 pack low-first: 0x07 | (0x09 << 4); tail 1 pads high 0.
        expected.push(0x97);
        expected.push(0x01);
        assert_eq!(bytes, expected);
    }

    #[test]
    fn malformed_containers_are_rejected() {
        assert!(matches!(
            read_xrq4(&b"NOPE"[..]),
            Err(QuantizeError::Malformed(_) | QuantizeError::Io(_))
        ));
        let q = quantize_matrix(&array![[1.0, -0.5]], 2).unwrap();
        let mut bytes = xrq4_bytes(&q, 4).unwrap();
        bytes[4] = 99; // version
        assert!(matches!(
            read_xrq4(bytes.as_slice()),
            Err(QuantizeError::Malformed(_))
        ));
    }

    #[test]
    fn quantization_is_idempotent() {
        let w = array![[0.31, -0.7, 1.9, 0.02], [0.6, -1.1, 0.0, 0.45]];
        let q1 = quantize_matrix(&w, 3).unwrap();
        let q2 = quantize_matrix(&dequantize_matrix(&q1), 3).unwrap();
        assert_eq!(q1, q2);
    }
}
