//! Property tests for blockwise quantization and the XRQ4 container.

use ndarray::Array2;
use proptest::prelude::*;
use xrpipe_core::quantize::{
    dequantize_matrix, dequantize_state, footprint, quantize_matrix, quantize_state, read_xrq4,
    xrq4_bytes, MemoryFootprint,
};

fn weights(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e6..1.0e6f64, 1..=max_len)
}

fn matrix_of(values: Vec<f64>, cols: usize) -> Array2<f64> {
    let cols = cols.clamp(1, values.len());
    let rows = values.len() / cols;
    let data = values[..rows * cols].to_vec();
    Array2::from_shape_vec((rows, cols), data).unwrap()
}

proptest! {
    #[test]
    fn reconstruction_error_is_within_half_scale(
        values in weights(256),
        cols in 1usize..16,
        block_size in 1usize..128,
    ) {
        let w = matrix_of(values, cols);
        prop_assume!(w.len() > 0);
        let q = quantize_matrix(&w, block_size).unwrap();
        let back = dequantize_matrix(&q);
        for (idx, (orig, rec)) in w.iter().zip(back.iter()).enumerate() {
            let scale = q.scales()[idx / block_size] as f64;
            // The ulp term absorbs rounding in the measurement itself.
            prop_assert!(
                (orig - rec).abs() <= scale / 2.0 + scale * 1e-12,
                "index {idx}: |{orig} - {rec}| > {scale} / 2"
            );
        }
    }

    #[test]
    fn quantization_is_idempotent(
        values in weights(128),
        block_size in 1usize..64,
    ) {
        let w = matrix_of(values, 1);
        let q1 = quantize_matrix(&w, block_size).unwrap();
        let q2 = quantize_matrix(&dequantize_matrix(&q1), block_size).unwrap();
        prop_assert_eq!(q1, q2);
    }

    #[test]
    fn exact_zeros_survive_the_round_trip(
        values in prop::collection::vec(prop::sample::select(&[0.0, 1.5, -2.25, 0.8][..]), 1..64),
        block_size in 1usize..16,
    ) {
        let w = matrix_of(values, 1);
        let q = quantize_matrix(&w, block_size).unwrap();
        let back = dequantize_matrix(&q);
        for (idx, (&orig, &rec)) in w.iter().zip(back.iter()).enumerate() {
            if orig == 0.0 {
                prop_assert_eq!(q.codes()[idx], 0);
                prop_assert_eq!(rec, 0.0);
            }
        }
    }

    #[test]
    fn state_round_trip_error_is_within_half_scale(
        values in weights(256),
        block_size in 1usize..128,
    ) {
        let q = quantize_state(&values, block_size).unwrap();
        let back = dequantize_state(&q);
        for (idx, (orig, rec)) in values.iter().zip(back.iter()).enumerate() {
            let scale = q.scales()[idx / block_size] as f64;
            prop_assert!((orig - rec).abs() <= scale / 2.0 + scale * 1e-12);
        }
    }

    #[test]
    fn container_round_trips_bit_exactly(
        values in weights(256),
        cols in 1usize..16,
        scale_width in prop::sample::select(&[4u8, 8u8][..]),
    ) {
        let w = matrix_of(values, cols);
        prop_assume!(w.len() > 0);
        let q = quantize_matrix(&w, 64).unwrap();
        let bytes = xrq4_bytes(&q, scale_width).unwrap();
        let restored = read_xrq4(bytes.as_slice()).unwrap();
        prop_assert_eq!(&restored, &q);
        prop_assert_eq!(xrq4_bytes(&restored, scale_width).unwrap(), bytes);
    }

    #[test]
    fn quantized_storage_beats_40_percent_of_fp16(
        rows in 1usize..96,
        cols in 1usize..96,
    ) {
        // At least one full block; tiny matrices are all header.
        prop_assume!(rows * cols >= 64);
        let w = Array2::from_elem((rows, cols), 0.5);
        let q = quantize_matrix(&w, 64).unwrap();
        let fp = footprint(&q, None, 4);
        let dense16 = MemoryFootprint::dense_bytes(rows, cols, 2);
        prop_assert!(
            (fp.total_bytes as f64) < 0.4 * dense16 as f64,
            "{} bytes vs fp16 {}",
            fp.total_bytes,
            dense16
        );
    }
}
