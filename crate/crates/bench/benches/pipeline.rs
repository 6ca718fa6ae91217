use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array1;
use xrpipe_bench::{random_matrix, report_pair};
use xrpipe_core::adapter::LoraLayer;
use xrpipe_core::metrics::{bleu, meteor, rouge_l, BleuParams, MeteorParams, RougeParams};
use xrpipe_core::quantize::{dequantize_matrix, quantize_matrix};
use xrpipe_core::trainer::{copy_task, loss_and_grads, ToyModel};

fn bench_metrics(c: &mut Criterion) {
    let (candidate, reference) = report_pair();
    let refs = [reference.clone()];
    c.bench_function("bleu4_report_pair", |b| {
        b.iter(|| bleu(black_box(&candidate), black_box(&refs), &BleuParams::default()).unwrap())
    });
    c.bench_function("rouge_l_report_pair", |b| {
        b.iter(|| {
            rouge_l(
                black_box(&candidate),
                black_box(&reference),
                &RougeParams::default(),
            )
            .unwrap()
        })
    });
    c.bench_function("meteor_report_pair", |b| {
        b.iter(|| {
            meteor(
                black_box(&candidate),
                black_box(&reference),
                &MeteorParams::default(),
            )
            .unwrap()
        })
    });
}

fn bench_quantize(c: &mut Criterion) {
    let w = random_matrix(256, 256, 1);
    c.bench_function("quantize_256x256_block64", |b| {
        b.iter(|| quantize_matrix(black_box(&w), 64).unwrap())
    });
    let q = quantize_matrix(&w, 64).unwrap();
    c.bench_function("dequantize_256x256_block64", |b| {
        b.iter(|| dequantize_matrix(black_box(&q)))
    });
}

fn bench_adapter(c: &mut Criterion) {
    let base = quantize_matrix(&random_matrix(512, 512, 2), 64).unwrap();
    let mut layer = LoraLayer::with_init(base, 16, 3).unwrap();
    {
        let (a, b) = layer.factors_mut();
        a.mapv_inplace(|v| v + 0.01);
        b.mapv_inplace(|_| 0.02);
    }
    let x = Array1::from_shape_fn(512, |i| (i as f64 * 0.37).sin());
    c.bench_function("adapter_forward_512_rank16", |b| {
        b.iter(|| layer.forward(black_box(x.view())).unwrap())
    });
    let merged = layer.merge();
    c.bench_function("merged_matvec_512", |b| {
        b.iter(|| black_box(&merged).dot(black_box(&x)))
    });
}

fn bench_trainer(c: &mut Criterion) {
    let model = ToyModel::new(8, 32, 8, 4).unwrap();
    let batch = copy_task(32, 8, 5);
    c.bench_function("loss_and_grads_batch32", |b| {
        b.iter(|| loss_and_grads(black_box(&model), black_box(&batch)).unwrap())
    });
}

criterion_group!(
    benches,
    bench_metrics,
    bench_quantize,
    bench_adapter,
    bench_trainer
);
criterion_main!(benches);
