//! Shared fixtures for the criterion benchmarks.

use weca_core::datagen::{generate_synthetic, SynthConfig};
use weca_core::losses::BatchLatents;
use weca_core::model::{init_params, DecoderConfig, EncoderConfig, ModelParams};
use weca_core::rng::Rng;
use weca_core::Tensor;

/// Desk-scale model used by the kernels under test.
pub fn bench_model() -> ModelParams {
    let encoder = EncoderConfig {
        input_channels: 1,
        latent_dim: 16,
        kernel_size: 3,
        dilations: vec![1, 2, 4],
    };
    let decoder = DecoderConfig {
        horizon: 14,
        output_channels: 1,
    };
    init_params(&encoder, &decoder, 7).unwrap()
}

/// One normalized input window of the benchmark geometry (56×1).
pub fn bench_window() -> Tensor {
    let set = generate_synthetic(&SynthConfig {
        n_series: 1,
        length: 80,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let mean = set.series[0].values.iter().sum::<f64>() / 80.0;
    Tensor::matrix(
        56,
        1,
        set.series[0].values[..56].iter().map(|v| (v - mean) / 50.0).collect(),
    )
    .unwrap()
}

/// A contrastive batch of the benchmark shape (B=32, T'=56, D=16).
pub fn bench_latents(b: usize, t_len: usize, d: usize) -> BatchLatents {
    let mut rng = Rng::new(11);
    let mut mk = || {
        Tensor::matrix(t_len, d, (0..t_len * d).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
    };
    let z: Vec<Tensor> = (0..b).map(|_| mk()).collect();
    let zt: Vec<Tensor> = (0..b).map(|_| mk()).collect();
    let weights = Tensor::full(vec![b, t_len], 1.0);
    BatchLatents::new(z, zt, weights).unwrap()
}
