//! Forecasting model: a causal dilated-convolution encoder producing
//! per-timestep latents, and a linear decoder mapping the last latent
//! plus the mean-pooled latent to the forecast horizon.
//!
//! Causal left-padding keeps the latent sequence the same length as the
//! input, so latent timestep t never sees inputs after t and similarity
//! weights align one-to-one with input timesteps.

use crate::diffcore::{Tape, Tensor, ValueId};
use crate::error::{Error, Result};
use crate::rng::Rng;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub input_channels: usize,
    pub latent_dim: usize,
    pub kernel_size: usize,
    /// One causal conv layer per dilation.
    pub dilations: Vec<usize>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_channels: 1,
            latent_dim: 64,
            kernel_size: 3,
            dilations: vec![1, 2, 4, 8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    pub horizon: usize,
    pub output_channels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// D_out × C_in × K.
    pub kernel: Tensor,
    /// Length D_out.
    pub bias: Tensor,
}

/// All learnable tensors plus the configs that shape them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: EncoderConfig,
    pub decoder: DecoderConfig,
    pub layers: Vec<ConvLayer>,
    /// 2·D × (H·C) read-out map over concat(last latent, mean latent).
    pub decoder_weight: Tensor,
    /// Length H·C.
    pub decoder_bias: Tensor,
}

/// Xavier-uniform bound √(6 / (fan_in + fan_out)).
fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Initialize parameters: kernels uniform within the fan-based bound,
/// biases zero. Deterministic per seed.
pub fn init_params(encoder: &EncoderConfig, decoder: &DecoderConfig, seed: u64) -> Result<ModelParams> {
    if encoder.latent_dim < 1 || encoder.dilations.is_empty() || encoder.kernel_size < 1 {
        return Err(Error::InvalidArgument(
            "encoder needs latent_dim ≥ 1, kernel ≥ 1, and at least one layer".into(),
        ));
    }
    if encoder.dilations.iter().any(|&d| d < 1) {
        return Err(Error::InvalidArgument("dilations must be ≥ 1".into()));
    }
    let mut rng = Rng::new(seed);
    let mut layers = Vec::with_capacity(encoder.dilations.len());
    let (d, k) = (encoder.latent_dim, encoder.kernel_size);
    for (l, _) in encoder.dilations.iter().enumerate() {
        let c_in = if l == 0 { encoder.input_channels } else { d };
        let bound = xavier_bound(c_in * k, d * k);
        let kernel = Tensor::new(
            vec![d, c_in, k],
            (0..d * c_in * k).map(|_| rng.uniform(-bound, bound)).collect(),
        )
        .unwrap();
        layers.push(ConvLayer {
            kernel,
            bias: Tensor::zeros(vec![d]),
        });
    }
    let out_dim = decoder.horizon * decoder.output_channels;
    let bound = xavier_bound(2 * d, out_dim);
    let decoder_weight = Tensor::matrix(
        2 * d,
        out_dim,
        (0..2 * d * out_dim).map(|_| rng.uniform(-bound, bound)).collect(),
    )
    .unwrap();
    Ok(ModelParams {
        encoder: encoder.clone(),
        decoder: decoder.clone(),
        layers,
        decoder_weight,
        decoder_bias: Tensor::zeros(vec![out_dim]),
    })
}

impl ModelParams {
    /// Canonical (name, tensor) order shared by the optimizer, the
    /// tape binding, and the checkpoint format.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("encoder.{l}.kernel"), &layer.kernel));
            out.push((format!("encoder.{l}.bias"), &layer.bias));
        }
        out.push(("decoder.weight".into(), &self.decoder_weight));
        out.push(("decoder.bias".into(), &self.decoder_bias));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.kernel);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.decoder_weight);
        out.push(&mut self.decoder_bias);
        out
    }

    pub fn n_tensors(&self) -> usize {
        2 * self.layers.len() + 2
    }
}

/// Model parameters registered as leaves on a tape for one forward/
/// backward pass.
pub struct BoundModel {
    layer_ids: Vec<(ValueId, ValueId)>,
    decoder_weight: ValueId,
    decoder_bias: ValueId,
    dilations: Vec<usize>,
    horizon: usize,
    output_channels: usize,
}

impl BoundModel {
    pub fn bind(tape: &mut Tape, params: &ModelParams) -> Result<BoundModel> {
        let mut layer_ids = Vec::with_capacity(params.layers.len());
        for layer in &params.layers {
            let k = tape.leaf(layer.kernel.clone())?;
            let b = tape.leaf(layer.bias.clone())?;
            layer_ids.push((k, b));
        }
        let decoder_weight = tape.leaf(params.decoder_weight.clone())?;
        let decoder_bias = tape.leaf(params.decoder_bias.clone())?;
        Ok(BoundModel {
            layer_ids,
            decoder_weight,
            decoder_bias,
            dilations: params.encoder.dilations.clone(),
            horizon: params.decoder.horizon,
            output_channels: params.decoder.output_channels,
        })
    }

    /// Parameter ids in [`ModelParams::named_tensors`] order, for
    /// reading gradients after backward.
    pub fn param_ids(&self) -> Vec<ValueId> {
        let mut out = Vec::new();
        for &(k, b) in &self.layer_ids {
            out.push(k);
            out.push(b);
        }
        out.push(self.decoder_weight);
        out.push(self.decoder_bias);
        out
    }

    /// Encode a T×C input to T×D per-timestep latents.
    ///
    /// Hidden layers are relu-activated; the last layer is linear so
    /// latents are unconstrained in sign.
    pub fn encode(&self, tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let mut h = x;
        let last = self.layer_ids.len() - 1;
        for (l, (&(kernel, bias), &dilation)) in
            self.layer_ids.iter().zip(&self.dilations).enumerate()
        {
            let conv = tape.causal_dilated_conv1d(h, kernel, dilation)?;
            h = tape.add_row_broadcast(conv, bias)?;
            if l != last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    /// Decode T×D latents to the H×C forecast: a linear map over
    /// concat(z[T−1], mean_t z[t]). The last latent carries the window
    /// tail (where anomalies onset), the pooled term the seasonal level.
    pub fn decode(&self, tape: &mut Tape, z: ValueId) -> Result<ValueId> {
        let t_len = tape.value(z).rows();
        let last = tape.row(z, t_len - 1)?;
        let pooled = tape.mean_rows(z)?;
        let v = tape.concat_vec(last, pooled)?;
        let dim = tape.value(v).numel();
        let vm = tape.reshape(v, vec![1, dim])?;
        let o = tape.matmul(vm, self.decoder_weight)?;
        let flat = tape.reshape(o, vec![self.horizon * self.output_channels])?;
        let with_bias = tape.add(flat, self.decoder_bias)?;
        tape.reshape(with_bias, vec![self.horizon, self.output_channels])
    }

    /// encode ∘ decode.
    pub fn forward(&self, tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let z = self.encode(tape, x)?;
        self.decode(tape, z)
    }
}

/// Convenience forward pass without keeping the tape.
pub fn predict(params: &ModelParams, input: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let x = tape.leaf(input.clone())?;
    let bound = BoundModel::bind(&mut tape, params)?;
    let y = bound.forward(&mut tape, x)?;
    Ok(tape.value(y).clone())
}

// ── Checkpoint format ────────────────────────────────────────────────
//
// Flat text, one tensor per record, with f64 payloads hex-encoded as
// their IEEE-754 bits so round-trips are bit-exact.

const CHECKPOINT_HEADER: &str = "weca-checkpoint v1";

pub fn checkpoint_to_string(params: &ModelParams, fingerprint: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{CHECKPOINT_HEADER}");
    let _ = writeln!(out, "fingerprint {fingerprint:016x}");
    let enc = &params.encoder;
    let _ = writeln!(
        out,
        "encoder channels={} latent_dim={} kernel={} dilations={}",
        enc.input_channels,
        enc.latent_dim,
        enc.kernel_size,
        enc.dilations
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    let _ = writeln!(
        out,
        "decoder horizon={} channels={}",
        params.decoder.horizon, params.decoder.output_channels
    );
    for (name, tensor) in params.named_tensors() {
        let shape = tensor
            .shape()
            .iter()
            .map(|d| d.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(out, "tensor {name} {shape}");
        let payload: Vec<String> = tensor
            .data()
            .iter()
            .map(|v| format!("{:016x}", v.to_bits()))
            .collect();
        let _ = writeln!(out, "{}", payload.join(" "));
    }
    out
}

pub fn save_checkpoint(params: &ModelParams, fingerprint: u64, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_string(params, fingerprint))?;
    Ok(())
}

fn parse_kv<'a>(part: &'a str, key: &str, line: usize) -> Result<&'a str> {
    part.strip_prefix(key)
        .and_then(|s| s.strip_prefix('='))
        .ok_or(Error::Checkpoint(format!(
            "line {line}: expected `{key}=<value>`, got `{part}`"
        )))
}

pub fn checkpoint_from_string(text: &str) -> Result<(ModelParams, u64)> {
    let mut lines = text.lines().enumerate();
    let bad = |line: usize, msg: String| Error::Checkpoint(format!("line {}: {msg}", line + 1));

    match lines.next() {
        Some((_, l)) if l == CHECKPOINT_HEADER => {}
        other => {
            return Err(Error::Checkpoint(format!(
                "bad header: expected `{CHECKPOINT_HEADER}`, got {other:?}"
            )))
        }
    }
    let fingerprint = match lines.next() {
        Some((i, l)) => {
            let hex = l
                .strip_prefix("fingerprint ")
                .ok_or_else(|| bad(i, "missing fingerprint".into()))?;
            u64::from_str_radix(hex, 16).map_err(|e| bad(i, e.to_string()))?
        }
        None => return Err(Error::Checkpoint("truncated: no fingerprint".into())),
    };
    let encoder = match lines.next() {
        Some((i, l)) => {
            let rest = l
                .strip_prefix("encoder ")
                .ok_or_else(|| bad(i, "missing encoder config".into()))?;
            let parts: Vec<&str> = rest.split(' ').collect();
            if parts.len() != 4 {
                return Err(bad(i, format!("malformed encoder config `{rest}`")));
            }
            let fail = |e: std::num::ParseIntError| bad(i, e.to_string());
            EncoderConfig {
                input_channels: parse_kv(parts[0], "channels", i + 1)?.parse().map_err(fail)?,
                latent_dim: parse_kv(parts[1], "latent_dim", i + 1)?.parse().map_err(fail)?,
                kernel_size: parse_kv(parts[2], "kernel", i + 1)?.parse().map_err(fail)?,
                dilations: parse_kv(parts[3], "dilations", i + 1)?
                    .split(',')
                    .map(|d| d.parse().map_err(fail))
                    .collect::<Result<_>>()?,
            }
        }
        None => return Err(Error::Checkpoint("truncated: no encoder config".into())),
    };
    let decoder = match lines.next() {
        Some((i, l)) => {
            let rest = l
                .strip_prefix("decoder ")
                .ok_or_else(|| bad(i, "missing decoder config".into()))?;
            let parts: Vec<&str> = rest.split(' ').collect();
            if parts.len() != 2 {
                return Err(bad(i, format!("malformed decoder config `{rest}`")));
            }
            let fail = |e: std::num::ParseIntError| bad(i, e.to_string());
            DecoderConfig {
                horizon: parse_kv(parts[0], "horizon", i + 1)?.parse().map_err(fail)?,
                output_channels: parse_kv(parts[1], "channels", i + 1)?.parse().map_err(fail)?,
            }
        }
        None => return Err(Error::Checkpoint("truncated: no decoder config".into())),
    };

    let mut tensors: Vec<(String, Tensor)> = Vec::new();
    while let Some((i, l)) = lines.next() {
        if l.trim().is_empty() {
            continue;
        }
        let rest = l
            .strip_prefix("tensor ")
            .ok_or_else(|| bad(i, format!("expected `tensor <name> <shape>`, got `{l}`")))?;
        let mut parts = rest.split(' ');
        let (Some(name), Some(shape_s), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(i, format!("malformed tensor record `{rest}`")));
        };
        let shape: Vec<usize> = shape_s
            .split(',')
            .map(|d| d.parse().map_err(|e: std::num::ParseIntError| bad(i, e.to_string())))
            .collect::<Result<_>>()?;
        let (j, payload) = lines
            .next()
            .ok_or_else(|| bad(i, format!("tensor `{name}` has no payload")))?;
        let data: Vec<f64> = payload
            .split(' ')
            .filter(|s| !s.is_empty())
            .map(|hexs| {
                u64::from_str_radix(hexs, 16)
                    .map(f64::from_bits)
                    .map_err(|e| bad(j, e.to_string()))
            })
            .collect::<Result<_>>()?;
        let tensor = Tensor::new(shape, data)
            .map_err(|e| bad(i, format!("tensor `{name}`: {e}")))?;
        tensors.push((name.to_string(), tensor));
    }

    // Reassemble in canonical order and verify names.
    let n_layers = encoder.dilations.len();
    if tensors.len() != 2 * n_layers + 2 {
        return Err(Error::Checkpoint(format!(
            "expected {} tensors, found {}",
            2 * n_layers + 2,
            tensors.len()
        )));
    }
    let mut iter = tensors.into_iter();
    let mut expect = |want: String| -> Result<Tensor> {
        let (name, tensor) = iter.next().unwrap();
        if name != want {
            return Err(Error::Checkpoint(format!(
                "expected tensor `{want}`, found `{name}`"
            )));
        }
        Ok(tensor)
    };
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        layers.push(ConvLayer {
            kernel: expect(format!("encoder.{l}.kernel"))?,
            bias: expect(format!("encoder.{l}.bias"))?,
        });
    }
    let decoder_weight = expect("decoder.weight".into())?;
    let decoder_bias = expect("decoder.bias".into())?;
    Ok((
        ModelParams {
            encoder,
            decoder,
            layers,
            decoder_weight,
            decoder_bias,
        },
        fingerprint,
    ))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, u64)> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Checkpoint(format!("cannot read `{}`: {e}", path.display()))
    })?;
    checkpoint_from_string(&text)
}
