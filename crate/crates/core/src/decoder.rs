//! Untrained deep-decoder-style generator with exact reverse-mode gradients.
//!
//! Each hidden layer is: bilinear 2x upsample -> 1x1 channel mixing -> ReLU
//! -> channel normalization (zero mean, unit variance per channel over
//! spatial positions) -> learnable per-channel gain and bias. The output
//! layer is a 1x1 mixing plus bias; in `Complex2ch` mode the two output
//! channels become the real and imaginary parts of the image, in
//! `RealSigmoid` mode a logistic sigmoid maps the single channel to `[0,1]`.
//!
//! The latent seed is drawn once and frozen; only the weights are trained.

use crate::field::ComplexImage;
use crate::{PrError, Result};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    /// Two output channels interpreted as (Re, Im); identity activation.
    Complex2ch,
    /// One output channel through a logistic sigmoid; imaginary part is 0.
    RealSigmoid,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub num_layers: usize,
    pub channels: usize,
    pub seed_side: usize,
    pub output_side: usize,
    pub output_mode: OutputMode,
    pub norm_epsilon: f64,
}

impl DecoderConfig {
    /// Desk-scale default: 32x32 output.
    pub fn desk_scale(output_mode: OutputMode) -> Self {
        Self {
            num_layers: 3,
            channels: 32,
            seed_side: 4,
            output_side: 32,
            output_mode,
            norm_epsilon: 1e-6,
        }
    }

    /// Paper-scale default: 128x128 output matching the crystal frames.
    pub fn paper_scale(output_mode: OutputMode) -> Self {
        Self {
            num_layers: 4,
            channels: 64,
            seed_side: 8,
            output_side: 128,
            output_mode,
            norm_epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.channels == 0 || self.seed_side == 0 {
            return Err(PrError::Validation("decoder dimensions must be positive".into()));
        }
        if self.output_side != self.seed_side << self.num_layers {
            return Err(PrError::Validation(format!(
                "output_side {} != seed_side {} * 2^{}",
                self.output_side, self.seed_side, self.num_layers
            )));
        }
        if !(self.norm_epsilon > 0.0) {
            return Err(PrError::Validation("norm_epsilon must be positive".into()));
        }
        Ok(())
    }

    pub fn output_channels(&self) -> usize {
        match self.output_mode {
            OutputMode::Complex2ch => 2,
            OutputMode::RealSigmoid => 1,
        }
    }

    /// Exact number of trainable parameters (used to confirm the model is
    /// underparameterized relative to the 2n^2 pixel parametrization).
    pub fn param_count(&self) -> usize {
        let k = self.channels;
        let c_out = self.output_channels();
        self.num_layers * (k * k + 2 * k) + k * c_out + c_out
    }

    fn layer_block(&self) -> usize {
        self.channels * self.channels + 2 * self.channels
    }

    fn out_mix_offset(&self) -> usize {
        self.num_layers * self.layer_block()
    }
}

/// Fixed latent tensor `z`: `channels x seed_side x seed_side`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedTensor {
    pub channels: usize,
    pub side: usize,
    data: Vec<f64>,
}

impl SeedTensor {
    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// All trainable parameters as one flat f64 vector, addressed through the
/// config. Gradients use the same layout, so the optimizer can treat both
/// as plain slices.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    data: Vec<f64>,
}

pub type WeightGradients = DecoderWeights;

impl DecoderWeights {
    pub fn zeros(cfg: &DecoderConfig) -> Self {
        Self {
            data: vec![0.0; cfg.param_count()],
        }
    }

    pub fn from_flat(cfg: &DecoderConfig, data: Vec<f64>) -> Result<Self> {
        if data.len() != cfg.param_count() {
            return Err(PrError::Dimension("weight vector length mismatch".into()));
        }
        Ok(Self { data })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// k x k mixing matrix of hidden layer `l` (row-major, output-major).
    pub fn mix(&self, cfg: &DecoderConfig, l: usize) -> &[f64] {
        let k = cfg.channels;
        let base = l * cfg.layer_block();
        &self.data[base..base + k * k]
    }

    pub fn gains(&self, cfg: &DecoderConfig, l: usize) -> &[f64] {
        let k = cfg.channels;
        let base = l * cfg.layer_block() + k * k;
        &self.data[base..base + k]
    }

    pub fn biases(&self, cfg: &DecoderConfig, l: usize) -> &[f64] {
        let k = cfg.channels;
        let base = l * cfg.layer_block() + k * k + k;
        &self.data[base..base + k]
    }

    /// c_out x k output mixing matrix.
    pub fn out_mix(&self, cfg: &DecoderConfig) -> &[f64] {
        let base = cfg.out_mix_offset();
        &self.data[base..base + cfg.output_channels() * cfg.channels]
    }

    pub fn out_biases(&self, cfg: &DecoderConfig) -> &[f64] {
        let base = cfg.out_mix_offset() + cfg.output_channels() * cfg.channels;
        &self.data[base..]
    }

    fn mix_mut(&mut self, cfg: &DecoderConfig, l: usize) -> &mut [f64] {
        let k = cfg.channels;
        let base = l * cfg.layer_block();
        &mut self.data[base..base + k * k]
    }

    fn gains_mut(&mut self, cfg: &DecoderConfig, l: usize) -> &mut [f64] {
        let k = cfg.channels;
        let base = l * cfg.layer_block() + k * k;
        &mut self.data[base..base + k]
    }

    fn biases_mut(&mut self, cfg: &DecoderConfig, l: usize) -> &mut [f64] {
        let k = cfg.channels;
        let base = l * cfg.layer_block() + k * k + k;
        &mut self.data[base..base + k]
    }

    fn out_mix_mut(&mut self, cfg: &DecoderConfig) -> &mut [f64] {
        let base = cfg.out_mix_offset();
        let len = cfg.output_channels() * cfg.channels;
        &mut self.data[base..base + len]
    }

    fn out_biases_mut(&mut self, cfg: &DecoderConfig) -> &mut [f64] {
        let base = cfg.out_mix_offset() + cfg.output_channels() * cfg.channels;
        &mut self.data[base..]
    }
}

/// Per-layer activations cached by the forward pass for the backward pass.
struct LayerTape {
    /// Upsampled input, k x (2s)^2 (input of the 1x1 mixing).
    up: Vec<f64>,
    /// Pre-activation (mixing output, ReLU input).
    pre: Vec<f64>,
    /// Channel-normalized activation (before gain/bias).
    normed: Vec<f64>,
    /// 1/sqrt(var + eps) per channel.
    inv_std: Vec<f64>,
    side: usize,
}

pub struct ForwardTape {
    layers: Vec<LayerTape>,
    /// Final hidden output, k x n^2 (input of the output mixing).
    post: Vec<f64>,
    /// Sigmoid outputs in RealSigmoid mode.
    sigmoid: Option<Vec<f64>>,
    channels: usize,
    output_side: usize,
}

/// Draws the frozen seed and the initial weights deterministically from
/// `rng_seed`: seed entries uniform on `[0,1)`, mixing entries Gaussian with
/// standard deviation `sqrt(2/k)`, gains 1, biases 0.
pub fn init_decoder(cfg: &DecoderConfig, rng_seed: u64) -> Result<(DecoderWeights, SeedTensor)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let k = cfg.channels;
    let seed_data: Vec<f64> = (0..k * cfg.seed_side * cfg.seed_side)
        .map(|_| rng.gen::<f64>())
        .collect();
    let seed = SeedTensor {
        channels: k,
        side: cfg.seed_side,
        data: seed_data,
    };

    let normal = Normal::new(0.0, (2.0 / k as f64).sqrt()).expect("valid std");
    let mut w = DecoderWeights::zeros(cfg);
    for l in 0..cfg.num_layers {
        for v in w.mix_mut(cfg, l) {
            *v = normal.sample(&mut rng);
        }
        w.gains_mut(cfg, l).fill(1.0);
        w.biases_mut(cfg, l).fill(0.0);
    }
    for v in w.out_mix_mut(cfg) {
        *v = normal.sample(&mut rng);
    }
    w.out_biases_mut(cfg).fill(0.0);
    Ok((w, seed))
}

/// `out[o][p] = sum_i w[o*k_in + i] * input[i][p]` over `hw` spatial positions.
fn mix_forward(w: &[f64], input: &[f64], k_out: usize, k_in: usize, hw: usize) -> Vec<f64> {
    let mut out = vec![0.0; k_out * hw];
    let body = |o: usize, row: &mut [f64]| {
        for i in 0..k_in {
            let coef = w[o * k_in + i];
            if coef == 0.0 {
                continue;
            }
            let src = &input[i * hw..(i + 1) * hw];
            for (r, s) in row.iter_mut().zip(src) {
                *r += coef * s;
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        out.par_chunks_mut(hw).enumerate().for_each(|(o, row)| body(o, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (o, row) in out.chunks_mut(hw).enumerate() {
        body(o, row);
    }
    out
}

/// Gradient wrt the mixing matrix: `gw[o][i] = sum_p d_out[o][p] * input[i][p]`.
fn mix_grad_weights(d_out: &[f64], input: &[f64], k_out: usize, k_in: usize, hw: usize) -> Vec<f64> {
    let mut gw = vec![0.0; k_out * k_in];
    let body = |o: usize, row: &mut [f64]| {
        let d = &d_out[o * hw..(o + 1) * hw];
        for (i, g) in row.iter_mut().enumerate() {
            let src = &input[i * hw..(i + 1) * hw];
            *g = d.iter().zip(src).map(|(a, b)| a * b).sum();
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        gw.par_chunks_mut(k_in).enumerate().for_each(|(o, row)| body(o, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (o, row) in gw.chunks_mut(k_in).enumerate() {
        body(o, row);
    }
    gw
}

/// Gradient wrt the mixing input: `d_in[i][p] = sum_o w[o*k_in + i] * d_out[o][p]`.
fn mix_grad_input(w: &[f64], d_out: &[f64], k_out: usize, k_in: usize, hw: usize) -> Vec<f64> {
    let mut d_in = vec![0.0; k_in * hw];
    let body = |i: usize, row: &mut [f64]| {
        for o in 0..k_out {
            let coef = w[o * k_in + i];
            if coef == 0.0 {
                continue;
            }
            let src = &d_out[o * hw..(o + 1) * hw];
            for (r, s) in row.iter_mut().zip(src) {
                *r += coef * s;
            }
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        d_in.par_chunks_mut(hw).enumerate().for_each(|(i, row)| body(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    for (i, row) in d_in.chunks_mut(hw).enumerate() {
        body(i, row);
    }
    d_in
}

/// Source indices and interpolation weights for 2x bilinear upsampling with
/// the align-corners-false convention (sample centers at `(i+0.5)/2 - 0.5`,
/// clamped at the borders).
fn upsample_taps(s: usize) -> Vec<(usize, usize, f64)> {
    (0..2 * s)
        .map(|i| {
            let src = (i as f64 + 0.5) * 0.5 - 0.5;
            if src <= 0.0 {
                (0, 0, 0.0)
            } else {
                let i0 = src.floor() as usize;
                let i0 = i0.min(s - 1);
                let i1 = (i0 + 1).min(s - 1);
                (i0, i1, src - i0 as f64)
            }
        })
        .collect()
}

fn upsample2x(input: &[f64], channels: usize, s: usize) -> Vec<f64> {
    let taps = upsample_taps(s);
    let big = 2 * s;
    let mut out = vec![0.0; channels * big * big];
    for c in 0..channels {
        let src = &input[c * s * s..(c + 1) * s * s];
        let dst = &mut out[c * big * big..(c + 1) * big * big];
        for (r, &(r0, r1, wr)) in taps.iter().enumerate() {
            for (cl, &(c0, c1, wc)) in taps.iter().enumerate() {
                let v00 = src[r0 * s + c0];
                let v01 = src[r0 * s + c1];
                let v10 = src[r1 * s + c0];
                let v11 = src[r1 * s + c1];
                dst[r * big + cl] = (1.0 - wr) * ((1.0 - wc) * v00 + wc * v01)
                    + wr * ((1.0 - wc) * v10 + wc * v11);
            }
        }
    }
    out
}

/// Exact adjoint of [`upsample2x`]: scatters gradients back with the same taps.
fn upsample2x_backward(d_out: &[f64], channels: usize, s: usize) -> Vec<f64> {
    let taps = upsample_taps(s);
    let big = 2 * s;
    let mut d_in = vec![0.0; channels * s * s];
    for c in 0..channels {
        let src = &d_out[c * big * big..(c + 1) * big * big];
        let dst = &mut d_in[c * s * s..(c + 1) * s * s];
        for (r, &(r0, r1, wr)) in taps.iter().enumerate() {
            for (cl, &(c0, c1, wc)) in taps.iter().enumerate() {
                let g = src[r * big + cl];
                dst[r0 * s + c0] += (1.0 - wr) * (1.0 - wc) * g;
                dst[r0 * s + c1] += (1.0 - wr) * wc * g;
                dst[r1 * s + c0] += wr * (1.0 - wc) * g;
                dst[r1 * s + c1] += wr * wc * g;
            }
        }
    }
    d_in
}

pub fn decoder_forward(
    w: &DecoderWeights,
    z: &SeedTensor,
    cfg: &DecoderConfig,
) -> Result<(ComplexImage, ForwardTape)> {
    cfg.validate()?;
    let k = cfg.channels;
    if z.channels != k || z.side != cfg.seed_side {
        return Err(PrError::Dimension("seed tensor does not match config".into()));
    }
    if w.data.len() != cfg.param_count() {
        return Err(PrError::Dimension("weights do not match config".into()));
    }

    let mut cur = z.data.clone();
    let mut side = z.side;
    let mut layers = Vec::with_capacity(cfg.num_layers);
    for l in 0..cfg.num_layers {
        let up = upsample2x(&cur, k, side);
        side *= 2;
        let hw = side * side;
        let pre = mix_forward(w.mix(cfg, l), &up, k, k, hw);

        let mut normed = vec![0.0; k * hw];
        let mut inv_std = vec![0.0; k];
        let gains = w.gains(cfg, l);
        let biases = w.biases(cfg, l);
        cur = vec![0.0; k * hw];
        for c in 0..k {
            let act: Vec<f64> = pre[c * hw..(c + 1) * hw].iter().map(|&v| v.max(0.0)).collect();
            let mean = act.iter().sum::<f64>() / hw as f64;
            let var = act.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / hw as f64;
            let istd = 1.0 / (var + cfg.norm_epsilon).sqrt();
            inv_std[c] = istd;
            for (p, &a) in act.iter().enumerate() {
                let y = (a - mean) * istd;
                normed[c * hw + p] = y;
                cur[c * hw + p] = gains[c] * y + biases[c];
            }
        }
        layers.push(LayerTape {
            up,
            pre,
            normed,
            inv_std,
            side,
        });
    }

    let n = cfg.output_side;
    let hw = n * n;
    debug_assert_eq!(side, n);
    let c_out = cfg.output_channels();
    let mut out = mix_forward(w.out_mix(cfg), &cur, c_out, k, hw);
    let out_biases = w.out_biases(cfg);
    for o in 0..c_out {
        for v in &mut out[o * hw..(o + 1) * hw] {
            *v += out_biases[o];
        }
    }

    let (image, sigmoid) = match cfg.output_mode {
        OutputMode::Complex2ch => {
            let data = (0..hw)
                .map(|p| Complex64::new(out[p], out[hw + p]))
                .collect();
            (ComplexImage::new(n, data)?, None)
        }
        OutputMode::RealSigmoid => {
            let s: Vec<f64> = out[..hw].iter().map(|&v| 1.0 / (1.0 + (-v).exp())).collect();
            let data = s.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            (ComplexImage::new(n, data)?, Some(s))
        }
    };

    Ok((
        image,
        ForwardTape {
            layers,
            post: cur,
            sigmoid,
            channels: k,
            output_side: n,
        },
    ))
}

/// Exact gradients of the measurement loss with respect to every weight,
/// given the upstream gradient with respect to the output image
/// (`Re g = dL/dRe x`, `Im g = dL/dIm x`).
pub fn decoder_backward(
    tape: &ForwardTape,
    grad_out: &ComplexImage,
    w: &DecoderWeights,
    cfg: &DecoderConfig,
) -> Result<WeightGradients> {
    cfg.validate()?;
    let k = cfg.channels;
    let n = cfg.output_side;
    if tape.channels != k || tape.output_side != n || tape.layers.len() != cfg.num_layers {
        return Err(PrError::Validation("tape does not match config".into()));
    }
    if grad_out.side() != n {
        return Err(PrError::Dimension("upstream gradient size mismatch".into()));
    }
    let hw = n * n;
    let c_out = cfg.output_channels();

    // gradient wrt the output-layer pre-activation, c_out x hw
    let d_out: Vec<f64> = match cfg.output_mode {
        OutputMode::Complex2ch => {
            let mut d = vec![0.0; 2 * hw];
            for (p, g) in grad_out.data().iter().enumerate() {
                d[p] = g.re;
                d[hw + p] = g.im;
            }
            d
        }
        OutputMode::RealSigmoid => {
            let s = tape.sigmoid.as_ref().expect("sigmoid cached in RealSigmoid mode");
            grad_out
                .data()
                .iter()
                .zip(s)
                .map(|(g, &sv)| g.re * sv * (1.0 - sv))
                .collect()
        }
    };

    let mut grads = DecoderWeights::zeros(cfg);
    grads
        .out_mix_mut(cfg)
        .copy_from_slice(&mix_grad_weights(&d_out, &tape.post, c_out, k, hw));
    for o in 0..c_out {
        grads.out_biases_mut(cfg)[o] = d_out[o * hw..(o + 1) * hw].iter().sum();
    }
    let mut d_post = mix_grad_input(w.out_mix(cfg), &d_out, c_out, k, hw);

    for l in (0..cfg.num_layers).rev() {
        let tape_l = &tape.layers[l];
        let side = tape_l.side;
        let hw = side * side;
        let gains = w.gains(cfg, l);

        // gain/bias and channel-norm backward, per channel
        let mut d_pre = vec![0.0; k * hw];
        for c in 0..k {
            let d_post_c = &d_post[c * hw..(c + 1) * hw];
            let y = &tape_l.normed[c * hw..(c + 1) * hw];
            grads.biases_mut(cfg, l)[c] = d_post_c.iter().sum();
            grads.gains_mut(cfg, l)[c] = d_post_c.iter().zip(y).map(|(a, b)| a * b).sum();

            // d_act = inv_std * (g - mean(g) - y * mean(g .* y)), g = gain * d_post
            let istd = tape_l.inv_std[c];
            let gain = gains[c];
            let mean_g: f64 = d_post_c.iter().sum::<f64>() * gain / hw as f64;
            let mean_gy: f64 =
                d_post_c.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() * gain / hw as f64;
            let pre = &tape_l.pre[c * hw..(c + 1) * hw];
            for p in 0..hw {
                let d_act = istd * (gain * d_post_c[p] - mean_g - y[p] * mean_gy);
                // ReLU subgradient is 0 at exactly 0
                d_pre[c * hw + p] = if pre[p] > 0.0 { d_act } else { 0.0 };
            }
        }

        grads
            .mix_mut(cfg, l)
            .copy_from_slice(&mix_grad_weights(&d_pre, &tape_l.up, k, k, hw));
        let d_up = mix_grad_input(w.mix(cfg, l), &d_pre, k, k, hw);
        d_post = upsample2x_backward(&d_up, k, side / 2);
    }

    Ok(grads)
}
