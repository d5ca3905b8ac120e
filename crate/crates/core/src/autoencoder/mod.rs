//! Attention one-class autoencoder.
//!
//! ```text
//! x (7 channel tokens) ─► enc1 (1→d, relu, shared per token) ─► h (7×d)
//!   h ─► e = tanh(h·W + b) ─► α = softmax(e) ─► c = Σ αᵢ hᵢ  (d)
//!   c ─► bottleneck (d→d/2, relu) ─► dec1 (d/2→d/2, relu)
//!     ─► dec2 (d/2→d, relu) ─► out (d→7, sigmoid) ─► x̂
//! ```
//!
//! The model is generic over its [`Scalar`]: training runs in `f64`, the
//! deployed copy is cast to `f32`.

mod backward;
mod train;

pub use backward::Gradients;
pub use train::{train, EpochLoss, TrainConfig, TrainOutcome, MIN_TRAIN_ROWS};

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::preprocess::{to_model_input, to_time_axis_input, TokenSeq, N_CHANNELS};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => x.max(T::zero()),
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    pub fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Linear => T::one(),
        }
    }
}

/// Fully connected layer. `weights` is `in_dim × out_dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> DenseLayer<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    fn glorot<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        fill_glorot(&mut layer.weights, in_dim, out_dim, rng);
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Writes `activation(x·W + b)` into `out`.
    pub fn forward_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.in_dim);
        debug_assert_eq!(out.len(), self.out_dim);
        out.copy_from_slice(&self.bias);
        for (xi, row) in x.iter().zip(self.weights.chunks_exact(self.out_dim)) {
            if *xi == T::zero() {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += *xi * *w;
            }
        }
        for o in out.iter_mut() {
            *o = self.activation.apply(*o);
        }
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.out_dim];
        self.forward_into(x, &mut out);
        out
    }

    fn cast<U: Scalar>(&self) -> DenseLayer<U> {
        DenseLayer {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weights: cast_vec(&self.weights),
            bias: cast_vec(&self.bias),
            activation: self.activation,
        }
    }
}

fn fill_glorot<T: Scalar, R: Rng>(w: &mut [T], fan_in: usize, fan_out: usize, rng: &mut R) {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in w {
        *v = T::of(rng.random_range(-limit..limit));
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::of(x.as_f64())).collect()
}

/// Attention scoring parameters: `w` is `d × 1`, `b` a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams<T> {
    pub w: Vec<T>,
    pub b: T,
}

/// Output of [`attend`].
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub logits: Vec<T>,
    pub weights: Vec<T>,
    pub context: Vec<T>,
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(e: &[T]) -> Vec<T> {
    let max = e.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = e.iter().map(|&v| (v - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

/// Additive attention over `len` tokens of width `d` stored row-major in `h`.
pub fn attend<T: Scalar>(h: &[T], d: usize, params: &AttentionParams<T>) -> Attention<T> {
    assert_eq!(params.w.len(), d);
    assert!(d > 0 && h.len() % d == 0 && !h.is_empty());
    let logits: Vec<T> = h
        .chunks_exact(d)
        .map(|hi| {
            let u = hi.iter().zip(&params.w).map(|(a, w)| *a * *w).sum::<T>() + params.b;
            u.tanh()
        })
        .collect();
    let weights = softmax(&logits);
    let mut context = vec![T::zero(); d];
    for (hi, &a) in h.chunks_exact(d).zip(&weights) {
        for (c, v) in context.iter_mut().zip(hi) {
            *c += a * *v;
        }
    }
    Attention {
        logits,
        weights,
        context,
    }
}

/// How the 7-channel input is presented to the attention block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
#[repr(u8)]
pub enum Layout {
    /// One token holding all seven channels; attention over a single token
    /// is the identity.
    TimeAxis = 0,
    /// Seven tokens, one scalar channel each.
    ChannelToken = 1,
}

impl Layout {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Layout::TimeAxis),
            1 => Some(Layout::ChannelToken),
            _ => None,
        }
    }

    pub fn token_width(self) -> usize {
        match self {
            Layout::TimeAxis => N_CHANNELS,
            Layout::ChannelToken => 1,
        }
    }

    pub fn tokens<T: Scalar>(self, x: &[T; N_CHANNELS]) -> TokenSeq<T> {
        match self {
            Layout::TimeAxis => to_time_axis_input(x),
            Layout::ChannelToken => to_model_input(x),
        }
    }
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    /// Per-token encodings, `tokens × d` row-major.
    pub h: Vec<T>,
    pub e: Vec<T>,
    pub alpha: Vec<T>,
    pub c: Vec<T>,
    pub z: Vec<T>,
    pub dec1: Vec<T>,
    pub dec2: Vec<T>,
    pub x_hat: [T; N_CHANNELS],
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionAutoencoder<T> {
    pub layout: Layout,
    pub hidden_dim: usize,
    pub enc1: DenseLayer<T>,
    pub attn: AttentionParams<T>,
    pub bottleneck: DenseLayer<T>,
    pub dec1: DenseLayer<T>,
    pub dec2: DenseLayer<T>,
    pub out: DenseLayer<T>,
}

fn check_hidden_dim(hidden_dim: usize) -> Result<()> {
    if hidden_dim == 0 || hidden_dim % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "hidden_dim must be even and positive, got {hidden_dim}"
        )));
    }
    Ok(())
}

impl<T: Scalar> AttentionAutoencoder<T> {
    /// Glorot-uniform initialised channel-token model.
    pub fn new(hidden_dim: usize, seed: u64) -> Result<Self> {
        Self::with_layout(Layout::ChannelToken, hidden_dim, seed)
    }

    pub fn with_layout(layout: Layout, hidden_dim: usize, seed: u64) -> Result<Self> {
        check_hidden_dim(hidden_dim)?;
        let d = hidden_dim;
        let half = d / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = layout.token_width();
        let enc1 = DenseLayer::glorot(width, d, Activation::Relu, &mut rng);
        let mut w = vec![T::zero(); d];
        fill_glorot(&mut w, d, 1, &mut rng);
        let attn = AttentionParams { w, b: T::zero() };
        let bottleneck = DenseLayer::glorot(d, half, Activation::Relu, &mut rng);
        let dec1 = DenseLayer::glorot(half, half, Activation::Relu, &mut rng);
        let dec2 = DenseLayer::glorot(half, d, Activation::Relu, &mut rng);
        let out = DenseLayer::glorot(d, N_CHANNELS, Activation::Sigmoid, &mut rng);
        Ok(Self {
            layout,
            hidden_dim,
            enc1,
            attn,
            bottleneck,
            dec1,
            dec2,
            out,
        })
    }

    /// All parameters zero.
    pub fn zeros(layout: Layout, hidden_dim: usize) -> Result<Self> {
        check_hidden_dim(hidden_dim)?;
        let d = hidden_dim;
        let half = d / 2;
        Ok(Self {
            layout,
            hidden_dim,
            enc1: DenseLayer::zeros(layout.token_width(), d, Activation::Relu),
            attn: AttentionParams {
                w: vec![T::zero(); d],
                b: T::zero(),
            },
            bottleneck: DenseLayer::zeros(d, half, Activation::Relu),
            dec1: DenseLayer::zeros(half, half, Activation::Relu),
            dec2: DenseLayer::zeros(half, d, Activation::Relu),
            out: DenseLayer::zeros(d, N_CHANNELS, Activation::Sigmoid),
        })
    }

    /// Zeroes the attention scorer, so every token gets weight 1/n and the
    /// context is the mean of the token encodings. Paired with
    /// `train_attention = false` this is the plain-autoencoder ablation with
    /// an unchanged parameter budget.
    pub fn without_attention(mut self) -> Self {
        self.attn.w.fill(T::zero());
        self.attn.b = T::zero();
        self
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.layout, self.hidden_dim).expect("dims already validated")
    }

    pub fn param_count(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Parameter blocks in canonical order: enc1 (W, b), attention (W, b),
    /// bottleneck, dec1, dec2, out.
    pub fn slices(&self) -> [&[T]; 12] {
        [
            &self.enc1.weights,
            &self.enc1.bias,
            &self.attn.w,
            std::slice::from_ref(&self.attn.b),
            &self.bottleneck.weights,
            &self.bottleneck.bias,
            &self.dec1.weights,
            &self.dec1.bias,
            &self.dec2.weights,
            &self.dec2.bias,
            &self.out.weights,
            &self.out.bias,
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [T]; 12] {
        [
            &mut self.enc1.weights,
            &mut self.enc1.bias,
            &mut self.attn.w,
            std::slice::from_mut(&mut self.attn.b),
            &mut self.bottleneck.weights,
            &mut self.bottleneck.bias,
            &mut self.dec1.weights,
            &mut self.dec1.bias,
            &mut self.dec2.weights,
            &mut self.dec2.bias,
            &mut self.out.weights,
            &mut self.out.bias,
        ]
    }

    pub fn params(&self) -> impl Iterator<Item = T> + '_ {
        self.slices().into_iter().flatten().copied()
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut T> + '_ {
        self.slices_mut().into_iter().flatten()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> AttentionAutoencoder<U> {
        AttentionAutoencoder {
            layout: self.layout,
            hidden_dim: self.hidden_dim,
            enc1: self.enc1.cast(),
            attn: AttentionParams {
                w: cast_vec(&self.attn.w),
                b: U::of(self.attn.b.as_f64()),
            },
            bottleneck: self.bottleneck.cast(),
            dec1: self.dec1.cast(),
            dec2: self.dec2.cast(),
            out: self.out.cast(),
        }
    }

    pub fn forward(&self, x: &[T; N_CHANNELS]) -> Result<ForwardTrace<T>> {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite input on channel {i}"
            )));
        }
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[T; N_CHANNELS]) -> ForwardTrace<T> {
        let d = self.hidden_dim;
        let tokens = self.layout.tokens(x);
        let mut h = vec![T::zero(); tokens.len * d];
        for (i, hi) in h.chunks_exact_mut(d).enumerate() {
            self.enc1.forward_into(tokens.token(i), hi);
        }
        let Attention {
            logits: e,
            weights: alpha,
            context: c,
        } = attend(&h, d, &self.attn);
        let z = self.bottleneck.forward(&c);
        let dec1 = self.dec1.forward(&z);
        let dec2 = self.dec2.forward(&dec1);
        let mut x_hat = [T::zero(); N_CHANNELS];
        self.out.forward_into(&dec2, &mut x_hat);
        ForwardTrace {
            h,
            e,
            alpha,
            c,
            z,
            dec1,
            dec2,
            x_hat,
        }
    }

    pub fn reconstruct(&self, x: &[T; N_CHANNELS]) -> Result<[T; N_CHANNELS]> {
        Ok(self.forward(x)?.x_hat)
    }

    /// Reconstruction error of one scaled reading.
    pub fn score(&self, x: &[T; N_CHANNELS]) -> Result<T> {
        Ok(mse(x, &self.reconstruct(x)?))
    }
}

/// Mean squared error over the seven channels.
pub fn mse<T: Scalar>(x: &[T; N_CHANNELS], x_hat: &[T; N_CHANNELS]) -> T {
    let n = T::of(N_CHANNELS as f64);
    x.iter()
        .zip(x_hat)
        .map(|(a, b)| (*a - *b) * (*a - *b))
        .sum::<T>()
        / n
}

/// Parameter count of a channel-token model with hidden size `d`.
pub fn channel_token_param_count(d: usize) -> usize {
    let half = d / 2;
    (d + d) + (d + 1) + (d * half + half) + (half * half + half) + (half * d + d) + (d * N_CHANNELS + N_CHANNELS)
}
