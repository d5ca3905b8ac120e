use super::{AttentionAutoencoder, DenseLayer, ForwardTrace};
use crate::preprocess::N_CHANNELS;
use crate::scalar::Scalar;

/// Gradient of the reconstruction loss, shaped exactly like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T>(pub AttentionAutoencoder<T>);

impl<T: Scalar> Gradients<T> {
    pub fn zeros_for(model: &AttentionAutoencoder<T>) -> Self {
        Gradients(model.zeros_like())
    }

    pub fn clear(&mut self) {
        self.0.params_mut().for_each(|g| *g = T::zero());
    }

    pub fn slices(&self) -> [&[T]; 12] {
        self.0.slices()
    }

    pub fn values(&self) -> impl Iterator<Item = T> + '_ {
        self.0.params()
    }
}

/// Backpropagates `upstream` (gradient w.r.t. the layer output) through a
/// dense layer. Accumulates weight and bias gradients scaled by `scale`
/// and returns the gradient w.r.t. the layer input.
fn dense_backward<T: Scalar>(
    layer: &DenseLayer<T>,
    input: &[T],
    output: &[T],
    upstream: &[T],
    grad: &mut DenseLayer<T>,
    want_input_grad: bool,
) -> Vec<T> {
    let delta: Vec<T> = upstream
        .iter()
        .zip(output)
        .map(|(g, y)| *g * layer.activation.derivative_from_output(*y))
        .collect();
    for (gb, d) in grad.bias.iter_mut().zip(&delta) {
        *gb += *d;
    }
    for (xi, grow) in input.iter().zip(grad.weights.chunks_exact_mut(layer.out_dim)) {
        for (gw, d) in grow.iter_mut().zip(&delta) {
            *gw += *xi * *d;
        }
    }
    if !want_input_grad {
        return Vec::new();
    }
    layer
        .weights
        .chunks_exact(layer.out_dim)
        .map(|row| row.iter().zip(&delta).map(|(w, d)| *w * *d).sum())
        .collect()
}

impl<T: Scalar> AttentionAutoencoder<T> {
    /// Analytic gradient of `mse(x, x̂)` w.r.t. every parameter.
    pub fn backward(&self, x: &[T; N_CHANNELS], trace: &ForwardTrace<T>) -> Gradients<T> {
        let mut g = Gradients::zeros_for(self);
        self.accumulate_gradients(x, trace, T::one(), &mut g);
        g
    }

    /// Adds `scale · ∂mse/∂θ` into `grads`. Returns the sample loss.
    pub fn accumulate_gradients(
        &self,
        x: &[T; N_CHANNELS],
        trace: &ForwardTrace<T>,
        scale: T,
        grads: &mut Gradients<T>,
    ) -> T {
        let g = &mut grads.0;
        let d = self.hidden_dim;
        let n = T::of(N_CHANNELS as f64);
        let two = T::of(2.0);

        let loss = super::mse(x, &trace.x_hat);
        let d_xhat: Vec<T> = trace
            .x_hat
            .iter()
            .zip(x)
            .map(|(xh, xi)| scale * two * (*xh - *xi) / n)
            .collect();

        let d_dec2 = dense_backward(&self.out, &trace.dec2, &trace.x_hat, &d_xhat, &mut g.out, true);
        let d_dec1 = dense_backward(&self.dec2, &trace.dec1, &trace.dec2, &d_dec2, &mut g.dec2, true);
        let d_z = dense_backward(&self.dec1, &trace.z, &trace.dec1, &d_dec1, &mut g.dec1, true);
        let d_c = dense_backward(&self.bottleneck, &trace.c, &trace.z, &d_z, &mut g.bottleneck, true);

        // c = Σ αᵢ hᵢ
        let d_alpha: Vec<T> = trace
            .h
            .chunks_exact(d)
            .map(|hi| hi.iter().zip(&d_c).map(|(h, dc)| *h * *dc).sum())
            .collect();
        let weighted: T = trace
            .alpha
            .iter()
            .zip(&d_alpha)
            .map(|(a, da)| *a * *da)
            .sum();

        let tokens = self.layout.tokens(x);
        for (i, hi) in trace.h.chunks_exact(d).enumerate() {
            let a = trace.alpha[i];
            // softmax then tanh
            let d_e = a * (d_alpha[i] - weighted);
            let d_u = d_e * (T::one() - trace.e[i] * trace.e[i]);
            g.attn.b += d_u;
            for (gw, h) in g.attn.w.iter_mut().zip(hi) {
                *gw += *h * d_u;
            }
            let d_h: Vec<T> = d_c
                .iter()
                .zip(&self.attn.w)
                .map(|(dc, w)| a * *dc + *w * d_u)
                .collect();
            dense_backward(&self.enc1, tokens.token(i), hi, &d_h, &mut g.enc1, false);
        }
        loss
    }
}
