//! Test-only oracles, written independently of the library's forward path.
#![allow(dead_code)]

use ocae_core::autoencoder::{Activation, DenseLayer};
use ocae_core::Autoencoder;

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Relu => {
            if v > 0.0 {
                v
            } else {
                0.0
            }
        }
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::Linear => v,
    }
}

/// Pre-activations of a dense layer, computed column by column.
fn pre(layer: &DenseLayer<f64>, x: &[f64]) -> Vec<f64> {
    (0..layer.out_dim)
        .map(|j| {
            let mut s = layer.bias[j];
            for i in 0..layer.in_dim {
                s += x[i] * layer.weights[i * layer.out_dim + j];
            }
            s
        })
        .collect()
}

pub struct OracleTrace {
    pub alpha: Vec<f64>,
    pub x_hat: Vec<f64>,
    /// Every relu pre-activation encountered.
    pub relu_pre: Vec<f64>,
}

/// Straight-line evaluation of the six forward equations.
pub fn oracle_forward(m: &Autoencoder, x: &[f64; 7]) -> OracleTrace {
    let d = m.hidden_dim;
    let tokens: Vec<Vec<f64>> = match m.layout {
        ocae_core::Layout::ChannelToken => x.iter().map(|v| vec![*v]).collect(),
        ocae_core::Layout::TimeAxis => vec![x.to_vec()],
    };
    let mut relu_pre = Vec::new();
    let mut h = Vec::new();
    for t in &tokens {
        let p = pre(&m.enc1, t);
        relu_pre.extend(&p);
        h.push(p.iter().map(|v| act(Activation::Relu, *v)).collect::<Vec<_>>());
    }
    let e: Vec<f64> = h
        .iter()
        .map(|hi| {
            let mut u = m.attn.b;
            for k in 0..d {
                u += hi[k] * m.attn.w[k];
            }
            u.tanh()
        })
        .collect();
    let emax = e.iter().cloned().fold(f64::MIN, f64::max);
    let ex: Vec<f64> = e.iter().map(|v| (v - emax).exp()).collect();
    let total: f64 = ex.iter().sum();
    let alpha: Vec<f64> = ex.iter().map(|v| v / total).collect();
    let mut c = vec![0.0; d];
    for (a, hi) in alpha.iter().zip(&h) {
        for k in 0..d {
            c[k] += a * hi[k];
        }
    }
    let mut layer = |l: &DenseLayer<f64>, input: &[f64]| -> Vec<f64> {
        let p = pre(l, input);
        if l.activation == Activation::Relu {
            relu_pre.extend(&p);
        }
        p.iter().map(|v| act(l.activation, *v)).collect()
    };
    let z = layer(&m.bottleneck, &c);
    let g1 = layer(&m.dec1, &z);
    let g2 = layer(&m.dec2, &g1);
    let x_hat = layer(&m.out, &g2);
    OracleTrace {
        alpha,
        x_hat,
        relu_pre,
    }
}

pub fn oracle_loss(m: &Autoencoder, x: &[f64; 7]) -> f64 {
    let t = oracle_forward(m, x);
    x.iter().zip(&t.x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / 7.0
}

pub const FD_STEP: f64 = 1e-5;

/// Central finite-difference gradient of the oracle loss for every parameter.
pub fn finite_difference_gradient(m: &Autoencoder, x: &[f64; 7]) -> Vec<f64> {
    let n = m.param_count();
    let mut probe = m.clone();
    (0..n)
        .map(|k| {
            let orig = *probe.params_mut().nth(k).unwrap();
            *probe.params_mut().nth(k).unwrap() = orig + FD_STEP;
            let up = oracle_loss(&probe, x);
            *probe.params_mut().nth(k).unwrap() = orig - FD_STEP;
            let down = oracle_loss(&probe, x);
            *probe.params_mut().nth(k).unwrap() = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Relative error with a floor on the denominator so that components that
/// are zero on both sides compare as equal.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
