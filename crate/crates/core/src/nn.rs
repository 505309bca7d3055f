//! Dense feed-forward networks with exact manual backpropagation.
//!
//! Parameter layout is fixed: for each layer in order, the weight matrix of
//! shape `(output_width, input_width)` stored row-major, followed by the
//! `output_width` biases. A layer computes `activation(W x + b)`.
//!
//! Everything here is a pure function of its inputs, so parameter snapshots can
//! be shared freely between threads.

use std::ops::{Deref, DerefMut};

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        Self {
            input_width,
            output_width,
            activation,
        }
    }

    /// Number of parameters in this layer's block.
    pub fn param_count(&self) -> usize {
        self.input_width * self.output_width + self.output_width
    }

    /// `input → hidden… → output` with tanh hidden layers and a linear head.
    pub fn chain(input: usize, hidden: &[usize], output: usize) -> Vec<LayerSpec> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input;
        for &h in hidden {
            layers.push(LayerSpec::new(prev, h, Activation::Tanh));
            prev = h;
        }
        layers.push(LayerSpec::new(prev, output, Activation::Identity));
        layers
    }
}

/// Checks widths are positive and consecutive layers chain.
pub fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::argument("network needs at least one layer"));
    }
    for (k, layer) in spec.iter().enumerate() {
        if layer.input_width == 0 || layer.output_width == 0 {
            return Err(Error::argument(format!("layer {k} has a zero width")));
        }
        if k > 0 && spec[k - 1].output_width != layer.input_width {
            return Err(Error::Shape {
                layer: k,
                expected: spec[k - 1].output_width,
                got: layer.input_width,
            });
        }
    }
    Ok(())
}

pub fn param_count(spec: &[LayerSpec]) -> usize {
    spec.iter().map(LayerSpec::param_count).sum()
}

macro_rules! flat_vector {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }
        }

        impl Deref for $name {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $name {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }
    };
}

flat_vector!(ParamVector);
flat_vector!(GradVector);

impl ParamVector {
    /// Splits into per-layer `(weights, biases)` blocks.
    pub fn unflatten(&self, spec: &[LayerSpec]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        check_params(self, spec)?;
        let mut offset = 0;
        let mut blocks = Vec::with_capacity(spec.len());
        for layer in spec {
            let nw = layer.input_width * layer.output_width;
            let w = self.0[offset..offset + nw].to_vec();
            let b = self.0[offset + nw..offset + nw + layer.output_width].to_vec();
            offset += layer.param_count();
            blocks.push((w, b));
        }
        Ok(blocks)
    }

    pub fn flatten(blocks: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let mut v = Vec::new();
        for (w, b) in blocks {
            v.extend_from_slice(w);
            v.extend_from_slice(b);
        }
        Self(v)
    }

    /// `self += scale * grad`.
    pub fn add_scaled(&mut self, grad: &[f64], scale: f64) {
        for (p, g) in self.0.iter_mut().zip(grad) {
            *p += scale * g;
        }
    }
}

impl GradVector {
    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.0 {
            *g *= factor;
        }
    }

    pub fn add_assign(&mut self, other: &[f64]) {
        for (g, o) in self.0.iter_mut().zip(other) {
            *g += o;
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

fn check_params(params: &[f64], spec: &[LayerSpec]) -> Result<()> {
    let want = param_count(spec);
    if params.len() == want {
        return Ok(());
    }
    // Report the first layer whose block does not fit.
    let mut offset = 0;
    let mut layer = spec.len().saturating_sub(1);
    for (k, l) in spec.iter().enumerate() {
        offset += l.param_count();
        if offset > params.len() {
            layer = k;
            break;
        }
    }
    Err(Error::Shape {
        layer,
        expected: want,
        got: params.len(),
    })
}

fn check_input(spec: &[LayerSpec], x: &[f64]) -> Result<()> {
    validate_spec(spec)?;
    if x.len() != spec[0].input_width {
        return Err(Error::Shape {
            layer: 0,
            expected: spec[0].input_width,
            got: x.len(),
        });
    }
    Ok(())
}

fn layer_forward(layer: &LayerSpec, block: &[f64], x: &[f64], out: &mut Vec<f64>) {
    let (nin, nout) = (layer.input_width, layer.output_width);
    let (w, b) = block.split_at(nin * nout);
    out.clear();
    for j in 0..nout {
        let row = &w[j * nin..(j + 1) * nin];
        let mut z = b[j];
        for (wi, xi) in row.iter().zip(x) {
            z += wi * xi;
        }
        out.push(match layer.activation {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        });
    }
}

/// Network output for input `x`.
pub fn mlp_forward(params: &[f64], spec: &[LayerSpec], x: &[f64]) -> Result<Vec<f64>> {
    check_input(spec, x)?;
    check_params(params, spec)?;
    let mut cur = x.to_vec();
    let mut next = Vec::new();
    let mut offset = 0;
    for layer in spec {
        let block = &params[offset..offset + layer.param_count()];
        layer_forward(layer, block, &cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
        offset += layer.param_count();
    }
    Ok(cur)
}

/// Forward pass that keeps every layer's activations for a later backward pass.
pub fn mlp_forward_cached(params: &[f64], spec: &[LayerSpec], x: &[f64]) -> Result<Vec<Vec<f64>>> {
    check_input(spec, x)?;
    check_params(params, spec)?;
    let mut acts = Vec::with_capacity(spec.len() + 1);
    acts.push(x.to_vec());
    let mut offset = 0;
    for layer in spec {
        let block = &params[offset..offset + layer.param_count()];
        let mut out = Vec::with_capacity(layer.output_width);
        layer_forward(layer, block, acts.last().expect("input pushed"), &mut out);
        acts.push(out);
        offset += layer.param_count();
    }
    Ok(acts)
}

/// Adds `scale · ∂(upstream · output)/∂params` into `grad`, given cached activations.
pub fn mlp_backward_cached(
    params: &[f64],
    spec: &[LayerSpec],
    acts: &[Vec<f64>],
    upstream: &[f64],
    scale: f64,
    grad: &mut [f64],
) -> Result<()> {
    let last = spec.last().ok_or_else(|| Error::argument("empty network"))?;
    if upstream.len() != last.output_width {
        return Err(Error::Shape {
            layer: spec.len() - 1,
            expected: last.output_width,
            got: upstream.len(),
        });
    }
    if grad.len() != params.len() {
        return Err(Error::Shape {
            layer: spec.len() - 1,
            expected: params.len(),
            got: grad.len(),
        });
    }
    let mut offsets = Vec::with_capacity(spec.len());
    let mut offset = 0;
    for layer in spec {
        offsets.push(offset);
        offset += layer.param_count();
    }

    let mut delta: Vec<f64> = upstream.iter().map(|u| u * scale).collect();
    for (k, layer) in spec.iter().enumerate().rev() {
        let (nin, nout) = (layer.input_width, layer.output_width);
        let out = &acts[k + 1];
        if layer.activation == Activation::Tanh {
            for (d, y) in delta.iter_mut().zip(out) {
                *d *= 1.0 - y * y;
            }
        }
        let input = &acts[k];
        let base = offsets[k];
        {
            let (gw, rest) = grad[base..base + layer.param_count()].split_at_mut(nin * nout);
            for j in 0..nout {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                for (g, xi) in gw[j * nin..(j + 1) * nin].iter_mut().zip(input) {
                    *g += dj * xi;
                }
                rest[j] += dj;
            }
        }
        if k > 0 {
            let w = &params[base..base + nin * nout];
            let mut prev = vec![0.0; nin];
            for j in 0..nout {
                let dj = delta[j];
                if dj == 0.0 {
                    continue;
                }
                for (p, wji) in prev.iter_mut().zip(&w[j * nin..(j + 1) * nin]) {
                    *p += wji * dj;
                }
            }
            delta = prev;
        }
    }
    Ok(())
}

/// Gradient of `upstream · f(x; params)` with respect to the parameters.
pub fn mlp_backward(
    params: &[f64],
    spec: &[LayerSpec],
    x: &[f64],
    upstream: &[f64],
) -> Result<GradVector> {
    let acts = mlp_forward_cached(params, spec, x)?;
    let mut grad = GradVector::zeros(params.len());
    mlp_backward_cached(params, spec, &acts, upstream, 1.0, &mut grad)?;
    Ok(grad)
}

/// Central-difference gradient of a scalar function of the parameters.
pub fn finite_diff_gradient<F>(f: F, params: &[f64], h: f64) -> Result<GradVector>
where
    F: Fn(&[f64]) -> f64,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::argument(format!("step h = {h} must be positive")));
    }
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = f(&probe);
        probe[i] = orig - h;
        let down = f(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::numeric(format!(
                "non-finite function value near coordinate {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(GradVector(grad))
}

/// Weights uniform in `±1/√fan_in`, biases zero.
pub fn init_params(spec: &[LayerSpec], rng: &mut Rng) -> Result<ParamVector> {
    validate_spec(spec)?;
    let mut v = Vec::with_capacity(param_count(spec));
    for layer in spec {
        let bound = 1.0 / (layer.input_width as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        v.extend((0..layer.input_width * layer.output_width).map(|_| dist.sample(rng)));
        v.extend(std::iter::repeat_n(0.0, layer.output_width));
    }
    Ok(ParamVector(v))
}

/// A network: architecture plus its flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<LayerSpec>,
    pub params: ParamVector,
}

impl Mlp {
    pub fn new(layers: Vec<LayerSpec>, params: ParamVector) -> Result<Self> {
        validate_spec(&layers)?;
        check_params(&params, &layers)?;
        ensure_finite(&params, "network parameters")?;
        Ok(Self { layers, params })
    }

    pub fn random(layers: Vec<LayerSpec>, rng: &mut Rng) -> Result<Self> {
        let params = init_params(&layers, rng)?;
        Self::new(layers, params)
    }

    pub fn zeros(layers: Vec<LayerSpec>) -> Result<Self> {
        let n = param_count(&layers);
        Self::new(layers, ParamVector::zeros(n))
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].output_width
    }

    pub fn param_dim(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        mlp_forward(&self.params, &self.layers, x)
    }

    /// Convenience for scalar-output networks.
    pub fn forward_scalar(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?[0])
    }

    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<GradVector> {
        mlp_backward(&self.params, &self.layers, x, upstream)
    }

    /// Index range of the last layer's bias block.
    pub fn output_bias_range(&self) -> std::ops::Range<usize> {
        let n = self.params.len();
        n - self.output_width()..n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order update rule with its state.
///
/// `step` turns a gradient into the parameter displacement for one descent
/// step of size `lr`; ascent callers pass the negated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, dim: usize) -> Self {
        let state = if kind == OptimizerKind::Adam { dim } else { 0 };
        Self {
            kind,
            m: vec![0.0; state],
            v: vec![0.0; state],
            t: 0,
        }
    }

    /// Applies `params ← params − lr · update(grad)`.
    pub fn descend(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                self.t += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(self.t.min(i32::MAX as u64) as i32);
                let c2 = 1.0 - ADAM_BETA2.powi(self.t.min(i32::MAX as u64) as i32);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_params_give_zero_output() {
        let spec = LayerSpec::chain(3, &[4, 4], 2);
        let net = Mlp::zeros(spec).unwrap();
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_layer_is_identity() {
        let spec = vec![LayerSpec::new(2, 2, Activation::Identity)];
        let params = vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0];
        let y = mlp_forward(&params, &spec, &[0.3, -0.2]).unwrap();
        assert_eq!(y, vec![0.3, -0.2]);
    }

    #[test]
    fn two_layer_matches_hand_computation() {
        // 1 → 2 (tanh) → 1 (identity)
        let spec = LayerSpec::chain(1, &[2], 1);
        let (w1, b1): ([f64; 2], [f64; 2]) = ([0.4, -0.7], [0.1, 0.05]);
        let (w2, b2) = ([0.9, 0.3], -0.2);
        let params = vec![w1[0], w1[1], b1[0], b1[1], w2[0], w2[1], b2];
        let x = 0.6;
        let h0 = (w1[0] * x + b1[0]).tanh();
        let h1 = (w1[1] * x + b1[1]).tanh();
        let expected = w2[0] * h0 + w2[1] * h1 + b2;
        let y = mlp_forward(&params, &spec, &[x]).unwrap();
        assert!((y[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn input_width_mismatch_reports_layer_zero() {
        let spec = LayerSpec::chain(3, &[2], 1);
        let params = vec![0.0; param_count(&spec)];
        match mlp_forward(&params, &spec, &[1.0]) {
            Err(Error::Shape { layer, expected, got }) => {
                assert_eq!((layer, expected, got), (0, 3, 1));
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }

    #[test]
    fn short_params_report_offending_layer() {
        let spec = LayerSpec::chain(2, &[3], 1);
        // first block is 9 params; 5 params do not even cover layer 0
        match mlp_forward(&[0.0; 5], &spec, &[1.0, 1.0]) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 0),
            other => panic!("{other:?}"),
        }
        match mlp_forward(&[0.0; 10], &spec, &[1.0, 1.0]) {
            Err(Error::Shape { layer, .. }) => assert_eq!(layer, 1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unchained_spec_is_rejected() {
        let spec = vec![
            LayerSpec::new(2, 3, Activation::Tanh),
            LayerSpec::new(4, 1, Activation::Identity),
        ];
        assert!(matches!(validate_spec(&spec), Err(Error::Shape { layer: 1, .. })));
    }

    #[test]
    fn linear_layer_backward() {
        let spec = vec![LayerSpec::new(3, 2, Activation::Identity)];
        let params = vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3, 7.0, -7.0];
        let x = [1.0, 2.0, -3.0];
        let g = [0.25, -2.0];
        let grad = mlp_backward(&params, &spec, &x, &g).unwrap();
        let mut expected = Vec::new();
        for gj in g {
            expected.extend(x.iter().map(|xi| gj * xi));
        }
        expected.extend(g);
        assert_eq!(grad.0, expected);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mut r = rng::from_seed(1);
        let net = Mlp::random(LayerSpec::chain(2, &[5], 3), &mut r).unwrap();
        let g = net.backward(&[0.1, 0.2], &[0.0; 3]).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_of_quadratic() {
        let g = finite_diff_gradient(|t| t.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_of_constant() {
        let g = finite_diff_gradient(|_| 3.5, &[1.0, -2.0, 0.0], 1e-5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_diff_of_sin_product() {
        let g = finite_diff_gradient(|t| t[0].sin() * t[1], &[0.5, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0 * 0.5f64.cos()).abs() < 1e-8);
        assert!((g[1] - 0.5f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn finite_diff_rejects_bad_step_and_nan() {
        assert!(finite_diff_gradient(|_| 0.0, &[1.0], 0.0).is_err());
        assert!(matches!(
            finite_diff_gradient(|_| f64::NAN, &[1.0], 1e-5),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let spec = LayerSpec::chain(4, &[8], 2);
        let p = init_params(&spec, &mut rng::from_seed(3)).unwrap();
        let blocks = p.unflatten(&spec).unwrap();
        assert!(blocks[0].0.iter().all(|w| w.abs() <= 0.5));
        assert!(blocks[1].0.iter().all(|w| w.abs() <= 1.0 / 8f64.sqrt()));
        assert!(blocks.iter().all(|(_, b)| b.iter().all(|&v| v == 0.0)));
    }
}
