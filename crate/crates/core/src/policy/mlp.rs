//! Dense tanh networks with hand-written backpropagation.
//!
//! Parameters flatten layer by layer; within a layer the weight matrix comes
//! first in row-major order (`out x in`), then the bias.

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::rng::StreamRng;

/// Half-width of the uniform initialization of output layers.
pub const OUTPUT_INIT_SCALE: f64 = 5e-3;

/// A single affine map `x -> W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim] }
    }

    pub fn from_parts(in_dim: usize, out_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        validate_dims(&[in_dim, out_dim])?;
        check_dim(in_dim * out_dim, weights.len())?;
        check_dim(out_dim, bias.len())?;
        Ok(Self { in_dim, out_dim, weights, bias })
    }

    /// Uniform on `[-scale, scale]` for every weight and bias.
    pub fn uniform(in_dim: usize, out_dim: usize, scale: f64, rng: &mut StreamRng) -> Self {
        let mut draw = || rng.random_range(-scale..=scale);
        let weights = (0..in_dim * out_dim).map(|_| draw()).collect();
        let bias = (0..out_dim).map(|_| draw()).collect();
        Self { in_dim, out_dim, weights, bias }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.in_dim).zip(&self.bias)) {
            *o = b + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    /// Accumulates `scale * d(dz . z)/d(W, b)` into `grad` and, when asked,
    /// writes `W^T dz` into `d_in`.
    pub fn backward(&self, x: &[f64], dz: &[f64], scale: f64, grad: &mut [f64], d_in: Option<&mut [f64]>) {
        let (gw, gb) = grad.split_at_mut(self.weights.len());
        for (i, &dzi) in dz.iter().enumerate() {
            let s = scale * dzi;
            if s != 0.0 {
                let row = &mut gw[i * self.in_dim..(i + 1) * self.in_dim];
                for (g, &xj) in row.iter_mut().zip(x) {
                    *g += s * xj;
                }
            }
            gb[i] += s;
        }
        if let Some(d_in) = d_in {
            d_in.iter_mut().for_each(|v| *v = 0.0);
            for (i, &dzi) in dz.iter().enumerate() {
                if dzi != 0.0 {
                    let row = &self.weights[i * self.in_dim..(i + 1) * self.in_dim];
                    for (d, &w) in d_in.iter_mut().zip(row) {
                        *d += w * dzi;
                    }
                }
            }
        }
    }

    fn write_params(&self, out: &mut [f64]) {
        let (w, b) = out.split_at_mut(self.weights.len());
        w.copy_from_slice(&self.weights);
        b.copy_from_slice(&self.bias);
    }

    fn read_params(&mut self, src: &[f64]) {
        let (w, b) = src.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }
}

pub(crate) fn validate_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!("a network needs at least input and output dimensions, got {layer_dims:?}")));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!("layer widths must be positive, got {layer_dims:?}")));
    }
    Ok(())
}

/// Feed-forward network `x -> A_L tanh(... tanh(A_1 x + b_1) ...) + b_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<Dense>,
}

/// Per-layer activations of the most recent forward pass.
#[derive(Debug, Clone, Default)]
pub struct MlpWorkspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
}

impl MlpParams {
    /// Hidden layers are uniform on `+-1/sqrt(fan_in)`; the output layer is
    /// uniform on `+-5e-3` so the initial output is close to zero.
    pub fn init(layer_dims: &[usize], rng: &mut StreamRng) -> Result<Self> {
        validate_dims(layer_dims)?;
        let last = layer_dims.len() - 2;
        let layers = layer_dims
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let scale = if l == last { OUTPUT_INIT_SCALE } else { 1.0 / (w[0] as f64).sqrt() };
                Dense::uniform(w[0], w[1], scale, rng)
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        validate_dims(layer_dims)?;
        Ok(Self { layers: layer_dims.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() })
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(Self { layers })
    }

    /// Rebuild from the canonical flattening.
    pub fn from_flat(layer_dims: &[usize], flat: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(layer_dims)?;
        params.set_flat(flat)?;
        Ok(params)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim).chain(self.layers.iter().map(|l| l.out_dim)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.param_count()];
        let mut off = 0;
        for l in &self.layers {
            l.write_params(&mut out[off..off + l.param_count()]);
            off += l.param_count();
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim(self.param_count(), flat.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.param_count();
            l.read_params(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn workspace(&self) -> MlpWorkspace {
        let mut acts = vec![vec![0.0; self.input_dim()]];
        acts.extend(self.layers.iter().map(|l| vec![0.0; l.out_dim]));
        let widest = self.layer_dims().into_iter().max().unwrap_or(0);
        MlpWorkspace { acts, delta: vec![0.0; widest], delta_prev: vec![0.0; widest] }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut ws = self.workspace();
        Ok(self.forward_with(x, &mut ws).to_vec())
    }

    /// Forward pass keeping activations in `ws` for a later backward pass.
    pub fn forward_with<'w>(&self, x: &[f64], ws: &'w mut MlpWorkspace) -> &'w [f64] {
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = ws.acts.split_at_mut(l + 1);
            let out = &mut rest[0];
            layer.forward(&prev[l], out);
            if l != last {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
        &ws.acts[self.layers.len()]
    }

    /// Backward pass seeded with `v` at the output (after `forward_with` on
    /// the same workspace); accumulates `scale * (d mu / d theta)^T v` into `grad`.
    /// If `d_input` is given it receives `(d mu / d x)^T v`.
    pub fn backward_with(
        &self,
        v: &[f64],
        scale: f64,
        grad: &mut [f64],
        ws: &mut MlpWorkspace,
        mut d_input: Option<&mut [f64]>,
    ) {
        let n_layers = self.layers.len();
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in &self.layers {
            offsets.push(off);
            off += l.param_count();
        }
        ws.delta[..v.len()].copy_from_slice(v);
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let g = &mut grad[offsets[l]..offsets[l] + layer.param_count()];
            let dz = &ws.delta[..layer.out_dim];
            let x = &ws.acts[l];
            if l > 0 {
                let d_prev = &mut ws.delta_prev[..layer.in_dim];
                layer.backward(x, dz, scale, g, Some(d_prev));
                for (d, &h) in d_prev.iter_mut().zip(x.iter()) {
                    *d *= 1.0 - h * h;
                }
                std::mem::swap(&mut ws.delta, &mut ws.delta_prev);
            } else {
                layer.backward(x, dz, scale, g, d_input.as_deref_mut());
            }
        }
    }

    /// `grad_theta mu_theta(x)^T v`.
    pub fn vjp(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.output_dim(), v.len())?;
        let mut ws = self.workspace();
        let mut grad = vec![0.0; self.param_count()];
        self.forward_with(x, &mut ws);
        self.backward_with(v, 1.0, &mut grad, &mut ws, None);
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::zeros(&[3, 4, 2]).unwrap();
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_affine_layer() {
        let net = MlpParams::from_layers(vec![Dense::from_parts(1, 1, vec![2.0], vec![1.0]).unwrap()]).unwrap();
        assert_eq!(net.forward(&[3.0]).unwrap(), vec![7.0]);
    }

    #[test]
    fn invalid_layer_dims() {
        let mut rng = stream(0, 0, 0, Domain::Init);
        assert!(matches!(MlpParams::init(&[], &mut rng), Err(Error::Config(_))));
        assert!(matches!(MlpParams::init(&[3], &mut rng), Err(Error::Config(_))));
        assert!(matches!(MlpParams::init(&[3, 0, 1], &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn output_layer_initialization_is_small() {
        let mut rng = stream(3, 0, 0, Domain::Init);
        let net = MlpParams::init(&[2, 32, 32, 2], &mut rng).unwrap();
        let out = net.layers().last().unwrap();
        assert!(out.weights().iter().chain(out.bias()).all(|w| w.abs() <= OUTPUT_INIT_SCALE));
        let hidden = &net.layers()[1];
        let bound = 1.0 / 32f64.sqrt();
        assert!(hidden.weights().iter().all(|w| w.abs() <= bound));
        assert!(hidden.weights().iter().any(|w| w.abs() > OUTPUT_INIT_SCALE));
    }

    #[test]
    fn initialization_is_seeded() {
        let a = MlpParams::init(&[2, 8, 1], &mut stream(9, 0, 0, Domain::Init)).unwrap();
        let b = MlpParams::init(&[2, 8, 1], &mut stream(9, 0, 0, Domain::Init)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn initial_output_bound() {
        let mut rng = stream(11, 0, 0, Domain::Init);
        let net = MlpParams::init(&[2, 32, 3], &mut rng).unwrap();
        let a = net.forward(&[10.0, -4.0]).unwrap();
        assert!(a.iter().all(|x| x.abs() <= OUTPUT_INIT_SCALE * 33.0));
    }

    #[test]
    fn flatten_order_is_layer_major_weights_then_bias() {
        let l1 = Dense::from_parts(2, 1, vec![1.0, 2.0], vec![3.0]).unwrap();
        let l2 = Dense::from_parts(1, 2, vec![4.0, 5.0], vec![6.0, 7.0]).unwrap();
        let net = MlpParams::from_layers(vec![l1, l2]).unwrap();
        assert_eq!(net.flatten(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn vjp_of_zero_vector_is_zero() {
        let net = MlpParams::init(&[2, 5, 2], &mut stream(1, 0, 0, Domain::Init)).unwrap();
        assert!(net.vjp(&[0.3, 0.1], &[0.0, 0.0]).unwrap().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn vjp_is_linear() {
        let net = MlpParams::init(&[2, 5, 2], &mut stream(2, 0, 0, Domain::Init)).unwrap();
        let x = [0.3, -0.7];
        let g1 = net.vjp(&x, &[1.0, -0.5]).unwrap();
        let g2 = net.vjp(&x, &[0.25, 2.0]).unwrap();
        let g12 = net.vjp(&x, &[1.25, 1.5]).unwrap();
        for i in 0..g1.len() {
            assert!((g1[i] + g2[i] - g12[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch() {
        let net = MlpParams::zeros(&[3, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(net.vjp(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
    }
}
